import csv
import io
import re
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from adamuon.cli import cmd_check, cmd_plot, cmd_run, cmd_sweep, main
from adamuon.config import ConfigError, parse_config, with_lr
from adamuon.densecore import CUBIC, QUINTIC
from adamuon.harness import TrainRecord, write_csv
from adamuon.optim import OptimizerKind
from adamuon.problems import ProblemKind
from adamuon.schedule import ScheduleKind

QUAD = """\
# quadratic alignment, AdaMuon
run_name = quad
optimizer = adamuon
steps = 100
log_every = 10
problem.kind = quadratic_align
problem.dims = 8, 8
hyper.eta = 0.05
schedule.warmup_steps = 10
"""


@pytest.fixture
def quad_cfg(tmp_path):
    path = tmp_path / "quad.cfg"
    path.write_text(QUAD)
    return path


# --- config parsing ---


def test_parse_defaults():
    cfg = parse_config(QUAD)
    assert cfg.optimizer is OptimizerKind.ADAMUON
    assert cfg.problem.kind is ProblemKind.QUADRATIC_ALIGN and cfg.problem.dims == (8, 8)
    assert cfg.schedule.kind is ScheduleKind.WSD
    assert cfg.schedule.base_lr == cfg.hyper.eta == 0.05
    assert cfg.schedule.total_steps == 100 and cfg.schedule.decay_start == 80


def test_parse_full_key_set():
    text = QUAD + (
        "seed = 3\nthreshold = 1e-2\nproblem.noise = 0.5\nproblem.seed = 9\nhyper.lambda = 0.01\n"
        "hyper.beta = 0.9\nhyper.beta2 = 0.99\nhyper.eps = 1e-10\nhyper.ns_steps = 7\n"
        "hyper.ns_coeffs = cubic\nhyper.momentum_dampening = false\nhyper.adam_beta1 = 0.8\n"
        "schedule.kind = cosine\nschedule.base_lr = 0.02\nschedule.total_steps = 200\n"
        "schedule.decay_start = 150\nschedule.min_lr = 0.001\ngroup.w = adamw\n"
    )
    cfg = parse_config(text)
    assert cfg.hyper.weight_decay == 0.01 and cfg.hyper.eps == 1e-10 and cfg.hyper.ns_coeffs == CUBIC
    assert cfg.hyper.momentum_dampening is False and cfg.hyper.adam_beta1 == 0.8
    assert cfg.schedule.kind is ScheduleKind.COSINE and cfg.schedule.base_lr == 0.02
    assert cfg.overrides == {"w": OptimizerKind.ADAMW}
    assert cfg.threshold == 0.01 and cfg.seed == 3 and cfg.problem.seed == 9


def test_unknown_key_names_key_and_line():
    text = QUAD.replace("optimizer = adamuon", "optimzer = adamuon")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == "optimzer" and info.value.line == 3
    assert "optimzer" in str(info.value) and "line 3" in str(info.value)


@pytest.mark.parametrize(
    "text,line",
    [
        (QUAD + "steps = 5\n", 10),
        (QUAD + "hyper.beta = lots\n", 10),
        (QUAD + "just words\n", 10),
        (QUAD + "hyper.eps =\n", 10),
        (QUAD + "hyper.momentum_dampening = yes\n", 10),
        (QUAD.replace("problem.dims = 8, 8", "problem.dims = 8"), 7),
        (QUAD.replace("hyper.eta = 0.05", "hyper.eta = -1"), 8),
    ],
)
def test_bad_lines_report_line(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line


def test_missing_required_key():
    with pytest.raises(ConfigError, match="steps"):
        parse_config(QUAD.replace("steps = 100\n", ""))


@settings(max_examples=200, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(st.text(max_size=40), max_size=12))
def test_parsing_is_total_on_noise(lines):
    try:
        parse_config("\n".join(lines))
    except ConfigError:
        pass


@settings(max_examples=200, deadline=None)
@given(st.integers(0, QUAD.count("\n") - 1), st.text(max_size=20))
def test_parsing_is_total_on_corrupted_values(index, junk):
    lines = QUAD.splitlines()
    if "=" in lines[index]:
        key = lines[index].split("=")[0]
        lines[index] = f"{key}= {junk}"
    try:
        parse_config("\n".join(lines))
    except ConfigError:
        pass


def test_with_lr_moves_both_knobs():
    cfg = with_lr(parse_config(QUAD), 1e-3)
    assert cfg.hyper.eta == cfg.schedule.base_lr == 1e-3


# --- run ---


def test_run_writes_csv(quad_cfg, tmp_path, capsys):
    out = tmp_path / "out"
    assert cmd_run(quad_cfg, out) == 0
    rows = (out / "quad.csv").read_text().splitlines()
    assert rows[0] == "step,lr,loss,grad_norm,update_rms,wall_ms"
    assert len(rows) == 1 + 100 // 10
    assert "final_loss=" in capsys.readouterr().out


def test_run_divergence_exit_2(tmp_path):
    cfg = tmp_path / "div.cfg"
    cfg.write_text(QUAD.replace("adamuon", "sgdm").replace("0.05", "10.0"))
    assert cmd_run(cfg, tmp_path / "out") == 2
    assert (tmp_path / "out" / "quad.csv").exists()


def test_run_unknown_key_exit_1(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(QUAD.replace("optimizer", "optimzer"))
    assert cmd_run(cfg, tmp_path / "out") == 1
    err = capsys.readouterr().err
    assert "optimzer" in err and "line 3" in err
    assert not (tmp_path / "out").exists()


def test_run_missing_config(tmp_path):
    assert cmd_run(tmp_path / "nope.cfg", tmp_path / "out") == 1


def test_main_usage_error_exits_1():
    with pytest.raises(SystemExit) as info:
        main(["run", "--config"])
    assert info.value.code == 1


# --- check ---


def test_check_pristine():
    buf = io.StringIO()
    assert cmd_check(stream=buf) == 0
    out = buf.getvalue()
    assert len(re.findall(r" PASS\b", out)) >= 10
    assert re.search(r"^polar_identity\s.*PASS", out, re.M)
    assert "FAIL" not in out


@pytest.mark.parametrize(
    "terms",
    [tuple(t + 0.5 for t in QUINTIC.terms), (QUINTIC.terms[0] + 0.5, *QUINTIC.terms[1:])],
    ids=["all-terms", "leading-term"],
)
def test_check_detects_perturbed_quintic(terms):
    buf = io.StringIO()
    assert cmd_check(terms, stream=buf) == 1
    assert re.search(r"^ns_quintic_band\s.*FAIL", buf.getvalue(), re.M)


# --- sweep ---


def test_sweep_two_rates(quad_cfg, tmp_path):
    out = tmp_path / "sweep"
    assert cmd_sweep(quad_cfg, [1e-3, 6e-4], out) == 0
    assert sorted(p.name for p in out.glob("*.csv")) == [
        "quad_lr0.0006.csv",
        "quad_lr0.001.csv",
        "sweep_summary.csv",
    ]
    with open(out / "sweep_summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["lr", "final_loss", "steps_to_threshold", "diverged"]
    assert [float(r["lr"]) for r in rows] == [6e-4, 1e-3]
    assert {r["diverged"] for r in rows} == {"false"}


def test_sweep_parallel_matches_serial(quad_cfg, tmp_path):
    assert cmd_sweep(quad_cfg, [6e-4, 1e-3], tmp_path / "a", jobs=1) == 0
    assert cmd_sweep(quad_cfg, [6e-4, 1e-3], tmp_path / "b", jobs=2) == 0
    a = (tmp_path / "a" / "sweep_summary.csv").read_text()
    assert a == (tmp_path / "b" / "sweep_summary.csv").read_text()


def test_sweep_empty_list(quad_cfg, tmp_path):
    assert cmd_sweep(quad_cfg, [], tmp_path / "out") == 1


# --- plot ---


def _curve(path, losses):
    write_csv([TrainRecord(i + 1, 0.1, loss, 1.0, 0.2, 0.3) for i, loss in enumerate(losses)], path)
    return path


def test_plot_two_curves(tmp_path):
    a = _curve(tmp_path / "adamuon.csv", [1.0, 0.1, 0.01])
    b = _curve(tmp_path / "adamw.csv", [2.0, 0.5, 0.2])
    out = tmp_path / "plot.svg"
    assert cmd_plot([a, b], out) == 0
    root = ET.parse(out).getroot()
    assert root.tag.endswith("svg") and root.get("viewBox") == "0 0 800 500"
    assert len(root.findall(".//{http://www.w3.org/2000/svg}polyline")) == 2
    text = out.read_text()
    assert "adamuon" in text and "adamw" in text


def test_plot_is_byte_identical(tmp_path):
    a = _curve(tmp_path / "a.csv", [1.0, 0.5])
    cmd_plot([a], tmp_path / "1.svg")
    cmd_plot([a], tmp_path / "2.svg")
    assert (tmp_path / "1.svg").read_bytes() == (tmp_path / "2.svg").read_bytes()


def test_plot_header_only(tmp_path, capsys):
    a = _curve(tmp_path / "empty.csv", [])
    assert cmd_plot([a], tmp_path / "x.svg") == 1
    err = capsys.readouterr().err
    assert "no data rows" in err and "empty.csv" in err


def test_plot_missing_and_bad_schema(tmp_path, capsys):
    assert cmd_plot([tmp_path / "gone.csv"], tmp_path / "x.svg") == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert cmd_plot([bad], tmp_path / "x.svg") == 1
    assert "bad.csv" in capsys.readouterr().err


def test_console_entry_point(tmp_path, quad_cfg):
    proc = subprocess.run(
        [sys.executable, "-m", "adamuon", "run", "--config", str(quad_cfg), "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("quad: final_loss=")
