"""Flat ``key = value`` experiment configs.

Example::

    run_name = quad-adamuon
    optimizer = adamuon
    steps = 500
    log_every = 10
    problem.kind = quadratic_align
    problem.dims = 8, 8
    hyper.eta = 0.05
    schedule.kind = wsd
    schedule.warmup_steps = 10

Keys (defaults in brackets):

=========================  ==================================================
``run_name``               output file stem [run]
``optimizer``              adamuon | muon | adamw | sgdm (required)
``steps``                  training steps (required)
``log_every``              record interval [1]
``seed``                   parameter-init seed [0]
``threshold``              loss target for steps_to_threshold [unset]
``problem.kind``           quadratic_align | matrix_regression |
                           logistic_regression | mlp2 (required)
``problem.dims``           comma-separated positive integers (required)
``problem.noise``          [0.0]
``problem.seed``           data seed [0]
``hyper.eta``              base learning rate (required)
``hyper.lambda``           decoupled weight decay [0.0]
``hyper.beta``             matrix / SGD momentum [0.95]
``hyper.beta2``            second-moment decay [0.999]
``hyper.eps``              [1e-8]
``hyper.ns_steps``         [5]
``hyper.ns_coeffs``        cubic | quintic [quintic]
``hyper.momentum_dampening``  true | false [per optimizer]
``hyper.adam_beta1``       [0.9]
``schedule.kind``          constant | cosine | wsd [wsd]
``schedule.base_lr``       [hyper.eta]
``schedule.total_steps``   [steps]
``schedule.warmup_steps``  [0]
``schedule.decay_start``   [max(warmup, 0.8 * total_steps)]
``schedule.min_lr``        [0.0]
``group.<param>``          per-parameter optimizer override
=========================  ==================================================
"""

from __future__ import annotations

import math
import re
from dataclasses import replace

from .densecore import NsCoefficients
from .harness import ExperimentConfig
from .optim import HyperParams, OptimizerKind
from .problems import ProblemKind, ProblemSpec
from .schedule import ScheduleKind, ScheduleSpec


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line, self.key = line, key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


def _real(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text.strip()!r}")
    return value


def _int(text):
    return int(text.strip())


def _bool(text):
    low = text.strip()
    if low not in ("true", "false"):
        raise ValueError(f"expected true or false, got {text!r}")
    return low == "true"


def _dims(text):
    return tuple(_int(part) for part in text.split(","))


_KEYS = {
    "run_name": str.strip,
    "optimizer": OptimizerKind.parse,
    "steps": _int,
    "log_every": _int,
    "seed": _int,
    "threshold": _real,
    "problem.kind": ProblemKind.parse,
    "problem.dims": _dims,
    "problem.noise": _real,
    "problem.seed": _int,
    "hyper.eta": _real,
    "hyper.lambda": _real,
    "hyper.beta": _real,
    "hyper.beta2": _real,
    "hyper.eps": _real,
    "hyper.ns_steps": _int,
    "hyper.ns_coeffs": NsCoefficients.from_name,
    "hyper.momentum_dampening": _bool,
    "hyper.adam_beta1": _real,
    "schedule.kind": lambda s: ScheduleKind(s.strip().lower()),
    "schedule.base_lr": _real,
    "schedule.total_steps": _int,
    "schedule.warmup_steps": _int,
    "schedule.decay_start": _int,
    "schedule.min_lr": _real,
}
_REQUIRED = ("optimizer", "steps", "problem.kind", "problem.dims", "hyper.eta")
_GROUP_KEY = re.compile(r"group\.([A-Za-z_][A-Za-z0-9_]*)$")


def _blame(message, keys, lines):
    """Line of the key whose field name the message mentions first, else the earliest key."""
    present = [k for k in keys if k in lines]
    hits = []
    for key in present:
        field = _FIELD_NAMES.get(key, key.rpartition(".")[2])
        m = re.search(rf"\b{re.escape(field)}\b", message)
        if m:
            hits.append((m.start(), lines[key]))
    if hits:
        return min(hits)[1]
    return min((lines[k] for k in present), default=None)


_FIELD_NAMES = {"hyper.lambda": "weight_decay", "problem.seed": "seed"}


def parse_config(text: str) -> ExperimentConfig:
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, _, value = (part.strip() for part in line.partition("="))
        if key in lines:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", lineno, key)
        if key in _KEYS:
            conv = _KEYS[key]
        elif _GROUP_KEY.match(key):
            conv = OptimizerKind.parse
        else:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if not value:
            raise ConfigError(f"missing value for {key!r}", lineno, key)
        try:
            values[key] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno, key) from None
        lines[key] = lineno

    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}", key=key)

    def build(what, fn, keys):
        try:
            return fn()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid {what}: {exc}", _blame(str(exc), keys, lines)) from None

    get = values.get
    problem = build(
        "problem",
        lambda: ProblemSpec(
            values["problem.kind"], values["problem.dims"], get("problem.noise", 0.0), get("problem.seed", 0)
        ),
        [k for k in lines if k.startswith("problem.")],
    )
    hp_fields = {
        "eta": "hyper.eta",
        "weight_decay": "hyper.lambda",
        "beta": "hyper.beta",
        "beta2": "hyper.beta2",
        "eps": "hyper.eps",
        "ns_steps": "hyper.ns_steps",
        "ns_coeffs": "hyper.ns_coeffs",
        "momentum_dampening": "hyper.momentum_dampening",
        "adam_beta1": "hyper.adam_beta1",
    }
    hyper = build(
        "hyper",
        lambda: HyperParams(**{f: values[k] for f, k in hp_fields.items() if k in values}),
        list(hp_fields.values()),
    )
    steps = values["steps"]
    sched_keys = [k for k in lines if k.startswith("schedule.")]
    schedule = build(
        "schedule",
        lambda: ScheduleSpec(
            kind=get("schedule.kind", ScheduleKind.WSD),
            base_lr=get("schedule.base_lr", hyper.eta),
            total_steps=get("schedule.total_steps", steps),
            warmup_steps=get("schedule.warmup_steps", 0),
            decay_start=get("schedule.decay_start"),
            min_lr=get("schedule.min_lr", 0.0),
        ),
        sched_keys,
    )
    overrides = {m.group(1): values[k] for k in values if (m := _GROUP_KEY.match(k))}
    return build(
        "experiment",
        lambda: ExperimentConfig(
            problem=problem,
            optimizer=values["optimizer"],
            hyper=hyper,
            schedule=schedule,
            steps=steps,
            log_every=get("log_every", 1),
            seed=get("seed", 0),
            run_name=get("run_name", "run"),
            threshold=get("threshold"),
            overrides=overrides,
        ),
        list(lines),
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_config(text)


def with_lr(config: ExperimentConfig, lr: float) -> ExperimentConfig:
    """Copy of ``config`` with both ``hyper.eta`` and ``schedule.base_lr`` set to ``lr``."""
    schedule = config.schedule
    return replace(
        config,
        hyper=replace(config.hyper, eta=lr),
        schedule=replace(schedule, base_lr=lr, min_lr=min(schedule.min_lr, lr)),
    )
