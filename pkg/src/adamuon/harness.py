"""Deterministic full-batch training loop and CSV logging."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .densecore import NonFiniteError
from .optim import GroupStepper, HyperParams, OptimizerKind, ParamGroup, assign_param_groups
from .problems import DivergenceError, ProblemSpec, make_problem
from .schedule import ScheduleSpec, lr_at

DIVERGENCE_CAP = 1e6
CSV_HEADER = ("step", "lr", "loss", "grad_norm", "update_rms", "wall_ms")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    optimizer: OptimizerKind
    hyper: HyperParams
    schedule: ScheduleSpec
    steps: int
    log_every: int = 1
    seed: int = 0
    run_name: str = "run"
    threshold: float | None = None
    overrides: dict[str, OptimizerKind] = field(default_factory=dict)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.steps > self.schedule.total_steps:
            raise ValueError(f"steps ({self.steps}) exceeds schedule.total_steps ({self.schedule.total_steps})")
        if not 1 <= self.log_every <= self.steps:
            raise ValueError(f"log_every must lie in [1, steps], got {self.log_every}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not self.run_name or any(c in self.run_name for c in "/\\"):
            raise ValueError(f"run_name must be a non-empty file stem, got {self.run_name!r}")


@dataclass(frozen=True)
class TrainRecord:
    step: int
    lr: float
    loss: float
    grad_norm: float
    update_rms: float
    wall_ms: float


@dataclass
class RunResult:
    records: list[TrainRecord]
    final_loss: float
    diverged: bool
    steps_to_threshold: int | None
    groups: list[ParamGroup] = field(default_factory=list)
    group_steps: dict[str, int] = field(default_factory=dict)
    params: dict[str, np.ndarray] = field(default_factory=dict, repr=False)


def steps_to_loss(result: RunResult, threshold: float) -> int | None:
    for rec in result.records:
        if rec.loss <= threshold:
            return rec.step
    return None


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Train ``config.problem`` for ``config.steps`` full-batch steps.

    Step ``t`` (1-based) evaluates the loss and gradient at the current
    parameters, then applies one update per parameter group with
    ``lr = lr_at(schedule, t - 1)``. Records carry the pre-update loss and are
    emitted every ``log_every`` steps and at the final step. A non-finite loss
    or one above ``DIVERGENCE_CAP`` is recorded and stops the run.
    """
    problem = make_problem(config.problem)
    params = problem.init_params(config.seed)
    groups = assign_param_groups(problem.param_shapes, config.optimizer, config.overrides)
    steppers = {g.name: GroupStepper(g, config.hyper) for g in groups}

    records: list[TrainRecord] = []
    diverged = False
    for t in range(1, config.steps + 1):
        start = time.perf_counter()
        lr = lr_at(config.schedule, t - 1)
        try:
            loss, grads = problem.loss_and_grad(params, t - 1)
            if loss > DIVERGENCE_CAP:
                raise DivergenceError(loss)
            directions = {name: steppers[name].direction(grads[name]) for name, _ in problem.param_shapes}
        except (DivergenceError, NonFiniteError) as exc:
            loss = getattr(exc, "loss", math.nan)
            records.append(TrainRecord(t, lr, loss, math.nan, math.nan, _ms(start)))
            diverged = True
            break
        for name, d in directions.items():
            params[name] = steppers[name].apply(params[name], d, lr)

        if t % config.log_every == 0 or t == config.steps:
            grad_sq = sum(float(np.sum(g * g)) for g in grads.values())
            upd_sq = sum(float(np.sum(d * d)) for d in directions.values())
            count = sum(d.size for d in directions.values())
            records.append(
                TrainRecord(t, lr, loss, math.sqrt(grad_sq), math.sqrt(upd_sq / count), _ms(start))
            )

    result = RunResult(
        records=records,
        final_loss=records[-1].loss,
        diverged=diverged,
        steps_to_threshold=None,
        groups=groups,
        group_steps={name: s.steps for name, s in steppers.items()},
        params=params,
    )
    if config.threshold is not None:
        result.steps_to_threshold = steps_to_loss(result, config.threshold)
    return result


def _ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


def write_csv(records, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in records:
                writer.writerow([r.step, repr(r.lr), repr(r.loss), repr(r.grad_norm), repr(r.update_rms), repr(r.wall_ms)])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


class CsvSchemaError(ValueError):
    pass


def read_csv(path) -> list[TrainRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise CsvSchemaError(f"{path}: header does not match {','.join(CSV_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise CsvSchemaError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        try:
            out.append(TrainRecord(int(row[0]), *(float(x) for x in row[1:])))
        except ValueError as exc:
            raise CsvSchemaError(f"{path}:{lineno}: {exc}") from None
    return out
