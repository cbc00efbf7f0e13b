"""AdaMuon and baseline optimizers with a desk-scale benchmark harness."""

from .densecore import CUBIC, QUINTIC, NsCoefficients, NsKind, newton_schulz, polar_oracle, svd_oracle
from .harness import ExperimentConfig, RunResult, TrainRecord, run_experiment, steps_to_loss, write_csv
from .optim import (
    AdamState,
    AdaMuonState,
    HyperParams,
    MuonState,
    OptimizerKind,
    adamuon_step,
    adamw_step,
    assign_param_groups,
    muon_step,
    sgdm_step,
)
from .problems import ProblemKind, ProblemSpec, finite_diff_grad, loss_and_grad, make_problem
from .schedule import ScheduleKind, ScheduleSpec, lr_at

__version__ = "0.1.0"
