"""AdaMuon, Muon, AdamW and SGD-momentum as explicit per-parameter state machines.

Each optimizer is split into a ``*_direction`` function, which advances the
state and returns the pre-learning-rate, pre-decay update, and a ``*_step``
wrapper that applies ``W <- W (1 - lr * wd) - lr * direction``. Writing the
decay as a multiplicative factor makes a zero-direction step shrink ``W`` by
exactly ``1 - lr * wd``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .densecore import (
    QUINTIC,
    NonFiniteError,
    NsCoefficients,
    ShapeError,
    as_matrix,
    frobenius_norm,
    newton_schulz,
    rms,
)

ZERO_GUARD = 1e-12
RMS_TARGET = 0.2


class OptimizerKind(enum.Enum):
    ADAMUON = "adamuon"
    MUON = "muon"
    ADAMW = "adamw"
    SGD_MOMENTUM = "sgdm"

    @classmethod
    def parse(cls, text: str) -> OptimizerKind:
        key = text.strip().lower().replace("-", "").replace("_", "")
        aliases = {"sgdmomentum": "sgdm", "sgd": "sgdm"}
        key = aliases.get(key, key)
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown optimizer {text!r}")


class ShapeClass(enum.Enum):
    MATRIX_2D = "matrix2d"
    VECTOR_1D = "vector1d"


@dataclass(frozen=True)
class HyperParams:
    """Every tunable of the four optimizers.

    ``beta`` is the matrix-optimizer (and SGD) momentum, ``adam_beta1`` the
    AdamW first-moment decay; ``beta2`` is shared by AdaMuon and AdamW.
    ``momentum_dampening=None`` picks the per-optimizer default: dampened
    ``beta*M + (1-beta)*G`` for AdaMuon, plain ``beta*M + G`` for Muon.
    """

    eta: float = 1e-3
    weight_decay: float = 0.0
    beta: float = 0.95
    beta2: float = 0.999
    eps: float = 1e-8
    ns_steps: int = 5
    ns_coeffs: NsCoefficients = QUINTIC
    momentum_dampening: bool | None = None
    adam_beta1: float = 0.9

    def __post_init__(self):
        reals = ("eta", "weight_decay", "beta", "beta2", "eps", "adam_beta1")
        for name in reals:
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        for name in ("beta", "beta2", "adam_beta1"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if int(self.ns_steps) != self.ns_steps or self.ns_steps < 1:
            raise ValueError("ns_steps must be a positive integer")


@dataclass
class AdaMuonState:
    m_buf: np.ndarray
    v_buf: np.ndarray  # flattened row-major, length rows * cols
    step: int = 0

    @classmethod
    def zeros(cls, shape) -> AdaMuonState:
        return cls(np.zeros(shape), np.zeros(shape[0] * shape[1]))


@dataclass
class MuonState:
    m_buf: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, shape) -> MuonState:
        return cls(np.zeros(shape))


@dataclass
class AdamState:
    m_buf: np.ndarray
    v_buf: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, shape) -> AdamState:
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass(frozen=True)
class ParamGroup:
    name: str
    shape_class: ShapeClass
    optimizer: OptimizerKind

    def __post_init__(self):
        if self.optimizer in MATRIX_OPTIMIZERS and self.shape_class is not ShapeClass.MATRIX_2D:
            raise ValueError(f"{self.optimizer.value} cannot be assigned to 1-D parameter {self.name!r}")


MATRIX_OPTIMIZERS = frozenset({OptimizerKind.ADAMUON, OptimizerKind.MUON})


def _check_pair(w, g, buf_shape):
    w = as_matrix(w, "w")
    g = as_matrix(g, "g")
    if w.shape != g.shape:
        raise ShapeError(f"parameter shape {w.shape} does not match gradient shape {g.shape}")
    if buf_shape != w.shape:
        raise ShapeError(f"optimizer state shape {buf_shape} does not match parameter shape {w.shape}")
    return w, g


def _apply(w, direction, lr, weight_decay):
    if lr < 0:
        raise ValueError(f"lr must be >= 0, got {lr}")
    return w * (1.0 - lr * weight_decay) - lr * direction


def rescale_rms(o_hat, eps: float) -> np.ndarray:
    """RMS-aligned rescaling: ``0.2 / (RMS(O) + eps) * O``."""
    return (RMS_TARGET / (rms(o_hat) + eps)) * o_hat


def rescale_frobenius(o_hat, eps: float) -> np.ndarray:
    """Two-stage form: normalize to Frobenius ``sqrt(min(n, m))``, then apply
    the Muon scale ``0.2 * sqrt(max(n, m))``.

    Equals ``rescale_rms(o_hat, eps / sqrt(n * m))`` up to round-off.
    """
    n, m = np.shape(o_hat)
    gamma = RMS_TARGET * math.sqrt(max(n, m))
    return (gamma * math.sqrt(min(n, m)) / (frobenius_norm(o_hat) + eps)) * o_hat


def second_moment_update(v_prev, o, beta2: float, step: int):
    """EMA of ``o**2`` and its bias-corrected value at 1-based ``step``.

    The corrected moment is evaluated as ``(beta2/bc) v_prev + ((1-beta2)/bc) o^2``
    with ``bc = 1 - beta2**step``, which equals ``v / bc`` but makes the first
    step reproduce ``o**2`` bit for bit.
    """
    bc = 1.0 - beta2**step
    sq = o * o
    v = beta2 * v_prev + (1.0 - beta2) * sq
    v_hat = (beta2 / bc) * v_prev + ((1.0 - beta2) / bc) * sq
    return v, v_hat


def adamuon_direction(g, state: AdaMuonState, hp: HyperParams) -> np.ndarray:
    g = as_matrix(g, "g")
    if g.shape != state.m_buf.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match state shape {state.m_buf.shape}")
    dampened = True if hp.momentum_dampening is None else hp.momentum_dampening
    state.step += 1
    if dampened:
        state.m_buf = hp.beta * state.m_buf + (1.0 - hp.beta) * g
    else:
        state.m_buf = hp.beta * state.m_buf + g
    if frobenius_norm(state.m_buf) <= ZERO_GUARD:
        return np.zeros_like(g)

    o = newton_schulz(state.m_buf, hp.ns_steps, hp.ns_coeffs).reshape(-1)
    state.v_buf, v_hat = second_moment_update(state.v_buf, o, hp.beta2, state.step)
    o_hat = (o / (np.sqrt(v_hat) + hp.eps)).reshape(g.shape)
    return rescale_rms(o_hat, hp.eps)


def adamuon_step(w, g, state: AdaMuonState, hp: HyperParams, lr: float) -> np.ndarray:
    w, g = _check_pair(w, g, state.m_buf.shape)
    return _apply(w, adamuon_direction(g, state, hp), lr, hp.weight_decay)


def muon_direction(g, state: MuonState, hp: HyperParams) -> np.ndarray:
    g = as_matrix(g, "g")
    if g.shape != state.m_buf.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match state shape {state.m_buf.shape}")
    state.step += 1
    if hp.momentum_dampening:
        state.m_buf = hp.beta * state.m_buf + (1.0 - hp.beta) * g
    else:
        state.m_buf = hp.beta * state.m_buf + g
    if frobenius_norm(state.m_buf) <= ZERO_GUARD:
        return np.zeros_like(g)
    gamma = RMS_TARGET * math.sqrt(max(g.shape))
    return gamma * newton_schulz(state.m_buf, hp.ns_steps, hp.ns_coeffs)


def muon_step(w, g, state: MuonState, hp: HyperParams, lr: float) -> np.ndarray:
    w, g = _check_pair(w, g, state.m_buf.shape)
    return _apply(w, muon_direction(g, state, hp), lr, hp.weight_decay)


def adamw_direction(g, state: AdamState, hp: HyperParams) -> np.ndarray:
    g = as_matrix(g, "g")
    if g.shape != state.m_buf.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match state shape {state.m_buf.shape}")
    b1, b2 = hp.adam_beta1, hp.beta2
    state.step += 1
    state.m_buf = b1 * state.m_buf + (1.0 - b1) * g
    state.v_buf = b2 * state.v_buf + (1.0 - b2) * g * g
    m_hat = state.m_buf / (1.0 - b1**state.step)
    v_hat = state.v_buf / (1.0 - b2**state.step)
    return m_hat / (np.sqrt(v_hat) + hp.eps)


def adamw_step(w, g, state: AdamState, hp: HyperParams, lr: float) -> np.ndarray:
    w, g = _check_pair(w, g, state.m_buf.shape)
    return _apply(w, adamw_direction(g, state, hp), lr, hp.weight_decay)


def sgdm_direction(g, state: MuonState, hp: HyperParams) -> np.ndarray:
    g = as_matrix(g, "g")
    if g.shape != state.m_buf.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match state shape {state.m_buf.shape}")
    state.step += 1
    state.m_buf = hp.beta * state.m_buf + g
    return state.m_buf


def sgdm_step(w, g, state: MuonState, hp: HyperParams, lr: float) -> np.ndarray:
    w, g = _check_pair(w, g, state.m_buf.shape)
    return _apply(w, sgdm_direction(g, state, hp), lr, hp.weight_decay)


DIRECTIONS = {
    OptimizerKind.ADAMUON: adamuon_direction,
    OptimizerKind.MUON: muon_direction,
    OptimizerKind.ADAMW: adamw_direction,
    OptimizerKind.SGD_MOMENTUM: sgdm_direction,
}

_STATE_TYPES = {
    OptimizerKind.ADAMUON: AdaMuonState,
    OptimizerKind.MUON: MuonState,
    OptimizerKind.ADAMW: AdamState,
    OptimizerKind.SGD_MOMENTUM: MuonState,
}


def init_state(kind: OptimizerKind, shape):
    return _STATE_TYPES[kind].zeros(tuple(shape))


def shape_class(shape) -> ShapeClass:
    return ShapeClass.VECTOR_1D if min(shape) == 1 else ShapeClass.MATRIX_2D


def assign_param_groups(
    params,
    matrix_optimizer: OptimizerKind = OptimizerKind.ADAMUON,
    overrides: dict[str, OptimizerKind] | None = None,
) -> list[ParamGroup]:
    """Assign an optimizer to each ``(name, shape)`` pair.

    With a Muon-family ``matrix_optimizer``, true 2-D parameters get it and
    vectors (``min(rows, cols) == 1``) fall back to AdamW. AdamW or SGD as the
    ``matrix_optimizer`` applies to every parameter. ``overrides`` maps names
    to an explicit optimizer and wins over the shape rule.
    """
    overrides = dict(overrides or {})
    seen = set()
    groups = []
    for name, shape in params:
        if name in seen:
            raise ValueError(f"duplicate parameter name {name!r}")
        seen.add(name)
        cls = shape_class(shape)
        if name in overrides:
            kind = overrides.pop(name)
        elif matrix_optimizer in MATRIX_OPTIMIZERS:
            kind = matrix_optimizer if cls is ShapeClass.MATRIX_2D else OptimizerKind.ADAMW
        else:
            kind = matrix_optimizer
        groups.append(ParamGroup(name, cls, kind))
    if overrides:
        raise ValueError(f"overrides name unknown parameters: {sorted(overrides)}")
    return groups


@dataclass
class GroupStepper:
    """Optimizer state for one parameter group, with a step counter for audits."""

    group: ParamGroup
    hp: HyperParams
    state: object = field(default=None)

    def direction(self, g) -> np.ndarray:
        g = as_matrix(g, self.group.name)
        if self.state is None:
            self.state = init_state(self.group.optimizer, g.shape)
        d = DIRECTIONS[self.group.optimizer](g, self.state, self.hp)
        if not np.all(np.isfinite(d)):
            raise NonFiniteError(f"non-finite update for {self.group.name!r}")
        return d

    def apply(self, w, direction, lr: float) -> np.ndarray:
        return _apply(w, direction, lr, self.hp.weight_decay)

    @property
    def steps(self) -> int:
        return 0 if self.state is None else self.state.step
