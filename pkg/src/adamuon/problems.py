"""Small differentiable objectives with hand-written gradients.

Every parameter is a 2-D matrix; biases are ``1 x k`` rows so the shape rule
in :func:`adamuon.optim.assign_param_groups` routes them to AdamW.

Data streams (all from :class:`adamuon.rng.SplitMix64` seeded by
``spec.seed``, drawn in the order listed):

* ``QuadraticAlign(n, m)``: target ``W* ~ N(0, 1)``, ``n x m``.
* ``MatrixRegression(samples, in, out)``: ``X ~ N(0, 1)``, ``W* ~ N(0, 1)``,
  ``Y = X W* + noise * N(0, 1)``.
* ``LogisticRegression(samples, features)``: ``X ~ N(0, 1)``,
  ``w* ~ N(0, 1)``, ``y = 1[X w* + noise * N(0, 1) > 0]``.
* ``Mlp2(samples, in, hidden, classes)``: class centers ``3 * N(0, 1)``,
  labels ``i mod classes``, ``X = center[label] + noise * N(0, 1)``.

Initial parameters come from a separate stream (see :meth:`Problem.init_params`).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .densecore import NonFiniteError, ShapeError
from .rng import SplitMix64, derive_seed


class ProblemKind(enum.Enum):
    QUADRATIC_ALIGN = "quadratic_align"
    MATRIX_REGRESSION = "matrix_regression"
    LOGISTIC_REGRESSION = "logistic_regression"
    MLP2 = "mlp2"

    @classmethod
    def parse(cls, text: str) -> ProblemKind:
        key = text.strip().lower().replace("-", "_")
        aliases = {
            "quadraticalign": "quadratic_align",
            "quadratic": "quadratic_align",
            "matrixregression": "matrix_regression",
            "logisticregression": "logistic_regression",
            "logistic": "logistic_regression",
        }
        key = aliases.get(key, key)
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown problem kind {text!r}")


_DIM_NAMES = {
    ProblemKind.QUADRATIC_ALIGN: ("n", "m"),
    ProblemKind.MATRIX_REGRESSION: ("samples", "in", "out"),
    ProblemKind.LOGISTIC_REGRESSION: ("samples", "features"),
    ProblemKind.MLP2: ("samples", "in", "hidden", "classes"),
}


class DivergenceError(ArithmeticError):
    def __init__(self, loss: float):
        super().__init__(f"loss is non-finite ({loss})")
        self.loss = loss


@dataclass(frozen=True)
class ProblemSpec:
    kind: ProblemKind
    dims: tuple[int, ...]
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        names = _DIM_NAMES[self.kind]
        if len(self.dims) != len(names):
            raise ValueError(f"{self.kind.value} needs dims ({', '.join(names)}), got {self.dims}")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be positive, got {self.dims}")
        if self.kind is ProblemKind.MLP2 and self.dims[3] < 2:
            raise ValueError("mlp2 needs at least 2 classes")
        if not (math.isfinite(self.noise) and self.noise >= 0):
            raise ValueError("noise must be finite and >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class Problem:
    spec: ProblemSpec
    data: dict[str, np.ndarray] = field(repr=False)
    param_shapes: tuple[tuple[str, tuple[int, int]], ...]

    def init_params(self, seed: int) -> dict[str, np.ndarray]:
        """Weights ~ N(0, 1/fan_in), biases zero; QuadraticAlign starts at N(0, 1)."""
        rng = SplitMix64(derive_seed(seed, 1))
        params = {}
        for name, shape in self.param_shapes:
            if name.startswith("b"):
                params[name] = np.zeros(shape)
            elif self.spec.kind is ProblemKind.QUADRATIC_ALIGN:
                params[name] = rng.normal(shape)
            else:
                params[name] = rng.normal(shape) / math.sqrt(shape[0])
        return params

    def loss(self, params) -> float:
        return _EVAL[self.spec.kind](self, self._check(params), False)[0]

    def loss_and_grad(self, params, batch_index: int = 0):
        # full batch; batch_index is accepted for forward compatibility
        loss, grads = _EVAL[self.spec.kind](self, self._check(params), True)
        if not math.isfinite(loss):
            raise DivergenceError(loss)
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"gradient {name!r} has non-finite entries")
        return loss, grads

    def _check(self, params):
        expected = dict(self.param_shapes)
        if set(params) != set(expected):
            raise ShapeError(f"expected parameters {sorted(expected)}, got {sorted(params)}")
        out = {}
        for name, shape in expected.items():
            p = np.asarray(params[name], dtype=np.float64)
            if p.shape != shape:
                raise ShapeError(f"parameter {name!r} has shape {p.shape}, expected {shape}")
            out[name] = p
        return out


def make_problem(spec: ProblemSpec) -> Problem:
    rng = SplitMix64(spec.seed)
    kind, dims = spec.kind, spec.dims
    if kind is ProblemKind.QUADRATIC_ALIGN:
        n, m = dims
        data = {"target": rng.normal((n, m))}
        shapes = (("w", (n, m)),)
    elif kind is ProblemKind.MATRIX_REGRESSION:
        samples, d_in, d_out = dims
        x = rng.normal((samples, d_in))
        w_star = rng.normal((d_in, d_out))
        y = x @ w_star + spec.noise * rng.normal((samples, d_out))
        data = {"x": x, "y": y, "target": w_star}
        shapes = (("w", (d_in, d_out)),)
    elif kind is ProblemKind.LOGISTIC_REGRESSION:
        samples, feats = dims
        x = rng.normal((samples, feats))
        w_star = rng.normal((feats, 1))
        logits = x @ w_star + spec.noise * rng.normal((samples, 1))
        data = {"x": x, "y": (logits > 0).astype(np.float64), "target": w_star}
        shapes = (("w", (feats, 1)), ("b", (1, 1)))
    else:
        samples, d_in, hidden, classes = dims
        centers = 3.0 * rng.normal((classes, d_in))
        labels = np.arange(samples) % classes
        x = centers[labels] + spec.noise * rng.normal((samples, d_in))
        data = {"x": x, "labels": labels, "centers": centers}
        shapes = (
            ("w1", (d_in, hidden)),
            ("b1", (1, hidden)),
            ("w2", (hidden, classes)),
            ("b2", (1, classes)),
        )
    for arr in data.values():
        arr.setflags(write=False)
    return Problem(spec, data, shapes)


def loss_and_grad(p: Problem, params, batch_index: int = 0):
    return p.loss_and_grad(params, batch_index)


def finite_diff_grad(p: Problem, params, h: float) -> dict[str, np.ndarray]:
    """Central differences, one pair of loss evaluations per entry."""
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    base = {k: np.array(v, dtype=np.float64) for k, v in p._check(params).items()}
    grads = {}
    for name, w in base.items():
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + h
            up = p.loss(base)
            w[idx] = orig - h
            down = p.loss(base)
            w[idx] = orig
            g[idx] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def _quadratic(p, params, want_grad):
    diff = params["w"] - p.data["target"]
    loss = 0.5 * float(np.sum(diff * diff))
    return loss, ({"w": diff} if want_grad else None)


def _regression(p, params, want_grad):
    x, y = p.data["x"], p.data["y"]
    resid = x @ params["w"] - y
    samples = x.shape[0]
    loss = 0.5 * float(np.sum(resid * resid)) / samples
    return loss, ({"w": x.T @ resid / samples} if want_grad else None)


def _logistic(p, params, want_grad):
    x, y = p.data["x"], p.data["y"]
    z = x @ params["w"] + params["b"]
    # log(1 + e^z) - y z, stable for large |z|
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    if not want_grad:
        return loss, None
    dz = (_sigmoid(z) - y) / x.shape[0]
    return loss, {"w": x.T @ dz, "b": dz.sum(axis=0, keepdims=True)}


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def _mlp2(p, params, want_grad):
    x, labels = p.data["x"], p.data["labels"]
    samples = x.shape[0]
    h = np.tanh(x @ params["w1"] + params["b1"])
    logits = h @ params["w2"] + params["b2"]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(samples)
    loss = -float(np.mean(log_probs[rows, labels]))
    if not want_grad:
        return loss, None
    dlogits = np.exp(log_probs)
    dlogits[rows, labels] -= 1.0
    dlogits /= samples
    dh = (dlogits @ params["w2"].T) * (1.0 - h * h)
    return loss, {
        "w1": x.T @ dh,
        "b1": dh.sum(axis=0, keepdims=True),
        "w2": h.T @ dlogits,
        "b2": dlogits.sum(axis=0, keepdims=True),
    }


_EVAL = {
    ProblemKind.QUADRATIC_ALIGN: _quadratic,
    ProblemKind.MATRIX_REGRESSION: _regression,
    ProblemKind.LOGISTIC_REGRESSION: _logistic,
    ProblemKind.MLP2: _mlp2,
}
