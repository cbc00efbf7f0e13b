"""Invariant battery behind ``adamuon check``.

Every check returns a :class:`CheckResult` carrying the measured error and the
tolerance it is judged against. Inputs come from fixed numpy seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .densecore import (
    CUBIC,
    QUINTIC,
    NsCoefficients,
    NsKind,
    newton_schulz,
    polar_oracle,
    polar_via_eigh,
    rms,
    svd_oracle,
)
from .optim import (
    AdamState,
    AdaMuonState,
    HyperParams,
    MuonState,
    OptimizerKind,
    adamuon_direction,
    adamuon_step,
    adamw_step,
    init_state,
    muon_step,
    rescale_frobenius,
    rescale_rms,
    second_moment_update,
    sgdm_step,
)
from .problems import ProblemKind, ProblemSpec, finite_diff_grad, make_problem


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    tolerance: float
    passed: bool
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{self.name:<28} err={self.measured:<10.3g} tol={self.tolerance:<8.3g} {status}"
        return f"{text}  ({self.note})" if self.note else text


def random_conditioned(rng: np.random.Generator, rows: int, cols: int, cond: float = 100.0) -> np.ndarray:
    """Random ``rows x cols`` matrix with singular values spanning ``[1/cond, 1]``."""
    k = min(rows, cols)
    u, _ = np.linalg.qr(rng.standard_normal((rows, k)))
    v, _ = np.linalg.qr(rng.standard_normal((cols, k)))
    s = np.exp(rng.uniform(-math.log(cond), 0.0, k))
    s[0] = 1.0
    if k > 1:
        s[-1] = 1.0 / cond
    return (u * s) @ v.T


def polar_corpus(count: int = 50, seed: int = 0, max_rows: int = 32, max_cols: int = 64, cond: float = 100.0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        rows = int(rng.integers(2, max_rows + 1))
        cols = int(rng.integers(2, max_cols + 1))
        out.append(random_conditioned(rng, rows, cols, cond))
    return out


def relative_grad_error(analytic, numeric) -> float:
    """Largest per-parameter ``max|a - n| / max(max|a|, max|n|)``."""
    worst = 0.0
    for name in analytic:
        a, n = analytic[name], numeric[name]
        scale = max(np.abs(a).max(), np.abs(n).max())
        if scale > 0:
            worst = max(worst, float(np.abs(a - n).max() / scale))
    return worst


GRAD_CHECK_SPECS = {
    ProblemKind.QUADRATIC_ALIGN: ((5, 4), 0.0),
    ProblemKind.MATRIX_REGRESSION: ((24, 5, 3), 0.1),
    ProblemKind.LOGISTIC_REGRESSION: ((32, 6), 0.5),
    ProblemKind.MLP2: ((24, 4, 6, 3), 1.0),
}


def grad_check(kind: ProblemKind, seed: int) -> float:
    dims, noise = GRAD_CHECK_SPECS[kind]
    problem = make_problem(ProblemSpec(kind, dims, noise, seed))
    params = problem.init_params(seed)
    jitter = np.random.default_rng(seed)
    # move biases off zero so their gradients are generic
    params = {k: v + 0.1 * jitter.standard_normal(v.shape) for k, v in params.items()}
    _, grads = problem.loss_and_grad(params)
    scale = max(1.0, max(float(np.abs(v).max()) for v in params.values()))
    return relative_grad_error(grads, finite_diff_grad(problem, params, 1e-5 * scale))


def _result(name, measured, tol, note=""):
    return CheckResult(name, float(measured), tol, bool(measured <= tol), note)


def check_ns_cubic(corpus):
    err = max(np.abs(newton_schulz(m, 30, CUBIC) - polar_oracle(m)).max() for m in corpus)
    return _result("ns_cubic_vs_polar", err, 1e-6)


def check_polar_identity(corpus):
    err = 0.0
    for m in corpus:
        ref = polar_oracle(m)
        for side in ("left", "right"):
            err = max(err, np.abs(polar_via_eigh(m, side) - ref).max())
    return _result("polar_identity", err, 1e-8)


def check_ns_quintic_band(corpus, quintic_terms):
    coeffs = NsCoefficients(NsKind.QUINTIC, quintic_terms)
    lo, hi = math.inf, 0.0
    for m in corpus:
        s = svd_oracle(newton_schulz(m, 5, coeffs))[1]
        lo, hi = min(lo, s.min()), max(hi, s.max())
    excess = max(0.2 - lo, hi - 1.6, 0.0)
    return _result("ns_quintic_band", excess, 0.0, f"singular values in [{lo:.4g}, {hi:.4g}]")


def check_svd(corpus):
    recon = ortho = 0.0
    for m in corpus:
        u, s, v = svd_oracle(m)
        eye = np.eye(len(s))
        recon = max(recon, np.abs((u * s) @ v.T - m).max())
        ortho = max(ortho, np.abs(u.T @ u - eye).max(), np.abs(v.T @ v - eye).max())
    return [_result("svd_reconstruction", recon, 1e-10), _result("svd_orthonormality", ortho, 1e-10)]


def check_ns_scale_invariance(corpus):
    err = 0.0
    for i, m in enumerate(corpus[:10]):
        c = 10.0 ** (i - 4)
        err = max(err, np.abs(newton_schulz(c * m, 30, CUBIC) - newton_schulz(m, 30, CUBIC)).max())
    return _result("ns_scale_invariance", err, 1e-12)


def check_ns_transpose(corpus, quintic):
    err = max(np.abs(newton_schulz(m.T, 5, quintic) - newton_schulz(m, 5, quintic).T).max() for m in corpus)
    return _result("ns_transpose_equivariance", err, 1e-10)


def check_adamuon_rms(quintic, n_steps=100):
    rng = np.random.default_rng(1)
    hp = HyperParams(ns_coeffs=quintic)
    err = 0.0
    shapes = [(4, 4), (8, 3), (3, 12), (16, 16), (1, 2)]
    states = {s: AdaMuonState.zeros(s) for s in shapes}
    for i in range(n_steps):
        shape = shapes[i % len(shapes)]
        d = adamuon_direction(rng.standard_normal(shape), states[shape], hp)
        err = max(err, abs(rms(d) / 0.2 - 1.0))
    return _result("adamuon_rms_alignment", err, 1e-4)


def check_muon_first_step():
    rng = np.random.default_rng(2)
    err = 0.0
    for rows, cols in [(6, 6), (4, 9), (10, 3)]:
        g = np.linalg.qr(rng.standard_normal((max(rows, cols), min(rows, cols))))[0]
        g = g if rows >= cols else g.T
        w = rng.standard_normal((rows, cols))
        hp = HyperParams(ns_steps=30, ns_coeffs=CUBIC)
        w1 = muon_step(w, g, MuonState.zeros(g.shape), hp, 1.0)
        err = max(err, abs(rms(w - w1) - 0.2))
    return _result("muon_rms_first_step", err, 1e-6)


def check_rescale_equivalence():
    rng = np.random.default_rng(3)
    err = 0.0
    for _ in range(100):
        rows, cols = (int(x) for x in rng.integers(1, 20, size=2))
        o_hat = rng.standard_normal((rows, cols)) * rng.uniform(0.1, 10.0)
        eps = 1e-8
        a = rescale_frobenius(o_hat, eps)
        b = rescale_rms(o_hat, eps / math.sqrt(rows * cols))
        err = max(err, np.abs(a - b).max())
    return _result("rescale_equivalence", err, 1e-10)


def check_bias_correction():
    rng = np.random.default_rng(4)
    mismatches = 0
    for beta2 in (0.9, 0.99, 0.999, 0.9999):
        o = rng.standard_normal(10_000)
        _, v_hat = second_moment_update(np.zeros_like(o), o, beta2, 1)
        mismatches += int(np.count_nonzero(v_hat != o * o))
    return _result("bias_correction_t1", mismatches, 0.0, "entries differing from o^2")


def check_adamw_t1():
    """First AdamW step equals ``-lr * g / (|g| + eps)`` (bias corrections cancel)."""
    rng = np.random.default_rng(5)
    g = rng.standard_normal((7, 5)) * np.exp(rng.uniform(np.log(1e-3), 0.0, (7, 5)))
    w = rng.standard_normal(g.shape)
    hp = HyperParams()
    lr = 0.01
    w1 = adamw_step(w, g, AdamState.zeros(g.shape), hp, lr)
    expected = -lr * g / (np.abs(g) + hp.eps)
    err = np.abs((w1 - w) / expected - 1.0).max()
    return _result("adamw_t1_closed_form", err, 1e-10)


def check_decay_decoupling():
    rng = np.random.default_rng(6)
    w = rng.standard_normal((5, 4))
    hp = HyperParams(weight_decay=0.1)
    lr = 0.01
    steps = {
        OptimizerKind.ADAMUON: adamuon_step,
        OptimizerKind.MUON: muon_step,
        OptimizerKind.ADAMW: adamw_step,
        OptimizerKind.SGD_MOMENTUM: sgdm_step,
    }
    err = 0.0
    for kind, fn in steps.items():
        w1 = fn(w, np.zeros_like(w), init_state(kind, w.shape), hp, lr)
        err = max(err, np.abs(w1 - w * (1.0 - lr * hp.weight_decay)).max())
    return _result("decay_decoupling", err, 0.0)


def run_checks(quintic_terms=QUINTIC.terms) -> list[CheckResult]:
    corpus = polar_corpus()
    results: list[CheckResult] = []

    def attempt(name, fn):
        try:
            out = fn()
        except Exception as exc:  # a crashing check is a failing check
            results.append(CheckResult(name, math.inf, 0.0, False, f"{type(exc).__name__}: {exc}"))
            return
        results.extend(out if isinstance(out, list) else [out])

    def quintic():
        return NsCoefficients(NsKind.QUINTIC, quintic_terms)

    attempt("ns_cubic_vs_polar", lambda: check_ns_cubic(corpus))
    attempt("polar_identity", lambda: check_polar_identity(corpus))
    attempt("ns_quintic_band", lambda: check_ns_quintic_band(corpus, quintic_terms))
    attempt("svd_oracle", lambda: check_svd(corpus))
    attempt("ns_scale_invariance", lambda: check_ns_scale_invariance(corpus))
    attempt("ns_transpose_equivariance", lambda: check_ns_transpose(corpus, quintic()))
    attempt("adamuon_rms_alignment", lambda: check_adamuon_rms(quintic()))
    attempt("muon_rms_first_step", check_muon_first_step)
    attempt("rescale_equivalence", check_rescale_equivalence)
    attempt("bias_correction_t1", check_bias_correction)
    attempt("adamw_t1_sign", check_adamw_t1)
    attempt("decay_decoupling", check_decay_decoupling)
    for kind in ProblemKind:
        name = f"grad_check_{kind.value}"
        attempt(name, lambda kind=kind, name=name: _result(name, max(grad_check(kind, s) for s in range(5)), 1e-5))
    return results
