"""Dense matrix kernels, Newton-Schulz orthogonalization and exact polar oracles.

Matrices are plain 2-D ``float64`` numpy arrays. ``svd_oracle``, ``polar_oracle``
and ``polar_via_eigh`` exist to verify ``newton_schulz``; nothing on the
training path calls them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

NS_EPS = 1e-7
JACOBI_MAX_SWEEPS = 60


class ShapeError(ValueError):
    pass


class NonFiniteError(ValueError):
    pass


class ZeroInputError(ValueError):
    pass


class RankDeficientError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate ``a`` as a finite, non-empty 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return arr


class NsKind(enum.Enum):
    CUBIC = "cubic"
    QUINTIC = "quintic"


@dataclass(frozen=True)
class NsCoefficients:
    """Odd polynomial ``f`` applied to the singular values at each iteration.

    Cubic terms are ``(a, b)`` for ``f(x) = a x + b x^3``; quintic terms are
    ``(a, b, c)`` for ``f(x) = a x + b x^3 + c x^5``.
    """

    kind: NsKind
    terms: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(float(t) for t in self.terms))
        want = 2 if self.kind is NsKind.CUBIC else 3
        if len(self.terms) != want:
            raise ValueError(f"{self.kind.value} coefficients need {want} terms, got {len(self.terms)}")
        if not all(np.isfinite(self.terms)):
            raise ValueError("coefficients must be finite")
        f1 = sum(self.terms)
        if not 0.5 <= f1 <= 1.5:
            raise ValueError(f"f(1) = {f1:.4g} is outside the sanity band [0.5, 1.5]")

    @classmethod
    def from_name(cls, name: str) -> NsCoefficients:
        try:
            return {"cubic": CUBIC, "quintic": QUINTIC}[name.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown Newton-Schulz coefficient set {name!r}") from None


CUBIC = NsCoefficients(NsKind.CUBIC, (1.5, -0.5))
QUINTIC = NsCoefficients(NsKind.QUINTIC, (3.4445, -4.7750, 2.0315))


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def transpose(a) -> np.ndarray:
    # copy so the result owns row-major storage instead of aliasing ``a``
    return np.ascontiguousarray(as_matrix(a).T)


def frobenius_norm(a) -> float:
    return float(np.sqrt(np.sum(np.square(as_matrix(a)))))


def rms(a) -> float:
    a = as_matrix(a)
    return frobenius_norm(a) / np.sqrt(a.size)


def newton_schulz(m, steps: int = 5, coeffs: NsCoefficients = QUINTIC) -> np.ndarray:
    """Approximate the polar factor of ``m`` with ``steps`` polynomial iterations.

    The input is first scaled to unit Frobenius norm so every singular value
    starts in (0, 1]. Tall inputs are processed in their wide orientation so the
    Gram matrix is ``min(rows, cols)`` square.
    """
    m = as_matrix(m, "m")
    if steps < 1:
        raise ValueError(f"steps must be positive, got {steps}")
    norm = frobenius_norm(m)
    if norm == 0.0:
        raise ZeroInputError("newton_schulz is undefined for the zero matrix")

    tall = m.shape[0] > m.shape[1]
    x = (m.T if tall else m) / (norm + NS_EPS)
    if coeffs.kind is NsKind.CUBIC:
        a, b = coeffs.terms
        for _ in range(steps):
            gram = x @ x.T
            x = a * x + b * (gram @ x)
    else:
        a, b, c = coeffs.terms
        for _ in range(steps):
            gram = x @ x.T
            x = a * x + (b * gram + c * (gram @ gram)) @ x
    out = np.ascontiguousarray(x.T if tall else x)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("newton_schulz produced non-finite entries")
    return out


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings of ``n`` (even) indices into ``n - 1`` rounds of disjoint pairs."""
    idx = list(range(n))
    rounds = []
    for _ in range(n - 1):
        p = np.array(idx[: n // 2])
        q = np.array(idx[n // 2 :][::-1])
        rounds.append((p, q))
        idx = [idx[0], idx[-1]] + idx[1:-1]
    return rounds


def _complete_orthonormal(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace columns of ``u`` not in ``keep`` with an orthonormal completion.

    Candidates are taken from identity columns in order, so the all-zero case
    yields identity-pattern columns.
    """
    rows, cols = u.shape
    basis = [u[:, j] for j in range(cols) if keep[j]]
    out = u.copy()
    cand = 0
    for j in range(cols):
        if keep[j]:
            continue
        while True:
            e = np.zeros(rows)
            e[cand] = 1.0
            cand += 1
            # two passes of Gram-Schmidt
            for _ in range(2):
                for b in basis:
                    e -= (b @ e) * b
            nrm = np.linalg.norm(e)
            if nrm > 1e-8:
                break
        e /= nrm
        basis.append(e)
        out[:, j] = e
    return out


def svd_oracle(m, max_sweeps: int = JACOBI_MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``m = U diag(s) V^T`` by one-sided (Hestenes) Jacobi rotations.

    Column pairs are rotated until mutually orthogonal; each sweep visits all
    pairs in round-robin order so the rotations of a round are disjoint and can
    be applied together. Returns ``U`` (rows x r), ``s`` (r,) sorted descending
    and ``V`` (cols x r) with ``r = min(rows, cols)``.
    """
    m = as_matrix(m, "m")
    wide = m.shape[0] < m.shape[1]
    a = np.array(m.T if wide else m, dtype=np.float64)
    rows, n = a.shape
    v = np.eye(n)

    # pad to an even count with a zero column that never rotates
    npad = n + (n % 2)
    if npad != n:
        a = np.hstack([a, np.zeros((rows, 1))])
        v = np.pad(v, ((0, 1), (0, 1)))
    tol = rows * np.finfo(np.float64).eps
    rounds = _round_robin(npad) if npad > 1 else []

    for _ in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            ap, aq = a[:, p], a[:, q]
            alpha = np.sum(ap * ap, axis=0)
            beta = np.sum(aq * aq, axis=0)
            gamma = np.sum(ap * aq, axis=0)
            act = np.abs(gamma) > tol * np.sqrt(alpha) * np.sqrt(beta)
            act &= (alpha > 0) & (beta > 0)
            if not np.any(act):
                continue
            rotated = True
            g = np.where(act, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.copysign(1.0, zeta) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.hypot(1.0, t)
            s = c * t
            c = np.where(act, c, 1.0)
            s = np.where(act, s, 0.0)
            a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
            vp, vq = v[:, p], v[:, q]
            v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            break
    else:
        raise ConvergenceError(f"one-sided Jacobi did not converge in {max_sweeps} sweeps")

    a, v = a[:, :n], v[:n, :n]
    sv = np.sqrt(np.sum(a * a, axis=0))
    order = np.argsort(-sv, kind="stable")
    sv, a, v = sv[order], a[:, order], v[:, order]

    scale = sv[0] if n else 0.0
    keep = sv > max(scale * n * np.finfo(np.float64).eps, np.finfo(np.float64).tiny)
    u = np.zeros_like(a)
    u[:, keep] = a[:, keep] / sv[keep]
    if not np.all(keep):
        u = _complete_orthonormal(u, keep)
        sv = np.where(keep, sv, 0.0)
    if wide:
        return v, sv, u
    return u, sv, v


def polar_oracle(m) -> np.ndarray:
    """Exact polar factor ``U V^T`` of a full-rank matrix."""
    u, s, v = svd_oracle(m)
    if s[-1] <= 1e-12:
        raise RankDeficientError(f"smallest singular value {s[-1]:.3g} <= 1e-12; polar factor is not unique")
    return u @ v.T


def _inv_sqrt_psd(sym: np.ndarray, rank: int) -> np.ndarray:
    w, q = np.linalg.eigh((sym + sym.T) / 2)
    # eigh sorts ascending; only the top ``rank`` eigenpairs carry the range
    w, q = w[-rank:], q[:, -rank:]
    return (q / np.sqrt(w)) @ q.T


def polar_via_eigh(m, side: str = "left") -> np.ndarray:
    """Polar factor through a symmetric eigensolve, independent of ``svd_oracle``.

    ``side="left"`` computes ``(M M^T)^{-1/2} M``; ``side="right"`` computes
    ``M (M^T M)^{-1/2}``. When the Gram matrix is singular (non-square ``m``)
    the inverse square root is taken on its range, which still yields the
    polar factor for full-rank ``m``.
    """
    m = as_matrix(m, "m")
    rank = min(m.shape)
    if side == "left":
        return _inv_sqrt_psd(m @ m.T, rank) @ m
    if side == "right":
        return m @ _inv_sqrt_psd(m.T @ m, rank)
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")
