"""SVD utilities, variance-based truncation and singular perturbation diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError


@dataclass(frozen=True, eq=False)
class SvdFactors:
    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


@dataclass(frozen=True)
class TruncationReport:
    rank: int
    captured_variance: float
    tolerance: float


def thin_svd(M) -> SvdFactors:
    """Thin SVD ``M = left @ diag(s) @ right.T`` with a deterministic sign convention.

    Each left singular vector is flipped so that its largest-magnitude entry is
    positive (the first one on ties); the matching right vector follows.
    """
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise NumericalError("SVD input has non-finite entries")
    try:
        u, s, vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    if u.shape[1]:
        pivot = np.argmax(np.abs(u), axis=0)
        signs = np.sign(u[pivot, np.arange(u.shape[1])])
        signs[signs == 0] = 1.0
        u = u * signs
        vt = vt * signs[:, None]
    return SvdFactors(u, s, vt.T)


def variance_rank(singular_values, tolerance: float) -> TruncationReport:
    """Smallest rank whose leading squared singular values hold ``tolerance`` of the total.

    The test is done on the discarded tail, ``tail <= (1 - tolerance) * total``,
    so that ``tolerance = 1`` keeps every nonzero value regardless of rounding.
    """
    if not 0.0 <= tolerance <= 1.0:
        raise ConfigError(f"tolerance must lie in [0, 1], got {tolerance}")
    s2 = np.asarray(singular_values, dtype=float) ** 2
    total = s2.sum()
    if total == 0.0:
        return TruncationReport(0, 1.0, tolerance)
    # tail[r] = sum of s2[r:], for r = 0..n
    tail = np.append(np.cumsum(s2[::-1])[::-1], 0.0)
    rank = int(np.argmax(tail <= (1.0 - tolerance) * total))
    return TruncationReport(rank, float(1.0 - tail[rank] / total), tolerance)


def spectral_norm(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def frobenius_norm(M) -> float:
    return float(np.linalg.norm(np.asarray(M, dtype=float)))


def _paired(sv, sv_tilde):
    a = np.asarray(sv, dtype=float)
    b = np.asarray(sv_tilde, dtype=float)
    n = max(len(a), len(b))
    return np.pad(a, (0, n - len(a))), np.pad(b, (0, n - len(b)))


def weyl_check(sv, sv_tilde, E, tol: float = 1e-10):
    """``max_i |s~_i - s_i|`` against ``||E||_2``; returns (deviation, bound, holds)."""
    a, b = _paired(sv, sv_tilde)
    dev = float(np.max(np.abs(b - a))) if len(a) else 0.0
    bound = spectral_norm(E)
    return dev, bound, dev <= bound + tol


def mirsky_check(sv, sv_tilde, E, tol: float = 1e-10):
    """Sum of squared singular value deviations against ``||E||_F`` (bound as printed).

    The classical form bounds the square root of that sum; see
    :func:`mirsky_check_classical`.
    """
    a, b = _paired(sv, sv_tilde)
    total = float(np.sum((b - a) ** 2))
    bound = frobenius_norm(E)
    return total, bound, total <= bound + tol


def mirsky_check_classical(sv, sv_tilde, E, tol: float = 1e-10):
    total, bound, _ = mirsky_check(sv, sv_tilde, E, tol)
    root = math.sqrt(total)
    return root, bound, root <= bound + tol


def sin_theta_vectors(v1, v2) -> float:
    """Sine of the acute angle between two vectors; invariant to sign and scale."""
    v1 = np.asarray(v1, dtype=float).ravel()
    v2 = np.asarray(v2, dtype=float).ravel()
    n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
    if n1 == 0 or n2 == 0:
        raise ConfigError("angle undefined for a zero vector")
    c = float(np.dot(v1 / n1, v2 / n2))
    return math.sqrt(max(0.0, 1.0 - min(1.0, c * c)))


def _check_orthonormal(B, name):
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    err = np.max(np.abs(B.T @ B - np.eye(B.shape[1]))) if B.size else 0.0
    if err > 1e-10:
        raise ConfigError(f"{name} columns are not orthonormal (deviation {err:.2e})")
    return B


def subspace_sin_theta(B1, B2) -> float:
    """``||(I - B2 B2^T) B1 B1^T||_2`` for orthonormal column blocks ``B1``, ``B2``."""
    B1 = _check_orthonormal(B1, "B1")
    B2 = _check_orthonormal(B2, "B2")
    # (I - P2) B1 has the same spectral norm as (I - P2) B1 B1^T
    resid = B1 - B2 @ (B2.T @ B1)
    return min(1.0, spectral_norm(resid))


@dataclass(frozen=True)
class PerturbationReport:
    rank: int
    weyl_max_deviation: float
    spectral_norm_E: float
    mirsky_sum: float
    frobenius_norm_E: float
    delta: float
    gamma: float
    p_b1: float
    p_b2: float
    subspace_angle: float
    vector_subspace_angle: float
    weyl_holds: bool
    mirsky_holds: bool
    mirsky_classical_holds: bool
    gap_ok: bool

    @property
    def chain_holds(self) -> bool:
        return self.subspace_angle <= self.p_b2 + 1e-10

    @property
    def vector_chain_holds(self) -> bool:
        return self.vector_subspace_angle <= self.p_b2 + 1e-10


def perturbation_bounds(U, U_tilde, rank_r: int) -> PerturbationReport:
    """Compare the left singular structure of ``U`` and ``U_tilde = U + E``.

    ``delta = s~_r - s_{r+1}`` (1-based), ``gamma = s_{r+1}``.  ``p_b1`` is
    ``||E||_2 / delta`` (``inf`` when the gap is not positive), ``p_b2`` is the
    sine between the two first left singular vectors.  ``subspace_angle`` is the
    sine between the leading rank-``r`` left subspaces, ``vector_subspace_angle``
    the sine between the first perturbed vector and the clean rank-``r`` subspace.
    """
    U = np.asarray(U, dtype=float)
    U_tilde = np.asarray(U_tilde, dtype=float)
    if U.shape != U_tilde.shape:
        raise ConfigError(f"shape mismatch {U.shape} vs {U_tilde.shape}")
    n = min(U.shape)
    if not 1 <= rank_r <= n:
        raise ConfigError(f"rank_r must lie in 1..{n}")
    E = U_tilde - U
    f = thin_svd(U)
    ft = thin_svd(U_tilde)
    s, st = f.singular_values, ft.singular_values
    weyl_dev, spec_E, weyl_ok = weyl_check(s, st, E)
    mirsky_sum, frob_E, mirsky_ok = mirsky_check(s, st, E)
    _, _, mirsky_classical_ok = mirsky_check_classical(s, st, E)
    gamma = float(s[rank_r]) if rank_r < n else 0.0
    delta = float(st[rank_r - 1]) - gamma
    gap_ok = delta > 0
    p_b1 = spec_E / delta if gap_ok else math.inf
    p_b2 = sin_theta_vectors(ft.left[:, 0], f.left[:, 0])
    sub = subspace_sin_theta(ft.left[:, :rank_r], f.left[:, :rank_r])
    vec_sub = subspace_sin_theta(ft.left[:, :1], f.left[:, :rank_r])
    return PerturbationReport(
        rank=rank_r,
        weyl_max_deviation=weyl_dev,
        spectral_norm_E=spec_E,
        mirsky_sum=mirsky_sum,
        frobenius_norm_E=frob_E,
        delta=delta,
        gamma=gamma,
        p_b1=p_b1,
        p_b2=p_b2,
        subspace_angle=sub,
        vector_subspace_angle=vec_sub,
        weyl_holds=weyl_ok,
        mirsky_holds=mirsky_ok,
        mirsky_classical_holds=mirsky_classical_ok,
        gap_ok=gap_ok,
    )
