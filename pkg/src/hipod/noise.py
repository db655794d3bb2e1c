"""Gaussian perturbation of HiMod load vectors and relative modelling errors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError
from .himod import HiModSolution, Mesh1D


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white noise ``N(0, level)`` on every load-vector entry.

    ``level`` is a variance; ``std`` overrides the standard deviation directly
    (then ``level`` is only a label).
    """

    level: float
    master_seed: int = 1
    std: float | None = None

    def __post_init__(self):
        if not self.level >= 0:
            raise ConfigError(f"noise level must be >= 0, got {self.level}")
        if self.std is not None and not self.std >= 0:
            raise ConfigError("noise std must be >= 0")

    @property
    def standard_deviation(self) -> float:
        return math.sqrt(self.level) if self.std is None else float(self.std)


def noise_stream(master_seed: int, snapshot_index: int) -> np.random.Generator:
    """Counter-based generator keyed only by ``(master_seed, snapshot_index)``."""
    key = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(snapshot_index)])
    return np.random.Generator(np.random.Philox(key))


def standard_draws(n: int, master_seed: int, snapshot_index: int) -> np.ndarray:
    return noise_stream(master_seed, snapshot_index).standard_normal(n)


def perturb_rhs(rhs, spec: NoiseSpec | None, snapshot_index: int) -> np.ndarray:
    rhs = np.asarray(rhs, dtype=float)
    if spec is None or spec.standard_deviation == 0.0:
        return rhs.copy()
    return rhs + spec.standard_deviation * standard_draws(rhs.size, spec.master_seed, snapshot_index)


def noise_matrix(U_clean, U_noisy) -> np.ndarray:
    """``E = U_noisy - U_clean``; accepts ResponseMatrix objects or arrays."""
    a = getattr(U_clean, "data", U_clean)
    b = getattr(U_noisy, "data", U_noisy)
    ga, gb = getattr(U_clean, "grid", None), getattr(U_noisy, "grid", None)
    if ga is not None and gb is not None and not np.array_equal(ga.values, gb.values):
        raise ConfigError("response matrices were built on different parameter grids")
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch {a.shape} vs {b.shape}")
    return b - a


# --------------------------------------------------------------------------
# Norms
# --------------------------------------------------------------------------


@lru_cache(maxsize=32)
def fe_matrices(mesh: Mesh1D):
    """Linear-element mass and stiffness matrices restricted to free DOFs."""
    n, h = mesh.n_nodes, mesh.h
    main_m = np.full(n, 2.0 * h / 3.0)
    main_m[[0, -1]] = h / 3.0
    main_k = np.full(n, 2.0 / h)
    main_k[[0, -1]] = 1.0 / h
    M = np.diag(main_m) + np.diag(np.full(n - 1, h / 6.0), 1) + np.diag(np.full(n - 1, h / 6.0), -1)
    K = np.diag(main_k) - np.diag(np.full(n - 1, 1.0 / h), 1) - np.diag(np.full(n - 1, 1.0 / h), -1)
    free = np.ix_(mesh.free_nodes, mesh.free_nodes)
    return M[free], K[free]


def solution_norms(sol: HiModSolution) -> tuple[float, float]:
    """``(||u||_L2, ||u||_H1)`` of the HiMod expansion via modal orthonormality."""
    if sol.basis.kind != "sine" or sol.mesh.domain.section_height != 1.0:
        raise ConfigError("closed-form norms need the sine basis on a unit section")
    M, K = fe_matrices(sol.mesh)
    U = sol.coefficients
    mass = np.einsum("jk,ji,ik->k", U, M, U)
    stiff = np.einsum("jk,ji,ik->k", U, K, U)
    k = np.arange(1, sol.basis.m + 1)
    l2sq = float(mass.sum())
    semi = float(stiff.sum() + ((k * np.pi) ** 2 * mass).sum())
    l2sq, semi = max(l2sq, 0.0), max(semi, 0.0)
    return math.sqrt(l2sq), math.sqrt(l2sq + semi)


@dataclass(frozen=True)
class ErrorReport:
    l2_relative: float
    h1_relative: float
    l2_absolute: float
    h1_absolute: float
    l2_reference: float
    h1_reference: float


def relative_error(sol: HiModSolution, reference: HiModSolution) -> ErrorReport:
    if sol.mesh != reference.mesh or sol.basis != reference.basis:
        raise ConfigError("solutions live on different meshes or modal bases")
    l2_ref, h1_ref = solution_norms(reference)
    if l2_ref == 0 or h1_ref == 0:
        raise ConfigError("reference solution has zero norm")
    diff = reference.with_coefficients(sol.coefficients - reference.coefficients)
    l2, h1 = solution_norms(diff)
    return ErrorReport(l2 / l2_ref, h1 / h1_ref, l2, h1, l2_ref, h1_ref)
