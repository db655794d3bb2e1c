"""Hierarchical model (HiMod) discretisation of 2D advection-diffusion-reaction.

The solution on the rectangle ``(x_min, x_max) x (0, H)`` is expanded as

    u(x, y) = sum_k sum_j u[j, k] * theta_j(x) * phi_k(y / H)

with linear finite-element hats ``theta_j`` along the supporting fiber and the
sine modal basis ``phi_k(t) = sqrt(2) sin(k pi t)`` across the section.  Testing
against every ``theta_t * phi_q`` gives ``m`` coupled 1D problems, assembled here
as one dense ``(m N_h) x (m N_h)`` system.

Flat unknown ordering is mode-major: 0-based ``(k, j) -> k * N_h + j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericalError
from .fields import Constant, Field, as_field

X_GAUSS_POINTS = 4
MIDPOINT_SUBSAMPLES = 20


def gauss_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre abscissae and weights mapped to ``[0, 1]``."""
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


def section_points(m: int) -> int:
    return max(3 * m, 32)


# ---------------------------------------------------------------------------
# Geometry and discrete spaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiberDomain:
    """Rectilinear fiber bundle ``(x_min, x_max) x (0, section_height)``."""

    x_min: float = 0.0
    x_max: float = 6.0
    section_height: float = 1.0

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ConfigError(f"x_min={self.x_min} must be < x_max={self.x_max}")
        if not self.section_height > 0:
            raise ConfigError("section_height must be positive")

    def contains(self, x, y, tol: float = 1e-12) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (
            (x >= self.x_min - tol)
            & (x <= self.x_max + tol)
            & (y >= -tol)
            & (y <= self.section_height + tol)
        )


@dataclass(frozen=True)
class Mesh1D:
    domain: FiberDomain
    n_elements: int
    constrained_left: bool = True
    constrained_right: bool = False

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.domain.x_min, self.domain.x_max, self.n_elements + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_elements + 1

    @property
    def h(self) -> float:
        return (self.domain.x_max - self.domain.x_min) / self.n_elements

    @cached_property
    def free_nodes(self) -> np.ndarray:
        """Indices of unconstrained nodes; these are the 1D DOFs."""
        lo = 1 if self.constrained_left else 0
        hi = self.n_nodes - 1 if self.constrained_right else self.n_nodes
        return np.arange(lo, hi)

    @property
    def n_free(self) -> int:
        return len(self.free_nodes)


def build_mesh(
    domain: FiberDomain,
    n_elements: int,
    dirichlet_left: bool = True,
    dirichlet_right: bool = False,
) -> Mesh1D:
    """Uniform partition of the supporting fiber into ``n_elements`` intervals."""
    if int(n_elements) != n_elements or n_elements < 2:
        raise ConfigError(f"n_elements must be an integer >= 2, got {n_elements!r}")
    return Mesh1D(domain, int(n_elements), bool(dirichlet_left), bool(dirichlet_right))


@dataclass(frozen=True)
class ModalBasis:
    """Sine modes ``sqrt(2) sin(k pi t)`` on the unit reference section, k = 1..m."""

    m: int
    kind: str = "sine"

    def __post_init__(self):
        if self.kind != "sine":
            raise ConfigError(f"unsupported modal basis kind {self.kind!r}")
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"mode count must be a positive integer, got {self.m!r}")

    def _check(self, k):
        k = np.asarray(k)
        if np.any((k < 1) | (k > self.m)):
            raise ConfigError(f"mode index out of range 1..{self.m}: {k}")

    def value(self, k, y_hat):
        self._check(k)
        return np.sqrt(2.0) * np.sin(np.pi * k * np.asarray(y_hat, dtype=float))

    def derivative(self, k, y_hat):
        self._check(k)
        return np.sqrt(2.0) * np.pi * k * np.cos(np.pi * k * np.asarray(y_hat, dtype=float))

    def values(self, y_hat) -> np.ndarray:
        """All modes at the points ``y_hat``: array of shape ``(len(y_hat), m)``."""
        k = np.arange(1, self.m + 1)
        t = np.asarray(y_hat, dtype=float).ravel()
        out = np.sqrt(2.0) * np.sin(np.pi * np.outer(t, k))
        # exact zeros on the lateral walls instead of sin(k pi) round-off
        out[(t == 0.0) | (t == 1.0)] = 0.0
        return out

    def derivatives(self, y_hat) -> np.ndarray:
        k = np.arange(1, self.m + 1)
        arg = np.pi * np.outer(np.asarray(y_hat, dtype=float), k)
        return np.sqrt(2.0) * np.pi * k * np.cos(arg)


def modal_value(basis: ModalBasis, k: int, y_hat: float) -> float:
    return float(basis.value(k, y_hat))


def modal_derivative(basis: ModalBasis, k: int, y_hat: float) -> float:
    return float(basis.derivative(k, y_hat))


PAIRINGS = ("mass", "stiffness", "mixed")


def sine_correlation(m: int, pairing: str) -> np.ndarray:
    """Closed-form unit-weight correlations of the sine basis.

    Entry ``[k, q]`` is ``int phi_k phi_q``, ``int phi_k' phi_q'`` or
    ``int phi_k' phi_q`` over ``[0, 1]``.
    """
    k = np.arange(1, m + 1, dtype=float)
    if pairing == "mass":
        return np.eye(m)
    if pairing == "stiffness":
        return np.diag((k * np.pi) ** 2)
    if pairing == "mixed":
        kk, qq = np.meshgrid(k, k, indexing="ij")
        odd = (kk + qq) % 2 == 1
        out = np.zeros((m, m))
        # 2 k pi * int sin(q pi t) cos(k pi t) dt, nonzero only for k + q odd
        out[odd] = 4.0 * kk[odd] * qq[odd] / (qq[odd] ** 2 - kk[odd] ** 2)
        return out
    raise ConfigError(f"unknown pairing {pairing!r}")


def modal_correlation(basis: ModalBasis, pairing: str, weight=None, n_quad: int | None = None):
    """Weighted modal correlation matrix on the reference section by Gauss quadrature.

    ``weight`` is a vectorised callable of ``y_hat`` (``None`` means 1).
    """
    if pairing not in PAIRINGS:
        raise ConfigError(f"unknown pairing {pairing!r}")
    y, w = gauss_unit(n_quad or section_points(basis.m))
    if weight is not None:
        w = w * np.broadcast_to(np.asarray(weight(y), dtype=float), y.shape)
    left = basis.derivatives(y) if pairing in ("stiffness", "mixed") else basis.values(y)
    right = basis.derivatives(y) if pairing == "stiffness" else basis.values(y)
    return left.T @ (w[:, None] * right)


# ---------------------------------------------------------------------------
# Problem data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientFields:
    mu: Field
    b1: Field
    b2: Field
    sigma: Field
    source: Field

    @classmethod
    def make(cls, mu, b1=0.0, b2=0.0, sigma=0.0, source=0.0) -> "CoefficientFields":
        return cls(*(as_field(v) for v in (mu, b1, b2, sigma, source)))


@dataclass(frozen=True)
class ParametricProblem:
    """ADR problem whose diffusivity is the scalar parameter ``alpha``."""

    domain: FiberDomain
    coefficients: CoefficientFields
    alpha_range: tuple = (0.2, 0.8)
    parameter_slot: str = "diffusivity"
    dirichlet_left: bool = True
    dirichlet_right: bool = False

    def __post_init__(self):
        if self.parameter_slot != "diffusivity":
            raise ConfigError(f"unsupported parameter slot {self.parameter_slot!r}")
        lo, hi = self.alpha_range
        if not lo <= hi:
            raise ConfigError(f"invalid parameter range {self.alpha_range}")

    def at(self, alpha: float) -> CoefficientFields:
        lo, hi = self.alpha_range
        if not lo - 1e-12 <= alpha <= hi + 1e-12:
            raise ConfigError(f"alpha={alpha} outside admissible range [{lo}, {hi}]")
        return replace(self.coefficients, mu=Constant(float(alpha)))

    def mesh(self, n_elements: int) -> Mesh1D:
        return build_mesh(self.domain, n_elements, self.dirichlet_left, self.dirichlet_right)


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HiModOperator:
    matrix: np.ndarray
    rhs: np.ndarray
    n_free: int
    m: int

    def __post_init__(self):
        n = self.n_free * self.m
        if self.matrix.shape != (n, n) or self.rhs.shape != (n,):
            raise ConfigError("operator dimensions inconsistent with layout")

    def flat_index(self, k: int, j: int) -> int:
        """0-based mode ``k`` and free DOF ``j`` to the flat unknown index."""
        return k * self.n_free + j

    @cached_property
    def lu(self):
        if not np.all(np.isfinite(self.matrix)):
            raise NumericalError("HiMod matrix has non-finite entries")
        return scipy.linalg.lu_factor(self.matrix, check_finite=False)


def _cell_rule(mesh: Mesh1D, n: int, midpoint: bool):
    """Per-element points ``(ne, n)``, weights ``(ne, n)`` and hat values ``(n, 2)``."""
    if midpoint:
        s = (np.arange(n) + 0.5) / n
        ws = np.full(n, 1.0 / n)
    else:
        s, ws = gauss_unit(n)
    left = mesh.nodes[:-1]
    x = left[:, None] + mesh.h * s[None, :]
    w = np.broadcast_to(mesh.h * ws, x.shape)
    hats = np.stack([1.0 - s, s], axis=1)
    return x, w, hats


def _modal_tensor(coef: Field, pairing, xq, basis, yq, wy, height):
    """``C[e, g, k, q]``: section correlation of ``coef(x_eg, .)`` or None if zero."""
    if coef.is_zero():
        return None
    scale = {"mass": height, "stiffness": 1.0 / height, "mixed": 1.0}[pairing]
    if coef.depends in ("const", "x"):
        cx = np.broadcast_to(coef(xq, 0.0), xq.shape)
        return (scale * cx)[..., None, None] * sine_correlation(basis.m, pairing)
    vals = coef(xq[..., None], height * yq)
    left = basis.derivatives(yq) if pairing in ("stiffness", "mixed") else basis.values(yq)
    right = basis.derivatives(yq) if pairing == "stiffness" else basis.values(yq)
    return scale * np.einsum("egl,l,lk,lq->egkq", vals, wy, left, right, optimize=True)


def _scatter(mesh: Mesh1D, local: np.ndarray, m: int) -> np.ndarray:
    """Scatter element blocks ``local[e, q, a, k, b]`` into the reduced global matrix."""
    nn = mesh.n_nodes
    glob = np.zeros((nn, nn, m, m))
    e = np.arange(mesh.n_elements)
    for a in (0, 1):
        for b in (0, 1):
            np.add.at(glob, (e + a, e + b), local[:, :, a, :, b])
    full = glob.transpose(2, 0, 3, 1).reshape(m * nn, m * nn)
    keep = (np.arange(m)[:, None] * nn + mesh.free_nodes[None, :]).ravel()
    return full[np.ix_(keep, keep)]


def assemble_matrix(coeffs: CoefficientFields, mesh: Mesh1D, basis: ModalBasis) -> np.ndarray:
    m = basis.m
    height = mesh.domain.section_height
    xq, wx, hats = _cell_rule(mesh, X_GAUSS_POINTS, midpoint=False)
    mu_vals = coeffs.mu(xq[..., None], height * np.linspace(0.0, 1.0, 9))
    if np.any(mu_vals <= 0):
        raise ConfigError("non-elliptic data: diffusivity must be positive on the domain")
    yq, wy = gauss_unit(section_points(m))

    def tensor(coef, pairing):
        return _modal_tensor(coef, pairing, xq, basis, yq, wy, height)

    # index convention of every tensor: [e, g, trial k, test q]
    dd = tensor(coeffs.mu, "mass")
    terms_vv = [tensor(coeffs.mu, "stiffness"), tensor(coeffs.sigma, "mass"), tensor(coeffs.b2, "mixed")]
    vd = tensor(coeffs.b1, "mass")
    dhat = np.array([-1.0, 1.0]) / mesh.h

    local = np.einsum("eg,egkq,a,b->eqakb", wx, dd, dhat, dhat, optimize=True)
    for vv in terms_vv:
        if vv is not None:
            local += np.einsum("eg,egkq,ga,gb->eqakb", wx, vv, hats, hats, optimize=True)
    if vd is not None:
        local += np.einsum("eg,egkq,ga,b->eqakb", wx, vd, hats, dhat, optimize=True)
    return _scatter(mesh, local, m)


def assemble_rhs(source: Field, mesh: Mesh1D, basis: ModalBasis) -> np.ndarray:
    """Load vector ``int f theta_t phi_q`` in the flat mode-major layout."""
    m = basis.m
    height = mesh.domain.section_height
    if source.is_zero():
        return np.zeros(m * mesh.n_free)
    if source.smooth:
        xq, wx, hats = _cell_rule(mesh, X_GAUSS_POINTS, midpoint=False)
        yq, wy = gauss_unit(section_points(m))
    else:
        # indicator data: midpoint subsampling of each (element x section cell)
        xq, wx, hats = _cell_rule(mesh, MIDPOINT_SUBSAMPLES, midpoint=True)
        n_y = section_points(m) * MIDPOINT_SUBSAMPLES
        yq = (np.arange(n_y) + 0.5) / n_y
        wy = np.full(n_y, 1.0 / n_y)
    vals = source(xq[..., None], height * yq)
    proj = np.einsum("egl,l,lq->egq", vals, height * wy, basis.values(yq), optimize=True)
    local = np.einsum("eg,egq,ga->eqa", wx, proj, hats, optimize=True)
    glob = np.zeros((m, mesh.n_nodes))
    e = np.arange(mesh.n_elements)
    for a in (0, 1):
        np.add.at(glob, (slice(None), e + a), local[:, :, a].T)
    return glob[:, mesh.free_nodes].ravel()


def assemble_himod(problem: ParametricProblem, mesh: Mesh1D, basis: ModalBasis, alpha: float) -> HiModOperator:
    coeffs = problem.at(alpha)
    return HiModOperator(
        assemble_matrix(coeffs, mesh, basis),
        assemble_rhs(coeffs.source, mesh, basis),
        mesh.n_free,
        basis.m,
    )


# ---------------------------------------------------------------------------
# Solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HiModSolution:
    """Coefficient table of shape ``(N_h, m)``; column ``k`` holds mode ``k+1``."""

    coefficients: np.ndarray
    mesh: Mesh1D
    basis: ModalBasis
    alpha: float | None = None

    def __post_init__(self):
        if self.coefficients.shape != (self.mesh.n_free, self.basis.m):
            raise ConfigError(
                f"coefficient table shape {self.coefficients.shape} does not match "
                f"mesh/basis ({self.mesh.n_free}, {self.basis.m})"
            )

    @classmethod
    def from_flat(cls, u, mesh, basis, alpha=None) -> "HiModSolution":
        table = np.asarray(u, dtype=float).reshape(basis.m, mesh.n_free).T
        return cls(np.ascontiguousarray(table), mesh, basis, alpha)

    @property
    def flat(self) -> np.ndarray:
        return self.coefficients.T.ravel()

    def nodal_table(self) -> np.ndarray:
        """Coefficients on every mesh node, zeros at constrained ends."""
        full = np.zeros((self.mesh.n_nodes, self.basis.m))
        full[self.mesh.free_nodes] = self.coefficients
        return full

    def with_coefficients(self, table) -> "HiModSolution":
        return HiModSolution(np.asarray(table, dtype=float), self.mesh, self.basis, self.alpha)


def solve_himod(op: HiModOperator, rhs: np.ndarray | None = None) -> np.ndarray:
    """Solve ``A u = rhs`` (default: the operator's own rhs); returns the flat vector."""
    f = op.rhs if rhs is None else np.asarray(rhs, dtype=float)
    if not np.any(f):
        return np.zeros_like(f)
    u = scipy.linalg.lu_solve(op.lu, f, check_finite=False)
    res = np.linalg.norm(op.matrix @ u - f)
    if not np.all(np.isfinite(u)) or res > 1e-10 * max(1.0, np.linalg.norm(f)):
        cond = np.linalg.cond(op.matrix)
        raise NumericalError(f"HiMod solve failed: residual {res:.3e}, condition estimate {cond:.3e}")
    return u


def solve(problem: ParametricProblem, mesh: Mesh1D, basis: ModalBasis, alpha: float) -> HiModSolution:
    op = assemble_himod(problem, mesh, basis, alpha)
    return HiModSolution.from_flat(solve_himod(op), mesh, basis, alpha)


def evaluate_solution(sol: HiModSolution, x, y):
    """Evaluate the HiMod expansion at points ``(x, y)`` (broadcast arrays)."""
    mesh = sol.mesh
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if not np.all(mesh.domain.contains(x, y)):
        raise ConfigError("evaluation point outside the domain")
    t = (x - mesh.domain.x_min) / mesh.h
    e = np.clip(np.floor(t).astype(int), 0, mesh.n_elements - 1)
    s = np.clip(t - e, 0.0, 1.0)
    full = sol.nodal_table()
    freq = (1.0 - s)[..., None] * full[e] + s[..., None] * full[e + 1]
    yhat = np.clip(y / mesh.domain.section_height, 0.0, 1.0)
    modes = sol.basis.values(yhat.ravel()).reshape(yhat.shape + (sol.basis.m,))
    out = np.sum(freq * modes, axis=-1)
    return float(out) if out.ndim == 0 else out


def sample_field(sol: HiModSolution, nx: int, ny: int) -> np.ndarray:
    """Rows ``(x, y, value)`` on a uniform closed tensor grid, x outer, y inner."""
    if nx < 2 or ny < 2:
        raise ConfigError("grid needs at least 2 points per direction")
    d = sol.mesh.domain
    xs = np.linspace(d.x_min, d.x_max, nx)
    ys = np.linspace(0.0, d.section_height, ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    V = evaluate_solution(sol, X, Y)
    return np.column_stack([X.ravel(), Y.ravel(), V.ravel()])


def write_field_csv(path, grid: np.ndarray) -> Path:
    path = Path(path)
    np.savetxt(path, grid, fmt="%.17g", delimiter=",", header="x,y,value", comments="")
    return path
