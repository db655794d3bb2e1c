"""Directional HiPOD: offline snapshot compression and online reconstruction.

Offline, HiMod solutions over a parameter grid are stacked into the response
matrix ``U`` (``N_h x m p``, one column per (parameter, mode) pair).  A first
truncated SVD yields the fiber basis ``xi_1..xi_L``; the projections
``T_j^k(alpha_i) = xi_j . U^k(alpha_i)`` are regrouped per ``j`` into
``S_j`` (``m x p``), and a second SVD per ``j`` yields ``r_j^1..r_j^{mu_j}`` and
the coefficient tables ``Q_j^k(alpha_i)``.  Online, each ``Q_j^k`` is predicted
at the new parameter and the two expansions are run backwards.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import ConfigError, HipodError, NumericalError
from .himod import (
    FiberDomain,
    HiModOperator,
    HiModSolution,
    Mesh1D,
    ModalBasis,
    ParametricProblem,
    assemble_matrix,
    assemble_rhs,
    solve_himod,
)
from .noise import NoiseSpec, perturb_rhs
from .predictors import GP_JITTER, PredictorSpec, SampleSet, fit
from .spectra import TruncationReport, thin_svd, variance_rank


@dataclass(frozen=True, eq=False)
class ParameterGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 1 or not np.all(np.isfinite(v)):
            raise ConfigError("parameter grid must hold finite values")
        if np.any(np.diff(v) <= 0):
            raise ConfigError("parameter grid must be strictly increasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, lo: float, hi: float, p: int) -> "ParameterGrid":
        if p < 1 or (p > 1 and not lo < hi):
            raise ConfigError(f"invalid uniform grid ({lo}, {hi}, {p})")
        return cls(np.linspace(lo, hi, p))

    def __len__(self) -> int:
        return len(self.values)

    def check_within(self, lo: float, hi: float):
        if self.values[0] < lo - 1e-12 or self.values[-1] > hi + 1e-12:
            raise ConfigError(f"grid leaves the admissible range [{lo}, {hi}]")


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    """Snapshot matrix; column ``i * m + k`` is mode ``k`` of snapshot ``i`` (0-based)."""

    data: np.ndarray
    grid: ParameterGrid
    m: int

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] != self.m * len(self.grid):
            raise ConfigError("response matrix columns must equal m * p")

    @property
    def n_free(self) -> int:
        return self.data.shape[0]

    def column(self, i: int, k: int) -> int:
        return i * self.m + k

    def snapshot(self, i: int) -> np.ndarray:
        """Coefficient table ``(N_h, m)`` of snapshot ``i``."""
        return self.data[:, i * self.m : (i + 1) * self.m]


class SnapshotSolver:
    """Assembles, factorises and solves the HiMod system at each grid value.

    The load vector does not depend on the diffusivity and is assembled once.
    """

    def __init__(self, problem: ParametricProblem, mesh: Mesh1D, basis: ModalBasis, grid: ParameterGrid):
        grid.check_within(*problem.alpha_range)
        self.problem, self.mesh, self.basis, self.grid = problem, mesh, basis, grid
        self.rhs = assemble_rhs(problem.coefficients.source, mesh, basis)

    def operator(self, i: int) -> HiModOperator:
        coeffs = self.problem.at(float(self.grid.values[i]))
        return HiModOperator(assemble_matrix(coeffs, self.mesh, self.basis), self.rhs, self.mesh.n_free, self.basis.m)

    def solve_index(self, i: int, noises: Sequence[NoiseSpec | None]) -> list[np.ndarray]:
        alpha = float(self.grid.values[i])
        try:
            op = self.operator(i)
            return [solve_himod(op, perturb_rhs(op.rhs, nz, i)) for nz in noises]
        except HipodError as exc:
            raise type(exc)(f"snapshot {i} (alpha={alpha:g}): {exc}") from exc


def collect_snapshot_sets(
    problem: ParametricProblem,
    mesh: Mesh1D,
    basis: ModalBasis,
    grid: ParameterGrid,
    noises: Sequence[NoiseSpec | None],
    workers: int = 1,
) -> list[ResponseMatrix]:
    """One response matrix per noise spec, sharing each factorisation."""
    solver = SnapshotSolver(problem, mesh, basis, grid)
    m, nh, p = basis.m, mesh.n_free, len(grid)
    out = [np.empty((nh, m * p)) for _ in noises]

    def work(i):
        for mat, u in zip(out, solver.solve_index(i, noises)):
            mat[:, i * m : (i + 1) * m] = u.reshape(m, nh).T

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(work, range(p)))
    else:
        for i in range(p):
            work(i)
    return [ResponseMatrix(mat, grid, m) for mat in out]


def collect_snapshots(problem, mesh, basis, grid, noise: NoiseSpec | None = None, workers: int = 1) -> ResponseMatrix:
    return collect_snapshot_sets(problem, mesh, basis, grid, [noise], workers)[0]


@dataclass(frozen=True, eq=False)
class ReducedModel:
    xi: np.ndarray
    r: tuple
    q_tables: tuple
    grid: ParameterGrid
    mesh: Mesh1D
    basis: ModalBasis
    stage1: TruncationReport
    stage2: tuple
    singular_values: np.ndarray
    stage2_singular_values: tuple
    eps1: float
    eps2: float
    provenance: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return self.xi.shape[1]

    @property
    def mu(self) -> list[int]:
        return [rj.shape[1] for rj in self.r]

    @property
    def noise_level(self) -> float:
        return float(self.provenance.get("noise_level", 0.0))


def build_reduced_model(
    U: ResponseMatrix,
    eps1: float,
    eps2: float,
    mesh: Mesh1D,
    basis: ModalBasis,
    provenance: dict | None = None,
) -> ReducedModel:
    """Two-stage truncated SVD of the response matrix.

    Ranks are chosen by the variance criterion and clamped to at least one
    vector so the online expansions are never empty.
    """
    for eps in (eps1, eps2):
        if not 0.0 <= eps <= 1.0:
            raise ConfigError(f"tolerances must lie in [0, 1], got {eps}")
    if U.n_free != mesh.n_free or U.m != basis.m:
        raise ConfigError("response matrix does not match mesh/basis")
    if not np.any(U.data):
        raise NumericalError("response matrix is identically zero (no forcing?)")
    m, p = U.m, len(U.grid)
    f1 = thin_svd(U.data)
    rep1 = variance_rank(f1.singular_values, eps1)
    L = max(1, rep1.rank)
    xi = f1.left[:, :L]
    T = xi.T @ U.data  # (L, m p); T[j, i m + k] = T_j^k(alpha_i)
    rs, qs, reps, svs = [], [], [], []
    for j in range(L):
        S = T[j].reshape(p, m).T
        f2 = thin_svd(S)
        rep2 = variance_rank(f2.singular_values, eps2)
        mu = max(1, rep2.rank)
        rj = np.ascontiguousarray(f2.left[:, :mu])
        rs.append(rj)
        qs.append(rj.T @ S)
        reps.append(rep2)
        svs.append(f2.singular_values)
    return ReducedModel(
        xi=np.ascontiguousarray(xi),
        r=tuple(rs),
        q_tables=tuple(qs),
        grid=U.grid,
        mesh=mesh,
        basis=basis,
        stage1=rep1,
        stage2=tuple(reps),
        singular_values=f1.singular_values,
        stage2_singular_values=tuple(svs),
        eps1=float(eps1),
        eps2=float(eps2),
        provenance=dict(provenance or {}),
    )


def online_coefficients(model: ReducedModel, q_star: Sequence, alpha: float | None = None) -> HiModSolution:
    """Run both expansions backwards from per-``j`` coefficient vectors ``q_star[j]``."""
    if len(q_star) != model.L:
        raise ConfigError(f"expected {model.L} coefficient vectors, got {len(q_star)}")
    T = np.empty((model.L, model.basis.m))
    for j, (rj, qj) in enumerate(zip(model.r, q_star)):
        qj = np.asarray(qj, dtype=float).ravel()
        if qj.shape != (rj.shape[1],):
            raise ConfigError(f"q_star[{j}] must have length {rj.shape[1]}")
        T[j] = rj @ qj
    return HiModSolution(model.xi @ T, model.mesh, model.basis, alpha)


def predicted_coefficients(
    model: ReducedModel,
    predictor: PredictorSpec,
    alpha_star: float,
    extrapolate: bool = False,
) -> list[np.ndarray]:
    lo, hi = model.grid.values[0], model.grid.values[-1]
    if not extrapolate and not lo - 1e-12 <= alpha_star <= hi + 1e-12:
        raise ConfigError(f"alpha*={alpha_star} outside the sampled range [{lo}, {hi}]")
    nugget = model.noise_level if model.noise_level > 0 else GP_JITTER
    out = []
    for j, Qj in enumerate(model.q_tables):
        vals = np.empty(Qj.shape[0])
        for k in range(Qj.shape[0]):
            try:
                fp = fit(SampleSet(model.grid.values, Qj[k]), predictor, default_nugget=nugget)
                vals[k] = fp.evaluate(alpha_star, extrapolate=extrapolate)
            except HipodError as exc:
                raise type(exc)(f"predictor {predictor} failed for (j={j}, k={k}): {exc}") from exc
        out.append(vals)
    return out


def predict_online(
    model: ReducedModel,
    predictor: PredictorSpec,
    alpha_star: float,
    extrapolate: bool = False,
) -> HiModSolution:
    q = predicted_coefficients(model, predictor, alpha_star, extrapolate)
    return online_coefficients(model, q, alpha_star)


# --------------------------------------------------------------------------
# Container file
# --------------------------------------------------------------------------

MAGIC = b"HIPODRM1"


def _model_blocks(model: ReducedModel):
    yield "grid", model.grid.values
    yield "xi", model.xi
    yield "singular_values", model.singular_values
    for j in range(model.L):
        yield f"r_{j}", model.r[j]
        yield f"q_{j}", model.q_tables[j]
        yield f"d_{j}", model.stage2_singular_values[j]


def save_model(model: ReducedModel, path) -> Path:
    """Write the model as ``MAGIC | u64 header length | JSON header | raw <f8 blocks``."""
    path = Path(path)
    blocks, index, offset = [], [], 0
    for name, arr in _model_blocks(model):
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        index.append({"name": name, "dtype": "<f8", "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(raw)})
        blocks.append(raw)
        offset += len(raw)
    d = model.mesh.domain
    header = {
        "format": 1,
        "library_version": __version__,
        "mesh": {
            "x_min": d.x_min,
            "x_max": d.x_max,
            "section_height": d.section_height,
            "n_elements": model.mesh.n_elements,
            "constrained_left": model.mesh.constrained_left,
            "constrained_right": model.mesh.constrained_right,
        },
        "basis": {"m": model.basis.m, "kind": model.basis.kind},
        "eps1": model.eps1,
        "eps2": model.eps2,
        "stage1": {"rank": model.stage1.rank, "captured_variance": model.stage1.captured_variance},
        "stage2": [{"rank": r.rank, "captured_variance": r.captured_variance} for r in model.stage2],
        "L": model.L,
        "mu": model.mu,
        "provenance": model.provenance,
        "blocks": index,
    }
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(text)))
        fh.write(text)
        for raw in blocks:
            fh.write(raw)
    return path


def load_model(path) -> ReducedModel:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read model file: {exc}") from None
    if raw[:8] != MAGIC or len(raw) < 16:
        raise ConfigError(f"{path} is not a reduced-model file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"corrupt model header in {path}: {exc}") from None
    base = 16 + hlen
    arrays = {}
    for b in header["blocks"]:
        buf = raw[base + b["offset"] : base + b["offset"] + b["nbytes"]]
        arrays[b["name"]] = np.frombuffer(buf, dtype=b["dtype"]).reshape(b["shape"]).copy()
    mh = header["mesh"]
    mesh = Mesh1D(
        FiberDomain(mh["x_min"], mh["x_max"], mh["section_height"]),
        mh["n_elements"],
        mh["constrained_left"],
        mh["constrained_right"],
    )
    basis = ModalBasis(header["basis"]["m"], header["basis"]["kind"])
    L = header["L"]
    eps2 = header["eps2"]
    return ReducedModel(
        xi=arrays["xi"],
        r=tuple(arrays[f"r_{j}"] for j in range(L)),
        q_tables=tuple(arrays[f"q_{j}"] for j in range(L)),
        grid=ParameterGrid(arrays["grid"]),
        mesh=mesh,
        basis=basis,
        stage1=TruncationReport(header["stage1"]["rank"], header["stage1"]["captured_variance"], header["eps1"]),
        stage2=tuple(TruncationReport(s["rank"], s["captured_variance"], eps2) for s in header["stage2"]),
        singular_values=arrays["singular_values"],
        stage2_singular_values=tuple(arrays[f"d_{j}"] for j in range(L)),
        eps1=header["eps1"],
        eps2=eps2,
        provenance=header["provenance"],
    )
