"""Experiment configuration, presets and the offline/online/bounds drivers.

Every driver writes CSV files with 17-significant-digit numbers into the
output directory plus a ``manifest.json`` listing what was written.
"""

from __future__ import annotations

import configparser
import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError
from .himod import ModalBasis, sample_field, solve, write_field_csv
from .noise import NoiseSpec, relative_error
from .predictors import parse_predictor
from .problems import PROBLEMS, REFERENCE_DIFFUSIVITY
from .reduction import ParameterGrid, build_reduced_model, collect_snapshot_sets, predict_online
from .spectra import PerturbationReport, perturbation_bounds, thin_svd, variance_rank

ERRORS_HEADER = ["test_case", "eta", "seed", "predictor", "l2_rel", "h1_rel"]
BOUNDS_HEADER = [
    "eta", "r", "delta", "pb1", "pb2", "weyl_lhs", "spec_norm_E", "mirsky_lhs", "frob_norm_E", "subspace_angle",
]
MU_HEADER = ["node_j", "mu_j"]


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "tc1"
    n_elements: int = 40
    m: int = 20
    grid_lo: float = 0.2
    grid_hi: float = 0.8
    grid_p: int = 100
    eps1: float = 0.9999
    eps2: float = 0.9999
    noise_levels: tuple = (0.01, 0.05, 0.1, 0.25)
    noise_is_std: bool = False
    seeds: tuple = tuple(range(1, 11))
    predictors: tuple = ("pch", "poly:3", "gp:paper")
    alpha_star: float = REFERENCE_DIFFUSIVITY
    mu_eps: tuple = (0.9, 0.99, 0.999)
    field_nx: int = 121
    field_ny: int = 21
    workers: int = 1
    out_dir: str = "out"

    def __post_init__(self):
        if self.preset not in PROBLEMS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(PROBLEMS)}")
        if self.n_elements < 2 or self.m < 1 or self.grid_p < 1:
            raise ConfigError("mesh size, mode count and grid size must be positive")
        if not self.grid_lo <= self.grid_hi:
            raise ConfigError("grid.lo must not exceed grid.hi")
        for eps in (self.eps1, self.eps2, *self.mu_eps):
            if not 0.0 <= eps <= 1.0:
                raise ConfigError(f"tolerance {eps} outside [0, 1]")
        if any(not eta >= 0 for eta in self.noise_levels):
            raise ConfigError("noise levels must be >= 0")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for p in self.predictors:
            parse_predictor(p)
        if not self.grid_lo - 1e-12 <= self.alpha_star <= self.grid_hi + 1e-12:
            raise ConfigError(f"alpha_star={self.alpha_star} outside the sampled range")

    def noise(self, eta: float, seed: int) -> NoiseSpec | None:
        if eta == 0:
            return None
        return NoiseSpec(eta, seed, std=eta if self.noise_is_std else None)

    def setup(self):
        problem = PROBLEMS[self.preset]()
        mesh = problem.mesh(self.n_elements)
        basis = ModalBasis(self.m)
        grid = ParameterGrid.uniform(self.grid_lo, self.grid_hi, self.grid_p)
        return problem, mesh, basis, grid


def preset(name: str) -> ExperimentConfig:
    """Settings of the two benchmark studies (tc1: 40 elements, tc2: 60)."""
    if name == "tc1":
        return ExperimentConfig(preset="tc1", n_elements=40, out_dir="out/tc1")
    if name == "tc2":
        return ExperimentConfig(preset="tc2", n_elements=60, out_dir="out/tc2")
    raise ConfigError(f"unknown preset {name!r}")


# keys of the optional INI-style config file -> ExperimentConfig fields
CONFIG_KEYS = {
    ("problem", "preset"): ("preset", str),
    ("mesh", "n_elements"): ("n_elements", int),
    ("modal", "m"): ("m", int),
    ("grid", "lo"): ("grid_lo", float),
    ("grid", "hi"): ("grid_hi", float),
    ("grid", "p"): ("grid_p", int),
    ("pod", "eps1"): ("eps1", float),
    ("pod", "eps2"): ("eps2", float),
    ("pod", "mu_eps"): ("mu_eps", "floats"),
    ("noise", "levels"): ("noise_levels", "floats"),
    ("noise", "seeds"): ("seeds", "ints"),
    ("noise", "std"): ("noise_is_std", "bool"),
    ("online", "alpha_star"): ("alpha_star", float),
    ("online", "predictors"): ("predictors", "strs"),
    ("out", "dir"): ("out_dir", str),
}


def parse_list(text: str, kind):
    items = [t.strip() for t in str(text).split(",") if t.strip()]
    try:
        return tuple(kind(t) for t in items)
    except ValueError as exc:
        raise ConfigError(f"bad list {text!r}: {exc}") from None


def _convert(value: str, kind):
    try:
        if kind == "floats":
            return parse_list(value, float)
        if kind == "ints":
            return parse_list(value, int)
        if kind == "strs":
            return parse_list(value, str)
        if kind == "bool":
            return value.strip().lower() in ("1", "true", "yes", "on")
        return kind(value)
    except ValueError as exc:
        raise ConfigError(f"bad value {value!r}: {exc}") from None


def read_config_file(path) -> dict:
    """Parse ``[section] key = value`` pairs into ExperimentConfig overrides."""
    parser = configparser.ConfigParser()
    try:
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    out = {}
    for section in parser.sections():
        for key, value in parser[section].items():
            if (section, key) not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key {section}.{key}")
            name, kind = CONFIG_KEYS[(section, key)]
            out[name] = _convert(value, kind)
    return out


def resolve_config(base: ExperimentConfig | None = None, config_file=None, **overrides) -> ExperimentConfig:
    """Preset, then config file, then explicit overrides (``None`` values ignored)."""
    values = {}
    if config_file is not None:
        values.update(read_config_file(config_file))
    values.update({k: v for k, v in overrides.items() if v is not None})
    if base is None:
        base = preset(values.get("preset", "tc1"))
    elif "preset" in values and values["preset"] != base.preset:
        base = preset(values["preset"])
    if "out_dir" not in values and base.out_dir in ("out/tc1", "out/tc2"):
        values["out_dir"] = f"out/{values.get('preset', base.preset)}"
    return replace(base, **values)


@dataclass
class RunManifest:
    config: dict
    stage_seconds: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    library_version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    notes: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


class _Stage:
    def __init__(self, manifest: RunManifest, name: str):
        self.manifest, self.name = manifest, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.manifest.stage_seconds[self.name] = self.manifest.stage_seconds.get(self.name, 0.0) + (
            time.perf_counter() - self.t0
        )


def _eta_tag(eta: float) -> str:
    return format(eta, "g")


def bounds_row(eta: float, rep: PerturbationReport) -> list:
    return [
        eta, rep.rank, rep.delta, rep.p_b1, rep.p_b2, rep.weyl_max_deviation,
        rep.spectral_norm_E, rep.mirsky_sum, rep.frobenius_norm_E, rep.subspace_angle,
    ]


def _start(config: ExperimentConfig):
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = asdict(config)
    cfg["noise_semantics"] = "std" if config.noise_is_std else "variance"
    return out, RunManifest(config=cfg)


def _finish(out: Path, manifest: RunManifest, written: list[Path]) -> RunManifest:
    manifest.files = sorted(p.relative_to(out).as_posix() for p in written)
    manifest.write(out)
    return manifest


def _bounds_reports(config, U_clean, matrices):
    r = max(1, variance_rank(thin_svd(U_clean.data).singular_values, config.eps1).rank)
    return {key: perturbation_bounds(U_clean.data, U.data, r) for key, U in matrices.items()}


def run_bounds(config: ExperimentConfig) -> RunManifest:
    """Perturbation diagnostics of noisy vs clean response matrices, one CSV per seed."""
    out, manifest = _start(config)
    problem, mesh, basis, grid = config.setup()
    keys = [(eta, s) for s in config.seeds for eta in config.noise_levels]
    with _Stage(manifest, "offline_snapshots"):
        mats = collect_snapshot_sets(
            problem, mesh, basis, grid, [None] + [config.noise(e, s) for e, s in keys], config.workers
        )
    written = []
    with _Stage(manifest, "bounds"):
        reports = _bounds_reports(config, mats[0], dict(zip(keys, mats[1:])))
        written += _write_bounds(out, config, mats[0], reports)
    manifest.notes["bounds_flags"] = bounds_flags(reports)
    return _finish(out, manifest, written)


def bounds_flags(reports) -> dict:
    """Which of the recorded inequalities hold, per (eta, seed)."""
    return {
        f"eta={_eta_tag(e)},seed={s}": {
            "weyl": rep.weyl_holds,
            "mirsky_printed": rep.mirsky_holds,
            "mirsky_classical": rep.mirsky_classical_holds,
            "gap_positive": rep.gap_ok,
            "pb2_le_pb1": rep.p_b2 <= rep.p_b1,
            "subspace_chain": rep.chain_holds,
            "vector_subspace_chain": rep.vector_chain_holds,
        }
        for (e, s), rep in reports.items()
    }


def _write_bounds(out, config, U_clean, reports):
    written = []
    r = max(1, variance_rank(thin_svd(U_clean.data).singular_values, config.eps1).rank)
    zero = perturbation_bounds(U_clean.data, U_clean.data, r)
    head = [bounds_row(0.0, zero)] if 0 not in config.noise_levels else []
    for seed in config.seeds:
        rows = head + [bounds_row(eta, reports[(eta, seed)]) for eta in config.noise_levels]
        written.append(write_csv(out / f"bounds_seed{seed}.csv", BOUNDS_HEADER, rows))
    # seed-averaged table
    mean_rows = list(head)
    for eta in config.noise_levels:
        block = np.array([bounds_row(eta, reports[(eta, s)])[2:] for s in config.seeds], dtype=float)
        mean_rows.append([eta, r, *block.mean(axis=0)])
    written.append(write_csv(out / "bounds.csv", BOUNDS_HEADER, mean_rows))
    return written


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """Full study: offline builds for every (eta, seed), online predictions at
    ``alpha_star`` for each predictor, errors, bounds and mode-count CSVs."""
    out, manifest = _start(config)
    problem, mesh, basis, grid = config.setup()
    specs = [parse_predictor(p) for p in config.predictors]
    keys = [(eta, s) for s in config.seeds for eta in config.noise_levels]
    written: list[Path] = []

    with _Stage(manifest, "reference_solve"):
        reference = solve(problem, mesh, basis, config.alpha_star)
        written.append(write_field_csv(out / "field_reference.csv", sample_field(reference, config.field_nx, config.field_ny)))

    with _Stage(manifest, "offline_snapshots"):
        mats = collect_snapshot_sets(
            problem, mesh, basis, grid, [None] + [config.noise(e, s) for e, s in keys], config.workers
        )
    clean, noisy = mats[0], dict(zip(keys, mats[1:]))

    error_rows = []
    first_seed = config.seeds[0]
    for eta, seed in keys:
        with _Stage(manifest, "offline_reduction"):
            model = build_reduced_model(
                noisy[(eta, seed)], config.eps1, config.eps2, mesh, basis,
                {"noise_level": eta, "seed": seed, "preset": config.preset},
            )
        with _Stage(manifest, "online"):
            for spec in specs:
                sol = predict_online(model, spec, config.alpha_star)
                err = relative_error(sol, reference)
                error_rows.append([config.preset, eta, seed, str(spec), err.l2_relative, err.h1_relative])
                if seed == first_seed:
                    name = f"field_eta{_eta_tag(eta)}_{str(spec).replace(':', '-')}.csv"
                    written.append(write_field_csv(out / name, sample_field(sol, config.field_nx, config.field_ny)))
    written.append(write_csv(out / "errors.csv", ERRORS_HEADER, error_rows))
    written.append(write_csv(out / "errors_summary.csv", *summarize_errors(error_rows)))

    with _Stage(manifest, "bounds"):
        reports = _bounds_reports(config, clean, noisy)
        written += _write_bounds(out, config, clean, reports)
    manifest.notes["bounds_flags"] = bounds_flags(reports)

    with _Stage(manifest, "mode_counts"):
        levels = [0.0] + [e for e in config.noise_levels if e != 0]
        for eps in config.mu_eps:
            for eta in levels:
                U = clean if eta == 0 else noisy[(eta, first_seed)]
                model = build_reduced_model(U, eps, eps, mesh, basis)
                rows = [[j + 1, mu] for j, mu in enumerate(model.mu)]
                name = f"mu_eps{_eta_tag(eps)}_eta{_eta_tag(eta)}.csv"
                written.append(write_csv(out / name, MU_HEADER, rows))

    return _finish(out, manifest, written)


def summarize_errors(rows):
    """Mean and (population) standard deviation over seeds."""
    groups: dict = {}
    for case, eta, seed, pred, l2, h1 in rows:
        groups.setdefault((case, eta, pred), []).append((l2, h1))
    header = ["test_case", "eta", "predictor", "l2_mean", "l2_std", "h1_mean", "h1_std", "n_seeds"]
    out = []
    for (case, eta, pred), vals in groups.items():
        a = np.array(vals)
        out.append([case, eta, pred, a[:, 0].mean(), a[:, 0].std(), a[:, 1].mean(), a[:, 1].std(), len(a)])
    return header, out


def read_errors(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["eta"] = float(r["eta"])
        r["seed"] = int(r["seed"])
        r["l2_rel"] = float(r["l2_rel"])
        r["h1_rel"] = float(r["h1_rel"])
    return rows
