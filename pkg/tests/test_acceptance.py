"""End-to-end acceptance checks, one test (or a small group) per criterion.

Every check is recorded with :func:`conftest.record` and printed as a
``criterion N: PASS/FAIL`` line in the terminal summary.  Stochastic criteria
run the full presets (10 seeds) once per test case.
"""

import os
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import record
from hipod.experiments import preset, read_errors, run_experiment
from hipod.himod import ModalBasis, evaluate_solution, gauss_unit, solve
from hipod.predictors import SampleSet, fit_gp, fit_pch, fit_polynomial, parse_predictor
from hipod.problems import PROBLEMS, separable_diffusion, separable_exact
from hipod.reduction import ParameterGrid, build_reduced_model, collect_snapshots, predict_online
from hipod.spectra import mirsky_check, mirsky_check_classical, perturbation_bounds, thin_svd, variance_rank, weyl_check

ETAS = (0.01, 0.05, 0.1, 0.25)
ALL_PREDICTORS = ("pch", "poly:3", "gp:paper", "gp:standard")
GP_MODES = ("gp:paper", "gp:standard")

# published reference values
PAPER_PB2 = {"tc1": (0.0032, 0.0072, 0.0173, 0.0517), "tc2": (0.0030, 0.0208, 0.0841, 0.4279)}
PAPER_ERRORS_AT_025 = {"tc1": {"pch": 0.5521, "poly:3": 0.1414}, "tc2": {"pch": 1.0589, "poly:3": 0.3067}}


def seed_means(rows):
    """{(eta, predictor): (mean L2, mean H1)} over seeds."""
    groups = {}
    for r in rows:
        groups.setdefault((r["eta"], r["predictor"]), []).append((r["l2_rel"], r["h1_rel"]))
    return {k: tuple(np.mean(v, axis=0)) for k, v in groups.items()}


def read_bounds(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {float(row["eta"]): row for row in np.atleast_1d(data)}


@pytest.fixture(scope="module", params=["tc1", "tc2"])
def study(request, tmp_path_factory):
    name = request.param
    out = tmp_path_factory.mktemp(f"study_{name}")
    config = replace(preset(name), predictors=ALL_PREDICTORS, out_dir=str(out))
    t0 = time.perf_counter()
    manifest = run_experiment(config)
    elapsed = time.perf_counter() - t0
    return {
        "name": name,
        "out": out,
        "manifest": manifest,
        "elapsed": elapsed,
        "means": seed_means(read_errors(out / "errors.csv")),
        "bounds": read_bounds(out / "bounds.csv"),
    }


# ---- 1 -------------------------------------------------------------------


def _oracle_error(n):
    problem = separable_diffusion()
    sol = solve(problem, problem.mesh(n), ModalBasis(1), 1.0)
    g, w = gauss_unit(32)
    x = (np.arange(120)[:, None] * 0.05 + 0.05 * g).ravel()
    X, Y = np.meshgrid(x, g, indexing="ij")
    W = np.outer(np.tile(0.05 * w, 120), w)
    ue = separable_exact(X, Y)
    return float(np.sqrt(np.sum(W * (evaluate_solution(sol, X, Y) - ue) ** 2) / np.sum(W * ue**2)))


def test_criterion_1_separable_oracle():
    t0 = time.perf_counter()
    errs = {n: _oracle_error(n) for n in (20, 40, 80)}
    elapsed = time.perf_counter() - t0
    rates = (errs[20] / errs[40], errs[40] / errs[80])
    ok = errs[40] <= 1e-3 and min(rates) >= 3.5 and elapsed < 1.0
    record("1", ok, f"L2 error at 40 elements {errs[40]:.3e}; reduction per doubling {rates[0]:.2f}, {rates[1]:.2f}; {elapsed:.2f}s")
    assert ok


# ---- 2 -------------------------------------------------------------------


@pytest.mark.parametrize("name", ["tc1", "tc2"])
def test_criterion_2_lossless_round_trip(name):
    config = preset(name)
    problem, mesh, basis, grid = config.setup()
    t0 = time.perf_counter()
    U = collect_snapshots(problem, mesh, basis, grid)
    model = build_reduced_model(U, 1.0, 1.0, mesh, basis)
    elapsed = time.perf_counter() - t0
    pch = parse_predictor("pch")
    worst = max(
        np.max(np.abs(predict_online(model, pch, float(grid.values[i])).coefficients - U.snapshot(i)))
        for i in (0, 13, 50, 99)
    )
    ok = worst <= 1e-10 and elapsed < 120
    record("2", ok, f"{name}: max-norm round trip error {worst:.2e}; offline build {elapsed:.1f}s (L={model.L})")
    assert ok


# ---- 3 -------------------------------------------------------------------


@pytest.mark.parametrize("name", ["tc1", "tc2"])
def test_criterion_3_noiseless_control(name, tmp_path):
    config = replace(preset(name), noise_levels=(0.0,), seeds=(1,), predictors=ALL_PREDICTORS, out_dir=str(tmp_path))
    run_experiment(config)
    errs = {r["predictor"]: r["l2_rel"] for r in read_errors(tmp_path / "errors.csv")}
    ok = all(v <= 1e-3 for v in errs.values())
    record("3", ok, f"{name}: L2 errors at eta=0 " + ", ".join(f"{k}={v:.2e}" for k, v in errs.items()) + " (target <= 1e-3)")
    assert ok


# ---- 4 -------------------------------------------------------------------


def _best_gp(means, eta, norm):
    return min(means[(eta, g)][norm] for g in GP_MODES)


def test_criterion_4_table_reproduction(study):
    name, means = study["name"], study["means"]
    pch, cp = means[(0.25, "pch")], means[(0.25, "poly:3")]
    gp = (_best_gp(means, 0.25, 0), _best_gp(means, 0.25, 1))
    paper = PAPER_ERRORS_AT_025[name]
    failures = []
    if name == "tc1":
        bands = 0.25 <= pch[0] <= 1.1 and 0.06 <= cp[0] <= 0.30
        if not bands:
            failures.append("bands")
        record("4", bands, f"{name}: mean L2 at eta=0.25 PCH {pch[0]:.4f} in [0.25, 1.1], CP {cp[0]:.4f} in [0.06, 0.30]")
    for norm, label in ((0, "L2"), (1, "H1")):
        rel = cp[norm] <= 0.5 * pch[norm] and gp[norm] <= 0.5 * pch[norm]
        if not rel:
            failures.append(f"relation {label}")
        record(
            "4",
            rel,
            f"{name}: {label} at eta=0.25 CP {cp[norm]:.4f}, best GP {gp[norm]:.4f} vs 0.5*PCH {0.5 * pch[norm]:.4f}"
            + (f" (published PCH {paper['pch']}, CP {paper['poly:3']})" if norm == 0 else ""),
        )
    timing = study["elapsed"] < 600
    if not timing:
        failures.append("runtime")
    record("4", timing, f"{name}: full 10-seed study in {study['elapsed']:.0f}s (limit 600s)")
    assert not failures, failures


# ---- 5 -------------------------------------------------------------------


def test_criterion_5_error_monotonicity(study):
    name, means = study["name"], study["means"]
    bad = []
    for pred in ALL_PREDICTORS:
        for norm, label in ((0, "L2"), (1, "H1")):
            seq = [means[(eta, pred)][norm] for eta in ETAS]
            if np.any(np.diff(seq) < 0):
                bad.append(f"{pred} {label} " + "/".join(f"{v:.3g}" for v in seq))
    record("5", not bad, f"{name}: errors non-decreasing in eta for all predictors" if not bad else f"{name}: " + "; ".join(bad))
    assert not bad


# ---- 6 -------------------------------------------------------------------


def test_criterion_6_bounds_reproduction(study):
    name, bounds = study["name"], study["bounds"]
    pb2 = np.array([bounds[eta]["pb2"] for eta in ETAS])
    pb1 = np.array([bounds[eta]["pb1"] for eta in ETAS])
    paper = np.array(PAPER_PB2[name])
    ratio = pb2 / paper
    within = bool(np.all((ratio <= 3) & (ratio >= 1 / 3)))
    increasing = bool(np.all(np.diff(pb2) > 0))
    separated = bool(np.all(pb1 >= 10 * pb2))
    values = ", ".join(f"{a:.4f}" for a in pb2)
    record("6", within, f"{name}: mean P_B2 {values} vs published {', '.join(map(str, paper))} (ratios {', '.join(f'{r:.2g}' for r in ratio)}; factor 3 allowed)")
    record("6", increasing, f"{name}: P_B2 strictly increasing in eta")
    record("6", separated, f"{name}: P_B1 >= 10 P_B2 at every eta (P_B1 {', '.join(f'{a:.3f}' for a in pb1)})")
    assert within and increasing and separated


# ---- 7 -------------------------------------------------------------------


def _random_reports(n=100, scale=0.02):
    rng = np.random.default_rng(20240601)
    for _ in range(n):
        U = rng.normal(size=(20, 12))
        Ut = U + scale * rng.normal(size=U.shape)
        r = max(1, variance_rank(thin_svd(U).singular_values, 0.9999).rank)
        yield perturbation_bounds(U, Ut, r), U, Ut


def test_criterion_7_random_inequality_suite():
    n_weyl = n_mirsky = n_classical = n_chain = n_vector = 0
    for rep, U, Ut in _random_reports():
        s, st_ = thin_svd(U).singular_values, thin_svd(Ut).singular_values
        n_weyl += weyl_check(s, st_, Ut - U)[2]
        n_mirsky += mirsky_check(s, st_, Ut - U)[2]
        n_classical += mirsky_check_classical(s, st_, Ut - U)[2]
        n_chain += rep.chain_holds
        n_vector += rep.vector_chain_holds
    record("7", n_weyl == 100 and n_mirsky == 100, f"random pairs: Weyl {n_weyl}/100, Mirsky (printed) {n_mirsky}/100, Mirsky (classical) {n_classical}/100")
    record("7", n_chain == 100, f"random pairs: subspace chain sin(Xi~_L, Xi_L) <= P_B2 holds {n_chain}/100 (first-vector-to-subspace form {n_vector}/100)")
    assert n_weyl == 100 and n_mirsky == 100 and n_chain == 100


def test_criterion_7_experiment_runs(study):
    flags = study["manifest"].notes["bounds_flags"]
    n = len(flags)
    count = {key: sum(f[key] for f in flags.values()) for key in next(iter(flags.values()))}
    ok_weyl = count["weyl"] == n
    ok_mirsky = count["mirsky_printed"] == n
    ok_chain = count["subspace_chain"] == n
    record(
        "7",
        ok_weyl and ok_mirsky,
        f"{study['name']} runs: Weyl {count['weyl']}/{n}, Mirsky (printed) {count['mirsky_printed']}/{n}, Mirsky (classical) {count['mirsky_classical']}/{n}",
    )
    record(
        "7",
        ok_chain,
        f"{study['name']} runs: subspace chain {count['subspace_chain']}/{n} (first-vector-to-subspace form {count['vector_subspace_chain']}/{n})",
    )
    assert ok_weyl and ok_mirsky and ok_chain


def test_criterion_7_predictor_properties():
    rng = np.random.default_rng(7)
    gp_worst = poly_worst = pch_worst = 0.0
    for _ in range(20):
        # training points spaced on the kernel length scale
        a = np.cumsum(rng.uniform(0.5, 1.5, size=6))
        q = rng.normal(size=6)
        fp = fit_gp(SampleSet(a, q), "standard", nugget=1e-10)
        gp_worst = max(gp_worst, float(np.max(np.abs(fp(a) - q))))
        b = rng.normal(size=4)
        t = np.sort(rng.uniform(-1, 1, size=9))
        poly = fit_polynomial(SampleSet(t, np.polynomial.polynomial.polyval(t, b)), 3)
        poly_worst = max(poly_worst, float(np.max(np.abs(poly.coefficients - b))))
        x = np.sort(rng.uniform(0.2, 0.8, size=30))
        y = rng.normal(size=30)
        pch_worst = max(pch_worst, float(np.max(np.abs(fit_pch(SampleSet(x, y))(x) - y))))
    ok = gp_worst <= 1e-6 and poly_worst <= 1e-10 and pch_worst <= 1e-14
    record("7", ok, f"GP interpolation {gp_worst:.1e} (<=1e-6), polynomial recovery {poly_worst:.1e} (<=1e-10), PCH knots {pch_worst:.1e} (<=1e-14)")
    assert ok


# ---- 8 -------------------------------------------------------------------


def test_criterion_8_determinism(tmp_path):
    runs = []
    for threads, workers in (("1", "1"), ("4", "2")):
        out = tmp_path / f"t{threads}"
        env = {**os.environ, "OPENBLAS_NUM_THREADS": threads, "OMP_NUM_THREADS": threads, "MKL_NUM_THREADS": threads}
        subprocess.run(
            [sys.executable, "-m", "hipod", "experiment", "tc1", "--seeds", "1,2", "--workers", workers, "--out", str(out)],
            check=True,
            env=env,
            capture_output=True,
        )
        runs.append(out)
    names = sorted(p.name for p in runs[0].glob("*.csv"))
    same = names == sorted(p.name for p in runs[1].glob("*.csv")) and all(
        (runs[0] / n).read_bytes() == (runs[1] / n).read_bytes() for n in names
    )
    record("8", same, f"tc1 (seeds 1,2): {len(names)} CSVs byte-identical across 1 vs 4 BLAS threads and 1 vs 2 workers")
    assert same
