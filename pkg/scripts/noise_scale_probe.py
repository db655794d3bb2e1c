"""Exploration: how the error tables respond to alternative noise scalings.

The library injects N(0, eta) on the assembled load vector.  This probe swaps in
two other scalings of the same unit draws, without touching the library:

* ``relmax``: std ``eta * max|f_m|`` (noise relative to the source magnitude)
* ``mult``:   ``f_m * (1 + eta z)`` (multiplicative, zero outside the source)

    python scripts/noise_scale_probe.py tc1 [n_seeds]
"""

import sys

import numpy as np
import scipy.linalg

from hipod.experiments import preset
from hipod.himod import HiModSolution, solve
from hipod.noise import relative_error, standard_draws
from hipod.predictors import parse_predictor
from hipod.reduction import ResponseMatrix, SnapshotSolver, build_reduced_model, predict_online
from hipod.spectra import perturbation_bounds, thin_svd, variance_rank

SCALINGS = {
    "variance": lambda f, eta, z: f + np.sqrt(eta) * z,
    "relmax": lambda f, eta, z: f + eta * np.abs(f).max() * z,
    "mult": lambda f, eta, z: f * (1.0 + eta * z),
}


def main(name="tc1", n_seeds=3):
    config = preset(name)
    problem, mesh, basis, grid = config.setup()
    solver = SnapshotSolver(problem, mesh, basis, grid)
    lus = [scipy.linalg.lu_factor(solver.operator(i).matrix) for i in range(len(grid))]
    reference = solve(problem, mesh, basis, config.alpha_star)
    m = basis.m

    def response(rule, eta, seed):
        cols = []
        for i, lu in enumerate(lus):
            f = solver.rhs if rule is None else rule(solver.rhs, eta, standard_draws(solver.rhs.size, seed, i))
            cols.append(HiModSolution.from_flat(scipy.linalg.lu_solve(lu, f), mesh, basis).coefficients)
        return np.hstack(cols)

    clean = response(None, 0.0, 0)
    r = max(1, variance_rank(thin_svd(clean).singular_values, config.eps1).rank)
    preds = [parse_predictor(p) for p in ("pch", "poly:3", "gp:standard")]
    for label, rule in SCALINGS.items():
        for eta in config.noise_levels:
            errs, pb1, pb2 = {str(p): [] for p in preds}, [], []
            for seed in range(1, n_seeds + 1):
                U = response(rule, eta, seed)
                model = build_reduced_model(ResponseMatrix(U, grid, m), config.eps1, config.eps2, mesh, basis, {"noise_level": eta})
                for p in preds:
                    errs[str(p)].append(relative_error(predict_online(model, p, config.alpha_star), reference).l2_relative)
                rep = perturbation_bounds(clean, U, r)
                pb1.append(rep.p_b1)
                pb2.append(rep.p_b2)
            cells = "  ".join(f"{k}={np.mean(v):.4f}" for k, v in errs.items())
            print(f"{name} {label:8s} eta={eta:<5g} {cells}  P_B1={np.mean(pb1):.3f} P_B2={np.mean(pb2):.4f}", flush=True)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tc1", int(sys.argv[2]) if len(sys.argv) > 2 else 3)
