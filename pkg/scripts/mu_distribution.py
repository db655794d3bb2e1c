"""Retained second-stage mode counts mu_j against tolerance and noise level.

    python scripts/mu_distribution.py tc1
"""

import sys

from hipod.experiments import preset
from hipod.noise import NoiseSpec
from hipod.reduction import build_reduced_model, collect_snapshot_sets


def main(name="tc1", seed=1):
    config = preset(name)
    problem, mesh, basis, grid = config.setup()
    etas = (0.0, 0.01, 0.1, 0.25)
    mats = collect_snapshot_sets(problem, mesh, basis, grid, [None if e == 0 else NoiseSpec(e, seed) for e in etas])
    print(f"{name}: L / total mu / max mu  (seed {seed})")
    print("eps     " + "".join(f"{'eta=' + format(e, 'g'):>18s}" for e in etas))
    for eps in (0.9, 0.99, 0.999, 0.9999):
        cells = []
        for U in mats:
            model = build_reduced_model(U, eps, eps, mesh, basis)
            cells.append(f"{model.L} / {sum(model.mu)} / {max(model.mu)}")
        print(f"{eps:<8g}" + "".join(f"{c:>18s}" for c in cells))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tc1")
