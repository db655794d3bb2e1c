"""Run one benchmark study under both noise readings and print the summary tables.

    python scripts/study.py tc1 [--seeds 1,2,3] [--out out]
"""

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from hipod.experiments import parse_list, preset, read_errors, run_experiment

PREDICTORS = ("pch", "poly:3", "gp:paper", "gp:standard")


def table(out: Path):
    rows = read_errors(out / "errors.csv")
    etas = sorted({r["eta"] for r in rows})
    preds = list(dict.fromkeys(r["predictor"] for r in rows))
    print(f"{'predictor':14s}{'norm':5s}" + "".join(f"{e:>18g}" for e in etas))
    for p in preds:
        for key, label in (("l2_rel", "L2"), ("h1_rel", "H1")):
            cells = []
            for e in etas:
                v = np.array([r[key] for r in rows if r["predictor"] == p and r["eta"] == e])
                cells.append(f"{v.mean():9.4f} ±{v.std():7.4f}")
            print(f"{p:14s}{label:5s}" + "".join(f"{c:>18s}" for c in cells))
    b = np.genfromtxt(out / "bounds.csv", delimiter=",", names=True)
    print("eta       " + "".join(f"{e:>10g}" for e in b["eta"]))
    print("P_B1      " + "".join(f"{v:10.4f}" for v in b["pb1"]))
    print("P_B2      " + "".join(f"{v:10.4f}" for v in b["pb2"]))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("name", choices=["tc1", "tc2"])
    ap.add_argument("--seeds", default=None)
    ap.add_argument("--out", default="out")
    args = ap.parse_args()
    base = replace(preset(args.name), predictors=PREDICTORS)
    if args.seeds:
        base = replace(base, seeds=parse_list(args.seeds, int))
    for is_std, label in ((False, "variance"), (True, "std")):
        out = Path(args.out) / f"{args.name}_{label}"
        run_experiment(replace(base, noise_is_std=is_std, out_dir=str(out)))
        print(f"\n== {args.name}, eta read as {label} ({out})")
        table(out)


if __name__ == "__main__":
    main()
