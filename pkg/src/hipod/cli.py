"""Command-line front end.

Exit codes: 0 on success, 2 on a configuration error, 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, NumericalError
from .experiments import (
    ERRORS_HEADER,
    MU_HEADER,
    _Stage,
    _finish,
    _start,
    parse_list,
    resolve_config,
    run_bounds,
    run_experiment,
    write_csv,
)
from .himod import sample_field, solve, write_field_csv
from .noise import relative_error
from .predictors import parse_predictor
from .reduction import build_reduced_model, collect_snapshot_sets, load_model, predict_online, save_model

log = logging.getLogger("hipod")


def _common(p: argparse.ArgumentParser, preset_arg: bool = True):
    if preset_arg:
        p.add_argument("--preset", choices=["tc1", "tc2"], help="benchmark problem (default tc1)")
    p.add_argument("--config", help="INI-style config file mirroring the flags")
    p.add_argument("--out", help="output directory")
    p.add_argument("--n-elements", type=int, dest="n_elements")
    p.add_argument("--modes", type=int, dest="m", help="number of modal functions")
    p.add_argument("--grid", help="lo,hi,p of the parameter grid")
    p.add_argument("--eps1", type=float)
    p.add_argument("--eps2", type=float)
    p.add_argument("--noise", help="comma-separated noise levels")
    p.add_argument("--noise-std", action="store_true", default=None,
                   help="read noise levels as standard deviations instead of variances")
    p.add_argument("--seeds", help="comma-separated master seeds")
    p.add_argument("--predictor", help="comma-separated predictor specs, e.g. pch,poly:3,gp:standard")
    p.add_argument("--alpha-star", type=float, dest="alpha_star")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hipod", description="HiMod / directional HiPOD driver")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="one HiMod solve and a field CSV")
    _common(p)
    p.add_argument("--alpha", type=float, help="diffusivity (default: alpha-star)")

    p = sub.add_parser("offline", help="build and save reduced models")
    _common(p)

    p = sub.add_parser("online", help="evaluate a saved reduced model")
    _common(p)
    p.add_argument("--model", required=True, help="reduced-model file")

    p = sub.add_parser("bounds", help="perturbation diagnostics")
    _common(p)

    p = sub.add_parser("experiment", help="full study on a preset")
    p.add_argument("preset", choices=["tc1", "tc2"])
    _common(p, preset_arg=False)
    return parser


def config_from_args(args):
    grid = {}
    if args.grid:
        lo, hi, n = parse_list(args.grid, str)
        try:
            grid = {"grid_lo": float(lo), "grid_hi": float(hi), "grid_p": int(n)}
        except ValueError:
            raise ConfigError(f"bad --grid {args.grid!r}") from None
    return resolve_config(
        config_file=args.config,
        preset=args.preset,
        out_dir=args.out,
        n_elements=args.n_elements,
        m=args.m,
        eps1=args.eps1,
        eps2=args.eps2,
        noise_levels=parse_list(args.noise, float) if args.noise else None,
        noise_is_std=args.noise_std,
        seeds=parse_list(args.seeds, int) if args.seeds else None,
        predictors=parse_list(args.predictor, str) if args.predictor else None,
        alpha_star=args.alpha_star,
        workers=args.workers,
        **grid,
    )


def cmd_solve(args, config):
    out, manifest = _start(config)
    problem, mesh, basis, _ = config.setup()
    alpha = config.alpha_star if args.alpha is None else args.alpha
    with _Stage(manifest, "solve"):
        sol = solve(problem, mesh, basis, alpha)
    path = write_field_csv(out / "field.csv", sample_field(sol, config.field_nx, config.field_ny))
    _finish(out, manifest, [path])


def cmd_offline(args, config):
    out, manifest = _start(config)
    problem, mesh, basis, grid = config.setup()
    keys = [(0.0, config.seeds[0])] if not config.noise_levels else [
        (eta, s) for s in config.seeds for eta in config.noise_levels
    ]
    written = []
    with _Stage(manifest, "offline_snapshots"):
        mats = collect_snapshot_sets(problem, mesh, basis, grid, [config.noise(e, s) for e, s in keys], config.workers)
    with _Stage(manifest, "offline_reduction"):
        for (eta, seed), U in zip(keys, mats):
            model = build_reduced_model(
                U, config.eps1, config.eps2, mesh, basis,
                {"noise_level": eta, "seed": seed, "preset": config.preset,
                 "noise_semantics": "std" if config.noise_is_std else "variance"},
            )
            tag = f"eta{eta:g}_seed{seed}"
            written.append(save_model(model, out / f"model_{tag}.hprm"))
            rows = [[j + 1, mu] for j, mu in enumerate(model.mu)]
            written.append(write_csv(out / f"mu_{tag}.csv", MU_HEADER, rows))
    _finish(out, manifest, written)


def cmd_online(args, config):
    out, manifest = _start(config)
    model = load_model(args.model)
    prov = model.provenance or {}
    written, rows = [], []
    reference = None
    if prov.get("preset") == config.preset:
        problem, mesh, basis, _ = replace(
            config, n_elements=model.mesh.n_elements, m=model.basis.m
        ).setup()
        with _Stage(manifest, "reference_solve"):
            reference = solve(problem, mesh, basis, config.alpha_star)
    with _Stage(manifest, "online"):
        for text in config.predictors:
            spec = parse_predictor(text)
            sol = predict_online(model, spec, config.alpha_star)
            name = f"field_{str(spec).replace(':', '-')}.csv"
            written.append(write_field_csv(out / name, sample_field(sol, config.field_nx, config.field_ny)))
            if reference is not None:
                err = relative_error(sol, reference)
                rows.append([config.preset, prov.get("noise_level", 0.0), prov.get("seed", 0), str(spec),
                             err.l2_relative, err.h1_relative])
    if rows:
        written.append(write_csv(out / "errors.csv", ERRORS_HEADER, rows))
    _finish(out, manifest, written)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = config_from_args(args)
        if args.command == "solve":
            cmd_solve(args, config)
        elif args.command == "offline":
            cmd_offline(args, config)
        elif args.command == "online":
            cmd_online(args, config)
        elif args.command == "bounds":
            manifest = run_bounds(config)
            _log_soft_checks(manifest)
        else:
            manifest = run_experiment(config)
            _log_soft_checks(manifest)
        print(Path(config.out_dir) / "manifest.json")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def _log_soft_checks(manifest):
    for key, flags in manifest.notes.get("bounds_flags", {}).items():
        failed = [name for name, ok in flags.items() if not ok]
        if failed:
            log.warning("%s: %s not satisfied", key, ", ".join(failed))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
