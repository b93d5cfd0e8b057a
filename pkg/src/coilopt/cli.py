"""Command-line interface.

Subcommands: doe, run, resume, geometry, fit-rtd, analyze, serve.
Exit codes: 0 success, 1 usage error, 2 runtime failure (JSON diagnostics
on standard error).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, persist
from .campaign import (
    CampaignConfig,
    DesignSpace,
    doe_sample,
    default_doe_size,
    resume_campaign,
    run_campaign,
    surrogate_objective_evaluator,
)
from .flow import COIL_PATH, CROSS_SECTION, PARAMETERISATIONS
from .geometry import NominalCoil, build_reactor_surface, export_stl, validate_geometry
from .rtd import composite_objective, normalize_rtd


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="coilopt", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_space_args(sp):
        sp.add_argument("--space", choices=PARAMETERISATIONS, default=CROSS_SECTION)
        sp.add_argument("--nc", type=int, default=None, help="inducing radii per section")
        sp.add_argument("--nl", type=int, default=None, help="sections along the coil")

    sp = sub.add_parser("doe", help="emit an initial design as JSON")
    add_space_args(sp)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", type=Path, default=None)

    for name in ("run", "resume"):
        sp = sub.add_parser(name, help=f"{name} an optimisation campaign")
        sp.add_argument("--checkpoint", type=Path, required=True)
        if name == "run":
            add_space_args(sp)
            sp.add_argument("--budget", type=float, required=True)
            sp.add_argument("--beta", type=float, default=1.5)
            sp.add_argument("--pc", type=float, default=2.0)
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--max-iterations", type=int, default=200)
            sp.add_argument("--doe-size", type=int, default=None)
            sp.add_argument("--keep-raw", action="store_true")
            sp.add_argument("--evaluator", default="builtin",
                            help="'builtin' or the base URL of a benchmark service")

    sp = sub.add_parser("geometry", help="parameter vector -> binary STL")
    add_space_args(sp)
    sp.add_argument("--params", type=Path, required=True,
                    help="JSON {x: [...]} or single-row CSV of parameters")
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--rings-per-turn", type=int, default=64)
    sp.add_argument("--ring-resolution", type=int, default=48)
    sp.add_argument("--inlet-length", type=float, default=10.0)
    sp.add_argument("--outlet-length", type=float, default=10.0)
    sp.add_argument("--validate", action="store_true")

    sp = sub.add_parser("fit-rtd", help="CSV trace -> tanks-in-series fit JSON")
    sp.add_argument("--input", type=Path, required=True,
                    help="CSV with time, concentration columns")
    sp.add_argument("--alpha", type=float, default=100.0)
    sp.add_argument("--curve-out", type=Path, default=None,
                    help="write the resampled dimensionless curve as CSV")

    sp = sub.add_parser("analyze", help="checkpoint -> convergence exports")
    sp.add_argument("--checkpoint", type=Path, required=True)
    sp.add_argument("--outdir", type=Path, required=True)

    sp = sub.add_parser("serve", help="start the benchmark HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8765)

    return p


def _evaluator_for(args):
    if getattr(args, "evaluator", "builtin") != "builtin":
        from .service import HttpEvaluator

        return HttpEvaluator(args.evaluator, args.space)
    return surrogate_objective_evaluator(args.space, NominalCoil(),
                                         n_c=args.nc, n_l=args.nl,
                                         keep_raw=getattr(args, "keep_raw", False))


def cmd_doe(args) -> int:
    evaluator = surrogate_objective_evaluator(args.space, NominalCoil(),
                                              n_c=args.nc, n_l=args.nl)
    space = DesignSpace.from_evaluator(evaluator)
    n = args.n if args.n is not None else default_doe_size(space)
    points = doe_sample(space, n, args.seed)
    doc = {
        "parameterisation": args.space,
        "seed": args.seed,
        "space": persist.space_to_dict(space),
        "points": [{"x": [float(v) for v in x], "z": [float(v) for v in z]}
                   for x, z in points],
    }
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_run(args) -> int:
    evaluator = _evaluator_for(args)
    space = DesignSpace.from_evaluator(evaluator)
    config = CampaignConfig(beta=args.beta, p_c=args.pc, doe_size=args.doe_size,
                            max_iterations=args.max_iterations,
                            keep_raw=args.keep_raw)
    state = run_campaign(space, evaluator, args.budget, config=config,
                         seed=args.seed, parameterisation=args.space,
                         checkpoint_path=args.checkpoint)
    _print_summary(state)
    return 0


def cmd_resume(args) -> int:
    state = persist.load_checkpoint(args.checkpoint)
    evaluator = surrogate_objective_evaluator(
        state.parameterisation if state.parameterisation in PARAMETERISATIONS
        else CROSS_SECTION,
        NominalCoil(),
        n_c=None, n_l=None)
    # Rebuild an evaluator matching the stored space dimensionality.
    evaluator = _match_evaluator(state)
    state = resume_campaign(args.checkpoint, evaluator)
    _print_summary(state)
    return 0


def _match_evaluator(state):
    labels = state.space.x_labels
    if state.parameterisation in (CROSS_SECTION, "joint-sequential"):
        n_l = 1 + max(int(lbl.split("_")[0][1:]) for lbl in labels)
        n_c = 1 + max(int(lbl.split("_r")[1]) for lbl in labels)
        frozen = None
        if state.predecessor and state.predecessor.get("incumbent_x"):
            frozen = np.asarray(state.predecessor["incumbent_x"])
        return surrogate_objective_evaluator(CROSS_SECTION, NominalCoil(),
                                             n_c=n_c, n_l=n_l, frozen_path=frozen,
                                             keep_raw=state.config.keep_raw)
    return surrogate_objective_evaluator(COIL_PATH, NominalCoil(),
                                         keep_raw=state.config.keep_raw)


def _print_summary(state) -> None:
    inc = state.incumbent
    doc = {
        "parameterisation": state.parameterisation,
        "evaluations": len(state.history),
        "iterations": state.iterations,
        "budget_spent": state.budget_spent,
        "complete": state.complete,
        "warnings": state.warnings,
        "incumbent": None if inc is None else {
            "f": inc.f, "n_star": inc.n_star, "z": list(inc.z),
            "x": [float(v) for v in inc.x],
        },
    }
    print(json.dumps(doc, indent=1, sort_keys=True))


def _read_params(path: Path) -> np.ndarray:
    if path.suffix.lower() == ".json":
        doc = json.loads(path.read_text())
        return np.asarray(doc["x"] if isinstance(doc, dict) else doc, dtype=float)
    with open(path) as fh:
        rows = [row for row in csv.reader(fh) if row]
    values = []
    for row in rows:
        for cell in row:
            try:
                values.append(float(cell))
            except ValueError:
                pass  # header cell
    return np.asarray(values, dtype=float)


def cmd_geometry(args) -> int:
    x = _read_params(args.params)
    nominal = NominalCoil()
    surface = build_reactor_surface(
        args.space, x, nominal, n_c=args.nc, n_l=args.nl,
        rings_per_turn=args.rings_per_turn, ring_resolution=args.ring_resolution,
        inlet_length=args.inlet_length, outlet_length=args.outlet_length,
    )
    args.out.write_bytes(export_stl(surface))
    summary = {"triangles": surface.n_triangles, "vertices": surface.n_vertices,
               "stl": str(args.out)}
    if args.validate:
        report = validate_geometry(surface)
        summary["validation"] = {
            "watertight": report.watertight,
            "winding_consistent": report.winding_consistent,
            "self_intersecting": report.self_intersecting,
            "volume_mm3": report.volume,
            "area_mm2": report.total_area,
            "min_radius": report.min_radius,
            "max_radius": report.max_radius,
        }
        if not report.clean:
            print(json.dumps(summary, indent=1, sort_keys=True))
            raise RuntimeError("geometry failed validation")
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


def cmd_fit_rtd(args) -> int:
    times, conc = [], []
    with open(args.input) as fh:
        for row in csv.reader(fh):
            if not row or len(row) < 2:
                continue
            try:
                t, c = float(row[0]), float(row[1])
            except ValueError:
                continue  # header
            times.append(t)
            conc.append(c)
    curve = normalize_rtd(np.asarray(times), np.asarray(conc))
    fit = composite_objective(curve, alpha=args.alpha)
    print(json.dumps({"n_star": fit.n_star, "mse": fit.mse, "f": fit.f},
                     indent=1, sort_keys=True))
    if args.curve_out:
        with open(args.curve_out, "w") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["theta", "e"])
            for th, e in zip(curve.theta, curve.e):
                writer.writerow([repr(float(th)), repr(float(e))])
    return 0


def cmd_analyze(args) -> int:
    state = persist.load_checkpoint(args.checkpoint)
    args.outdir.mkdir(parents=True, exist_ok=True)
    matrix, labels = analysis.lengthscale_history(state)
    with open(args.outdir / "lengthscales.csv", "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", *labels])
        for i, row in enumerate(matrix):
            writer.writerow([i, *[repr(float(v)) for v in row]])
    analysis.render_lengthscale_svg(matrix, labels, args.outdir / "lengthscales.svg")
    report = analysis.final_variability(state)
    with open(args.outdir / "variability.json", "w") as fh:
        json.dump({"labels": list(report.labels),
                   "values": [float(v) for v in report.values],
                   "source_iteration": report.source_iteration},
                  fh, indent=1, sort_keys=True)
        fh.write("\n")
    analysis.render_variability_svg(report, args.outdir / "variability.svg")
    analysis.export_embedding_data(state, args.outdir / "embedding.csv")
    persist.write_iteration_csv(state, args.outdir / "iterations.csv")
    print(json.dumps({"outdir": str(args.outdir),
                      "iterations": int(matrix.shape[0]),
                      "dimensions": int(matrix.shape[1])}, indent=1, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "doe": cmd_doe,
    "run": cmd_run,
    "resume": cmd_resume,
    "geometry": cmd_geometry,
    "fit-rtd": cmd_fit_rtd,
    "analyze": cmd_analyze,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SystemExit:
        raise
    except Exception as err:
        print(json.dumps({"error": type(err).__name__, "message": str(err)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
