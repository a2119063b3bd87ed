"""Command-line entry point.

Subcommands mirror the module boundaries: ``limit`` (maturity limit data),
``price-eu`` / ``price-am`` (single-point prices), ``boundary`` (solve and
extract the critical price curve), ``aux`` (auxiliary stopping problem),
``rates`` (near-maturity rate experiments) and ``check`` (cross-solver
invariant suite).  All inputs come from a JSON config; outputs are CSV
data plus JSON summaries, byte-identical across reruns of the same
config and seed.

Exit codes: 0 success, 1 failed verdicts/checks, 2 config error,
3 regime/domain rejection, 4 missing artifact, 5 solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

from .american import GridSpec, extract_boundary, load_surface, save_surface, solve_am
from .asymptotics import (
    expansion_check,
    rate_experiment_neg,
    rate_experiment_zero,
    write_expansion_csv,
    write_rate_csv,
    write_rate_json,
)
from .auxiliary import AuxGrid, AuxParams, solve_aux, summary_dict, write_summary_json, write_value_csv
from .checks import run_checks
from .errors import (
    ConfigError,
    DbarPositive,
    DegenerateBoundary,
    MissingArtifact,
    NonConvergence,
    RegimeMismatch,
    RootBracketFailure,
    TruncationFailure,
)
from .european import alpha_of_theta, price_eu, write_alpha_csv
from .model import ModelParams, Regime, classify_regime, model_from_dict, solve_xi

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_CONFIG = 2
EXIT_REGIME = 3
EXIT_MISSING = 4
EXIT_SOLVER = 5

_CONFIG_KEYS = {"model", "grid", "aux", "thetas", "expansion_a", "out", "seed"}
_THETA_KEYS = {"neg", "zero", "zero_fd", "alpha", "expansion"}


@dataclass
class RunConfig:
    model: ModelParams
    grid: GridSpec
    aux_grid: AuxGrid
    thetas: dict[str, list[float]]
    expansion_a: float | None
    out: str
    seed: int
    raw: dict = field(default_factory=dict)


def _theta_list(doc: dict, key: str, path: str) -> list[float]:
    val = doc.get(key, [])
    if not isinstance(val, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
        raise ConfigError(f"{path}.{key}", "expected a list of numbers")
    return [float(v) for v in val]


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(path, f"cannot read config: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from exc
    if not isinstance(doc, dict):
        raise ConfigError(path, "config root must be an object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    if "model" not in doc:
        raise ConfigError("model", "missing required key")
    model = model_from_dict(doc["model"])

    grid_doc = doc.get("grid", {})
    if not isinstance(grid_doc, dict):
        raise ConfigError("grid", "expected an object")
    try:
        grid = GridSpec(**{k: (tuple(v) if k == "extra_thetas" else v) for k, v in grid_doc.items()})
    except TypeError as exc:
        raise ConfigError("grid", f"unknown grid key: {exc}") from exc
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from exc

    aux_doc = doc.get("aux", {})
    if not isinstance(aux_doc, dict):
        raise ConfigError("aux", "expected an object")
    try:
        aux_grid = AuxGrid(**aux_doc)
    except TypeError as exc:
        raise ConfigError("aux", f"unknown aux key: {exc}") from exc

    thetas_doc = doc.get("thetas", {})
    if not isinstance(thetas_doc, dict):
        raise ConfigError("thetas", "expected an object")
    unknown = set(thetas_doc) - _THETA_KEYS
    if unknown:
        raise ConfigError(f"thetas.{sorted(unknown)[0]}", "unknown key")
    thetas = {k: _theta_list(thetas_doc, k, "thetas") for k in _THETA_KEYS}

    expansion_a = doc.get("expansion_a")
    if expansion_a is not None and (isinstance(expansion_a, bool) or not isinstance(expansion_a, (int, float))):
        raise ConfigError("expansion_a", "expected a number")

    out = doc.get("out", ".")
    if not isinstance(out, str):
        raise ConfigError("out", "expected a string")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0 or seed >= 2**64:
        raise ConfigError("seed", "expected an unsigned 64-bit integer")
    return RunConfig(
        model=model,
        grid=grid,
        aux_grid=aux_grid,
        thetas=thetas,
        expansion_a=None if expansion_a is None else float(expansion_a),
        out=out,
        seed=seed,
        raw=doc,
    )


def _apply_grid_flags(grid: GridSpec, args) -> GridSpec:
    d = grid.as_dict()
    if args.nx is not None:
        d["nx"] = args.nx
    if args.nt is not None:
        d["nt"] = args.nt
    if args.scheme is not None:
        d["scheme"] = args.scheme
    if args.time_grading is not None:
        d["time_grading"] = args.time_grading
    d["extra_thetas"] = tuple(d["extra_thetas"])
    return GridSpec(**d)


def _emit(doc: dict) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


def _out_dir(cfg: RunConfig, args) -> str:
    out = args.out if getattr(args, "out", None) else cfg.out
    os.makedirs(out, exist_ok=True)
    return out


def cmd_limit(args) -> int:
    cfg = load_config(args.config)
    lim = solve_xi(cfg.model)
    doc = lim.as_dict()
    doc["dbar"] = cfg.model.dbar
    _emit(doc)
    return EXIT_OK


def cmd_price_eu(args) -> int:
    cfg = load_config(args.config)
    price, delta = price_eu(cfg.model, args.t, args.x)
    _emit({"style": "eu", "t": args.t, "x": args.x, "price": price, "delta": delta})
    return EXIT_OK


def _surface_paths(out: str) -> tuple[str, str]:
    return os.path.join(out, "surface.csv"), os.path.join(out, "surface.meta.json")


def cmd_price_am(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    csv_path, meta_path = _surface_paths(out)
    if args.no_solve:
        surface = load_surface(csv_path, meta_path)
    else:
        grid = _apply_grid_flags(cfg.grid, args)
        surface = solve_am(cfg.model, grid)
        save_surface(surface, csv_path, meta_path)
    price = surface.value_at(args.t, args.x)
    _emit({"style": "am", "t": args.t, "x": args.x, "price": price})
    return EXIT_OK


def cmd_boundary(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    grid = _apply_grid_flags(cfg.grid, args)
    surface = solve_am(cfg.model, grid)
    try:
        lim = solve_xi(cfg.model)
    except DbarPositive:
        lim = None
    bc = extract_boundary(surface, lim)
    csv_path, meta_path = _surface_paths(out)
    save_surface(surface, csv_path, meta_path)
    bpath = os.path.join(out, "boundary.csv")
    with open(bpath, "w", newline="") as f:
        f.write("theta,b,b_raw\n")
        for th, b, br in zip(bc.thetas, bc.b, bc.b_raw):
            f.write(f"{th!r},{b!r},{br!r}\n")
    _emit({"boundary_csv": bpath, "levels": len(bc.thetas), "surface_csv": csv_path})
    return EXIT_OK


def cmd_aux(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    lim = solve_xi(cfg.model)
    params = AuxParams(lim.lambda_atom, lim.beta)
    sol = solve_aux(params, cfg.aux_grid)
    if params.lam == 0.0:
        y0_ref = sol.y_threshold
    else:
        y0_ref = solve_aux(AuxParams(0.0, lim.beta), cfg.aux_grid).y_threshold
    write_value_csv(sol, os.path.join(out, "aux_values.csv"))
    write_summary_json(sol, y0_ref, os.path.join(out, "aux_summary.json"))
    _emit(summary_dict(sol, y0_ref))
    return EXIT_OK


def cmd_rates(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args)
    regime = classify_regime(cfg.model)
    if args.experiment == "neg":
        if regime is not Regime.STRICTLY_NEGATIVE_DBAR:
            raise RegimeMismatch("the neg experiment needs a dbar < 0 model")
        thetas = cfg.thetas["neg"] or [0.04, 0.01, 0.0025]
        report = rate_experiment_neg(cfg.model, thetas, aux_grid=cfg.aux_grid, model_id="config-model")
        write_rate_csv(report, os.path.join(out, "rates_neg.csv"))
        write_rate_json(report, os.path.join(out, "rates_neg.json"))
        if cfg.expansion_a is not None:
            exp_thetas = cfg.thetas["expansion"] or thetas
            exp_report = expansion_check(
                cfg.model, cfg.expansion_a, exp_thetas, aux_grid=cfg.aux_grid, model_id="config-model"
            )
            write_expansion_csv(exp_report, os.path.join(out, "expansion.csv"))
            ok = report.passed and exp_report.passed
        else:
            ok = report.passed
        _emit({"verdicts": report.verdicts, "passed": ok})
        return EXIT_OK if ok else EXIT_VERDICT
    else:
        if regime is not Regime.ZERO_DBAR:
            raise RegimeMismatch("the zero experiment needs a dbar = 0 model")
        thetas = cfg.thetas["zero"] or [10.0 ** -k for k in range(2, 9)]
        fd_thetas = cfg.thetas["zero_fd"] or [0.02, 0.005]
        report = rate_experiment_zero(cfg.model, thetas, fd_thetas=fd_thetas, model_id="config-model")
        write_rate_csv(report, os.path.join(out, "rates_zero.csv"))
        write_rate_json(report, os.path.join(out, "rates_zero.json"))
        alpha_thetas = cfg.thetas["alpha"] or thetas
        pts = alpha_of_theta(cfg.model, alpha_thetas, threads=args.threads)
        write_alpha_csv(pts, os.path.join(out, "alpha.csv"))
        _emit({"verdicts": report.verdicts, "passed": report.passed})
        return EXIT_OK if report.passed else EXIT_VERDICT


def cmd_check(args) -> int:
    results = run_checks(threads=args.threads)
    ok = all(r.passed for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name}: {r.detail}")
    if getattr(args, "out", None):
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "check.json"), "w") as f:
            json.dump(
                {r.name: {"passed": r.passed, "detail": r.detail} for r in results},
                f,
                indent=2,
                sort_keys=True,
            )
            f.write("\n")
    return EXIT_OK if ok else EXIT_VERDICT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="putlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=None, help="thread count for batch operations")

    def add_grid_flags(p):
        p.add_argument("--nx", type=int, default=None)
        p.add_argument("--nt", type=int, default=None)
        p.add_argument("--scheme", choices=["implicit-euler", "crank-nicolson"], default=None)
        p.add_argument("--time-grading", dest="time_grading", type=float, default=None)

    p = sub.add_parser("limit", help="print the maturity limit data as JSON")
    add_common(p)
    p.set_defaults(func=cmd_limit)

    p = sub.add_parser("price-eu", help="European put price at (t, x)")
    add_common(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.set_defaults(func=cmd_price_eu)

    p = sub.add_parser("price-am", help="American put price at (t, x)")
    add_common(p)
    add_grid_flags(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--no-solve", action="store_true", help="read the persisted surface instead of solving")
    p.set_defaults(func=cmd_price_am)

    p = sub.add_parser("boundary", help="solve and persist the exercise boundary")
    add_common(p)
    add_grid_flags(p)
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("aux", help="solve the auxiliary stopping problem for the model's limit data")
    add_common(p)
    p.set_defaults(func=cmd_aux)

    p = sub.add_parser("rates", help="run a near-maturity rate experiment")
    add_common(p)
    p.add_argument("--experiment", choices=["neg", "zero"], required=True)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("check", help="run the cross-solver invariant suite")
    add_common(p, config_required=False)
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DbarPositive, RegimeMismatch) as exc:
        print(f"regime error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (NonConvergence, TruncationFailure, RootBracketFailure, DegenerateBoundary) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
