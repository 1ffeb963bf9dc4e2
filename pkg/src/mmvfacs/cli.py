"""Command-line entry point: ``mmvfacs {gen,run,bounds,real}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid, MMVError
from .fusion import fuse
from .harness import ExperimentConfig, results_csv_text, run_real, run_sweep
from .model import (instance_from_json, instance_to_json, load_instance_csv, make_instance,
                    mix_seed, parse_smnr, save_instance_csv)
from .solvers import SolverConfig, run_solver
from .theory import DEFAULT_RIC_BUDGET, bound_report, ric_exact, thm2_bound

log = logging.getLogger("mmvfacs")

GEN_DEFAULTS = {"M": 40, "N": 100, "K": 8, "L": 10, "signal_kind": "gaussian",
                "smnr_db": None, "count": 1}
BOUNDS_DEFAULTS = {"M": 12, "N": 16, "K": 3, "L": 4, "signal_kind": "gaussian",
                   "smnr_db": None, "count": 1, "solvers": ["MOMP", "MSP"],
                   "ric_budget": DEFAULT_RIC_BUDGET, "solver_config": {}}
REAL_DEFAULTS = {"M_list": [100, 125, 150, 175, 200], "K": 50, "n_trials": 20,
                 "solvers": ["MOMP", "MSP", "Oracle"], "fusion_combos": [["MOMP", "MSP"]],
                 "solver_config": {}}


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _load_json(path) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _merged(defaults: dict, path, overrides: dict) -> dict:
    d = dict(defaults)
    d.update(_load_json(path))
    d.update({k: v for k, v in overrides.items() if v is not None})
    return d


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def cmd_gen(args) -> int:
    p = _merged(GEN_DEFAULTS, args.config,
                {"M": args.M, "N": args.N, "K": args.K, "L": args.L, "count": args.count,
                 "smnr_db": args.smnr, "signal_kind": args.kind})
    seed = args.seed if args.seed is not None else p.get("seed", 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(int(p["count"])):
        inst = make_instance(int(p["M"]), int(p["N"]), int(p["K"]), int(p["L"]),
                             p["signal_kind"], parse_smnr(p["smnr_db"]), mix_seed(seed, i))
        if args.format == "json":
            path = out / f"instance_{i:04d}.json"
            path.write_text(instance_to_json(inst) + "\n")
        else:
            path = out / f"instance_{i:04d}"
            save_instance_csv(inst, path)
        print(path)
    return 0


def _sweep_config(args) -> ExperimentConfig:
    try:
        d = _load_json(args.config)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{args.config}: {exc}") from exc
    overrides = {"seed": args.seed, "output_path": args.out, "strict": args.strict,
                 "full": True if args.full else None, "prune_union": True if args.prune_union else None}
    d.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(d)


def cmd_run(args) -> int:
    run = run_sweep(_sweep_config(args))
    sys.stdout.write(results_csv_text(run.results))
    for name, path in run.paths.items():
        log.info("wrote %s: %s", name, path)
    return 0


def _bound_instances(args, p):
    if args.instance:
        for path in args.instance:
            path = Path(path)
            inst = load_instance_csv(path) if path.is_dir() else instance_from_json(path.read_text())
            yield str(path), inst
        return
    seed = args.seed if args.seed is not None else p.get("seed", 0)
    for i in range(int(p["count"])):
        inst = make_instance(int(p["M"]), int(p["N"]), int(p["K"]), int(p["L"]),
                             p["signal_kind"], parse_smnr(p["smnr_db"]), mix_seed(seed, i))
        yield f"instance_{i:04d}", inst


def bounds_for_instance(A, X, W, B, support, solvers, cfg: SolverConfig,
                        ric_budget: int = DEFAULT_RIC_BUDGET, prune_union: bool = False) -> dict:
    """Run the participants and fusion on one instance and evaluate both bounds."""
    K = int(support.size)
    outs = {s: run_solver(s, A, B, K, cfg, true_support=support) for s in solvers}
    fused = fuse(A, B, K, [o.support for o in outs.values()], prune_union=prune_union)
    delta = ric_exact(A, fused.R + K, budget=ric_budget).delta
    err = float(np.linalg.norm(X - fused.X_hat))
    per = {}
    for s, o in outs.items():
        rep = bound_report(delta, X, W, fused.gamma, K, participant_support=o.support)
        per[s] = {"error": float(np.linalg.norm(X - o.X_hat)), "report": rep.to_dict()}
    avg = None
    if np.isin(support, fused.gamma).all():
        avg = thm2_bound(A, fused.gamma, support, np.ones(K), W, X.shape[1])
    return {"gamma": [int(i) for i in fused.gamma], "fused_support": [int(i) for i in fused.support],
            "fused_error": err, "delta": delta, "participants": per,
            "avg_case": avg.to_dict() if avg is not None else None, "flags": fused.flags}


def cmd_bounds(args) -> int:
    p = _merged(BOUNDS_DEFAULTS, args.config,
                {"M": args.M, "N": args.N, "K": args.K, "L": args.L, "count": args.count,
                 "smnr_db": args.smnr})
    cfg = SolverConfig.from_dict(p["solver_config"])
    reports = []
    for name, inst in _bound_instances(args, p):
        try:
            rep = bounds_for_instance(inst.A, inst.X, inst.W, inst.B, inst.support, p["solvers"],
                                      cfg, int(p["ric_budget"]), args.prune_union)
        except MMVError as exc:
            if args.strict is not False:
                raise
            rep = {"error": f"{type(exc).__name__}: {exc}"}
        rep["instance"] = name
        reports.append(_json_safe(rep))
    text = json.dumps(reports, indent=2) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bounds.json").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_real(args) -> int:
    p = _merged(REAL_DEFAULTS, args.config,
                {"M_list": args.M_list, "K": args.K, "n_trials": args.trials})
    seed = args.seed if args.seed is not None else p.get("seed", 0)
    run = run_real(args.signal, p["M_list"], int(p["K"]), int(p["n_trials"]), seed,
                   solvers=p["solvers"], fusion_combos=p["fusion_combos"], out_dir=args.out,
                   full=args.full, strict=True if args.strict is None else args.strict,
                   prune_union=args.prune_union,
                   solver_config=SolverConfig.from_dict(p["solver_config"]))
    sys.stdout.write(results_csv_text(run.results))
    return 0


def _common(sp, config_required=False):
    sp.add_argument("--config", required=config_required, help="JSON config file")
    sp.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
    sp.add_argument("--out", help="output directory")


def _sweep_flags(sp):
    sp.add_argument("--full", action="store_true", help="also write per-trial JSON records")
    sp.add_argument("--strict", action=argparse.BooleanOptionalAction, default=None,
                    help="abort on solver errors / non-convergence (default on)")
    sp.add_argument("--prune-union", action="store_true",
                    help="keep the M strongest union atoms instead of failing when |union| > M")


def _shape_flags(sp):
    sp.add_argument("--M", type=int)
    sp.add_argument("--N", type=int)
    sp.add_argument("--K", type=int)
    sp.add_argument("--L", type=int)
    sp.add_argument("--smnr", type=float, help="SMNR in dB (omit for noiseless)")
    sp.add_argument("--count", type=int, help="number of instances")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmvfacs", description="MMV sparse recovery with support fusion")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen", help="write random problem instances")
    _common(sp)
    _shape_flags(sp)
    sp.add_argument("--kind", choices=["gaussian", "rademacher"])
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    sp.set_defaults(func=cmd_gen, out="instances")

    sp = sub.add_parser("run", help="Monte-Carlo sweep from a JSON config")
    _common(sp, config_required=True)
    _sweep_flags(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("bounds", help="theory reports for generated or saved instances")
    _common(sp)
    _shape_flags(sp)
    sp.add_argument("--instance", nargs="*", help="instance directories or JSON files")
    _sweep_flags(sp)
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("real", help="sense a CSV signal (time x channels) and sweep M")
    _common(sp)
    sp.add_argument("--signal", required=True, help="CSV file, rows = time points")
    sp.add_argument("--M-list", dest="M_list", type=_int_list, help="comma separated M values")
    sp.add_argument("--K", type=int)
    sp.add_argument("--trials", type=int)
    _sweep_flags(sp)
    sp.set_defaults(func=cmd_real)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MMVError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
