"""Command-line front end: ``stabkit <subcommand> ...``.

Exit codes: 0 when every check passes, 1 when an inequality check fails,
2 on usage or input errors (with a diagnostic on stderr).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .asymmetry import l1_asymmetry
from .config import ConfigError, RunConfig
from .density import (DensityError, RadialComposite, density_from_spec, density_to_spec, mass,
                      second_moment, sup_norm)
from .energy import interaction_energy, quadrature_tolerance
from .potential import KernelError, PowerLaw, potential_from_spec
from .rearrange import rearrange_composite, rearrange_grid
from .stability import (FROZEN_RATIO_BOUNDS, StabilityError, check_lemma31, check_lemma32,
                        check_prop41, check_thm1, check_thm2, check_thm3, random_cell_set,
                        random_grid, sweep, thm4_counterexample, _sample_rngs)
from .suite import run_battery
from .transport import TransportError, layercake_plan, loeper_gap, w2_exact

INPUT_ERRORS = (DensityError, KernelError, TransportError, StabilityError, ConfigError, OSError,
                json.JSONDecodeError, KeyError)


class UsageError(Exception):
    pass


def clean(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, path=None):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    cfg.validate()
    return cfg


def _potential(text: str):
    """``--potential`` accepts a JSON file, inline JSON, or ``powerlaw:K`` / ``newtonian``."""
    p = Path(text)
    if p.exists():
        return potential_from_spec(json.loads(p.read_text()))
    if text.lstrip().startswith("{"):
        return potential_from_spec(json.loads(text))
    if text.startswith("powerlaw:"):
        return PowerLaw(float(text.split(":", 1)[1]))
    if text in ("newtonian", "newtonian:3"):
        return potential_from_spec({"kind": "newtonian", "n": 3})
    raise UsageError(f"cannot parse potential {text!r}")


def _check_cap(rho, cfg: RunConfig):
    if isinstance(rho, RadialComposite):
        return
    cells = int(np.prod(rho.extents))
    cap = cfg.grid_caps[rho.dim]
    if cells > cap:
        raise DensityError(f"grid has {cells} cells, above the cap {cap} for dim {rho.dim} "
                           "(raise grid_caps in a config file)")


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_rearrange(args) -> int:
    rho = density_from_spec(args.density)
    star = rearrange_composite(rho) if isinstance(rho, RadialComposite) else rearrange_grid(rho)
    if args.out_spec:
        density_to_spec(star, args.out_spec)
    out = {"mass": mass(star), "sup_norm": sup_norm(star), "second_moment": second_moment(star),
           "second_moment_input": second_moment(rho), "spec": args.out_spec}
    _emit(dumps(out), args.out)
    return 0


def cmd_energy(args) -> int:
    cfg = _load_config(args)
    rho = density_from_spec(args.density)
    W = _potential(args.potential)
    if args.semi_analytic and not isinstance(rho, RadialComposite):
        raise UsageError("--semi-analytic needs a composite density spec")
    if not args.semi_analytic and isinstance(rho, RadialComposite):
        raise UsageError("composite densities need --semi-analytic (or a rasterized grid spec)")
    _check_cap(rho, cfg)
    value = interaction_energy(rho, W, cfg.threads)
    out = {"value": value, "path": "semi-analytic" if args.semi_analytic else "grid",
           "tol_quad": quadrature_tolerance(value, cfg.tol_quad_rel, cfg.tol_quad_abs),
           "kernel": repr(W)}
    _emit(dumps(out), args.out)
    return 0


def cmd_asymmetry(args) -> int:
    rho = density_from_spec(args.density)
    if isinstance(rho, RadialComposite):
        raise UsageError("asymmetry takes a grid density spec")
    _emit(dumps(l1_asymmetry(rho).to_dict()), args.out)
    return 0


def cmd_w2(args) -> int:
    cfg = _load_config(args)
    a = density_from_spec(args.a)
    out = {}
    if args.layercake:
        plan, cost = layercake_plan(a)
        out["cost"] = cost
        out["plan"] = plan.summary()
        w2, _ = w2_exact(rearrange_grid(a), a, cap=cfg.transport_cap, mass_tol=cfg.solver_mass_tol)
        out["distance"] = w2
    else:
        if not args.b:
            raise UsageError("w2 needs --b (or --layercake)")
        b = density_from_spec(args.b)
        w2, plan = w2_exact(a, b, cap=cfg.transport_cap, mass_tol=cfg.solver_mass_tol)
        out["distance"] = w2
        out["cost"] = plan.cost()
        out["plan"] = plan.summary()
    if args.plan_csv:
        plan.to_csv(args.plan_csv)
    _emit(dumps(out), args.out)
    return 0


def _summary_line(name, passed, lhs, rhs, tol, extra=""):
    tag = "PASS" if passed else "FAIL"
    return f"{tag} {name}: lhs={lhs:.6g} rhs={rhs:.6g} tol={tol:.3g}{extra}"


def _verify_one(theorem, rho, k, cfg, rho2=None):
    if theorem == "1":
        W = PowerLaw(k)
        key = "thm1-2d-k0" if (rho.dim == 2 and k == 0) else None
        if key:
            return check_thm1(rho, W, constant=FROZEN_RATIO_BOUNDS[key], provenance="fitted",
                              threads=cfg.threads).to_dict()
        return check_thm1(rho, W, threads=cfg.threads).to_dict()
    if theorem == "2":
        return check_thm2(rho, PowerLaw(k), threads=cfg.threads, cap=cfg.transport_cap).to_dict()
    if theorem == "3":
        return check_thm3(rho, constant=FROZEN_RATIO_BOUNDS["thm3-3d"], provenance="fitted",
                          threads=cfg.threads).to_dict()
    if theorem == "lemma31":
        return check_lemma31(rho).to_dict()
    if theorem == "lemma32":
        return check_lemma32(rho).to_dict()
    if theorem == "prop41":
        r = check_prop41(rho, cap=cfg.transport_cap)
        return {"theorem": "prop41", "lhs": r["m2_gap"], "rhs": r["layercake_cost"], "tol": r["tol"],
                **r}
    if theorem == "loeper":
        rep = loeper_gap(rho, rho2, threads=cfg.threads)
        d = rep.to_dict()
        d["theorem"] = "loeper"
        return d
    raise UsageError(f"unknown theorem {theorem!r}")


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    reports = []
    if args.density == "random":
        n = args.n
        if n not in (1, 2, 3):
            raise UsageError("--n must be 1, 2 or 3")
        h = args.spacing or (cfg.prop41_spacing if args.theorem == "prop41" else cfg.spacing[n])
        make = random_cell_set if args.theorem == "lemma31" else random_grid
        for i, rng in enumerate(_sample_rngs(cfg.seed, args.samples)):
            rho = make(rng, n, h)
            rho2 = random_grid(rng, n, h) if args.theorem == "loeper" else None
            d = _verify_one(args.theorem, rho, args.k, cfg, rho2)
            d["sample"] = i
            reports.append(d)
    else:
        rho = density_from_spec(args.density)
        rho2 = density_from_spec(args.density2) if args.density2 else None
        if args.theorem == "loeper" and rho2 is None:
            raise UsageError("loeper needs --density2")
        reports.append(_verify_one(args.theorem, rho, args.k, cfg, rho2))
    ok = True
    for d in reports:
        ok &= bool(d["pass"])
        name = f"theorem {args.theorem}" + (f" sample {d['sample']}" if "sample" in d else "")
        print(_summary_line(name, d["pass"], d["lhs"], d["rhs"], d["tol"]))
    if args.out:
        Path(args.out).write_text(dumps({"theorem": args.theorem, "seed": cfg.seed,
                                         "reports": reports, "pass": ok}))
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    settings = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        settings[key] = float(val)
    s = sweep(args.family, _floats(args.eps), **settings)
    _emit(s.to_csv(), args.csv)
    if args.out:
        Path(args.out).write_text(dumps(s.to_dict()))
    for k, (slope, err) in s.slopes.items():
        print(f"slope {k} = {slope:.6g} +- {err:.2g}", file=sys.stderr)
    bad = [r for r in s.rows if r.get("pass") is False]
    return 1 if bad else 0


def cmd_counterexample(args) -> int:
    reps = [thm4_counterexample(e) for e in _floats(args.eps)]
    for r in reps:
        print(_summary_line(f"spike eps={r.eps:g}", r.passed, r.gap, r.inf, r.tol,
                            f" ratio={r.ratio:.6g} a_min={r.a_min:.5f}"))
    if args.out:
        Path(args.out).write_text(dumps({"reports": [r.to_dict() for r in reps]}))
    return 0 if all(r.passed for r in reps) else 1


def cmd_suite(args) -> int:
    cfg = _load_config(args)

    def progress(name, res):
        print(f"{'PASS' if res['pass'] else 'FAIL'} {name}", flush=True)

    only = set(args.only.split(",")) if args.only else None
    report, timings = run_battery(cfg, only, progress)
    if args.out:
        Path(args.out).write_text(dumps(report))
    if args.timings:
        Path(args.timings).write_text(dumps(timings))
    return 0 if report["pass"] else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stabkit", description="Rearrangement stability toolkit.")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def common(sp, config=True):
        sp.add_argument("--out", help="write JSON here instead of stdout")
        if config:
            sp.add_argument("--config", help="JSON config file (fields of RunConfig)")
            sp.add_argument("--threads", type=int, help="thread cap (overrides STABKIT_THREADS)")

    sp = sub.add_parser("rearrange", help="radially decreasing rearrangement of a density")
    sp.add_argument("--density", required=True)
    sp.add_argument("--out-spec", help="write the rearranged density spec here")
    common(sp, config=False)
    sp.set_defaults(func=cmd_rearrange)

    sp = sub.add_parser("energy", help="interaction energy")
    sp.add_argument("--density", required=True)
    sp.add_argument("--potential", required=True)
    sp.add_argument("--semi-analytic", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_energy)

    sp = sub.add_parser("asymmetry", help="normalized L1 asymmetry")
    sp.add_argument("--density", required=True)
    common(sp, config=False)
    sp.set_defaults(func=cmd_asymmetry)

    sp = sub.add_parser("w2", help="2-Wasserstein distance or the layer-cake plan")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b")
    sp.add_argument("--layercake", action="store_true")
    sp.add_argument("--plan-csv")
    common(sp)
    sp.set_defaults(func=cmd_w2)

    sp = sub.add_parser("verify", help="check one inequality on given or random densities")
    sp.add_argument("--theorem", required=True,
                    choices=["1", "2", "3", "lemma31", "lemma32", "prop41", "loeper"])
    sp.add_argument("--density", required=True, help="density spec path or 'random'")
    sp.add_argument("--density2", help="second density (loeper)")
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--k", type=float, default=0.0)
    sp.add_argument("--samples", type=int, default=1)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--spacing", type=float)
    common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("sweep", help="sharpness sweep over a parametric family")
    sp.add_argument("--family", required=True)
    sp.add_argument("--eps", required=True, help="comma-separated abscissae (eps or R)")
    sp.add_argument("--set", action="append", help="family setting key=value (repeatable)")
    sp.add_argument("--csv", help="write CSV here instead of stdout")
    sp.add_argument("--out", help="write JSON series here")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("counterexample", help="spike counterexample reports")
    sp.add_argument("--eps", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_counterexample)

    sp = sub.add_parser("suite", help="run the full verification battery")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--only", help="comma-separated section names")
    sp.add_argument("--timings", help="write wall-clock timings (JSON) here")
    common(sp)
    sp.set_defaults(func=cmd_suite)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return int(args.func(args))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"stabkit: error: {exc}", file=sys.stderr)
        return 2
    except INPUT_ERRORS as exc:
        print(f"stabkit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
