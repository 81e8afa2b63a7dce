"""The full verification battery behind ``stabkit suite``.

Each section evaluates one group of checks and records its raw numbers, so
the report can be re-audited without rerunning anything.  Wall-clock
timings are returned separately because they are not reproducible.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .config import RunConfig
from .density import ball, center_of_mass, mass, rasterize, second_moment
from .energy import interaction_energy, newtonian_energy_composite
from .potential import Newtonian, PowerLaw, c_wr, c_wr_sampled, quadratic_kernel
from .stability import (FROZEN_RATIO_BOUNDS, fit_slope, lemma_suite, loeper_suite, prop41_suite,
                        random_grid, ratio_suite, riesz_suite, sweep, thm2_suite, thm4_counterexample,
                        _sample_rngs)


def _within(value, target, halfwidth):
    return abs(value - target) <= halfwidth


def section_riesz(cfg: RunConfig) -> dict:
    suites = [riesz_suite(n, cfg.samples["riesz"], cfg.seed_for(1), cfg.spacing[n], cfg.threads,
                          cfg.tol_quad_rel, cfg.tol_quad_abs) for n in (1, 2, 3)]
    return {"criterion": 1, "pass": all(s.passed for s in suites),
            "suites": [s.to_dict() for s in suites]}


def section_thm2(cfg: RunConfig) -> dict:
    suites = [thm2_suite(n, cfg.samples["thm2"], cfg.seed_for(2), cfg.spacing[n], cfg.threads,
                         cfg.transport_cap) for n in (1, 2, 3)]
    return {"criterion": 2, "pass": all(s.passed for s in suites),
            "suites": [s.to_dict() for s in suites]}


def section_prop41(cfg: RunConfig) -> dict:
    s = prop41_suite(cfg.samples["prop41"], cfg.seed_for(3), cfg.prop41_spacing, cfg.threads)
    return {"criterion": 3, "pass": s.passed, "suites": [s.to_dict()]}


def section_lemmas(cfg: RunConfig) -> dict:
    suites = [lemma_suite("lemma31", n, cfg.samples["lemma31"], cfg.seed_for(4), cfg.spacing[n],
                          cfg.threads) for n in (2, 3)]
    suites += [lemma_suite("lemma32", n, cfg.samples["lemma32"], cfg.seed_for(4), cfg.spacing[n],
                           cfg.threads) for n in (1, 2, 3)]
    return {"criterion": 4, "pass": all(s.passed for s in suites),
            "suites": [s.to_dict() for s in suites]}


def section_sharpness(cfg: RunConfig) -> dict:
    sw = cfg.sweeps
    checks = []
    series = []

    def record(name, s, key, target, halfwidth):
        slope, err = s.slopes[key]
        checks.append({"check": name, "slope": slope, "stderr": err, "target": target,
                       "halfwidth": halfwidth, "pass": _within(slope, target, halfwidth)})

    s = sweep("remark33-1d", sw["remark33-1d"]["values"], k=sw["remark33-1d"].get("k", 0.0))
    series.append(s.to_dict())
    record("remark33 gap slope", s, "lhs", 3.0, 0.2)
    record("remark33 delta slope", s, "delta", 1.0, 0.1)
    s = sweep("remark31", sw["remark31"]["values"])
    series.append(s.to_dict())
    record("remark31 second-moment gap slope", s, "lhs", 3.0, 0.2)
    a = sw["thm2-annulus"]
    s = sweep("thm2-annulus", a["values"], n=a.get("n", 2), k=a.get("k", 0.0))
    series.append(s.to_dict())
    record("annulus gap slope", s, "lhs", 1.0, 0.15)
    record("annulus W2 slope", s, "w2", 0.5, 0.1)
    d = sw["rmk43a-dilation"]
    for k in d.get("k", [-1.0, 0.0, 1.0]):
        s = sweep("rmk43a-dilation", d["values"], k=float(k))
        series.append(s.to_dict())
        record(f"dilation ratio slope k={float(k):g}", s, "ratio", float(k) - 2.0, 0.1)
    return {"criterion": 5, "pass": all(c["pass"] for c in checks), "checks": checks,
            "series": series}


def section_thm4(cfg: RunConfig) -> dict:
    eps = [float(e) for e in cfg.sweeps["thm4"]["values"]]
    reps = [thm4_counterexample(e) for e in eps]
    last = reps[int(np.argmax(eps))]
    slope, err = fit_slope(eps, [r.ratio for r in reps])
    w = 4 * math.pi / 3
    checks = {
        "gap_positive": all(r.gap > 0 for r in reps),
        "inf_bounded_below": all(r.inf >= 0.5 * last.inf for r in reps),
        "ratio_slope": _within(slope, 0.5, 0.1),
        "mass_range": all(w <= r.mass <= 2 * w for r in reps),
        "sup_norm_exact": all(r.sup_norm == r.eps ** -2.5 for r in reps),
        "reports_pass": all(r.passed for r in reps),
    }
    return {"criterion": 6, "pass": all(checks.values()), "checks": checks,
            "ratio_slope": slope, "ratio_slope_stderr": err, "reports": [r.to_dict() for r in reps]}


def section_loeper(cfg: RunConfig) -> dict:
    s = loeper_suite(cfg.samples["loeper"], cfg.seed_for(5), cfg.spacing[3], cfg.threads)
    return {"criterion": 7, "pass": s.passed, "suites": [s.to_dict()]}


def section_anchors(cfg: RunConfig) -> dict:
    Q = quadratic_kernel()
    quad = []
    for n in (1, 2, 3):
        for i, rng in enumerate(_sample_rngs(cfg.seed_for(8) + n, cfg.samples["quadratic"])):
            g = random_grid(rng, n, cfg.spacing[n])
            e = interaction_energy(g, Q, cfg.threads)
            ref = 2 * mass(g) * second_moment(g, about=center_of_mass(g))
            rel = abs(e - ref) / abs(ref)
            quad.append({"dim": n, "sample": i, "energy": e, "identity": ref, "rel_err": rel,
                         "tol": 1e-10, "pass": rel <= 1e-10})
    cw = []
    for k in (-1.0, 0.0, 1.0, 2.0):
        for R in (0.5, 1.0, 2.0):
            W = PowerLaw(k)
            closed, sampled = c_wr(W, R, "closed"), c_wr_sampled(W, R)
            rel = abs(closed - sampled) / closed
            cw.append({"k": k, "R": R, "closed": closed, "sampled": sampled, "rel_err": rel,
                       "tol": 1e-6, "pass": rel <= 1e-6})
    exact = newtonian_energy_composite(ball((0.0, 0.0, 0.0), 1.0))
    balls = []
    for h in (1 / 8, 1 / 16):
        g = rasterize(ball((0.0, 0.0, 0.0), 1.0), h)
        e = interaction_energy(g, Newtonian(3), cfg.threads)
        balls.append({"spacing": h, "grid": e, "semi_analytic": exact,
                      "rel_err": abs(e - exact) / exact})
    ball_ok = balls[1]["rel_err"] <= 0.01 and balls[1]["rel_err"] <= 0.5 * balls[0]["rel_err"]
    ok = all(r["pass"] for r in quad) and all(r["pass"] for r in cw) and ball_ok
    return {"criterion": 8, "pass": ok, "quadratic_identity": quad, "c_wr": cw,
            "ball_energy": {"rows": balls, "pass": ball_ok}}


def section_ratios(cfg: RunConfig) -> dict:
    s1 = ratio_suite("thm1-2d-k0", cfg.samples["thm1"], cfg.seed_for(6), cfg.spacing[2], cfg.threads)
    s3 = ratio_suite("thm3-3d", cfg.samples["thm3"], cfg.seed_for(7), cfg.spacing[3], cfg.threads)
    return {"criterion": None, "pass": s1.passed and s3.passed, "bounds": FROZEN_RATIO_BOUNDS,
            "suites": [s1.to_dict(), s3.to_dict()]}


SECTIONS = [
    ("riesz", section_riesz),
    ("thm2", section_thm2),
    ("prop41", section_prop41),
    ("lemmas", section_lemmas),
    ("sharpness", section_sharpness),
    ("thm4", section_thm4),
    ("loeper", section_loeper),
    ("anchors", section_anchors),
    ("ratios", section_ratios),
]


def run_battery(cfg: RunConfig, only=None, progress=None):
    """Run the sections (all, or the names in ``only``); returns ``(report, timings)``."""
    report = {"config": cfg.to_dict(), "sections": {}}
    timings = {}
    for name, fn in SECTIONS:
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        res = fn(cfg)
        timings[name] = time.perf_counter() - t0
        report["sections"][name] = res
        if progress is not None:
            progress(name, res)
    report["pass"] = all(s["pass"] for s in report["sections"].values())
    return report, timings
