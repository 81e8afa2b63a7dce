"""Acceptance battery: runs ``stabkit suite`` three times and re-derives every criterion.

Run A (1 thread, timings) supplies the raw rows; every criterion is
recomputed from those rows at the stated tolerance rather than read from
the suite's own pass flags.  Runs B (1 thread) and C (4 threads) feed the
determinism criterion.  Each criterion prints one PASS/FAIL line, also
repeated in the pytest terminal summary.

Usage outside pytest: ``python tests/test_acceptance.py``.
"""

import json
import math
import os
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

RESULTS = []
SPIKE_EPS = [0.04, 0.06, 0.09, 0.13, 0.2]
EPS = [0.02, 0.035, 0.06, 0.1, 0.2]


def _suite(workdir, name, threads, timings=False):
    out = Path(workdir) / f"{name}.json"
    cmd = [sys.executable, "-m", "stabkit.cli", "suite", "--seed", "0", "--threads", str(threads),
           "--out", str(out)]
    if timings:
        cmd += ["--timings", str(Path(workdir) / f"{name}-timings.json")]
    env = dict(os.environ)
    env.pop("STABKIT_THREADS", None)
    proc = subprocess.run(cmd, capture_output=True, text=True, env=env)
    if proc.returncode not in (0, 1):
        raise RuntimeError(f"suite run {name} crashed:\n{proc.stderr}")
    t = json.loads((Path(workdir) / f"{name}-timings.json").read_text()) if timings else None
    return out.read_bytes(), t


@pytest.fixture(scope="module")
def runs():
    with tempfile.TemporaryDirectory() as d:
        a, timings = _suite(d, "A", 1, timings=True)
        b, _ = _suite(d, "B", 1)
        c, _ = _suite(d, "C", 4)
    return {"A": a, "B": b, "C": c, "report": json.loads(a), "timings": timings}


def record(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def _rows(section, prefix=""):
    return [r for s in section["suites"] if s["suite"].startswith(prefix) for r in s["rows"]]


def _slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# --- criteria ---------------------------------------------------------------

def criterion_1(rep, timings):
    rows = _rows(rep["sections"]["riesz"])
    kernels = {(s["settings"]["dim"], r["kernel"]) for s in rep["sections"]["riesz"]["suites"] for r in s["rows"]}
    counts = {key: sum(1 for s in rep["sections"]["riesz"]["suites"] for r in s["rows"]
                       if (s["settings"]["dim"], r["kernel"]) == key) for key in kernels}
    bad = [r for r in rows if r["energy_star"] - r["energy"] < -(1e-6 * abs(r["energy_star"]) + 1e-12)]
    t = timings["riesz"]
    ok = not bad and all(v == 100 for v in counts.values()) and t < 180
    return ok, f"Riesz suites {len(counts)} (dim, kernel) pairs x 100, failures {len(bad)}, {t:.1f}s"


def criterion_2(rep, timings):
    bad, total = 0, 0
    for s in rep["sections"]["thm2"]["suites"]:
        h = s["settings"]["spacing"]
        for r in s["rows"]:
            total += 1
            c = (2 * r["R"]) ** (r["k"] - 2)
            tol = 1e-4 * max(abs(r["energy"]), abs(r["energy_star"])) + 4 * h * r["w2"]
            gap = r["energy_star"] - r["energy"]
            bad += gap < c * r["w2"] ** 2 - tol
    return bad == 0, f"explicit-constant checks {total}, failures {bad}"


def criterion_3(rep, timings):
    rows = _rows(rep["sections"]["prop41"])
    bad = []
    for r in rows:
        tol = r["tol"]
        links = (r["m2_gap"] >= r["layercake_cost"] - tol, r["layercake_cost"] >= r["w2_sq"] - tol,
                 r["w2_sq"] >= -tol)
        if not all(links):
            bad.append((r["sample"], links))
    t = timings["prop41"]
    worst = min(r["m2_gap"] - r["layercake_cost"] for r in rows)
    ok = not bad and len(rows) == 100 and t < 120
    return ok, (f"chain on {len(rows)} grids, failures {len(bad)} (samples {[b[0] for b in bad]}), "
                f"worst gap-minus-cost {worst:.3e}, {t:.1f}s")


def criterion_4(rep, timings):
    sec = rep["sections"]["lemmas"]
    bad, counts = 0, []
    for s in sec["suites"]:
        counts.append(f"{s['suite']}:{len(s['rows'])}")
        bad += sum(1 for r in s["rows"] if r["lhs"] < r["rhs"] - r["tol"])
    ok = bad == 0 and all(len(s["rows"]) == 50 for s in sec["suites"])
    return ok, f"{', '.join(counts)}, failures {bad}"


def criterion_5(rep, timings):
    series = rep["sections"]["sharpness"]["series"]
    by = {}
    for s in series:
        by.setdefault(s["family"], []).append(s)
    checks = []

    def add(name, value, target, half):
        checks.append((name, value, abs(value - target) <= half))

    r33 = by["remark33-1d"][0]["rows"]
    x = [r["abscissa"] for r in r33]
    add("remark33 gap", _slope(x, [r["lhs"] for r in r33]), 3.0, 0.2)
    add("remark33 delta", _slope(x, [r["delta"] for r in r33]), 1.0, 0.1)
    r31 = by["remark31"][0]["rows"]
    add("remark31 M2 gap", _slope([r["abscissa"] for r in r31], [r["lhs"] for r in r31]), 3.0, 0.2)
    an = by["thm2-annulus"][0]["rows"]
    xa = [r["abscissa"] for r in an]
    add("annulus gap", _slope(xa, [r["lhs"] for r in an]), 1.0, 0.15)
    add("annulus W2", _slope(xa, [r["w2"] for r in an]), 0.5, 0.1)
    for s in by["rmk43a-dilation"]:
        k = s["settings"]["k"]
        rows = s["rows"]
        add(f"dilation k={k:g}", _slope([r["abscissa"] for r in rows], [r["ratio"] for r in rows]),
            k - 2.0, 0.1)
    grids_ok = all(x == EPS for x in ([r["abscissa"] for r in r33], [r["abscissa"] for r in r31], xa))
    t = timings["sharpness"]
    ok = all(c[2] for c in checks) and grids_ok and t < 300
    detail = "; ".join(f"{n} {v:.3f}{'' if p else ' (out of band)'}" for n, v, p in checks)
    return ok, f"{detail}; {t:.1f}s"


def criterion_6(rep, timings):
    reports = rep["sections"]["thm4"]["reports"]
    eps = [r["eps"] for r in reports]
    w3 = 4 * math.pi / 3
    last = reports[eps.index(max(eps))]
    slope = _slope(eps, [r["gap"] / r["inf"] for r in reports])
    conds = {
        "eps grid": eps == SPIKE_EPS,
        "gap>0": all(r["gap"] > 0 for r in reports),
        "inf bounded": all(r["inf"] >= 0.5 * last["inf"] for r in reports),
        "slope": abs(slope - 0.5) <= 0.1,
        "mass": all(w3 <= r["mass"] <= 2 * w3 for r in reports),
        "sup exact": all(r["sup_norm"] == r["eps"] ** -2.5 for r in reports),
        "runtime": timings["thm4"] < 120,
    }
    bad = [k for k, v in conds.items() if not v]
    return not bad, (f"ratio slope {slope:.3f}, inf range [{min(r['inf'] for r in reports):.4f}, "
                     f"{max(r['inf'] for r in reports):.4f}], {timings['thm4']:.1f}s"
                     + (f", failed: {bad}" if bad else ""))


def criterion_7(rep, timings):
    rows = _rows(rep["sections"]["loeper"])
    bad = [r for r in rows if r["lhs"] > r["rhs"] + 1e-6 * max(r["lhs"], r["rhs"])]
    return not bad and len(rows) == 20, f"pairs {len(rows)}, failures {len(bad)}"


def criterion_8(rep, timings):
    a = rep["sections"]["anchors"]
    quad = max(r["rel_err"] for r in a["quadratic_identity"])
    for r in a["quadratic_identity"]:
        assert r["rel_err"] == abs(r["energy"] - r["identity"]) / abs(r["identity"])
    cw = max(abs(r["closed"] - r["sampled"]) / r["closed"] for r in a["c_wr"])
    cw_formula = all(math.isclose(r["closed"], (2 * r["R"]) ** (r["k"] - 2), rel_tol=1e-14) for r in a["c_wr"])
    balls = a["ball_energy"]["rows"]
    exact = 8 * math.pi / 15
    errs = [abs(b["grid"] - exact) / exact for b in balls]
    ok = quad <= 1e-10 and cw <= 1e-6 and cw_formula and errs[1] <= 0.01 and errs[1] <= 0.5 * errs[0]
    return ok, (f"quadratic identity max rel {quad:.1e}; c_wr max rel {cw:.1e}; "
                f"ball energy rel err {errs[0]:.2e} -> {errs[1]:.2e}")


def _compare(x, y, path="", rel=1e-12):
    if isinstance(x, dict):
        keys = set(x) | set(y)
        out = []
        for k in sorted(keys):
            if path == "" and k == "config":
                continue
            if k not in x or k not in y:
                out.append(f"{path}/{k} missing")
            else:
                out += _compare(x[k], y[k], f"{path}/{k}", rel)
        return out
    if isinstance(x, list):
        if len(x) != len(y):
            return [f"{path} length"]
        return [m for i, (a, b) in enumerate(zip(x, y)) for m in _compare(a, b, f"{path}[{i}]", rel)]
    if isinstance(x, float) or isinstance(y, float):
        if isinstance(x, bool) or isinstance(y, bool):
            return [] if x == y else [path]
        if x == y or abs(x - y) <= rel * max(abs(x), abs(y)):
            return []
        return [f"{path}: {x!r} vs {y!r}"]
    return [] if x == y else [f"{path}: {x!r} vs {y!r}"]


def criterion_9(runs):
    same = runs["A"] == runs["B"]
    a, c = json.loads(runs["A"]), json.loads(runs["C"])
    diffs = _compare(a, c)
    cfg_diff = sorted(k for k in a["config"] if a["config"][k] != c["config"][k])
    ok = same and not diffs and cfg_diff == ["threads"]
    return ok, (f"1-thread runs byte-identical: {same}; 1 vs 4 threads differences beyond 1e-12: "
                f"{len(diffs)}{' ' + str(diffs[:3]) if diffs else ''}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8]


@pytest.mark.slow
@pytest.mark.parametrize("number", range(1, 9))
def test_criterion(runs, number):
    ok, detail = CRITERIA[number - 1](runs["report"], runs["timings"])
    assert record(number, ok, detail), detail


@pytest.mark.slow
def test_criterion_9_determinism(runs):
    ok, detail = criterion_9(runs)
    assert record(9, ok, detail), detail


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as d:
        a, timings = _suite(d, "A", 1, timings=True)
        b, _ = _suite(d, "B", 1)
        c, _ = _suite(d, "C", 4)
    data = {"A": a, "B": b, "C": c, "report": json.loads(a), "timings": timings}
    results = [fn(data["report"], timings) for fn in CRITERIA] + [criterion_9(data)]
    for i, (ok, detail) in enumerate(results, 1):
        record(i, ok, detail)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
