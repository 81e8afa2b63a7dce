"""Quadratic-cost optimal transport between grid densities.

Grid densities are transported as weighted point clouds at cell centres.
For two piecewise-constant densities on the same lattice, moving each
cell rigidly along a discrete plan costs exactly the discrete plan cost,
so the discrete distance is an upper bound for the continuum one; the
difference is O(spacing).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .density import (DensityError, GridDensity, RadialComposite, mass, segments_1d, sup_norm,
                      unit_ball_volume)
from .rearrange import layer_decomposition, rearrange_grid

for _backend in ("PYTORCH", "TENSORFLOW", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")
import ot  # noqa: E402

DEFAULT_CAP = 2500
MASS_TOL = 1e-6


class TransportError(ValueError):
    pass


@dataclass
class TransportPlan:
    """Sparse coupling: ``mass[t]`` moves from ``source_points[src[t]]`` to ``target_points[dst[t]]``."""

    src: np.ndarray
    dst: np.ndarray
    mass: np.ndarray
    source_points: np.ndarray
    target_points: np.ndarray
    source_mass: np.ndarray
    target_mass: np.ndarray
    notes: list = field(default_factory=list)

    def cost(self) -> float:
        d = self.source_points[self.src] - self.target_points[self.dst]
        return float(np.sum(self.mass * np.sum(d * d, axis=1)))

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.src, weights=self.mass, minlength=len(self.source_mass))

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.dst, weights=self.mass, minlength=len(self.target_mass))

    def marginal_error(self) -> float:
        """Largest relative marginal defect (rows and columns)."""
        scale = max(float(np.sum(self.source_mass)), 1e-300)
        e1 = np.max(np.abs(self.row_sums() - self.source_mass)) if self.source_mass.size else 0.0
        e2 = np.max(np.abs(self.col_sums() - self.target_mass)) if self.target_mass.size else 0.0
        return float(max(e1, e2)) / scale

    def __len__(self):
        return int(self.mass.size)

    def summary(self) -> dict:
        return {"entries": len(self), "cost": self.cost(), "marginal_error": self.marginal_error(),
                "notes": list(self.notes)}

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("src,dst,mass\n")
            for s, d, m in zip(self.src, self.dst, self.mass):
                fh.write(f"{int(s)},{int(d)},{m!r}\n")


def point_cloud(rho: GridDensity):
    _, centers, vals = rho.support()
    return centers, vals * rho.cell_volume


def aggregate(rho: GridDensity) -> GridDensity:
    """Mass-conserving 2x coarsening: each coarse cell holds the mean of its 2^n fine cells."""
    n = rho.dim
    vals = rho.values
    pad = [(0, e % 2) for e in vals.shape]
    v = np.pad(vals, pad)
    shape = []
    for e in v.shape:
        shape += [e // 2, 2]
    v = v.reshape(shape).mean(axis=tuple(range(1, 2 * n, 2)))
    origin = tuple(np.asarray(rho.origin) + 0.5 * rho.spacing)
    return GridDensity(n, 2 * rho.spacing, origin, v)


def _solve_points(x, a, y, b):
    """Exact discrete OT between weighted clouds; returns (src, dst, mass)."""
    if x.shape[1] == 1:
        return _monotone_1d(x[:, 0], a, y[:, 0], b)
    M = ot.dist(x, y, metric="sqeuclidean")
    G = ot.emd(a, b, M, numItermax=10_000_000)
    src, dst = np.nonzero(G > 0)
    return src, dst, G[src, dst]


def _monotone_1d(x, a, y, b):
    """Sorted (north-west corner) coupling, optimal for convex costs on the line."""
    ox = np.argsort(x, kind="stable")
    oy = np.argsort(y, kind="stable")
    ca = np.concatenate([[0.0], np.cumsum(a[ox])])
    cb = np.concatenate([[0.0], np.cumsum(b[oy])])
    cb[-1] = ca[-1]
    cuts = np.unique(np.concatenate([ca, cb]))
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    i = np.clip(np.searchsorted(ca, mids, side="right") - 1, 0, len(a) - 1)
    j = np.clip(np.searchsorted(cb, mids, side="right") - 1, 0, len(b) - 1)
    w = np.diff(cuts)
    keep = w > 0
    return ox[i[keep]], oy[j[keep]], w[keep]


def w2_exact(rho1, rho2, cap: int = DEFAULT_CAP, shift1=None, shift2=None, mass_tol: float = MASS_TOL):
    """``W_2`` between two grid densities (cell-centre clouds) and the optimal plan.

    ``shift1``/``shift2`` translate the clouds exactly before solving; use
    ``shift1 = -x0`` to realize ``T_{x0} rho1`` without rebinning.
    """
    if isinstance(rho1, RadialComposite) or isinstance(rho2, RadialComposite):
        raise TransportError("w2_exact takes grids; use w2_radial for centred composites")
    notes = []
    g1, g2 = rho1, rho2
    while max(np.count_nonzero(g1.values), np.count_nonzero(g2.values)) > cap:
        g1, g2 = aggregate(g1), aggregate(g2)
        notes.append(f"aggregated to spacing {g1.spacing:g}")
    x, a = point_cloud(g1)
    y, b = point_cloud(g2)
    if a.size == 0 or b.size == 0:
        raise TransportError("infeasible: empty side")
    ma, mb = float(np.sum(a)), float(np.sum(b))
    if abs(ma - mb) > mass_tol * max(ma, mb):
        raise TransportError(f"mass mismatch: {ma!r} vs {mb!r}")
    if ma != mb:
        b = b * (ma / mb)
        notes.append(f"target mass rescaled by {ma / mb!r}")
    if shift1 is not None:
        x = x + np.asarray(shift1, float)
    if shift2 is not None:
        y = y + np.asarray(shift2, float)
    src, dst, m = _solve_points(x, a, y, b)
    plan = TransportPlan(src, dst, m, x, y, a, b, notes)
    return math.sqrt(max(plan.cost(), 0.0)), plan


def w2_points(x, a, y, b) -> float:
    """``W_2`` between weighted point clouds (equal total weight)."""
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    src, dst, m = _solve_points(x, np.asarray(a, float), y, np.asarray(b, float))
    d = x[src] - y[dst]
    return math.sqrt(max(float(np.sum(m * np.sum(d * d, axis=1))), 0.0))


def layercake_plan(rho: GridDensity, star: GridDensity = None):
    """The layer-by-layer coupling of ``rho*`` (source) and ``rho`` (target).

    Each superlevel set ``D_h`` of ``rho`` is matched to the set of the
    same number of cells nearest the origin (the superlevel set of the grid
    ``rho*``) by an exact assignment, weighted by the layer thickness.
    Returns ``(plan, cost)``; the plan is feasible, generally not optimal.
    """
    star = rearrange_grid(rho) if star is None else star
    layers = layer_decomposition(rho)
    order = _star_order(star)
    cen_rho = rho.cell_centers()
    cen_star = star.cell_centers()
    vol = rho.cell_volume
    srcs, dsts, masses = [], [], []
    for i, cells in enumerate(layers.cells):
        N = cells.size
        if N == 0:
            continue
        star_cells = order[:N]
        ys, xs = cen_star[star_cells], cen_rho[cells]
        if rho.dim == 1:
            r = star_cells[np.argsort(ys[:, 0], kind="stable")]
            c = cells[np.argsort(xs[:, 0], kind="stable")]
        else:
            C = np.sum((ys[:, None, :] - xs[None, :, :]) ** 2, axis=2)
            ri, ci = linear_sum_assignment(C)
            r, c = star_cells[ri], cells[ci]
        t = float(layers.thickness[i]) + float(layers.thickness_lo[i])
        srcs.append(r)
        dsts.append(c)
        masses.append(np.full(N, t * vol))
    src = np.concatenate(srcs) if srcs else np.zeros(0, int)
    dst = np.concatenate(dsts) if dsts else np.zeros(0, int)
    m = np.concatenate(masses) if masses else np.zeros(0)
    plan = TransportPlan(src, dst, m, cen_star, cen_rho, star.values.ravel() * vol,
                         rho.values.ravel() * vol, ["layer-cake coupling"])
    return plan, plan.cost()


def _star_order(star: GridDensity) -> np.ndarray:
    """Cells of the rearranged grid by decreasing value (matches the rearrangement order)."""
    from .rearrange import _cell_order
    return _cell_order(star)


# ---------------------------------------------------------------------------
# radial (centred) composites: exact W_2 via radial quantiles


def _radial_cdf_pieces(c: RadialComposite):
    n = c.dim
    if any(any(x != 0 for x in p.center) for p in c.pieces):
        raise TransportError("w2_radial needs pieces centred at the origin")
    cuts = sorted({p.r_inner for p in c.pieces} | {p.r_outer for p in c.pieces})
    w = unit_ball_volume(n)
    segs = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        val = sum(p.height for p in c.pieces if p.r_inner < mid <= p.r_outer)
        if val < 0:
            raise TransportError("negative density")
        if val > 0:
            segs.append((a, b, val * w))
    return segs


def w2_radial(c1: RadialComposite, c2: RadialComposite, nodes: int = 24) -> float:
    """Exact ``W_2`` between two radial composites centred at the origin.

    Both laws are radial, so the optimal map is radial and matches radial
    quantiles; the quantile integral is evaluated by Gauss-Legendre on each
    interval between breakpoints, where both quantile functions are smooth.
    """
    if c1.dim != c2.dim:
        raise TransportError("dimension mismatch")
    n = c1.dim
    m1, m2 = mass(c1), mass(c2)
    if abs(m1 - m2) > MASS_TOL * max(m1, m2):
        raise TransportError(f"mass mismatch: {m1!r} vs {m2!r}")

    def table(c, m):
        segs = _radial_cdf_pieces(c)
        rows = []
        cum = 0.0
        for a, b, cw in segs:
            mm = cw * (b ** n - a ** n) / m
            rows.append((cum, cum + mm, a, b, cw / m))
            cum += mm
        return rows

    t1, t2 = table(c1, m1), table(c2, m2)

    def quantile(rows, t):
        out = np.empty_like(t)
        for lo, hi, a, b, cw in rows:
            sel = (t >= lo) & (t <= hi)
            out[sel] = (a ** n + (t[sel] - lo) / cw) ** (1.0 / n)
        return out

    cuts = sorted({0.0, 1.0} | {r[0] for r in t1} | {r[1] for r in t1} | {r[0] for r in t2}
                  | {r[1] for r in t2})
    cuts = [c for c in cuts if 0.0 <= c <= 1.0]
    x, w = np.polynomial.legendre.leggauss(nodes)
    total = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        t = lo + (hi - lo) * 0.5 * (x + 1)
        d = quantile(t1, t) - quantile(t2, t)
        total.append(0.5 * (hi - lo) * float(np.sum(w * d * d)))
    return math.sqrt(m1 * math.fsum(total))


def _quantile_table(segs, m):
    """Rows ``(t_lo, t_hi, x_lo, value / m)`` of the piecewise-linear quantile of a 1D law."""
    rows = []
    cum = 0.0
    for a, b, v in segs:
        mm = v * (b - a) / m
        rows.append((cum, cum + mm, a, v / m))
        cum += mm
    return rows


def w2_1d(c1: RadialComposite, c2: RadialComposite) -> float:
    """Exact ``W_2`` between two 1D composites (any layout) via their quantile functions."""
    if c1.dim != 1 or c2.dim != 1:
        raise TransportError("w2_1d needs 1D composites")
    m1, m2 = mass(c1), mass(c2)
    if abs(m1 - m2) > MASS_TOL * max(m1, m2):
        raise TransportError(f"mass mismatch: {m1!r} vs {m2!r}")
    s1, s2 = segments_1d(c1), segments_1d(c2)
    if any(v < 0 for _, _, v in s1 + s2):
        raise TransportError("negative density")
    t1, t2 = _quantile_table(s1, m1), _quantile_table(s2, m2)

    def quantile(rows, t):
        out = np.empty_like(t)
        for lo, hi, a, dens in rows:
            sel = (t >= lo) & (t <= hi)
            out[sel] = a + (t[sel] - lo) / dens
        return out

    cuts = sorted({0.0, 1.0} | {r[0] for r in t1 + t2} | {r[1] for r in t1 + t2})
    cuts = [c for c in cuts if 0.0 <= c <= 1.0]
    # both quantiles are linear between cuts, so three nodes integrate the square exactly
    x, w = np.polynomial.legendre.leggauss(3)
    total = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        t = lo + (hi - lo) * 0.5 * (x + 1)
        d = quantile(t1, t) - quantile(t2, t)
        total.append(0.5 * (hi - lo) * float(np.sum(w * d * d)))
    return math.sqrt(m1 * math.fsum(total))


# ---------------------------------------------------------------------------
# negative-norm comparison


@dataclass
class LoeperReport:
    lhs: float
    rhs: float
    w2: float
    sup: float
    tol: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.slack >= -self.tol

    def to_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "w2": self.w2, "sup_norm": self.sup,
                "slack": self.slack, "tol": self.tol, "pass": self.passed}


def loeper_gap(rho1, rho2, tol_rel: float = 1e-6, cap: int = DEFAULT_CAP, normalize: bool = True,
               threads=None) -> LoeperReport:
    """``||rho1 - rho2||_{H^-1}`` against ``max(sup)^{1/2} W_2``.

    With ``normalize`` both densities are first scaled to unit mass (the
    inequality is stated for probability measures).
    """
    from .density import difference, scale
    from .energy import hminus1_sq
    if rho1.dim != 3 or rho2.dim != 3:
        raise TransportError("Loeper comparison uses the 3D Newtonian path")
    if isinstance(rho1, RadialComposite) or isinstance(rho2, RadialComposite):
        raise TransportError("loeper_gap takes grids")
    if normalize:
        rho1 = scale(rho1, 1.0 / mass(rho1))
        rho2 = scale(rho2, 1.0 / mass(rho2))
    e = hminus1_sq(difference(rho1, rho2), threads=threads)
    lhs = math.sqrt(max(e, 0.0))
    w2, _ = w2_exact(rho1, rho2, cap=cap)
    s = max(sup_norm(rho1), sup_norm(rho2))
    rhs = math.sqrt(s) * w2
    return LoeperReport(lhs, rhs, w2, s, tol_rel * max(rhs, lhs, 1e-300))
