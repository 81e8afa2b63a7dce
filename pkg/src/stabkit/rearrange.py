"""Radially symmetric decreasing rearrangement and superlevel-set decompositions.

On grids the rearrangement is combinatorial: the multiset of cell values is
placed, largest first, onto cells ordered by the distance of their centre
to the origin (ties broken by flat row-major index).  Equimeasurability is
then exact at the grid level.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .density import (DensityError, GridDensity, Piece, RadialComposite, embed, rasterize,
                      segments_1d, unit_ball_volume)


class UnsupportedOverlap(DensityError):
    """Composite pieces overlap without being concentric."""


class FallbackNotice(UserWarning):
    """A composite was rearranged on a grid because its layout is not exactly supported."""


def _cell_order(g: GridDensity) -> np.ndarray:
    """Flat indices sorted by (distance to origin, flat index)."""
    grids = np.meshgrid(*[g.axis_coords(a) / g.spacing for a in range(g.dim)], indexing="ij")
    d2 = np.round(sum(x * x for x in grids).ravel(), 9)
    idx = np.arange(d2.size)
    return np.lexsort((idx, d2))


def _fits(g: GridDensity, count: int) -> bool:
    """Whether the ``count`` nearest cells all lie inside a ball contained in the grid."""
    if count == 0:
        return True
    order = _cell_order(g)
    grids = np.meshgrid(*[g.axis_coords(a) for a in range(g.dim)], indexing="ij")
    d2 = sum(x * x for x in grids).ravel()
    r = math.sqrt(d2[order[count - 1]])
    lo = np.asarray(g.origin) - 0.5 * g.spacing
    hi = lo + g.spacing * np.asarray(g.extents)
    return bool(np.all(-lo >= r) and np.all(hi >= r))


def _symmetric_box(g: GridDensity, count: int):
    """Smallest origin-symmetric box on the same lattice holding ``g`` and a ball of ``count`` cells."""
    h, n = g.spacing, g.dim
    lo = np.asarray(g.origin) - 0.5 * h
    hi = lo + h * np.asarray(g.extents)
    r_need = (count * h ** n / unit_ball_volume(n)) ** (1.0 / n) + 2 * math.sqrt(n) * h
    m = max(np.max(np.abs(lo)), np.max(np.abs(hi)), r_need)
    off = np.round(g.lattice_offset(), 9) % 1.0           # cell centres sit at (j + off) h
    j_lo = np.floor(-m / h - off).astype(int)
    j_hi = np.ceil(m / h - off).astype(int)
    origin = tuple((j_lo + off) * h)
    extents = tuple(int(e) for e in (j_hi - j_lo + 1))
    return origin, extents


def rearrange_grid(rho: GridDensity) -> GridDensity:
    """Grid rearrangement ``rho*``.

    The result lives on the same grid when the rearranged support fits in a
    centred ball inside it; otherwise the grid is first extended to the
    smallest enclosing box symmetric about the origin.
    """
    if rho.signed:
        raise DensityError("rearrangement requires a nonnegative density")
    flat = rho.values.ravel()
    count = int(np.count_nonzero(flat))
    g = rho
    if not _fits(g, count):
        origin, extents = _symmetric_box(g, count)
        g = embed(g, origin, extents)
        flat = g.values.ravel()
    order = _cell_order(g)
    vals = np.sort(flat, kind="stable")[::-1]
    out = np.empty_like(flat)
    out[order] = vals
    return GridDensity(g.dim, g.spacing, g.origin, out.reshape(g.extents))


# ---------------------------------------------------------------------------
# layer decomposition


def _two_diff(a: float, b: float):
    """``a - b`` as an unevaluated sum ``hi + lo`` (exact)."""
    s = a - b
    bb = s - a
    err = (a - (s - bb)) + (-b - bb)
    return s, err


@dataclass(frozen=True)
class LayerDecomposition:
    """Exact superlevel decomposition of a grid density.

    Layer ``i`` has level ``levels[i]`` (``levels[0] = 0``), thickness
    ``levels[i+1] - levels[i]`` (stored exactly as ``thickness + thickness_lo``),
    superlevel set ``cells[i] = {rho > levels[i]}`` (flat indices, sorted),
    volume ``volumes[i]`` and equivalent radius ``radii[i]``.
    """

    levels: np.ndarray
    thickness: np.ndarray
    thickness_lo: np.ndarray
    volumes: np.ndarray
    radii: np.ndarray
    cells: tuple
    dim: int
    spacing: float

    def __len__(self):
        return len(self.levels)

    def reconstruct(self, shape) -> np.ndarray:
        """``sum_i (h_{i+1} - h_i) 1_{D_{h_i}}``, summed exactly per cell."""
        out = np.zeros(int(np.prod(shape)))
        depth = np.zeros(out.size, dtype=int)
        for cells in self.cells:
            depth[cells] += 1
        # a cell in exactly j layers carries the telescoped sum of the first j thicknesses
        sums = [0.0]
        parts = []
        for hi, lo in zip(self.thickness, self.thickness_lo):
            parts.extend((hi, lo))
            sums.append(math.fsum(parts))
        out = np.asarray(sums)[depth]
        return out.reshape(shape)


def layer_decomposition(rho: GridDensity, levels=None) -> LayerDecomposition:
    """One layer per distinct positive cell value (``levels`` is ignored for grids)."""
    flat = rho.values.ravel()
    vals = np.unique(flat[flat > 0])
    lv = np.concatenate([[0.0], vals[:-1]]) if vals.size else np.zeros(0)
    th, tl = [], []
    for a, b in zip(vals, lv):
        hi, lo = _two_diff(float(a), float(b))
        th.append(hi)
        tl.append(lo)
    cells = tuple(np.flatnonzero(flat > level) for level in lv)
    vol = np.array([c.size for c in cells], float) * rho.cell_volume
    radii = (vol / unit_ball_volume(rho.dim)) ** (1.0 / rho.dim)
    return LayerDecomposition(lv, np.asarray(th), np.asarray(tl), vol, radii, cells,
                              rho.dim, rho.spacing)


# ---------------------------------------------------------------------------
# composites


def _radial_segments(pieces, n):
    """Concentric group -> list of (value, volume) over elementary annuli."""
    cuts = sorted({p.r_inner for p in pieces} | {p.r_outer for p in pieces})
    out = []
    w = unit_ball_volume(n)
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        val = sum(p.height for p in pieces if p.r_inner < mid <= p.r_outer)
        if val != 0:
            out.append((val, w * (b ** n - a ** n)))
    return out


def composite_levels(c: RadialComposite):
    """``(value, volume)`` pairs of a disjoint-or-concentric composite, or raise."""
    groups = {}
    for p in c.pieces:
        groups.setdefault(p.center, []).append(p)
    keys = list(groups)
    outer = {k: max(p.r_outer for p in groups[k]) for k in keys}
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            d = float(np.linalg.norm(np.subtract(a, b)))
            if d < outer[a] + outer[b] - 1e-12 * max(1.0, d):
                raise UnsupportedOverlap("pieces overlap without being concentric")
    segs = []
    for k in keys:
        segs.extend(_radial_segments(groups[k], c.dim))
    return segs


def rearrange_composite(c: RadialComposite, fallback_spacing=None):
    """Exact ``rho*`` as concentric annuli at the origin.

    Supported layouts: any 1D composite, and groups of concentric pieces
    that are pairwise disjoint in higher dimensions.  Other layouts raise :class:`UnsupportedOverlap`, unless
    ``fallback_spacing`` is given, in which case the composite is
    rasterized and rearranged on the grid with a :class:`FallbackNotice`.
    """
    if c.signed:
        raise DensityError("rearrangement requires a nonnegative density")
    try:
        if c.dim == 1:
            segs = [(v, b - a) for a, b, v in segments_1d(c)]
        else:
            segs = composite_levels(c)
    except UnsupportedOverlap:
        if fallback_spacing is None:
            raise
        warnings.warn("unsupported overlap pattern: rasterized and rearranged on the grid",
                      FallbackNotice, stacklevel=2)
        return rearrange_grid(rasterize(c, fallback_spacing, symmetric=True))
    merged = {}
    for val, vol in segs:
        if val < 0:
            raise DensityError("negative values in a nonnegative composite")
        merged[val] = merged.get(val, []) + [vol]
    n = c.dim
    w = unit_ball_volume(n)
    pieces = []
    cum = 0.0
    r_prev = 0.0
    origin = (0.0,) * n
    for val in sorted(merged, reverse=True):
        cum = cum + math.fsum(merged[val])
        r = (cum / w) ** (1.0 / n)
        pieces.append(Piece(origin, r_prev, r, val))
        r_prev = r
    return RadialComposite(n, tuple(pieces))
