"""Density representations: uniform grids and concentric-piece composites.

Two representations are used throughout the package:

``GridDensity``
    a nonnegative piecewise-constant function on a uniform Cartesian grid
    (cells are closed cubes of side ``spacing`` centred on lattice points).
``RadialComposite``
    a finite sum of uniform balls/annuli with arbitrary centres.  Every
    hand-constructed example (sharpness families, the spike counterexample)
    is exactly representable this way, and several functionals have closed
    forms on it.

Translation follows the convention ``T_a rho = rho(. + a)``: the support of
``T_a rho`` is the support of ``rho`` moved by ``-a``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np


class DensityError(ValueError):
    """Raised on invalid density input."""


class RasterWarning(UserWarning):
    """Non-fatal rasterization accuracy warning."""


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Nonnegative cell values on a uniform grid.

    ``origin`` is the coordinate of the centre of cell ``(0, ..., 0)``;
    ``values`` has shape ``extents`` and is stored row-major.
    """

    dim: int
    spacing: float
    origin: tuple
    values: np.ndarray
    approximate: bool = field(default=False, compare=False)

    signed = False

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise DensityError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not self.spacing > 0:
            raise DensityError("spacing must be positive")
        vals = _readonly(self.values)
        if vals.ndim != self.dim:
            raise DensityError(f"values must be {self.dim}-dimensional, got shape {vals.shape}")
        if any(e < 1 for e in vals.shape):
            raise DensityError("extents must be >= 1 on every axis")
        if not np.all(np.isfinite(vals)):
            raise DensityError("values must be finite")
        if not self.signed and np.any(vals < 0):
            raise DensityError("density values must be nonnegative (use SignedGridField)")
        origin = tuple(float(o) for o in np.broadcast_to(np.asarray(self.origin, float), (self.dim,)))
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def extents(self) -> tuple:
        return self.values.shape

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * np.arange(self.extents[axis])

    def cell_centers(self) -> np.ndarray:
        """(N, dim) array of cell centres in row-major order."""
        grids = np.meshgrid(*[self.axis_coords(a) for a in range(self.dim)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def support(self):
        """Flat indices, centres and values of the nonzero cells."""
        flat = self.values.ravel()
        idx = np.flatnonzero(flat)
        centers = self.cell_centers()[idx]
        return idx, centers, flat[idx]

    def lattice_offset(self) -> np.ndarray:
        """Origin in units of spacing (identifies the lattice up to integer shifts)."""
        return np.asarray(self.origin) / self.spacing

    def with_values(self, values, cls=None):
        cls = cls or type(self)
        return cls(self.dim, self.spacing, self.origin, values)

    def __repr__(self):
        return (f"{type(self).__name__}(dim={self.dim}, spacing={self.spacing:g}, "
                f"extents={self.extents}, mass={mass(self):.6g})")


@dataclass(frozen=True, eq=False)
class SignedGridField(GridDensity):
    """Grid field whose values may be negative (differences of densities)."""

    signed = True


GridLike = Union[GridDensity, SignedGridField]


@dataclass(frozen=True)
class Piece:
    """Uniform annulus ``r_inner < |x - center| <= r_outer`` of given height."""

    center: tuple
    r_inner: float
    r_outer: float
    height: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.r_inner < 0:
            raise DensityError("r_inner must be >= 0")
        if not self.r_outer > self.r_inner:
            raise DensityError(f"degenerate piece: r_outer={self.r_outer} <= r_inner={self.r_inner}")

    def volume(self, n: int) -> float:
        return unit_ball_volume(n) * (self.r_outer ** n - self.r_inner ** n)

    def mass(self, n: int) -> float:
        return self.height * self.volume(n)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d2 = np.sum((pts - np.asarray(self.center)) ** 2, axis=-1)
        inner = (d2 > self.r_inner ** 2) if self.r_inner > 0 else True
        return inner & (d2 <= self.r_outer ** 2)

    def coverage(self, pts: np.ndarray, width: float) -> np.ndarray:
        """Fraction of a sample slab of ``width`` (centred at each point, normal to the
        boundary) lying inside the piece; exact for a locally flat boundary."""
        d = np.sqrt(np.sum((pts - np.asarray(self.center)) ** 2, axis=-1))
        out = np.clip(0.5 - (d - self.r_outer) / width, 0.0, 1.0)
        if self.r_inner > 0:
            out = out - np.clip(0.5 - (d - self.r_inner) / width, 0.0, 1.0)
        return out


@dataclass(frozen=True)
class RadialComposite:
    """Finite sum of uniform pieces; overlapping pieces add pointwise."""

    dim: int
    pieces: tuple
    signed: bool = False

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise DensityError(f"dim must be 1, 2 or 3, got {self.dim}")
        pieces = tuple(self.pieces)
        for p in pieces:
            if len(p.center) != self.dim:
                raise DensityError("piece centre has wrong dimension")
            if p.height < 0 and not self.signed:
                raise DensityError("negative height requires signed=True")
        object.__setattr__(self, "pieces", pieces)

    def evaluate(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        out = np.zeros(pts.shape[0])
        for p in self.pieces:
            out += p.height * p.contains(pts)
        return out

    def bounding_box(self):
        lo = np.full(self.dim, np.inf)
        hi = np.full(self.dim, -np.inf)
        for p in self.pieces:
            c = np.asarray(p.center)
            lo = np.minimum(lo, c - p.r_outer)
            hi = np.maximum(hi, c + p.r_outer)
        return lo, hi

    def scaled(self, factor: float) -> "RadialComposite":
        return RadialComposite(self.dim, tuple(Piece(p.center, p.r_inner, p.r_outer, p.height * factor)
                                               for p in self.pieces), self.signed or factor < 0)

    def __add__(self, other: "RadialComposite") -> "RadialComposite":
        if other.dim != self.dim:
            raise DensityError("dimension mismatch")
        return RadialComposite(self.dim, self.pieces + other.pieces, self.signed or other.signed)

    def __sub__(self, other: "RadialComposite") -> "RadialComposite":
        return RadialComposite(self.dim, self.pieces + other.scaled(-1.0).pieces, True)


def ball(center, radius, height=1.0) -> RadialComposite:
    center = tuple(np.atleast_1d(np.asarray(center, float)))
    return RadialComposite(len(center), (Piece(center, 0.0, radius, height),))


def annulus(center, r_inner, r_outer, height=1.0) -> RadialComposite:
    center = tuple(np.atleast_1d(np.asarray(center, float)))
    return RadialComposite(len(center), (Piece(center, r_inner, r_outer, height),))


# ---------------------------------------------------------------------------
# rasterization


def rasterize(c: RadialComposite, spacing: float, padding: float = 0.0, subcells: int = 4,
              bounds=None, symmetric: bool = False) -> GridLike:
    """Sample a composite onto a grid whose cell edges sit on multiples of ``spacing``.

    Each cell value is the sum of piece heights weighted by the cell's volume
    fraction inside each piece, estimated from ``subcells**dim`` sample points;
    every sample counts the fraction of its subcell on the inner side of the
    locally flat boundary, which removes the lattice-count noise of plain
    point sampling.
    The grid covers the union of piece bounding boxes expanded by ``padding``
    (or the explicit ``bounds=(lo, hi)``); ``symmetric=True`` widens it to a
    box symmetric about the origin so that the rearranged density fits.
    """
    if not c.pieces:
        raise DensityError("empty density")
    if not spacing > 0 or padding < 0:
        raise DensityError("spacing must be positive and padding nonnegative")
    n = c.dim
    h = float(spacing)
    thinnest = min(p.r_outer - p.r_inner for p in c.pieces)
    if h > thinnest:
        warnings.warn(f"spacing {h:g} exceeds the thinnest piece ({thinnest:g})", RasterWarning,
                      stacklevel=2)
    if bounds is None:
        lo, hi = c.bounding_box()
        lo, hi = lo - padding, hi + padding
    else:
        lo, hi = (np.broadcast_to(np.asarray(b, float), (n,)) for b in bounds)
    if symmetric:
        m = np.maximum(np.abs(lo), np.abs(hi)).max()
        lo, hi = np.full(n, -m), np.full(n, m)
    # small relative slack keeps boxes that end exactly on a lattice edge tight
    i_lo = np.floor(lo / h + 1e-9).astype(int)
    i_hi = np.ceil(hi / h - 1e-9).astype(int)
    extents = tuple(int(e) for e in np.maximum(i_hi - i_lo, 1))
    origin = (i_lo + 0.5) * h
    sub = (np.arange(subcells) + 0.5) / subcells - 0.5
    offs = np.stack([g.ravel() for g in np.meshgrid(*([sub] * n), indexing="ij")], axis=1) * h

    values = np.zeros(extents)
    axes = [origin[a] + h * np.arange(extents[a]) for a in range(n)]
    for p in c.pieces:
        # only touch the cells in the piece's bounding box
        pc = np.asarray(p.center)
        sl, local_axes = [], []
        for a in range(n):
            j0 = max(int(np.floor((pc[a] - p.r_outer - origin[a]) / h)) - 1, 0)
            j1 = min(int(np.ceil((pc[a] + p.r_outer - origin[a]) / h)) + 2, extents[a])
            sl.append(slice(j0, max(j1, j0)))
            local_axes.append(axes[a][j0:max(j1, j0)])
        if any(len(ax) == 0 for ax in local_axes):
            continue
        centers = np.stack([g.ravel() for g in np.meshgrid(*local_axes, indexing="ij")], axis=1)
        frac = np.zeros(centers.shape[0])
        for o in offs:
            frac += p.coverage(centers + o, h / subcells)
        frac /= offs.shape[0]
        values[tuple(sl)] += p.height * frac.reshape([len(ax) for ax in local_axes])
    cls = SignedGridField if (c.signed or np.any(values < 0)) else GridDensity
    if cls is SignedGridField:
        return SignedGridField(n, h, tuple(origin), values)
    return GridDensity(n, h, tuple(origin), np.maximum(values, 0.0))


def rasterize_function(f, dim: int, spacing: float, lo, hi, subcells: int = 4) -> GridDensity:
    """Cell averages of a nonnegative pointwise function by subcell sampling on an edge-aligned grid.

    ``f`` maps an ``(N, dim)`` array of points to ``N`` values.
    """
    h = float(spacing)
    lo = np.broadcast_to(np.asarray(lo, float), (dim,))
    hi = np.broadcast_to(np.asarray(hi, float), (dim,))
    i_lo = np.floor(lo / h + 1e-9).astype(int)
    i_hi = np.ceil(hi / h - 1e-9).astype(int)
    extents = tuple(int(e) for e in np.maximum(i_hi - i_lo, 1))
    origin = (i_lo + 0.5) * h
    sub = (np.arange(subcells) + 0.5) / subcells - 0.5
    offs = np.stack([g.ravel() for g in np.meshgrid(*([sub] * dim), indexing="ij")], axis=1) * h
    axes = [origin[a] + h * np.arange(extents[a]) for a in range(dim)]
    centers = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    acc = np.zeros(centers.shape[0])
    for o in offs:
        acc += np.asarray(f(centers + o), float)
    values = (acc / offs.shape[0]).reshape(extents)
    if np.any(values < 0):
        raise DensityError("rasterize_function needs a nonnegative function")
    return GridDensity(dim, h, tuple(origin), values)


def segments_1d(c: RadialComposite):
    """``(a, b, value)`` on the elementary intervals of a 1D composite (zero-valued ones dropped)."""
    if c.dim != 1:
        raise DensityError("segments_1d needs a 1D composite")
    cuts = set()
    for p in c.pieces:
        x = p.center[0]
        cuts |= {x - p.r_outer, x + p.r_outer}
        if p.r_inner > 0:
            cuts |= {x - p.r_inner, x + p.r_inner}
    cuts = sorted(cuts)
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        v = float(c.evaluate(np.array([[0.5 * (a + b)]]))[0])
        if v != 0:
            out.append((a, b, v))
    return out


def l1_distance_composite_1d(c1: RadialComposite, c2: RadialComposite) -> float:
    """Exact ``||c1 - c2||_1`` for 1D composites."""
    return math.fsum(abs(v) * (b - a) for a, b, v in segments_1d(c1 - c2))


# ---------------------------------------------------------------------------
# basic functionals


def mass(rho) -> float:
    """Total integral (signed for signed fields)."""
    if isinstance(rho, RadialComposite):
        return math.fsum(p.mass(rho.dim) for p in rho.pieces)
    return float(np.sum(rho.values)) * rho.cell_volume


def total_variation(rho) -> float:
    return float(np.sum(np.abs(rho.values))) * rho.cell_volume


def sup_norm(rho) -> float:
    if isinstance(rho, RadialComposite):
        if not rho.pieces:
            return 0.0
        return float(np.max(np.abs(_composite_levels(rho))))
    return float(np.max(np.abs(rho.values)))


def _composite_levels(c: RadialComposite) -> np.ndarray:
    """Pointwise values attained on the pieces (exact for disjoint/concentric layouts)."""
    vals = []
    for p in c.pieces:
        rs = sorted({q.r_inner for q in c.pieces if q.center == p.center}
                    | {q.r_outer for q in c.pieces if q.center == p.center})
        rs = [r for r in rs if p.r_inner <= r <= p.r_outer]
        for a, b in zip(rs[:-1], rs[1:]):
            mid = np.asarray(p.center).copy()
            mid[0] += 0.5 * (a + b)
            vals.append(c.evaluate(mid[None, :])[0])
    return np.asarray(vals) if vals else np.zeros(1)


def lp_norm(rho, p: float) -> float:
    if math.isinf(p):
        return sup_norm(rho)
    if isinstance(rho, RadialComposite):
        raise DensityError("lp_norm of composites is only available for p = inf")
    return float(np.sum(np.abs(rho.values) ** p) * rho.cell_volume) ** (1.0 / p)


def center_of_mass(rho) -> np.ndarray:
    m = mass(rho)
    if m <= 0:
        raise DensityError("center_of_mass requires positive mass")
    if isinstance(rho, RadialComposite):
        acc = np.zeros(rho.dim)
        for p in rho.pieces:
            acc += p.mass(rho.dim) * np.asarray(p.center)
        return acc / m
    _, centers, vals = rho.support()
    return np.sum(centers * vals[:, None], axis=0) * rho.cell_volume / m


def second_moment(rho, about=None) -> float:
    """``int rho(x) |x - about|^2 dx`` (``about`` defaults to the origin).

    Grids are treated as piecewise-constant functions, so each cell adds
    ``h^n v (|x_i|^2 + n h^2 / 12)``.  Composites use the exact radial
    integral per piece plus the parallel-axis shift.
    """
    x0 = np.zeros(rho.dim) if about is None else np.asarray(about, float)
    if isinstance(rho, RadialComposite):
        n = rho.dim
        total = []
        for p in rho.pieces:
            w = unit_ball_volume(n)
            # int_{a<|y|<=b} |y|^2 dy = n w (b^{n+2} - a^{n+2}) / (n + 2)
            central = n * w * (p.r_outer ** (n + 2) - p.r_inner ** (n + 2)) / (n + 2)
            c = np.asarray(p.center) - x0
            c2 = float(np.dot(c, c))
            total.append(p.height * (central + c2 * p.volume(n)))
        return math.fsum(total)
    _, centers, vals = rho.support()
    h, n = rho.spacing, rho.dim
    r2 = np.sum((centers - x0) ** 2, axis=1) + n * h * h / 12.0
    return float(np.sum(vals * r2)) * rho.cell_volume


def support_radius(rho) -> float:
    """Smallest R with the support inside the closed ball B(0, R).

    For grids the farthest corner of any nonzero cell is used.
    """
    if isinstance(rho, RadialComposite):
        return max(float(np.linalg.norm(p.center)) + p.r_outer for p in rho.pieces)
    _, centers, _ = rho.support()
    if centers.size == 0:
        return 0.0
    half = 0.5 * rho.spacing
    far = np.abs(centers) + half
    return float(np.sqrt(np.max(np.sum(far ** 2, axis=1))))


# ---------------------------------------------------------------------------
# translation and grid alignment


def translate(rho, a):
    """Return ``T_a rho = rho(. + a)``.

    Composites and grid-multiple shifts are exact (grids just move their
    origin).  Other grid shifts are rebinned linearly: each new cell holds
    the exact cell average of the shifted piecewise-constant function, and
    the result is flagged ``approximate``.
    """
    a = np.atleast_1d(np.asarray(a, float))
    if isinstance(rho, RadialComposite):
        if a.shape != (rho.dim,):
            raise DensityError("shift has wrong dimension")
        return RadialComposite(rho.dim, tuple(Piece(tuple(np.asarray(p.center) - a), p.r_inner,
                                                    p.r_outer, p.height) for p in rho.pieces),
                               rho.signed)
    if a.shape != (rho.dim,):
        raise DensityError("shift has wrong dimension")
    h = rho.spacing
    k = a / h
    kr = np.round(k)
    if np.all(np.abs(k - kr) <= 1e-9 * np.maximum(1.0, np.abs(k))):
        return type(rho)(rho.dim, h, tuple(np.asarray(rho.origin) - kr * h), rho.values)
    return shift_rebinned(rho, a)


def shift_rebinned(rho, a):
    """Fractional shift by exact cell averaging on the original lattice.

    New cell ``j`` takes ``(1 - f) old[j + b] + f old[j + b + 1]`` per axis,
    where ``a / h = b + f`` with integer ``b`` and ``0 <= f < 1``.
    """
    h = rho.spacing
    k = np.asarray(a, float) / h
    base = np.floor(k)
    frac = k - base
    vals = np.asarray(rho.values)
    origin = np.asarray(rho.origin) - base * h
    for axis in range(rho.dim):
        f = frac[axis]
        if f <= 1e-15:
            continue
        z = np.zeros_like(np.take(vals, [0], axis=axis))
        old_lo = np.concatenate([z, vals], axis=axis)   # old[j]   for new index j (shifted by one)
        old_hi = np.concatenate([vals, z], axis=axis)   # old[j+1]
        vals = (1 - f) * old_lo + f * old_hi
        origin[axis] -= h
    cls = type(rho)
    out = cls(rho.dim, h, tuple(origin), np.maximum(vals, 0) if not rho.signed else vals)
    object.__setattr__(out, "approximate", True)
    return out


def congruent(g1: GridLike, g2: GridLike, tol: float = 1e-9) -> bool:
    if g1.dim != g2.dim or abs(g1.spacing - g2.spacing) > tol * g1.spacing:
        return False
    d = g1.lattice_offset() - g2.lattice_offset()
    return bool(np.all(np.abs(d - np.round(d)) <= tol * np.maximum(1, np.abs(d))))


def same_geometry(g1: GridLike, g2: GridLike, tol: float = 1e-9) -> bool:
    return (congruent(g1, g2, tol) and g1.extents == g2.extents
            and np.allclose(g1.origin, g2.origin, rtol=0, atol=tol * g1.spacing))


def align(*grids: GridLike):
    """Embed grids on congruent lattices into one common bounding box.

    Returns value arrays (same order) and the common ``(origin, extents)``.
    """
    g0 = grids[0]
    for g in grids[1:]:
        if not congruent(g0, g):
            raise DensityError("grids are not on congruent lattices")
    h = g0.spacing
    starts = [np.round(np.asarray(g.origin) / h - g0.lattice_offset()).astype(int) for g in grids]
    lo = np.min(starts, axis=0)
    hi = np.max([s + np.asarray(g.extents) for s, g in zip(starts, grids)], axis=0)
    extents = tuple(int(e) for e in hi - lo)
    origin = tuple(np.asarray(g0.origin) + (lo - starts[0]) * h)
    out = []
    for s, g in zip(starts, grids):
        arr = np.zeros(extents)
        sl = tuple(slice(int(s[a] - lo[a]), int(s[a] - lo[a] + g.extents[a])) for a in range(g0.dim))
        arr[sl] = g.values
        out.append(arr)
    return out, origin, extents


def embed(g: GridLike, origin, extents) -> GridLike:
    """Place ``g`` on a larger congruent grid with the given origin and extents."""
    template = GridDensity(g.dim, g.spacing, origin, np.zeros(extents))
    (arr, _), _, e = align(g, template)
    if tuple(e) != tuple(extents):
        raise DensityError("target box does not contain the grid")
    return type(g)(g.dim, g.spacing, origin, arr)


def difference(g1: GridLike, g2: GridLike) -> SignedGridField:
    (a1, a2), origin, _ = align(g1, g2)
    return SignedGridField(g1.dim, g1.spacing, origin, a1 - a2)


def scale(g: GridLike, factor: float) -> GridLike:
    if factor < 0:
        return SignedGridField(g.dim, g.spacing, g.origin, g.values * factor)
    return g.with_values(g.values * factor)


# ---------------------------------------------------------------------------
# density spec files


def density_to_spec(rho, path, values_file=None) -> dict:
    """Write ``rho`` as a JSON spec; grids also write a raw little-endian float64 file."""
    path = Path(path)
    if isinstance(rho, RadialComposite):
        spec = {"kind": "composite", "dim": rho.dim, "signed": rho.signed,
                "pieces": [{"center": list(p.center), "r_inner": p.r_inner, "r_outer": p.r_outer,
                            "height": p.height} for p in rho.pieces]}
    else:
        vf = Path(values_file) if values_file else path.with_suffix(".f64")
        np.ascontiguousarray(rho.values, dtype="<f8").tofile(vf)
        spec = {"kind": "grid", "dim": rho.dim, "spacing": rho.spacing, "origin": list(rho.origin),
                "extents": list(rho.extents), "values_file": vf.name, "signed": bool(rho.signed)}
    path.write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n")
    return spec


def density_from_spec(spec, base_dir=None):
    """Load a density from a spec dict or a path to a JSON spec file."""
    if not isinstance(spec, dict):
        p = Path(spec)
        base_dir = p.parent if base_dir is None else base_dir
        spec = json.loads(p.read_text())
    kind = spec.get("kind")
    dim = int(spec.get("dim", 0))
    if kind == "composite":
        pieces = tuple(Piece(tuple(q["center"]), float(q.get("r_inner", 0.0)), float(q["r_outer"]),
                             float(q.get("height", 1.0))) for q in spec.get("pieces", []))
        if not pieces:
            raise DensityError("empty density")
        return RadialComposite(dim, pieces, bool(spec.get("signed", False)))
    if kind == "grid":
        extents = tuple(int(e) for e in spec["extents"])
        vf = Path(spec["values_file"])
        if base_dir is not None and not vf.is_absolute():
            vf = Path(base_dir) / vf
        vals = np.fromfile(vf, dtype="<f8")
        if vals.size != int(np.prod(extents)):
            raise DensityError(f"values file holds {vals.size} numbers, expected {int(np.prod(extents))}")
        cls = SignedGridField if spec.get("signed") else GridDensity
        return cls(dim, float(spec["spacing"]), tuple(spec["origin"]), vals.reshape(extents))
    raise DensityError(f"unknown density kind {kind!r}")
