"""Interaction energies on grids and semi-analytic energies for composites.

Grid energies use the exact cell-pair structure

    E_W[rho] = h^{2n} sum_{i,j} rho_i rho_j K(i - j) = h^{2n} sum_d K(d) A(d),

with ``A`` the lattice autocorrelation of the cell values and ``K`` the
cell-averaged kernel of :mod:`stabkit.kernels`.  ``A`` is accumulated over
fixed-size row blocks, and the blocks are combined in index order, so the
result does not depend on how many worker threads evaluated them.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ConfigError
from .density import (DensityError, GridDensity, Piece, RadialComposite, SignedGridField, align,
                      difference, unit_ball_volume)
from .kernels import kernel_table
from .potential import KernelError, Newtonian, Potential, PowerLaw
from .rearrange import rearrange_grid

BLOCK_ROWS = 256


def thread_count(threads=None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("STABKIT_THREADS", "").strip()
    if not env:
        return 1
    try:
        n = int(env)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigError(f"STABKIT_THREADS must be a positive integer, got {env!r}")
    return n


@dataclass(frozen=True)
class Autocorrelation:
    """``A(d) = sum_i f_i f_{i+d}`` on offsets ``|d_a| <= half[a]``."""

    values: np.ndarray
    half: tuple
    spacing: float
    dim: int


def autocorrelation(f, threads=None) -> Autocorrelation:
    vals = np.asarray(f.values)
    dims = vals.shape
    half = tuple(e - 1 for e in dims)
    flat = vals.ravel()
    support = np.flatnonzero(flat)
    coords = np.stack(np.unravel_index(support, dims), axis=1)
    w = flat[support]
    out_shape = tuple(2 * e + 1 for e in half)
    strides = np.cumprod((1,) + out_shape[::-1][:-1])[::-1]
    size = int(np.prod(out_shape))
    base = int(np.dot(np.asarray(half), strides))
    code = coords @ strides

    blocks = [(s, min(s + BLOCK_ROWS, support.size)) for s in range(0, support.size, BLOCK_ROWS)]

    def work(block):
        s, e = block
        off = (code[None, :] - code[s:e, None]) + base
        return np.bincount(off.ravel(), weights=(w[s:e, None] * w[None, :]).ravel(), minlength=size)

    nthreads = thread_count(threads)
    if nthreads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    acc = np.zeros(size)
    for p in parts:
        acc += p
    return Autocorrelation(acc.reshape(out_shape), half, f.spacing, f.dim)


def energy_from_autocorrelation(A: Autocorrelation, W: Potential, near_radius=None) -> float:
    kw = {} if near_radius is None else {"near_radius": near_radius}
    K = kernel_table(W, A.spacing, A.dim, **kw).offset_array(A.half)
    mask = A.values != 0
    return float(np.sum(K[mask] * A.values[mask])) * A.spacing ** (2 * A.dim)


def default_near_radius(dim: int) -> float:
    """Exact cell means out to this many cells; 1D tables are exact everywhere in practice."""
    return {1: 1.0e9, 2: 3.0, 3: 3.0}[dim]


def interaction_energy(rho, W: Potential, threads=None, near_radius=None) -> float:
    """``E_W[rho] = int int rho(x) rho(y) W(x - y) dx dy``.

    Grids go through the cell-averaged lattice sum; composites are routed to
    :func:`composite_energy` when a semi-analytic path exists.
    """
    if isinstance(rho, RadialComposite):
        return composite_energy(rho, W)
    W.check_dim(rho.dim)
    if near_radius is None:
        near_radius = _near_radius_for(rho)
    return energy_from_autocorrelation(autocorrelation(rho, threads), W, near_radius)


def _near_radius_for(rho) -> float:
    if rho.dim == 1:
        return float(2 * rho.extents[0] + 1)
    return default_near_radius(rho.dim)


def interaction_energies(rho, kernels, threads=None) -> list:
    """Energies of one grid for several kernels, sharing the autocorrelation."""
    A = autocorrelation(rho, threads)
    nr = _near_radius_for(rho)
    out = []
    for W in kernels:
        W.check_dim(rho.dim)
        out.append(energy_from_autocorrelation(A, W, nr))
    return out


def quadrature_tolerance(reference_energy: float, rel: float = 1e-6, absolute: float = 1e-12) -> float:
    return rel * abs(reference_energy) + absolute


@dataclass
class GapResult:
    gap: float
    energy: float
    energy_star: float
    tol_quad: float

    @property
    def passed(self) -> bool:
        return self.gap >= -self.tol_quad

    def to_dict(self):
        return {"gap": self.gap, "energy": self.energy, "energy_star": self.energy_star,
                "tol_quad": self.tol_quad, "pass": self.passed}


def riesz_gap(rho, W: Potential, threads=None, star=None) -> GapResult:
    """``E_W[rho*] - E_W[rho]`` with the grid (or exact composite) rearrangement."""
    if isinstance(rho, RadialComposite):
        from .rearrange import rearrange_composite
        star = star if star is not None else rearrange_composite(rho)
        e, es = composite_energy(rho, W), composite_energy(star, W)
    else:
        star = star if star is not None else rearrange_grid(rho)
        e = interaction_energy(rho, W, threads)
        es = interaction_energy(star, W, threads)
    return GapResult(es - e, e, es, quadrature_tolerance(es))


def hminus1_sq(f, n: int = 3, threads=None) -> float:
    """``E_N[f]``, the squared negative Sobolev norm of a (signed) field in 3D."""
    if f.dim != 3 or n != 3:
        raise KernelError("the Newtonian negative-norm path is 3D-only")
    if isinstance(f, RadialComposite):
        return newtonian_energy_composite(f)
    return interaction_energy(f, Newtonian(3), threads)


# ---------------------------------------------------------------------------
# 3D Newtonian: closed-form ball potentials
#
# phi_R(t): potential of the unit-density ball of radius R at distance t.
# G, G1, G2 are successive antiderivatives of t * phi_R(t), extended to
# negative t as even / odd / even functions.


def _G(R, t):
    t = np.abs(t)
    return np.where(t <= R, R * R * t ** 2 / 4 - t ** 4 / 24, R ** 3 * t / 3 - R ** 4 / 8)


def _G1(R, t):
    s = np.sign(t)
    t = np.abs(t)
    out = np.where(t <= R, R * R * t ** 3 / 12 - t ** 5 / 120,
                   3 * R ** 5 / 40 + R ** 3 * (t * t - R * R) / 6 - R ** 4 * (t - R) / 8)
    return s * out


def _G2(R, t):
    t = np.abs(t)
    inside = R * R * t ** 4 / 48 - t ** 6 / 720
    dt = t - R
    outside = (7 * R ** 6 / 360 + 3 * R ** 5 * dt / 40
               + R ** 3 * ((t ** 3 - R ** 3) / 3 - R * R * dt) / 6 - R ** 4 * dt * dt / 16)
    return np.where(t <= R, inside, outside)


def ball_potential(R, t):
    """``int_{B(0,R)} 1 / (4 pi |x - y|) dy`` at ``|x| = t``."""
    t = np.asarray(t, float)
    with np.errstate(divide="ignore"):
        return np.where(t <= R, (3 * R * R - t * t) / 6, R ** 3 / (3 * np.maximum(t, 1e-300)))


def _shell_funcs(piece: Piece):
    a, b, hgt = piece.r_inner, piece.r_outer, piece.height

    def G(t):
        out = _G(b, t)
        return hgt * (out - _G(a, t) if a > 0 else out)

    def G1(t):
        out = _G1(b, t)
        return hgt * (out - _G1(a, t) if a > 0 else out)

    def G2(t):
        out = _G2(b, t)
        return hgt * (out - _G2(a, t) if a > 0 else out)
    return G, G1, G2


CONCENTRIC_TOL = 1e-6


def newtonian_cross(A: Piece, B: Piece, d=None):
    """``int A(x) (N * B)(x) dx`` for uniform pieces at centre distance ``d``.

    ``d`` may be an array (vectorized over distances); by default it is the
    distance between the two piece centres.
    """
    if d is None:
        d = float(np.linalg.norm(np.subtract(A.center, B.center)))
    d = np.asarray(d, float)
    G, G1, G2 = _shell_funcs(B)
    a, b = A.r_inner, A.r_outer

    def I(s, dd):
        return s * G1(s + dd) - G2(s + dd) - s * G1(s - dd) + G2(s - dd)

    dd = np.maximum(d, CONCENTRIC_TOL)
    off = A.height * (2 * np.pi / dd) * (I(b, dd) - I(a, dd))
    conc = 4 * np.pi * A.height * (b * G(b) - G1(b) - (a * G(a) - G1(a)))
    out = np.where(d < CONCENTRIC_TOL, conc, off)
    return float(out) if out.ndim == 0 else out


def newtonian_energy_composite(c: RadialComposite, n: int = 3) -> float:
    """``E_N`` of a composite from closed-form piece-pair interactions (3D only)."""
    if c.dim != 3 or n != 3:
        raise KernelError("semi-analytic path is 3D-only")
    terms = [newtonian_cross(A, B) for A in c.pieces for B in c.pieces]
    return math.fsum(terms)


def newtonian_cross_composite(c1: RadialComposite, c2: RadialComposite) -> float:
    return math.fsum(newtonian_cross(A, B) for A in c1.pieces for B in c2.pieces)


def newtonian_shifted_difference(rho: RadialComposite, star: RadialComposite, shifts) -> np.ndarray:
    """``E_N[T_a rho - star]`` for each row ``a`` of ``shifts``, vectorized."""
    shifts = np.atleast_2d(np.asarray(shifts, float))
    e_rho = newtonian_energy_composite(rho)
    e_star = newtonian_energy_composite(star)
    cross = np.zeros(shifts.shape[0])
    for A in rho.pieces:
        centers = np.asarray(A.center)[None, :] - shifts
        for B in star.pieces:
            d = np.linalg.norm(centers - np.asarray(B.center)[None, :], axis=1)
            cross += newtonian_cross(A, B, d)
    return e_rho + e_star - 2 * cross


# ---------------------------------------------------------------------------
# 1D: exact interval-pair integrals for power laws


def _interval_list(c: RadialComposite):
    out = []
    for p in c.pieces:
        x = p.center[0]
        if p.r_inner > 0:
            out.append((x - p.r_outer, x - p.r_inner, p.height))
            out.append((x + p.r_inner, x + p.r_outer, p.height))
        else:
            out.append((x - p.r_outer, x + p.r_outer, p.height))
    return out


def _second_antiderivative(k: float, u):
    """Even ``F`` with ``F'' = w_k(|u|)`` and ``F(0) = F'(0) = 0``."""
    u = np.abs(np.asarray(u, float))
    with np.errstate(divide="ignore", invalid="ignore"):
        if k == 0:
            out = -(u * u / 2) * (np.log(u) - 1.5)
        else:
            out = -u ** (k + 2) / (k * (k + 1) * (k + 2))
    return np.where(u == 0, 0.0, out)


def interval_pair_energy(k: float, x1, x2, y1, y2) -> float:
    """``int_{x1}^{x2} int_{y1}^{y2} w_k(|x - y|) dy dx``."""
    F = lambda u: _second_antiderivative(k, u)
    return float(F(x2 - y1) - F(x1 - y1) - F(x2 - y2) + F(x1 - y2))


def powerlaw_energy_1d(c: RadialComposite, k: float) -> float:
    if c.dim != 1:
        raise DensityError("interval formula is 1D-only")
    if not k > -1:
        raise KernelError("W_k is not locally integrable in 1D for k <= -1")
    iv = _interval_list(c)
    return math.fsum(hi * hj * interval_pair_energy(k, a, b, cc, dd)
                     for (a, b, hi) in iv for (cc, dd, hj) in iv)


# ---------------------------------------------------------------------------
# 2D logarithmic kernel on concentric composites (circle means: -log max(r, s))


def _log_radial_pair(u, v, p, q) -> float:
    """``int_u^v int_p^q -log(max(r, s)) r s ds dr`` for elementary intervals.

    Either the intervals coincide or one lies entirely above the other.
    """
    def m1(a, b):        # int_a^b s ds
        return (b * b - a * a) / 2

    def mlog(a, b):      # int_a^b -r log r dr
        f = lambda r: -(r * r / 2 * math.log(r) - r * r / 4) if r > 0 else 0.0
        return f(b) - f(a)

    if u >= q:
        return mlog(u, v) * m1(p, q)
    if p >= v:
        return mlog(p, q) * m1(u, v)
    # identical intervals [u, v]: 2 int_u^v -r log r (r^2 - u^2)/2 dr
    def f3(r):           # int -r^3 log r dr
        return -(r ** 4 / 4 * math.log(r) - r ** 4 / 16) if r > 0 else 0.0
    return (f3(v) - f3(u)) - u * u * mlog(u, v)


def log_energy_2d_concentric(c: RadialComposite) -> float:
    if c.dim != 2:
        raise DensityError("2D formula")
    centers = {p.center for p in c.pieces}
    if len(centers) != 1:
        raise DensityError("pieces must be concentric")
    cuts = sorted({p.r_inner for p in c.pieces} | {p.r_outer for p in c.pieces})
    segs = list(zip(cuts[:-1], cuts[1:]))
    heights = [c.evaluate(np.array([[next(iter(centers))[0] + 0.5 * (a + b), next(iter(centers))[1]]]))[0]
               for a, b in segs]
    terms = []
    for (u, v), hu in zip(segs, heights):
        if hu == 0:
            continue
        for (p, q), hp in zip(segs, heights):
            if hp == 0:
                continue
            terms.append(hu * hp * 4 * math.pi ** 2 * _log_radial_pair(u, v, p, q))
    return math.fsum(terms)


def composite_energy(c: RadialComposite, W: Potential) -> float:
    """Semi-analytic energy where a closed form exists, else an explicit error."""
    if isinstance(W, Newtonian) and c.dim == 3:
        return newtonian_energy_composite(c)
    if isinstance(W, PowerLaw) and W.k == -1 and c.dim == 3:
        return 4 * math.pi * newtonian_energy_composite(c)
    if isinstance(W, PowerLaw) and c.dim == 1:
        return powerlaw_energy_1d(c, W.k)
    if isinstance(W, PowerLaw) and W.k == 0 and c.dim == 2:
        return log_energy_2d_concentric(c)
    raise KernelError(f"no semi-analytic path for {W!r} in dimension {c.dim}; rasterize first")
