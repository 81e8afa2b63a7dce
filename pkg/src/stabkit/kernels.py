"""Cell-averaged kernel tables for lattice quadrature of interaction energies.

For piecewise-constant densities on a grid of spacing ``h``, the exact
contribution of a cell pair at integer offset ``m`` is ``h^{2n} K(m)`` with

    K(m) = E[ W(h (m + Z)) ],

where ``Z`` has the tent-product density ``prod_a (1 - |z_a|)`` on
``[-1, 1]^n`` (the difference of two independent uniform points in a unit
cell).  Near the diagonal the table is computed by quadrature that treats
the kernel singularity exactly; farther out the second-order moment
expansion ``W(h m) + (h^2 / 12) Laplace W(h m)`` is used.  The expansion is
exact for quadratic kernels, so quadratic energies carry no quadrature error.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .potential import Custom, Newtonian, Potential, PowerLaw


NEAR_RADIUS = 3.0
_GL_REGULAR = 16
_GL_ANGULAR = 20
_GL_RADIAL = 40


@lru_cache(maxsize=None)
def _gauss01(npts: int):
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def _tensor_nodes(dim: int, npts: int):
    x, w = _gauss01(npts)
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wts = np.meshgrid(*([w] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wts], axis=1), axis=1)
    return nodes, weights


def _orthant_boxes(m):
    """Yield ``(signs, singular)`` for the ``2^n`` orthant boxes of the tent support.

    In box ``signs`` the offset point is ``y = m + signs * v`` with
    ``v in [0,1]^n`` and tent weight ``prod(1 - v)``.  The box is singular
    when the origin is one of its vertices.
    """
    n = len(m)
    for signs in itertools.product((-1, 1), repeat=n):
        singular = all(ma == 0 or ma == -s for ma, s in zip(m, signs))
        yield np.asarray(signs, float), singular


def _singular_poly_factors(m):
    """Per-axis linear weight in the vertex-centred variable ``u = |y|``.

    Returns a list of (c0, c1) meaning ``c0 + c1 * u_a``.
    """
    return [(1.0, -1.0) if ma == 0 else (0.0, 1.0) for ma in m]


def _duffy_coefficients(factors, shat):
    """Coefficients (in powers of t) of ``prod_a (c0 + c1 t shat_a)`` for each angular node.

    ``shat`` has shape (N, n).  Returns array of shape (N, n + 1).
    """
    N, n = shat.shape
    coeffs = np.zeros((N, n + 1))
    coeffs[:, 0] = 1.0
    for a, (c0, c1) in enumerate(factors):
        new = np.zeros_like(coeffs)
        new[:, :] += c0 * coeffs
        new[:, 1:] += (c1 * shat[:, a])[:, None] * coeffs[:, :-1]
        coeffs = new
    return coeffs


def _pyramid_angular_nodes(n: int, j: int):
    """Angular nodes ``shat`` for the pyramid where coordinate ``j`` is the maximum."""
    s, w = _tensor_nodes(n - 1, _GL_ANGULAR)
    shat = np.ones((s.shape[0], n))
    others = [a for a in range(n) if a != j]
    if others:
        shat[:, others] = s
    return shat, w


def _singular_box_powerlaw(m, k: float) -> float:
    """``int_{[0,1]^n} w_k(|u|) prod_a p_a(u_a) du`` with exact radial integration."""
    n = len(m)
    factors = _singular_poly_factors(m)
    total = 0.0
    for j in range(n):
        shat, w = _pyramid_angular_nodes(n, j)
        coeffs = _duffy_coefficients(factors, shat)
        rho = np.linalg.norm(shat, axis=1)
        q = n - 1 + np.arange(n + 1)           # power of t from the Jacobian and polynomial
        if k == 0:
            radial = 1.0 / (q + 1.0) ** 2 - np.log(rho)[:, None] / (q + 1.0)
        else:
            radial = -(rho ** k)[:, None] / k / (q + 1.0 + k)
        total += float(np.sum(w * np.sum(coeffs * radial, axis=1)))
    return total


def _singular_box_generic(m, wfun) -> float:
    """Same integral for a generic radial profile, with ``t = y^2`` to soften the singularity."""
    n = len(m)
    factors = _singular_poly_factors(m)
    y, wy = _gauss01(_GL_RADIAL)
    t = y * y
    total = 0.0
    for j in range(n):
        shat, w = _pyramid_angular_nodes(n, j)
        coeffs = _duffy_coefficients(factors, shat)
        rho = np.linalg.norm(shat, axis=1)
        powers = t[None, :] ** (n - 1 + np.arange(n + 1))[:, None]       # (n+1, Ny)
        poly = coeffs @ powers                                            # (N, Ny)
        vals = wfun(rho[:, None] * t[None, :])
        total += float(np.sum(w[:, None] * poly * vals * (2 * y * wy)[None, :]))
    return total


def _regular_box(m, signs, wfun) -> float:
    n = len(m)
    v, w = _tensor_nodes(n, _GL_REGULAR)
    y = np.asarray(m, float)[None, :] + signs[None, :] * v
    r = np.linalg.norm(y, axis=1)
    weight = np.prod(1.0 - v, axis=1)
    return float(np.sum(w * weight * wfun(r)))


def _cell_mean(m, wfun, singular_fn):
    total = 0.0
    for signs, singular in _orthant_boxes(m):
        total += singular_fn(m) if singular else _regular_box(m, signs, wfun)
    return total


@lru_cache(maxsize=None)
def unit_powerlaw_mean(k: float, m: tuple) -> float:
    """Tent-weighted mean of ``W_k(m + Z)`` on the unit lattice (``m`` sorted by |.|)."""
    pw = PowerLaw(k)
    return _cell_mean(m, pw.w, lambda mm: _singular_box_powerlaw(mm, k))


def symmetry_key(m) -> tuple:
    return tuple(sorted(abs(int(x)) for x in m))


@dataclass
class CellKernelTable:
    """Near-field cell-pair means of a kernel for one (spacing, dim).

    ``entries`` maps symmetry keys (sorted absolute offsets) to ``K(m)``.
    Entries are symmetric under negation and permutation of the offset.
    """

    kernel: Potential
    spacing: float
    dim: int
    near_radius: float = NEAR_RADIUS
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kernel.check_dim(self.dim)
        R = int(np.floor(self.near_radius))
        for m in itertools.product(range(R + 1), repeat=self.dim):
            if list(m) != sorted(m) or np.linalg.norm(m) > self.near_radius + 1e-12:
                continue
            self.entries[tuple(m)] = self._exact_mean(tuple(m))

    # power-law structure: W_k(h x) = h^k W_k(x)  (k != 0),  W_0(h x) = W_0(x) - log h
    def _powerlaw_parts(self):
        W = self.kernel
        if isinstance(W, PowerLaw):
            return 1.0, W.k
        if isinstance(W, Newtonian):
            return W.coefficient, W.power.k
        return None

    def _exact_mean(self, m: tuple) -> float:
        h = self.spacing
        parts = self._powerlaw_parts()
        if parts is not None:
            coeff, k = parts
            unit = unit_powerlaw_mean(float(k), m)
            if k == 0:
                return coeff * (unit - np.log(h))
            return coeff * h ** k * unit
        W = self.kernel

        def wfun(r):
            return W.w(h * np.asarray(r))
        return _cell_mean(m, wfun, lambda mm: _singular_box_generic(mm, wfun))

    def far_value(self, r_cells):
        """Moment-corrected point value at distance ``r_cells * h``."""
        h = self.spacing
        r = np.asarray(r_cells, float) * h
        W = self.kernel
        return W.w(r) + (h * h / 12.0) * W.laplacian_radial(r, self.dim)

    def value(self, m) -> float:
        key = symmetry_key(m)
        if key in self.entries:
            return self.entries[key]
        return float(self.far_value(np.linalg.norm(key)))

    def offset_array(self, half_extents) -> np.ndarray:
        """``K`` on all offsets ``m`` with ``|m_a| <= half_extents[a]``, axis order preserved.

        Index ``j`` along axis ``a`` corresponds to offset ``j - half_extents[a]``.
        """
        half = [int(e) for e in half_extents]
        axes = [np.arange(-e, e + 1) for e in half]
        grids = np.meshgrid(*axes, indexing="ij")
        r2 = sum(g.astype(float) ** 2 for g in grids)
        out = np.empty(r2.shape)
        far = r2 > self.near_radius ** 2 + 1e-9
        out[far] = self.far_value(np.sqrt(r2[far]))
        near_idx = np.argwhere(~far)
        for idx in near_idx:
            m = [int(idx[a]) - half[a] for a in range(self.dim)]
            out[tuple(idx)] = self.entries[symmetry_key(m)]
        return out


_TABLE_CACHE: dict = {}


def kernel_table(W: Potential, spacing: float, dim: int, near_radius: float = NEAR_RADIUS) -> CellKernelTable:
    key = (W.key, float(spacing), int(dim), float(near_radius))
    tab = _TABLE_CACHE.get(key)
    if tab is None:
        tab = CellKernelTable(W, spacing, dim, near_radius)
        if not isinstance(W, Custom):
            _TABLE_CACHE[key] = tab
    return tab
