"""Radial interaction kernels, their assumption checks, and the constant c_{W,R}.

A kernel is ``W(x) = w(|x|)``.  Three variants are provided:

``PowerLaw(k)``
    ``w(r) = -r**k / k`` for ``k != 0`` and ``-log r`` for ``k == 0``.
``Newtonian(n)``
    the fundamental solution of ``-Laplace`` in dimension ``n >= 3``,
    ``w(r) = r**(2 - n) / (n (n - 2) omega_n)``; ``1 / (4 pi r)`` in 3D.
``Custom(w, dw, d2w=None)``
    arbitrary callables, or a tabulated ``(r, w, w')`` kernel through
    :meth:`Custom.from_table`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import minimize_scalar

from .density import unit_ball_volume


class KernelError(ValueError):
    pass


class Potential:
    """Base class; subclasses implement ``w``, ``dw`` and ``d2w`` on arrays of r > 0."""

    name = "potential"

    def w(self, r):
        raise NotImplementedError

    def dw(self, r):
        raise NotImplementedError

    def d2w(self, r):
        raise NotImplementedError

    @staticmethod
    def _check_r(r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise KernelError("kernel singularity: r must be > 0 (use cell-averaged kernels)")
        return r

    def eval_radial(self, r):
        r = self._check_r(r)
        out = self.w(r)
        return float(out) if np.ndim(out) == 0 else out

    def deriv_radial(self, r):
        r = self._check_r(r)
        out = self.dw(r)
        return float(out) if np.ndim(out) == 0 else out

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return self.eval_radial(np.linalg.norm(x, axis=-1))

    def laplacian_radial(self, r, n: int):
        """``w'' + (n - 1) w' / r``, the Laplacian of ``W`` in dimension ``n``."""
        r = np.asarray(r, dtype=float)
        return self.d2w(r) + (n - 1) * self.dw(r) / r

    def admissible(self, n: int) -> bool:
        """Whether the kernel is locally integrable in dimension ``n``."""
        return True

    def check_dim(self, n: int):
        if not self.admissible(n):
            raise KernelError(f"{self!r} is not locally integrable (or not defined) in dimension {n}")

    @property
    def key(self):
        return (self.name,)

    def to_spec(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerLaw(Potential):
    k: float
    name = "powerlaw"

    def __post_init__(self):
        if not math.isfinite(self.k):
            raise KernelError("k must be finite")

    def w(self, r):
        if self.k == 0:
            return -np.log(r)
        return -np.power(r, self.k) / self.k

    def dw(self, r):
        return -np.power(r, self.k - 1.0)

    def d2w(self, r):
        return -(self.k - 1.0) * np.power(r, self.k - 2.0)

    def admissible(self, n: int) -> bool:
        return self.k > -n

    @property
    def key(self):
        return ("powerlaw", float(self.k))

    def to_spec(self):
        return {"kind": "powerlaw", "k": self.k}

    def __repr__(self):
        return f"PowerLaw(k={self.k:g})"


@dataclass(frozen=True)
class Newtonian(Potential):
    n: int = 3
    name = "newtonian"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise KernelError("Newtonian kernel requires integer n >= 3")

    @property
    def coefficient(self) -> float:
        """``c_n`` with ``N = c_n W_{2-n}``; equals ``1 / (n omega_n)``."""
        return 1.0 / (self.n * unit_ball_volume(self.n))

    @property
    def power(self) -> PowerLaw:
        return PowerLaw(2.0 - self.n)

    def w(self, r):
        return self.coefficient * self.power.w(r)

    def dw(self, r):
        return self.coefficient * self.power.dw(r)

    def d2w(self, r):
        return self.coefficient * self.power.d2w(r)

    def admissible(self, n: int) -> bool:
        return n == self.n

    @property
    def key(self):
        return ("newtonian", int(self.n))

    def to_spec(self):
        return {"kind": "newtonian", "n": self.n}

    def __repr__(self):
        return f"Newtonian(n={self.n})"


@dataclass(frozen=True, eq=False)
class Custom(Potential):
    """User kernel from callables ``w(r)`` and ``dw(r)``.

    ``d2w`` is optional; when missing, central differences of ``dw`` are
    used wherever a second derivative is needed.
    """

    w_func: Callable
    dw_func: Callable
    d2w_func: Optional[Callable] = None
    label: str = "custom"
    table: Optional[dict] = field(default=None, repr=False)
    name = "custom"

    def w(self, r):
        return np.asarray(self.w_func(np.asarray(r, float)), dtype=float)

    def dw(self, r):
        return np.asarray(self.dw_func(np.asarray(r, float)), dtype=float)

    def d2w(self, r):
        if self.d2w_func is not None:
            return np.asarray(self.d2w_func(np.asarray(r, float)), dtype=float)
        r = np.asarray(r, float)
        step = 1e-4 * r
        return (self.dw(r + step) - self.dw(r - step)) / (2 * step)

    @property
    def key(self):
        return ("custom", self.label, id(self))

    def to_spec(self):
        if self.table is None:
            raise KernelError("only tabulated custom kernels can be serialized")
        return {"kind": "custom", "table": self.table}

    @classmethod
    def from_table(cls, r, w, dw, label="table"):
        """Cubic Hermite interpolant through tabulated values and slopes.

        Beyond the last node the kernel is continued linearly; below the
        first node it is continued with the first cubic piece.
        """
        r = np.asarray(r, float)
        w = np.asarray(w, float)
        dw = np.asarray(dw, float)
        if r.ndim != 1 or r.size < 2 or np.any(np.diff(r) <= 0) or r[0] <= 0:
            raise KernelError("table radii must be positive and strictly increasing")
        spline = CubicHermiteSpline(r, w, dw, extrapolate=True)
        d1 = spline.derivative()
        d2 = d1.derivative()
        r_end = r[-1]

        def wf(x):
            x = np.asarray(x, float)
            return np.where(x <= r_end, spline(np.minimum(x, r_end)), w[-1] + dw[-1] * (x - r_end))

        def dwf(x):
            x = np.asarray(x, float)
            return np.where(x <= r_end, d1(np.minimum(x, r_end)), dw[-1])

        def d2wf(x):
            x = np.asarray(x, float)
            return np.where(x <= r_end, d2(np.minimum(x, r_end)), 0.0)

        table = {"r": r.tolist(), "w": w.tolist(), "dw": dw.tolist()}
        return cls(wf, dwf, d2wf, label=label, table=table)


def quadratic_kernel() -> Custom:
    """``w(r) = r**2``; polynomial, so cell-averaged tables are exact for it."""
    return Custom(lambda r: r * r, lambda r: 2 * r, lambda r: 2.0 + 0 * r, label="r^2")


def potential_from_spec(spec: dict) -> Potential:
    kind = spec.get("kind")
    if kind == "powerlaw":
        return PowerLaw(float(spec["k"]))
    if kind == "newtonian":
        return Newtonian(int(spec.get("n", 3)))
    if kind == "custom":
        t = spec.get("table")
        if t is None:
            raise KernelError("custom potential specs must carry a table")
        return Custom.from_table(t["r"], t["w"], t["dw"])
    raise KernelError(f"unknown potential kind {kind!r}")


# ---------------------------------------------------------------------------
# c_{W,R} and assumption checks


def _neg_slope_ratio(W: Potential, r):
    r = np.asarray(r, float)
    return -W.dw(r) / r


def c_wr_sampled(W: Potential, R: float, samples: int = 4001, rel_cutoff: float = 1e-6) -> float:
    """``inf_{r in (0, 2R)} -w'(r)/r`` by log-spaced sampling plus bounded scalar refinement."""
    if not R > 0:
        raise KernelError("R must be positive")
    lo = rel_cutoff * R
    hi = 2.0 * R
    r = np.geomspace(lo, hi, samples)
    q = _neg_slope_ratio(W, r)
    j = int(np.argmin(q))
    best = float(q[j])
    if j == 0:
        # still falling at the cutoff: a positive power-law decay means the infimum is 0
        bottom = r <= 100 * lo
        slope = np.polyfit(np.log(r[bottom]), np.log(np.maximum(q[bottom], 1e-300)), 1)[0]
        if slope > 1e-2:
            return 0.0
    # refine in log r between the neighbouring samples
    a = math.log(r[max(j - 1, 0)])
    b = math.log(r[min(j + 1, samples - 1)])
    if b > a:
        res = minimize_scalar(lambda s: float(_neg_slope_ratio(W, math.exp(s))), bounds=(a, b),
                              method="bounded", options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    return best


def c_wr(W: Potential, R: float, method: str = "auto") -> float:
    """The constant in ``W = -(c/2)|x|^2 + W~`` with ``W~`` radially nonincreasing on (0, 2R).

    Power laws (and the Newtonian kernel, a multiple of one) use the closed
    form ``(2R)**(k-2)``; other kernels are sampled.
    """
    if not R > 0:
        raise KernelError("R must be positive")
    if method not in ("auto", "closed", "sample"):
        raise KernelError(f"unknown method {method!r}")
    closed = None
    if isinstance(W, PowerLaw) and W.k <= 2:
        closed = (2.0 * R) ** (W.k - 2.0)
    elif isinstance(W, Newtonian):
        closed = W.coefficient * (2.0 * R) ** (W.power.k - 2.0)
    if method == "closed":
        if closed is None:
            raise KernelError("no closed form for this kernel")
        return closed
    if method == "auto" and closed is not None:
        return closed
    value = c_wr_sampled(W, R)
    if not value > 0:
        raise KernelError("W violates (W2)/(W3) on (0,2R)")
    return value


def tilde_radial(W: Potential, R: float, r):
    """Radial profile of ``W~(x) = W(x) + c_{W,R} |x|^2 / 2``."""
    r = np.asarray(r, float)
    return W.w(r) + 0.5 * c_wr(W, R) * r * r


def tilde_is_monotone(W: Potential, R: float, samples: int = 2001, tol: float = 1e-9) -> bool:
    """Sampled check that ``W~`` is nonincreasing on (0, 2R)."""
    r = np.geomspace(1e-6 * R, 2 * R, samples)
    deriv = W.dw(r) + c_wr(W, R) * r
    return bool(np.all(deriv <= tol * np.maximum(1.0, np.abs(W.dw(r)))))


@dataclass
class AssumptionReport:
    w2_pass: bool
    w3_pass: bool
    w3_constant: float
    w3_small_r_slope: float
    integrability_note: str
    samples: int

    @property
    def passed(self) -> bool:
        return self.w2_pass and self.w3_pass

    def to_dict(self):
        return {"W2": self.w2_pass, "W3": self.w3_pass, "W3_constant": self.w3_constant,
                "W3_small_r_slope": self.w3_small_r_slope, "W1_note": self.integrability_note,
                "samples": self.samples, "pass": self.passed}


def validate_assumptions(W: Potential, R_check: float = 2.0, samples: int = 4001,
                         rel_cutoff: float = 1e-6, dim: Optional[int] = None) -> AssumptionReport:
    """Sampled checks of the decay (w' < 0) and non-flatness (w' <= -c r near 0) assumptions.

    Non-flatness is judged from ``q(r) = -w'(r)/r`` on (1e-6, 1): it fails
    when the sampled infimum is not positive, or when ``q`` still decays
    like a positive power of ``r`` over the bottom two decades (so the
    infimum is 0 in the limit even though every sample is positive).
    """
    r = np.geomspace(rel_cutoff * R_check, R_check, samples)
    with np.errstate(all="ignore"):
        dw = W.dw(r)
    w2 = bool(np.all(np.isfinite(dw)) and np.all(dw < 0))

    rs = np.geomspace(rel_cutoff, 1.0, samples)
    with np.errstate(all="ignore"):
        q = _neg_slope_ratio(W, rs)
    c = float(np.min(q)) if np.all(np.isfinite(q)) else float("nan")
    bottom = rs <= 100 * rel_cutoff
    with np.errstate(all="ignore"):
        lq = np.log(np.abs(q[bottom]) + 1e-300)
    slope = float(np.polyfit(np.log(rs[bottom]), lq, 1)[0]) if np.all(np.isfinite(lq)) else float("nan")
    w3 = bool(math.isfinite(c) and c > 0 and not slope > 1e-2)

    note = "not checked"
    if isinstance(W, (PowerLaw, Newtonian)):
        note = "closed form" if dim is None else ("locally integrable" if W.admissible(dim)
                                                 else "not locally integrable")
    elif isinstance(W, Custom):
        note = ("tabulated kernel: integrability near 0 checked for the interpolant only"
                if W.table is not None else "callable kernel: integrability near 0 not verifiable")
    return AssumptionReport(w2, w3, c, slope, note, samples)
