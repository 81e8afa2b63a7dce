import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import GOLDENS
from stabkit.density import (GridDensity, ball, center_of_mass, mass, rasterize, second_moment,
                             translate)
from stabkit.energy import newtonian_cross
from stabkit.density import Piece
from stabkit.rearrange import rearrange_grid
from stabkit.stability import random_grid, sweep
from stabkit.transport import (TransportError, layercake_plan, loeper_gap, w2_1d, w2_exact,
                               w2_points, w2_radial)


def _brute_force_w2(x, y):
    """Equal-weight clouds: the optimum is a permutation (Birkhoff)."""
    n = len(x)
    best = min(sum(np.sum((x[i] - y[p[i]]) ** 2) for i in range(n)) for p in itertools.permutations(range(n)))
    return math.sqrt(best / n)


@given(st.integers(0, 10_000), st.sampled_from([1, 2, 3]))
@settings(max_examples=30, deadline=None)
def test_points_against_permutation_oracle(seed, dim):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(6, dim)), rng.normal(size=(6, dim))
    w = np.full(6, 1 / 6)
    assert w2_points(x, w, y, w) == pytest.approx(_brute_force_w2(x, y), rel=1e-9)


def test_self_distance_zero():
    g = random_grid(np.random.default_rng(1), 2, 1 / 16)
    d, plan = w2_exact(g, g)
    assert d <= 1e-9
    moved = plan.mass[plan.src != plan.dst].sum()
    assert moved <= 1e-12 * mass(g)
    assert plan.marginal_error() <= 1e-12


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_grid_translation_distance(dim):
    h = {1: 1 / 64, 2: 1 / 16, 3: 1 / 6}[dim]
    g = random_grid(np.random.default_rng(dim), dim, h)
    g = GridDensity(dim, h, g.origin, g.values / mass(g))
    a = h * np.array([3, -2, 1][:dim], float)
    d, _ = w2_exact(g, translate(g, a))
    assert d == pytest.approx(np.linalg.norm(a), rel=1e-9)


def test_mass_mismatch_and_empty_side():
    g = random_grid(np.random.default_rng(2), 2, 1 / 16)
    with pytest.raises(TransportError, match="mass mismatch"):
        w2_exact(g, GridDensity(2, g.spacing, g.origin, 2 * g.values))
    with pytest.raises(TransportError, match="empty side"):
        w2_exact(g, GridDensity(2, g.spacing, g.origin, 0 * g.values))


def test_1d_matches_grid_and_known_value():
    a = ball((0.0,), 0.5)
    b = ball((0.3,), 0.5)
    assert w2_1d(a, b) == pytest.approx(0.3, rel=1e-13)
    c = ball((0.0,), 1.0) + ball((0.1,), 0.1)
    s = ball((0.0,), 1.0) + ball((0.0,), 0.1)
    h = 1 / 512
    gc, gs = rasterize(c, h, bounds=(-1, 1)), rasterize(s, h, bounds=(-1, 1))
    d, _ = w2_exact(gc, gs)
    assert d == pytest.approx(w2_1d(c, s), abs=2 * h)


def test_radial_composites():
    inner, outer = ball((0.0, 0.0), 1.0), ball((0.0, 0.0), 2.0, 0.25)
    # radial map r -> 2r: W2^2 = int |x|^2 over the unit disc = pi/2
    assert w2_radial(inner, outer) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-12)
    assert w2_radial(inner, inner) == 0.0


def test_moved_layer_bounds():
    s = sweep("rmk42", [0.02, 0.05, 0.1, 0.2])
    assert all(r["bounds_ok"] for r in s.rows)
    assert all(r["lhs"] >= r["rhs"] - 1e-12 for r in s.rows)


def test_layercake_radial_is_identity():
    star = rearrange_grid(random_grid(np.random.default_rng(3), 2, 1 / 16))
    plan, cost = layercake_plan(star, star)
    assert cost == 0.0
    assert plan.marginal_error() <= 1e-12


def test_layercake_single_layer_is_optimal():
    g = rasterize(ball((0.2, 0.1), 0.4), 1 / 16)
    g = GridDensity(2, g.spacing, g.origin, (g.values >= 0.5).astype(float))
    star = rearrange_grid(g)
    _, cost = layercake_plan(g, star)
    d, _ = w2_exact(star, g)
    assert cost == pytest.approx(d * d, rel=1e-9, abs=1e-12)


def test_layercake_two_level_chain():
    g = rasterize(ball((0.3, 0.0), 0.5) + ball((-0.1, 0.2), 0.2, 2.0), 1 / 16)
    g = GridDensity(2, g.spacing, g.origin, np.round(g.values))
    star = rearrange_grid(g)
    plan, cost = layercake_plan(g, star)
    d, _ = w2_exact(star, g)
    assert plan.marginal_error() <= 1e-12
    assert cost >= d * d - 1e-9


@pytest.mark.xfail(strict=True, reason="lattice effect: this layer set is a near-translate of the "
                   "grid ball, where the second-moment link breaks by rounding")
def test_layercake_second_moment_link_lattice_case():
    g = rasterize(ball((0.3, 0.0), 0.5) + ball((-0.1, 0.2), 0.2, 2.0), 1 / 16)
    g = GridDensity(2, g.spacing, g.origin, np.round(g.values))
    star = rearrange_grid(g)
    _, cost = layercake_plan(g, star)
    assert cost <= second_moment(g) - second_moment(star) + 1e-8 * second_moment(g)


def test_loeper_identical_pair():
    g = rasterize(ball((0.0, 0.0, 0.0), 0.5), 1 / 8)
    rep = loeper_gap(g, g)
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.passed


def test_loeper_unit_dipole():
    h = 1 / 8
    b1 = rasterize(ball((0.0, 0.0, 0.0), 1.0), h, bounds=(-1.5, 2.5))
    b2 = translate(b1, (-1.0, 0.0, 0.0))
    rep = loeper_gap(b1, b2)
    m = 4 * math.pi / 3
    # golden: normalised dipole energy from the Monte Carlo self and cross terms
    lhs_sq = 2 * (GOLDENS["ball_self_newtonian"]["value"] - GOLDENS["ball_cross_d1_newtonian"]["value"]) / m ** 2
    assert rep.lhs == pytest.approx(math.sqrt(lhs_sq), rel=0.03)
    assert rep.w2 == pytest.approx(1.0, rel=1e-9)
    assert rep.rhs == pytest.approx(math.sqrt(rep.sup), rel=1e-9)
    assert rep.lhs <= 1.0 and rep.passed
    exact = 2 * (8 * math.pi / 15 - newtonian_cross(Piece((0, 0, 0), 0, 1, 1), Piece((1, 0, 0), 0, 1, 1)))
    sigma = 2 * math.hypot(GOLDENS["ball_self_newtonian"]["stderr"], GOLDENS["ball_cross_d1_newtonian"]["stderr"])
    assert abs(exact / m ** 2 - lhs_sq) <= 4 * sigma / m ** 2
