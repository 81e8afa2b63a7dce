import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stabkit.density import (GridDensity, annulus, ball, lp_norm, mass, rasterize, second_moment,
                             sup_norm, unit_ball_volume)
from stabkit.rearrange import (FallbackNotice, UnsupportedOverlap, composite_levels, layer_decomposition,
                               rearrange_composite, rearrange_grid)
from stabkit.stability import random_grid, spike_density, spike_rearrangement


def _grid(seed, n=2, h=1 / 16):
    return random_grid(np.random.default_rng(seed), n, h)


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_grid_rearrangement_is_equimeasurable_and_idempotent(seed):
    g = _grid(seed)
    s = rearrange_grid(g)
    assert np.array_equal(np.sort(s.values[s.values > 0]), np.sort(g.values[g.values > 0]))
    assert mass(s) == pytest.approx(mass(g), rel=1e-12)
    assert sup_norm(s) == sup_norm(g)
    assert lp_norm(s, 2) == pytest.approx(lp_norm(g, 2), rel=1e-12)
    assert second_moment(s) <= second_moment(g) + 1e-12
    assert np.array_equal(rearrange_grid(s).values, s.values)


def test_radial_grid_is_fixed_point():
    s = rearrange_grid(_grid(3))
    again = rearrange_grid(s)
    assert np.array_equal(again.values, s.values) and again.origin == s.origin


def test_interval_pair_rearranges_to_centred_bump():
    eps, h = 0.1, 1 / 200
    g = rasterize(ball((0.0,), 1.0) + ball((eps,), eps), h, padding=0.1, symmetric=True)
    s = rearrange_grid(g)
    ref = rasterize(ball((0.0,), 1.0) + ball((0.0,), eps), h, bounds=(s.origin[0] - h / 2,
                                                                      s.origin[0] + h * (s.extents[0] - 0.5)))
    assert ref.extents == s.extents
    assert int(np.sum(s.values != ref.values)) <= 4


def test_composite_rearrangement_1d_exact():
    c = ball((0.0,), 1.0) + ball((0.1,), 0.1)
    s = rearrange_composite(c)
    assert [(p.r_inner, p.r_outer, p.height) for p in s.pieces] == \
        [pytest.approx((0.0, 0.1, 2.0)), pytest.approx((0.1, 1.0, 1.0))]


def test_spike_rearrangement_matches_closed_form():
    eps = 0.1
    s = rearrange_composite(spike_density(eps))
    ref = spike_rearrangement(eps)
    assert len(s.pieces) == 2
    for p, q in zip(s.pieces, ref.pieces):
        assert p.height == pytest.approx(q.height) and p.r_outer == pytest.approx(q.r_outer, rel=1e-14)
    assert s.pieces[1].r_outer == pytest.approx((1 + eps ** 3) ** (1 / 3), rel=1e-14)
    # rho* = rho_2 + rho_1 + g: the remainder has L1 norm 2 w_3 eps^3
    g_l1 = 2 * unit_ball_volume(3) * (s.pieces[1].r_outer ** 3 - 1.0)
    assert g_l1 == pytest.approx(2 * unit_ball_volume(3) * eps ** 3, rel=1e-10)


def test_single_ball_recentred():
    s = rearrange_composite(ball((3.0, -1.0, 2.0), 0.7, 2.5))
    (p,) = s.pieces
    assert p.center == (0.0, 0.0, 0.0) and p.r_outer == pytest.approx(0.7) and p.height == 2.5


def test_annulus_family_against_grid():
    c = (ball((0.0, 0.0), 1.0) + annulus((0.0, 0.0), 2.0, 2.1)).scaled(0.5)
    s = rearrange_composite(c)
    assert len(s.pieces) == 1
    assert s.pieces[0].height == 0.5
    assert mass(s) == pytest.approx(mass(c), rel=1e-14)
    g = rearrange_grid(rasterize(c, 1 / 32, symmetric=True))
    assert mass(g) == pytest.approx(mass(s), rel=1e-3)


def test_overlap_requires_fallback():
    c = ball((0.0, 0.0), 1.0) + ball((0.5, 0.0), 1.0)
    with pytest.raises(UnsupportedOverlap):
        composite_levels(c)
    with pytest.warns(FallbackNotice):
        g = rearrange_composite(c, fallback_spacing=1 / 16)
    assert isinstance(g, GridDensity)


def test_layer_decomposition_single_level():
    g = GridDensity(2, 0.5, (0.25, 0.25), np.array([[0, 3.0], [3.0, 3.0]]))
    L = layer_decomposition(g)
    assert len(L) == 1 and L.levels[0] == 0
    assert L.volumes[0] == pytest.approx(mass(g) / 3.0)


def test_layer_decomposition_two_levels_nested():
    g = GridDensity(1, 1.0, (0.5,), np.array([0, 1.0, 2.0, 2.0, 1.0]))
    L = layer_decomposition(g)
    assert len(L) == 2
    assert set(L.cells[1]) <= set(L.cells[0])
    assert L.volumes[0] > L.volumes[1]


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_layer_reconstruction_is_exact(seed):
    g = _grid(seed)
    L = layer_decomposition(g)
    assert np.array_equal(L.reconstruct(g.extents), g.values)
