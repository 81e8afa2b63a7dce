import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stabkit.asymmetry import l1_asymmetry, l1_distance, l1_distance_aligned
from stabkit.density import DensityError, GridDensity, ball, mass, rasterize, translate
from stabkit.rearrange import rearrange_grid
from stabkit.stability import fit_slope, random_grid


def test_radial_density_has_zero_asymmetry():
    star = rearrange_grid(random_grid(np.random.default_rng(2), 2, 1 / 16))
    res = l1_asymmetry(star)
    assert res.delta <= 1e-14
    assert np.allclose(res.shift, 0.0)


@given(st.integers(-6, 6), st.integers(-6, 6))
@settings(max_examples=20, deadline=None)
def test_translated_radial_density_recovers_shift(i, j):
    h = 1 / 16
    star = rearrange_grid(random_grid(np.random.default_rng(4), 2, h))
    moved = translate(star, (i * h, j * h))
    res = l1_asymmetry(moved, star=star)
    assert res.delta <= 1e-14
    # T_a (T_b star) = star for a = -b
    assert np.allclose(res.shift, (-i * h, -j * h))


def test_interval_pair_delta_scales_linearly():
    eps = [0.02, 0.035, 0.06, 0.1, 0.2]
    deltas = [l1_asymmetry(rasterize(ball((0.0,), 1.0) + ball((e,), e), 1e-3, symmetric=True)).delta
              for e in eps]
    slope, _ = fit_slope(eps, deltas)
    assert abs(slope - 1.0) <= 0.1


def test_refinement_never_worse_than_coarse():
    g = rasterize(ball((0.03, 0.01), 0.5) + ball((0.4, 0.0), 0.2, 2.0), 1 / 16)
    res = l1_asymmetry(g)
    assert res.delta <= res.diagnostics["coarse_delta"]
    assert 0 <= res.delta < 1
    assert "upper bound" in res.diagnostics["error_note"]


def test_zero_mass_rejected():
    with pytest.raises(DensityError):
        l1_asymmetry(GridDensity(1, 0.5, (0.25,), np.zeros(3)))


def test_l1_distance_basics():
    g = random_grid(np.random.default_rng(8), 2, 1 / 16)
    assert l1_distance(g, g) == 0.0
    a = rasterize(ball((0.0, 0.0), 0.3), 1 / 16, bounds=(-2, 2))
    b = rasterize(ball((1.0, 1.0), 0.3), 1 / 16, bounds=(-2, 2))
    assert l1_distance(a, b) == pytest.approx(mass(a) + mass(b), rel=1e-14)
    with pytest.raises(DensityError, match="geometry mismatch"):
        l1_distance(a, rasterize(ball((0.0, 0.0), 0.3), 1 / 16))


def test_l1_distance_bounds_asymmetry():
    g = random_grid(np.random.default_rng(11), 2, 1 / 16)
    star = rearrange_grid(g)
    res = l1_asymmetry(g, star=star)
    assert l1_distance_aligned(g, star) >= 2 * mass(g) * res.delta - 1e-12
