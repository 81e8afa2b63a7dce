import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import assert_golden
from stabkit.density import (GridDensity, Piece, RadialComposite, SignedGridField, annulus, ball,
                             center_of_mass, difference, mass, rasterize, second_moment, translate)
from stabkit.energy import (composite_energy, hminus1_sq, interaction_energy, interval_pair_energy,
                            log_energy_2d_concentric, newtonian_cross, newtonian_energy_composite,
                            powerlaw_energy_1d, riesz_gap)
from stabkit.kernels import kernel_table, unit_powerlaw_mean
from stabkit.potential import KernelError, Newtonian, PowerLaw, quadratic_kernel
from stabkit.rearrange import rearrange_grid
from stabkit.stability import random_grid

O3 = (0.0, 0.0, 0.0)
UNIT = Piece(O3, 0.0, 1.0, 1.0)


# semi-analytic paths against the frozen Monte Carlo goldens

def test_ball_self_energy(goldens):
    e = newtonian_energy_composite(ball(O3, 1.0))
    assert e == pytest.approx(8 * math.pi / 15, rel=1e-13)
    assert_golden(e, "ball_self_newtonian")


def test_ball_cross_terms():
    e3 = newtonian_cross(UNIT, Piece((3.0, 0.0, 0.0), 0.0, 1.0, 1.0))
    assert e3 == pytest.approx((4 * math.pi / 3) ** 2 / (4 * math.pi * 3), rel=1e-13)
    assert_golden(e3, "ball_cross_d3_newtonian")
    assert_golden(newtonian_cross(UNIT, Piece((1.0, 0.0, 0.0), 0.0, 1.0, 1.0)), "ball_cross_d1_newtonian")


def test_annulus_terms():
    shell = Piece(O3, 0.4, 1.0, 1.0)
    assert_golden(newtonian_cross(shell, Piece((0.5, 0.0, 0.0), 0.0, 0.3, 1.0)),
                  "annulus_ball_offcentre_newtonian")
    assert_golden(newtonian_cross(shell, shell), "annulus_self_newtonian")
    assert_golden(log_energy_2d_concentric(annulus((0.0, 0.0), 0.5, 1.0)), "annulus_self_log_2d")


def test_interval_pair_and_cell_means():
    assert_golden(interval_pair_energy(0.5, -1, 1, 0.25, 0.75), "interval_pair_k05")
    assert_golden(unit_powerlaw_mean(0.0, (0, 0)), "cell_log_2d_m00")
    assert_golden(unit_powerlaw_mean(0.0, (0, 1)), "cell_log_2d_m10")
    T = kernel_table(Newtonian(3), 1.0, 3)
    assert_golden(T.value((0, 0, 0)), "cell_newton_3d_m000")
    assert_golden(T.value((1, 1, 0)), "cell_newton_3d_m110")
    assert unit_powerlaw_mean(1.0, (0,)) == pytest.approx(-1 / 3, rel=1e-13)


def test_cross_term_decays_monotonically():
    ds = np.linspace(2.0, 50.0, 40)
    vals = newtonian_cross(UNIT, UNIT, ds)
    assert np.all(np.diff(vals) < 0) and vals[-1] < 0.1 * vals[0]


def test_newtonian_semi_analytic_is_3d_only():
    with pytest.raises(KernelError, match="semi-analytic path is 3D-only"):
        newtonian_energy_composite(ball((0.0, 0.0), 1.0))


def test_dipole_hminus1():
    f = ball(O3, 1.0) - ball((3.0, 0.0, 0.0), 1.0)
    expected = 2 * 8 * math.pi / 15 - 2 * (4 * math.pi / 27)
    assert hminus1_sq(f) == pytest.approx(expected, rel=1e-12)
    assert hminus1_sq(f) > 0


def test_zero_field_hminus1():
    g = rasterize(ball(O3, 0.5), 1 / 8)
    assert hminus1_sq(difference(g, g)) == 0.0


def test_1d_powerlaw_against_grid():
    c = ball((0.0,), 1.0) + ball((0.6,), 0.2, 2.0)
    for k in (0.0, 0.5, 1.0, 2.0):
        exact = powerlaw_energy_1d(c, k)
        grid = interaction_energy(rasterize(c, 1 / 256), PowerLaw(k))
        assert grid == pytest.approx(exact, rel=1e-3, abs=1e-4)
    with pytest.raises(KernelError):
        composite_energy(c, PowerLaw(-1.0))


def test_log_2d_against_grid():
    c = annulus((0.0, 0.0), 0.3, 0.8) + ball((0.0, 0.0), 0.3, 2.0)
    exact = log_energy_2d_concentric(c)
    grid = interaction_energy(rasterize(c, 1 / 48), PowerLaw(0.0))
    assert grid == pytest.approx(exact, rel=2e-3)


# grid quadrature

def test_ball_energy_converges():
    exact = newtonian_energy_composite(ball(O3, 1.0))
    errs = [abs(interaction_energy(rasterize(ball(O3, 1.0), h), Newtonian(3)) - exact) / exact
            for h in (1 / 8, 1 / 16)]
    assert errs[1] <= 0.01 and errs[1] <= 0.5 * errs[0]


@pytest.mark.slow
def test_two_ball_cross_energy_on_grid():
    h = 1 / 16
    b1, b2 = ball(O3, 1.0), ball((3.0, 0.0, 0.0), 1.0)
    N = Newtonian(3)
    cross = (interaction_energy(rasterize(b1 + b2, h), N) - interaction_energy(rasterize(b1, h), N)
             - interaction_energy(rasterize(b2, h), N))
    assert cross == pytest.approx(8 * math.pi / 27, rel=0.01)


@given(st.integers(0, 10_000), st.sampled_from([1, 2, 3]))
@settings(max_examples=15, deadline=None)
def test_quadratic_identity(seed, n):
    g = random_grid(np.random.default_rng(seed), n, {1: 1 / 64, 2: 1 / 16, 3: 1 / 6}[n])
    e = interaction_energy(g, quadratic_kernel())
    ref = 2 * mass(g) * second_moment(g, about=center_of_mass(g))
    assert e == pytest.approx(ref, rel=1e-10)


def test_translation_and_reflection_invariance():
    g = random_grid(np.random.default_rng(5), 2, 1 / 16)
    W = PowerLaw(0.0)
    e = interaction_energy(g, W)
    moved = translate(g, (3 / 16, -5 / 16))
    assert interaction_energy(moved, W) == pytest.approx(e, rel=1e-12)
    flipped = GridDensity(2, g.spacing, g.origin, g.values[::-1, :].copy())
    assert interaction_energy(flipped, W) == pytest.approx(e, rel=1e-12)


def test_radial_gap_vanishes():
    star = rearrange_grid(random_grid(np.random.default_rng(9), 2, 1 / 16))
    for W in (PowerLaw(-1.0), PowerLaw(0.0), PowerLaw(1.0)):
        assert abs(riesz_gap(star, W, star=star).gap) <= 1e-10 * abs(interaction_energy(star, W)) + 1e-12


def test_signed_field_positive_definite():
    rng = np.random.default_rng(17)
    for _ in range(5):
        f = SignedGridField(3, 1 / 6, (0.0, 0.0, 0.0), rng.normal(size=(6, 6, 6)))
        e = interaction_energy(f, Newtonian(3))
        scale = float(np.sum(np.abs(f.values))) ** 2 * f.cell_volume ** 2
        assert e >= -1e-8 * scale


def test_inadmissible_kernel_rejected():
    g = random_grid(np.random.default_rng(1), 1, 1 / 32)
    with pytest.raises(KernelError):
        interaction_energy(g, PowerLaw(-1.0))


def test_thread_count_does_not_change_energy():
    g = random_grid(np.random.default_rng(3), 3, 1 / 8)
    a = interaction_energy(g, Newtonian(3), threads=1)
    b = interaction_energy(g, Newtonian(3), threads=4)
    assert a == b
