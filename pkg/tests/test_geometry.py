"""Model spaces: grids, measures, curvature fields, comparison volumes."""
import math

import numpy as np
import pytest

from conftest import GAUSS_OFFSET, make_circle, make_gauss, make_sphere
from heatlab.geometry import (
    Warp,
    ball_inside,
    ball_volume,
    bishop_gromov_check,
    build_space,
    comparison_volume,
    constant_potential,
    cosine_potential,
    geodesic_distance,
    quadratic_potential,
    ric_l,
    ric_mn,
    sphere_area,
    tabulated_potential,
    volume_ratio_check,
)


# --- construction and validation -------------------------------------------

def test_rejects_unknown_kind():
    with pytest.raises(ValueError, match="kind"):
        build_space("torus", 64, 1.0)


def test_rejects_tiny_grid():
    with pytest.raises(ValueError, match="n_nodes"):
        build_space("circle", 4, 1.0)


def test_rejects_m_below_n():
    with pytest.raises(ValueError, match="m must be >= n"):
        build_space("line-truncated", 64, 8.0, m=0.5)


def test_m_equals_n_needs_constant_potential():
    with pytest.raises(ValueError, match="constant potential"):
        build_space("line-truncated", 64, 8.0,
                    phi=quadratic_potential(1.0), m=1.0, n=1)
    # constant potential is fine
    sp = build_space("line-truncated", 64, 8.0, phi=constant_potential(0.3),
                     m=1.0, n=1)
    assert sp.m == sp.n == 1


def test_warp_only_for_radial_reduction():
    with pytest.raises(ValueError, match="warp"):
        build_space("circle", 64, 1.0, warp="sine")
    with pytest.raises(ValueError, match="warp"):
        build_space("radial-reduction", 64, 1.0, start=0.1, n=2, m=2.0)


def test_radial_reduction_needs_explicit_start():
    with pytest.raises(ValueError, match="start"):
        build_space("radial-reduction", 64, 1.0, warp="sine", n=2, m=2.0)


def test_warp_must_stay_positive():
    # sin r crosses zero at pi, so a domain through pi is rejected
    with pytest.raises(ValueError, match="positive"):
        build_space("radial-reduction", 64, 4.0, warp="sine", start=0.1, n=3,
                    m=3.0)


# --- grids and measures ------------------------------------------------------

def test_circle_grid_has_no_seam_node(circle):
    assert circle.periodic
    assert circle.h == pytest.approx(2.0 * math.pi / 256)
    # nodes cover [0, L) with the wrap face closing the loop
    assert circle.nodes[0] == 0.0
    assert circle.nodes[-1] == pytest.approx(2.0 * math.pi - circle.h)
    assert np.all(circle.quad_weights == 1.0)


def test_interval_grid_halves_wall_weights(flat256):
    assert not flat256.periodic
    assert flat256.h == pytest.approx(16.0 / 255)
    assert flat256.nodes[0] == -8.0 and flat256.nodes[-1] == 8.0
    assert flat256.quad_weights[0] == 0.5 and flat256.quad_weights[-1] == 0.5
    assert np.all(flat256.quad_weights[1:-1] == 1.0)


def test_flat_total_measure_is_length(flat256):
    assert flat256.total_measure == pytest.approx(16.0, abs=1e-12)


def test_gauss_measure_is_normalized(gauss256):
    # standard normal truncated to +-6 sigma; tail mass ~ 2e-9
    assert gauss256.total_measure == pytest.approx(1.0, abs=1e-8)


def test_sphere_measure_matches_sin_squared_integral(sphere256):
    a, b = 0.05, math.pi - 0.05
    exact = 0.5 * (b - a) - 0.25 * (math.sin(2 * b) - math.sin(2 * a))
    assert sphere256.total_measure == pytest.approx(exact, rel=1e-4)


# --- curvature fields ---------------------------------------------------------

def test_weighted_circle_curvature_closed_form(wcircle):
    # phi = 0.1 cos(x) on the unit-frequency circle
    x = wcircle.nodes
    np.testing.assert_allclose(ric_l(wcircle), -0.1 * np.cos(x), atol=1e-12)
    expect = -0.1 * np.cos(x) - (0.1 * np.sin(x)) ** 2 / 2.0
    np.testing.assert_allclose(ric_mn(wcircle), expect, atol=1e-12)
    assert wcircle.ric_l_bound == pytest.approx(0.1, abs=1e-12)


def test_gauss_curvature_fields(gauss256):
    np.testing.assert_allclose(ric_l(gauss256), 1.0, atol=1e-12)
    assert gauss256.ric_l_bound == 0.0
    # ric_mn = 1 - x^2/(m-n) dips to 1 - 36/2 at the walls
    expect = 1.0 - gauss256.nodes ** 2 / 2.0
    np.testing.assert_allclose(ric_mn(gauss256), expect, atol=1e-12)
    assert gauss256.K == pytest.approx(17.0, abs=1e-6)


def test_sphere_has_constant_positive_curvature(sphere256):
    np.testing.assert_allclose(ric_l(sphere256), 2.0, atol=1e-12)
    assert sphere256.K == 0.0   # no negative part


def test_ric_mn_reduces_to_ric_l_at_infinite_m(gauss256):
    np.testing.assert_allclose(ric_mn(gauss256, m=math.inf),
                               ric_l(gauss256), atol=0.0)


def test_warp_profiles():
    x = np.array([0.3, 1.0, 2.0])
    np.testing.assert_allclose(Warp("sine").curvature(x), 1.0)
    np.testing.assert_allclose(Warp("sinh").curvature(x), -1.0)
    np.testing.assert_allclose(Warp("linear").curvature(x), 0.0)
    np.testing.assert_allclose(Warp("sine").logf_d1(x), 1.0 / np.tan(x))


# --- potentials -----------------------------------------------------------------

def test_quadratic_potential_derivatives():
    pot = quadratic_potential(2.0, GAUSS_OFFSET)
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(pot.value(x), x * x + GAUSS_OFFSET, atol=1e-14)
    np.testing.assert_allclose(pot.d1(x), 2.0 * x, atol=1e-14)
    np.testing.assert_allclose(pot.d2(x), 2.0, atol=1e-14)
    assert pot.analytic


def test_cosine_potential_derivatives():
    pot = cosine_potential(0.1, 2.0 * math.pi)
    x = np.linspace(0, 2 * math.pi, 9)
    np.testing.assert_allclose(pot.d2(x), -0.1 * np.cos(x), atol=1e-14)


def test_tabulated_potential_tracks_samples():
    xs = np.linspace(-2, 2, 201)
    pot = tabulated_potential(xs, 0.5 * xs * xs)
    grid = np.linspace(-1.5, 1.5, 11)
    np.testing.assert_allclose(pot.value(grid), 0.5 * grid * grid, atol=1e-8)
    np.testing.assert_allclose(pot.d2(grid), 1.0, atol=1e-4)
    assert not pot.analytic


# --- distances and balls ----------------------------------------------------------

def test_circle_distance_wraps(circle):
    L = circle.length
    assert geodesic_distance(circle, 0.1, L - 0.1) == pytest.approx(0.2)
    assert circle.distance(0.0, L / 2) == pytest.approx(L / 2)


def test_flat_ball_volume(flat256):
    assert ball_volume(flat256, 0.0, 1.0) == pytest.approx(2.0, abs=2 * flat256.h)
    assert ball_volume(flat256, 0.0, 100.0) == flat256.total_measure
    assert ball_inside(flat256, 0.0, 1.0)
    assert not ball_inside(flat256, 7.5, 1.0)


def test_comparison_volume_closed_forms():
    assert sphere_area(1.0) == pytest.approx(2.0)
    assert sphere_area(2.0) == pytest.approx(2.0 * math.pi)
    assert sphere_area(3.0) == pytest.approx(4.0 * math.pi)
    assert comparison_volume(1.0, 0.0, 0.7) == pytest.approx(1.4)
    assert comparison_volume(3.0, 0.0, 2.0) == pytest.approx(4.0 * math.pi * 8.0 / 3.0)
    # K > 0: independent quadrature of the model integrand
    a = math.sqrt(2.0 / 2.0)
    s = np.linspace(0.0, 1.0, 20001)
    integrand = (np.sinh(a * s) / a) ** 2
    expect = 4.0 * math.pi * np.trapezoid(integrand, s)
    assert comparison_volume(3.0, 2.0, 1.0) == pytest.approx(expect, rel=1e-8)


def test_comparison_volume_rejects_bad_args():
    with pytest.raises(ValueError):
        comparison_volume(0.5, 0.0, 1.0)
    with pytest.raises(ValueError):
        comparison_volume(2.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        comparison_volume(2.0, 0.0, -1.0)


# --- volume comparison checks ------------------------------------------------------

def test_bishop_gromov_flat(flat256):
    rep = bishop_gromov_check(flat256, t=0.25)
    assert rep.passed()
    # continuum ratio is sqrt(2); the half-weighted discrete cut shifts it a bit
    assert rep.details["ratio"] == pytest.approx(math.sqrt(2.0), abs=0.1)


def test_bishop_gromov_inconclusive_when_ball_leaves_domain(flat256):
    rep = bishop_gromov_check(flat256, t=0.25, center=7.9)
    assert rep.verdict == "inconclusive"


def test_bishop_gromov_sphere(sphere256):
    rep = bishop_gromov_check(sphere256, t=0.25)
    assert rep.passed()


def test_volume_ratio_flat_and_sphere(flat256, sphere256):
    for sp in (flat256, sphere256):
        rep = volume_ratio_check(sp)
        assert rep.passed(), rep.details
        assert rep.sample_size > 100


# --- misc space helpers --------------------------------------------------------------

def test_boundary_mass_fraction(circle, flat256):
    u = np.ones(circle.n_nodes)
    assert circle.boundary_mass_fraction(u) == 0.0
    v = np.zeros(flat256.n_nodes)
    v[:2] = 1.0
    assert flat256.boundary_mass_fraction(v) == pytest.approx(1.0)


def test_index_of_picks_nearest_node(flat256):
    i = flat256.index_of(0.0)
    assert abs(flat256.nodes[i]) <= 0.5 * flat256.h


def test_drift_is_minus_phi_prime(gauss256):
    x = np.array([-1.0, 0.5, 2.0])
    np.testing.assert_allclose(gauss256.drift(x), -x, atol=1e-14)
