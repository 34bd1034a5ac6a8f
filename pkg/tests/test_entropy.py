"""Entropy functionals along the heat flow: identities, decay, rigidity."""
import math

import numpy as np
import pytest

from conftest import make_circle, make_gauss
from heatlab.entropy import (
    boltzmann_entropy,
    dissipation_identity,
    entropy_derivatives,
    fisher_information,
    geometric_times,
    h_m_trace,
    nonuniform_derivative,
    w_dissipation,
    w_entropy,
    w_entropy_via_rate,
    w_monotonicity,
    w_rigidity,
)
from heatlab.heatflow import bump_density, kernel, solve
from heatlab.operators import assemble

MONO_TIMES = geometric_times(0.1, 1.3, 9)


# --- closed-form oracles ------------------------------------------------------

def test_entropy_of_uniform_circle(circle):
    u = np.full(circle.n_nodes, 1.0 / (2.0 * math.pi))
    assert boltzmann_entropy(circle, u) == pytest.approx(math.log(2.0 * math.pi),
                                                         abs=1e-12)


def test_entropy_of_gaussian_profile(flat512):
    t0 = 0.25
    u = np.exp(-flat512.nodes ** 2 / (4.0 * t0)) / math.sqrt(4.0 * math.pi * t0)
    # differential entropy of a centered normal with variance 2 t0
    assert boltzmann_entropy(flat512, u) == pytest.approx(
        0.5 * math.log(math.pi) + 0.5, abs=1e-8)


def test_w_entropy_of_uniform_circle(circle):
    u = np.full(circle.n_nodes, 1.0 / (2.0 * math.pi))
    expect = math.log(2.0 * math.pi) - 1.0 - 0.5 * math.log(4.0 * math.pi)
    assert w_entropy(circle, u, 1.0, 1.0) == pytest.approx(expect, abs=1e-12)


def test_fisher_information_of_gaussian(flat512):
    t0 = 0.25
    u = np.exp(-flat512.nodes ** 2 / (4.0 * t0)) / math.sqrt(4.0 * math.pi * t0)
    # I = 1/(2 t0) for variance 2 t0
    assert fisher_information(flat512, u) == pytest.approx(2.0, rel=1e-4)


# --- derivative identities -------------------------------------------------------

def test_entropy_rate_equals_fisher_information(wcircle, wcircle_op):
    sol = solve(wcircle_op, bump_density(wcircle), 0.5)
    u = sol.at(0.25)
    dhdt, _, _ = entropy_derivatives(wcircle, wcircle_op, u)
    assert dhdt == pytest.approx(fisher_information(wcircle, u),
                                 rel=1e-3)


def test_second_derivative_forms_converge():
    # flux form -d/dt I vs geometric form (hessian + curvature), same slice
    gaps = []
    for n_nodes in (128, 256, 512):
        space = make_circle(n_nodes)
        op = assemble(space)
        kern = kernel(op)
        u = kern.column(0.5, space.n_nodes // 2)
        _, flux, geom = entropy_derivatives(space, op, u)
        gaps.append(abs(flux - geom))
    orders = [math.log2(gaps[i] / gaps[i + 1]) for i in range(2)]
    assert min(orders) >= 1.7, (gaps, orders)
    assert gaps[-1] <= 1e-3


def test_nonuniform_derivative_exact_on_quadratics():
    ts = geometric_times(0.1, 1.4, 7)
    vals = 3.0 * ts * ts - 2.0 * ts + 0.7
    np.testing.assert_allclose(nonuniform_derivative(ts, vals), 6.0 * ts - 2.0,
                               atol=1e-11)


def test_geometric_times_validation():
    with pytest.raises(ValueError):
        geometric_times(0.0, 1.4, 5)
    with pytest.raises(ValueError):
        geometric_times(0.1, 1.4, 2)


# --- trace identities ---------------------------------------------------------------

def test_trace_shift_identity_is_algebraic(circle, circle_kernel, circle_op):
    tr = h_m_trace(circle, circle_kernel, 1.0, geometric_times(0.2, 1.3, 8),
                   op=circle_op)
    # the m-shifted second derivative differs from the flux form by m/2t^2
    # exactly as floats, no quadrature involved
    assert float(np.max(np.abs(tr["resid_second_derivs"]))) <= 1e-12


def test_trace_w_forms_agree(circle, circle_kernel, circle_op):
    tr = h_m_trace(circle, circle_kernel, 1.0, geometric_times(0.2, 1.3, 8),
                   op=circle_op)
    assert float(np.max(np.abs(tr["resid_w_forms"]))) <= 1e-3


def test_w_direct_vs_via_rate(flat512, flat512_op, flat_analytic):
    u = flat_analytic.column(0.5, flat512.n_nodes // 2)
    a = w_entropy(flat512, u, 0.5, 1.0)
    b = w_entropy_via_rate(flat512, flat512_op, u, 0.5, 1.0)
    assert a == pytest.approx(b, abs=1e-3)


# --- rigidity and monotonicity --------------------------------------------------------

def test_rigidity_on_the_exact_gaussian_flow(flat1024, flat1024_analytic):
    rep = w_rigidity(flat1024, flat1024_analytic, 1.0,
                     np.geomspace(0.1, 1.0, 8))
    assert rep.passed()
    assert rep.details["max_abs_w"] <= 1e-3
    assert rep.details["max_abs_dwdt"] <= 1e-3


def test_rigidity_guard_goes_inconclusive(flat256):
    from heatlab.heatflow import AnalyticGaussianKernel
    # by t = 1.2 the Gaussian tail brushes the walls of [-8, 8]: boundary
    # mass crosses the 1e-8 guard while total mass is still intact
    rep = w_rigidity(flat256, AnalyticGaussianKernel(flat256), 1.0,
                     np.geomspace(0.5, 1.2, 4))
    assert rep.verdict == "inconclusive"


def test_monotonicity_on_flat_analytic(flat1024, flat1024_analytic):
    rep = w_monotonicity(flat1024, flat1024_analytic, 1.0, MONO_TIMES)
    assert rep.passed()
    assert rep.details["min_ric_mn"] == 0.0


def test_monotonicity_on_plain_circle(circle, circle_kernel):
    rep = w_monotonicity(circle, circle_kernel, 1.0, MONO_TIMES)
    assert rep.passed()
    assert rep.margin >= -1e-6


def test_monotonicity_with_genuine_decay(gauss256, gauss256_kernel):
    # m large enough that ric_mn = 1 - x^2/(m-1) >= 0 on the whole domain
    rep = w_monotonicity(gauss256, gauss256_kernel, 40.0, MONO_TIMES)
    assert rep.passed()
    assert rep.margin > 1.0
    assert rep.details["w_first"] > rep.details["w_last"]


def test_monotonicity_on_sphere(sphere256, sphere256_kernel):
    rep = w_monotonicity(sphere256, sphere256_kernel, 3.0, MONO_TIMES)
    assert rep.passed()
    assert rep.margin > 0.1
    assert rep.details["min_ric_mn"] == pytest.approx(2.0, abs=1e-12)


def test_monotonicity_inconclusive_under_negative_curvature(wcircle, wcircle_op):
    # min ric_mn < 0 for the weighted circle at m = 3
    rep = w_monotonicity(wcircle, kernel(wcircle_op), 3.0, MONO_TIMES)
    assert rep.verdict == "inconclusive"
    assert rep.details["min_ric_mn"] < 0.0


# --- dissipation identity ----------------------------------------------------------

def test_dissipation_terms_nonpositive_under_nonnegative_curvature(
        circle, circle_kernel):
    dis = w_dissipation(circle, circle_kernel, 0.4, 1.0, 1)
    assert dis.hessian_term <= 0.0
    assert dis.curvature_term == 0.0    # flat circle: ric_mn == 0
    assert dis.mn_term <= 0.0
    assert dis.rhs_total == dis.hessian_term + dis.curvature_term + dis.mn_term


def test_dissipation_identity_second_order():
    residuals = []
    for n_nodes in (128, 256, 512):
        space = make_circle(n_nodes)
        kern = kernel(assemble(space))
        dis = w_dissipation(space, kern, 0.4, 1.0, 1)
        residuals.append(abs(dis.residual))
    orders = [math.log2(residuals[i] / residuals[i + 1]) for i in range(2)]
    assert min(orders) >= 1.7, (residuals, orders)


def test_dissipation_on_gaussian_space(gauss512, gauss512_kernel):
    dis = w_dissipation(gauss512, gauss512_kernel, 0.2, 2.0, 1)
    # frozen fixture: dW/dt = -4.4728 at t = 0.2, residual ~ 1e-4
    assert dis.dwdt_fd == pytest.approx(-4.4728, abs=2e-3)
    assert abs(dis.residual) <= 3e-4
    assert abs(dis.residual) <= 1e-3 * abs(dis.dwdt_fd)


def test_dissipation_identity_report(circle, circle_kernel):
    rep = dissipation_identity(circle, circle_kernel, 0.4)
    assert rep.passed()
    assert rep.details["rhs_total"] == pytest.approx(rep.details["dwdt_fd"],
                                                     abs=5e-2)


def test_dissipation_validates_m_against_potential(gauss256, gauss256_kernel):
    with pytest.raises(ValueError, match="constant potential"):
        w_dissipation(gauss256, gauss256_kernel, 0.2, 1.0, 1)
    with pytest.raises(ValueError, match="m must be >= n"):
        w_dissipation(gauss256, gauss256_kernel, 0.2, 0.5, 1)


def test_trace_csv_round_trip(tmp_path, circle, circle_kernel, circle_op):
    tr = h_m_trace(circle, circle_kernel, 1.0, geometric_times(0.2, 1.3, 8),
                   op=circle_op)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    rows = path.read_text().strip().split("\n")
    assert rows[0].split(",")[0] == "t"
    assert len(rows) == 1 + 8
