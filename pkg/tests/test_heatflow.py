"""Heat flow and heat kernels: time stepping, spectral kernel, closed forms."""
import math

import numpy as np
import pytest

from conftest import unit_mass
from heatlab.heatflow import (
    AnalyticGaussianKernel,
    AnalyticOUKernel,
    bump_density,
    hamilton_jacobi_defect,
    kernel,
    normalize,
    solve,
    two_bump_density,
    uniform_density,
)
from heatlab.operators import assemble


# --- initial profiles --------------------------------------------------------

def test_profiles_are_normalized_and_positive(circle, gauss256):
    for space in (circle, gauss256):
        for u in (uniform_density(space), bump_density(space),
                  two_bump_density(space)):
            assert float(np.dot(space.measure, u)) == pytest.approx(1.0, abs=1e-12)
            assert np.all(u > 0.0)


def test_normalize_rejects_nonpositive_mass(circle):
    with pytest.raises(ValueError, match="mass"):
        normalize(circle, np.zeros(circle.n_nodes))


# --- Crank-Nicolson marching ---------------------------------------------------

def test_solve_conserves_mass_and_positivity(circle_op):
    sol = solve(circle_op, bump_density(circle_op.space), 1.0)
    assert sol.mass_drift <= 1e-12
    assert np.all(sol.data > 0.0)
    assert sol.times[0] == 0.0 and sol.times[-1] == pytest.approx(1.0)


def test_solve_matches_spectral_kernel(circle, circle_op, circle_kernel):
    u0 = bump_density(circle)
    sol = solve(circle_op, u0, 0.5)
    spectral = circle_kernel.matrix(0.5) @ (circle.measure * u0)
    gap = float(np.max(np.abs(sol.at(0.5) - spectral)) / np.max(spectral))
    assert gap <= 1e-6


def test_solve_reaches_equilibrium(circle, circle_op):
    sol = solve(circle_op, two_bump_density(circle), 40.0, dt=0.01)
    eq = 1.0 / circle.total_measure
    assert float(np.max(np.abs(sol.at(40.0) - eq))) / eq <= 1e-9


def test_solution_snapshots(circle_op):
    u0 = bump_density(circle_op.space)
    sol = solve(circle_op, u0, 0.2, dt=1e-3, store_every=50)
    np.testing.assert_array_equal(sol.at(0.0), u0)
    assert sol.sup >= float(np.max(sol.data[-1]))
    # nearest-snapshot lookup
    assert sol.index_at(0.049) == sol.index_at(0.051)


def test_solve_rejects_negative_horizon(circle_op):
    with pytest.raises(ValueError):
        solve(circle_op, bump_density(circle_op.space), -1.0)


# --- spectral kernel ------------------------------------------------------------

def test_kernel_spectrum_of_unit_circle(circle_kernel):
    lam = circle_kernel.lam
    assert abs(lam[0]) <= 1e-9              # constants
    # first nonzero eigenvalue is 1 (doubled), up to the h^2 stencil bias
    assert lam[1] == pytest.approx(1.0, abs=1e-3)
    assert lam[1] == pytest.approx(lam[2], abs=1e-9)


def test_kernel_matrix_is_symmetric_density(circle_kernel):
    mat = circle_kernel.matrix(0.3)
    np.testing.assert_allclose(mat, mat.T, atol=1e-12)
    assert circle_kernel.value(0.3, 3, 17) == pytest.approx(mat[3, 17], abs=1e-14)
    np.testing.assert_allclose(circle_kernel.column(0.3, 17), mat[:, 17],
                               atol=1e-13)


def test_kernel_columns_batch(circle_kernel):
    ts = np.array([0.1, 0.4])
    batch = circle_kernel.columns(ts, 5)
    np.testing.assert_allclose(batch[:, 0], circle_kernel.column(0.1, 5),
                               atol=1e-14)
    np.testing.assert_allclose(batch[:, 1], circle_kernel.column(0.4, 5),
                               atol=1e-14)


def test_kernel_mass_defect(circle_kernel, gauss256_kernel):
    # kernel mass sums N eigenmode products; round-off budget is 1e-11
    assert circle_kernel.mass_defect(0.5) <= 1e-11
    # the conjugation weights span e^18 here, amplifying round-off further
    assert gauss256_kernel.mass_defect(0.5) <= 1e-10


def test_kernel_semigroup_property(circle, circle_kernel):
    lhs = circle_kernel.matrix(0.3) @ np.diag(circle.measure) @ circle_kernel.matrix(0.15)
    np.testing.assert_allclose(lhs, circle_kernel.matrix(0.45), atol=1e-12)


def test_log_column_masks_the_floor(gauss256_kernel):
    logp, valid = gauss256_kernel.log_column(0.05, gauss256_kernel.space.n_nodes // 2)
    assert valid.any() and not valid.all()
    assert np.all(np.isfinite(logp))


# --- closed-form kernels ----------------------------------------------------------

def test_analytic_gaussian_kernel_formula(flat512, flat_analytic):
    col = flat_analytic.column(0.5, flat512.index_of(1.0))
    x0 = flat512.nodes[flat512.index_of(1.0)]
    expect = np.exp(-((flat512.nodes - x0) ** 2) / 2.0) / math.sqrt(2.0 * math.pi)
    np.testing.assert_allclose(col, expect, atol=1e-14)


def test_analytic_ou_kernel_is_symmetric(gauss512, gauss512_analytic):
    i, j = gauss512.index_of(-1.0), gauss512.index_of(2.0)
    for t in (0.1, 1.0):
        a = gauss512_analytic.value(t, i, j)
        b = gauss512_analytic.value(t, j, i)
        assert a == pytest.approx(b, rel=1e-12)


def test_analytic_ou_relaxes_to_the_invariant_density(gauss512, gauss512_analytic):
    # p_t(x, .) -> 1 (density w.r.t. the Gaussian measure) as t -> inf
    col = gauss512_analytic.column(30.0, gauss512.index_of(2.0))
    inner = np.abs(gauss512.nodes) <= 3.0
    np.testing.assert_allclose(col[inner], 1.0, atol=1e-8)


def test_analytic_ou_rejects_non_quadratic(flat512):
    with pytest.raises(ValueError, match="quadratic"):
        AnalyticOUKernel(flat512)


def test_spectral_matches_mehler_oracle(gauss512, gauss512_kernel,
                                        gauss512_analytic):
    # sup-relative error over |x|, |y| <= 3 at three times
    idx = np.nonzero(np.abs(gauss512.nodes) <= 3.0)[0]
    for t in (0.1, 0.5, 1.0):
        pmat = gauss512_kernel.matrix(t)[np.ix_(idx, idx)]
        rmat = np.stack([gauss512_analytic.column(t, int(j))[idx] for j in idx],
                        axis=1)
        rel = float(np.abs(pmat - rmat).max() / rmat.max())
        assert rel <= 1e-3, (t, rel)


def test_kernel_center_value(gauss512, gauss512_kernel):
    ci = gauss512.index_of(0.0)
    # 1/sqrt(1 - e^-2) = 1.07542, shifted ~4e-5 by the off-center grid node
    assert gauss512_kernel.value(1.0, ci, ci) == pytest.approx(1.0754, abs=5e-4)


# --- log-kernel evolution defect ----------------------------------------------------

def test_hamilton_jacobi_defect_refines(flat256_kernel, flat512_kernel):
    coarse = hamilton_jacobi_defect(flat256_kernel, 1.0, 128)
    fine = hamilton_jacobi_defect(flat512_kernel, 1.0, 256)
    # frozen fixture values: 0.3988 at N=256, 0.1140 at N=512 (order 1.81)
    assert coarse.max_defect == pytest.approx(0.3988, rel=0.05)
    assert fine.max_defect == pytest.approx(0.1140, rel=0.05)
    order = math.log2(coarse.max_defect / fine.max_defect)
    assert order >= 1.5
    assert fine.sample_size > 0
    assert fine.per_t.size == fine.times.size


def test_hamilton_jacobi_defect_needs_spectral_kernel(flat_analytic):
    # the defect contracts L p against the discrete generator
    with pytest.raises(AttributeError):
        hamilton_jacobi_defect(flat_analytic, 1.0, 256)
