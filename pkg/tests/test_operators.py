"""Discrete generator: structural exactness and stencil accuracy.

The assembly is designed so that self-adjointness in the weighted measure,
zero row sums, and summation by parts hold to round-off for every space and
every grid function, not merely in the continuum limit.  Those three are
tested at 1e-12.  Stencil accuracy (gradient, hessian, curvature identity)
is second order and tested by refinement.
"""
import math

import numpy as np
import pytest

from conftest import make_circle, make_gauss, make_sphere
from heatlab.heatflow import bump_density
from heatlab.operators import (
    assemble,
    bochner_defect,
    dirichlet_form,
    face_gradient,
    face_weights,
    gradient,
    hessian,
    ibp_defect,
    operator_from_json,
    row_sum_defect,
    symmetry_defect,
)

STRUCT_TOL = 1e-12


def _test_pair(space):
    u = bump_density(space)
    v = np.cos(2.0 * np.pi * (space.nodes - space.start) / space.length)
    return u, v


def test_structure_exact_on_all_kinds(circle_op, wcircle_op, flat256_op,
                                      gauss256_op, sphere256):
    ops = [circle_op, wcircle_op, flat256_op, gauss256_op, assemble(sphere256)]
    for op in ops:
        u, v = _test_pair(op.space)
        assert symmetry_defect(op) <= STRUCT_TOL
        assert row_sum_defect(op) <= STRUCT_TOL
        assert ibp_defect(op, u, v) <= STRUCT_TOL


def test_ibp_holds_for_arbitrary_vectors(gauss256_op):
    # summation by parts is an algebraic identity of the assembly, so even
    # rough non-smooth vectors satisfy it to round-off
    rng = np.random.default_rng(1)
    for _ in range(3):
        u = rng.standard_normal(gauss256_op.n_nodes)
        v = rng.standard_normal(gauss256_op.n_nodes)
        assert ibp_defect(gauss256_op, u, v) <= STRUCT_TOL * 10


def test_operator_kills_constants_and_preserves_mass(wcircle_op):
    ones = np.ones(wcircle_op.n_nodes)
    np.testing.assert_allclose(wcircle_op.apply(ones), 0.0, atol=1e-12)
    u, _ = _test_pair(wcircle_op.space)
    assert abs(float(wcircle_op.measure @ wcircle_op.apply(u))) <= 1e-12


def test_dirichlet_form_matches_operator(gauss256_op):
    u, v = _test_pair(gauss256_op.space)
    lhs = dirichlet_form(gauss256_op.space, u, v)
    rhs = -float(np.dot(gauss256_op.measure, gauss256_op.apply(u) * v))
    assert lhs == pytest.approx(rhs, abs=1e-12)
    assert dirichlet_form(gauss256_op.space, u) >= 0.0


def test_apply_matches_matrix(circle_op, flat256_op):
    for op in (circle_op, flat256_op):
        u, _ = _test_pair(op.space)
        np.testing.assert_allclose(op.apply(u), op.matrix() @ u, atol=1e-14)


def test_json_round_trip(wcircle_op):
    clone = operator_from_json(wcircle_op.to_json(), wcircle_op.space)
    u, _ = _test_pair(wcircle_op.space)
    np.testing.assert_array_equal(clone.apply(u), wcircle_op.apply(u))


def test_face_weights_geometry(circle, flat256):
    assert face_weights(circle).size == circle.n_nodes
    assert face_weights(flat256).size == flat256.n_nodes - 1
    u = flat256.nodes ** 2
    assert face_gradient(flat256, u).size == flat256.n_nodes - 1


# --- stencils ---------------------------------------------------------------

def test_stencils_exact_on_quadratics(flat256):
    u = 3.0 * flat256.nodes ** 2 - flat256.nodes + 2.0
    np.testing.assert_allclose(gradient(flat256, u),
                               6.0 * flat256.nodes - 1.0, atol=1e-10)
    np.testing.assert_allclose(hessian(flat256, u), 6.0, atol=1e-8)


def test_stencils_second_order_on_circle(circle):
    u = np.sin(circle.nodes)
    h = circle.h
    err_g = np.max(np.abs(gradient(circle, u) - np.cos(circle.nodes)))
    err_h = np.max(np.abs(hessian(circle, u) + np.sin(circle.nodes)))
    assert err_g <= h * h / 6.0 * 1.01
    assert err_h <= h * h / 12.0 * 1.01


def test_flat_operator_is_plain_second_difference(flat256_op):
    u = np.sin(flat256_op.space.nodes)
    interior = slice(3, -3)
    np.testing.assert_allclose(
        flat256_op.apply(u)[interior],
        hessian(flat256_op.space, u)[interior], atol=1e-10)


def test_weighted_operator_includes_drift(gauss256_op):
    # L u = u'' - x u' for the standard normal weight
    sp_ = gauss256_op.space
    u = np.sin(sp_.nodes)
    expect = -np.sin(sp_.nodes) - sp_.nodes * np.cos(sp_.nodes)
    got = gauss256_op.apply(u)
    interior = np.abs(sp_.nodes) <= 4.0
    np.testing.assert_allclose(got[interior], expect[interior],
                               atol=5.0 * sp_.h ** 2)


# --- curvature identity -------------------------------------------------------

@pytest.mark.parametrize("maker", [make_circle, make_gauss],
                         ids=["circle", "gauss"])
def test_bochner_defect_second_order(maker):
    sups = []
    for n_nodes in (128, 256, 512):
        space = maker(n_nodes)
        op = assemble(space)
        if space.periodic:
            u = np.exp(np.sin(space.nodes))
        else:
            u = np.exp(-0.5 * (space.nodes / (space.length / 8.0)) ** 2)
        _, defect = bochner_defect(space, op, u)
        sups.append(float(np.max(np.abs(defect))))
    orders = [math.log2(sups[i] / sups[i + 1]) for i in range(2)]
    assert min(orders) >= 1.9, (sups, orders)


def test_bochner_defect_drops_wall_pad(flat256, flat256_op):
    u = np.exp(-0.25 * flat256.nodes ** 2)
    nodes, defect = bochner_defect(flat256, flat256_op, u, pad=5)
    assert nodes.size == flat256.n_nodes - 10
    assert defect.size == nodes.size
