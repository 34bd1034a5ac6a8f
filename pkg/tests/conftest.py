"""Shared fixtures: standard spaces, operators and heat kernels.

Dense eigendecompositions dominate the suite's runtime, so every kernel is
session-scoped and shared between the module tests and the acceptance suite.
"""
import math

import numpy as np
import pytest

from heatlab.geometry import build_space, cosine_potential, quadratic_potential
from heatlab.heatflow import AnalyticGaussianKernel, AnalyticOUKernel, kernel
from heatlab.operators import assemble

# phi = x^2/2 + GAUSS_OFFSET makes exp(-phi) the standard normal density
GAUSS_OFFSET = 0.5 * math.log(2.0 * math.pi)


def make_flat(n_nodes, length=16.0):
    return build_space("line-truncated", n_nodes, length)


def make_gauss(n_nodes, m=3.0):
    return build_space("line-truncated", n_nodes, 12.0,
                       phi=quadratic_potential(1.0, GAUSS_OFFSET), m=m)


def make_circle(n_nodes, weighted=False):
    if weighted:
        return build_space("circle", n_nodes, 2.0 * math.pi,
                           phi=cosine_potential(0.1, 2.0 * math.pi), m=3.0)
    return build_space("circle", n_nodes, 2.0 * math.pi)


def make_sphere(n_nodes):
    # radial reduction of the round 3-sphere, poles trimmed by 0.05
    return build_space("radial-reduction", n_nodes, math.pi - 0.1,
                       warp="sine", start=0.05, m=3.0, n=3)


@pytest.fixture(scope="session")
def circle():
    return make_circle(256)


@pytest.fixture(scope="session")
def circle_op(circle):
    return assemble(circle)


@pytest.fixture(scope="session")
def circle_kernel(circle_op):
    return kernel(circle_op)


@pytest.fixture(scope="session")
def wcircle():
    return make_circle(256, weighted=True)


@pytest.fixture(scope="session")
def wcircle_op(wcircle):
    return assemble(wcircle)


@pytest.fixture(scope="session")
def flat256():
    return make_flat(256)


@pytest.fixture(scope="session")
def flat256_op(flat256):
    return assemble(flat256)


@pytest.fixture(scope="session")
def flat256_kernel(flat256_op):
    return kernel(flat256_op)


@pytest.fixture(scope="session")
def flat512():
    return make_flat(512)


@pytest.fixture(scope="session")
def flat512_op(flat512):
    return assemble(flat512)


@pytest.fixture(scope="session")
def flat512_kernel(flat512_op):
    return kernel(flat512_op)


@pytest.fixture(scope="session")
def flat_analytic(flat512):
    return AnalyticGaussianKernel(flat512)


@pytest.fixture(scope="session")
def flat1024():
    return make_flat(1024)


@pytest.fixture(scope="session")
def flat1024_analytic(flat1024):
    return AnalyticGaussianKernel(flat1024)


@pytest.fixture(scope="session")
def gauss256():
    return make_gauss(256)


@pytest.fixture(scope="session")
def gauss256_op(gauss256):
    return assemble(gauss256)


@pytest.fixture(scope="session")
def gauss256_kernel(gauss256_op):
    return kernel(gauss256_op)


@pytest.fixture(scope="session")
def gauss512():
    return make_gauss(512)


@pytest.fixture(scope="session")
def gauss512_kernel(gauss512):
    return kernel(assemble(gauss512))


@pytest.fixture(scope="session")
def gauss512_analytic(gauss512):
    return AnalyticOUKernel(gauss512)


@pytest.fixture(scope="session")
def sphere256():
    return make_sphere(256)


@pytest.fixture(scope="session")
def sphere256_kernel(sphere256):
    return kernel(assemble(sphere256))


def unit_mass(space, u):
    """Normalize u to a probability density in the space's measure."""
    u = np.asarray(u, dtype=float)
    return u / float(np.dot(space.measure, u))
