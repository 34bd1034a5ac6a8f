"""Entropy functionals of evolving densities and their dissipation laws.

Everything here consumes a positive density u with unit mass in L^1(mu) and
returns weighted quadratures.  Time derivatives are always produced two ways,
an analytic quadrature formula and a finite difference of the integral, so
that each identity check compares two independent computations instead of
trusting either one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ModelSpace, ric_l, ric_mn
from .heatflow import CLAMP, NOISE_FLOOR
from .operators import DiscreteOperator, gradient, hessian
from .reports import CheckReport, make_report

FOUR_PI = 4.0 * math.pi

# loosest normalization slack accepted by the entropy quadratures; kernel
# columns are exact to roundoff, heat solves to solver tolerance
MASS_SLACK = 1e-6

# |negative value| above this fraction of the peak is a genuinely bad density,
# below it is spectral round-off in the far tail and gets floored at CLAMP
NEGATIVE_NOISE = 1e-9


def _checked_density(space: ModelSpace, u: np.ndarray) -> np.ndarray:
    """Validate mass and positivity; floor far-tail round-off noise at CLAMP.

    Spectral kernel columns underflow their true (sub-1e-30) tail values into
    signed round-off noise.  The measure weight vanishes in the same region,
    so flooring changes every quadrature here far below stencil error while
    keeping logs finite.  Densities with structurally negative values raise.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (space.n_nodes,):
        raise ValueError("density shape does not match the grid")
    peak = float(np.max(u))
    if not peak > 0.0:
        raise ValueError("density must have positive values")
    if float(np.min(u)) < -NEGATIVE_NOISE * peak:
        raise ValueError("density must be positive (beyond round-off noise)")
    mass = float(space.measure @ u)
    if abs(mass - 1.0) > MASS_SLACK:
        raise ValueError(f"density mass {mass!r} is not 1 within {MASS_SLACK}")
    return np.maximum(u, CLAMP)


def _resolved_core(u: np.ndarray, erode: int = 2) -> np.ndarray:
    """Nodes where u sits above the relative noise floor, shrunk by `erode`.

    Integrands that divide by u amplify floored tail noise into overflow, so
    they are summed over this core only.  The erosion keeps finite-difference
    stencils of log u from straddling the floor seam.  Every dropped term
    carries a factor u below NOISE_FLOOR * max(u) and is quadrature dust.
    """
    core = u >= NOISE_FLOOR * float(np.max(u))
    for _ in range(erode):
        shrunk = core.copy()
        shrunk[1:] &= core[:-1]
        shrunk[:-1] &= core[1:]
        core = shrunk
    return core


def boltzmann_entropy(space: ModelSpace, u: np.ndarray) -> float:
    """H(u) = -int u log u dmu."""
    u = _checked_density(space, u)
    return -float(space.measure @ (u * np.log(u)))


def fisher_information(space: ModelSpace, u: np.ndarray) -> float:
    """int |grad log u|^2 u dmu, the independent oracle for dH/dt."""
    u = _checked_density(space, u)
    g = gradient(space, np.log(u))
    return float(space.measure @ (g * g * u))


def entropy_derivatives(space: ModelSpace, op: DiscreteOperator,
                        u: np.ndarray):
    """(dH/dt, d2H/dt2 flux form, d2H/dt2 geometric form) at the slice u.

    dH/dt      = -int Lu log u dmu
    flux form  = -int ((Lu)^2/u - grad(Lu).grad(u)/u) dmu
    geometric  = -2 int (|Hess log u|^2 + Ric(L)(grad log u)^2) u dmu
    The two second-derivative forms agree for exact solutions; their gap is
    pure discretization error and is what the identity checks measure.
    """
    u = _checked_density(space, u)
    core = _resolved_core(u)
    safe = np.where(core, u, 1.0)
    logu = np.log(u)
    lu = op.apply(u)
    dhdt = -float(space.measure @ np.where(core, lu * logu, 0.0))

    glu = gradient(space, lu)
    gu = gradient(space, u)
    flux = -float(space.measure @ np.where(core,
                                           lu * lu / safe - glu * gu / safe,
                                           0.0))

    glog = gradient(space, logu)
    hlog = hessian(space, logu)
    hess_sq = hlog * hlog
    if space.n > 1:
        a_w = space.warp.logf_d1(space.nodes)
        hess_sq = hess_sq + (space.n - 1) * (a_w * glog) ** 2
    geom = -2.0 * float(space.measure @ np.where(
        core, (hess_sq + ric_l(space) * glog * glog) * u, 0.0))
    return dhdt, flux, geom


def h_m_entropy(space: ModelSpace, u: np.ndarray, t: float, m: float) -> float:
    """H shifted by the Gaussian reference: H(u) - (m/2)(1 + log 4 pi t)."""
    if not t > 0.0:
        raise ValueError("t must be positive")
    return boltzmann_entropy(space, u) - 0.5 * m * (1.0 + math.log(FOUR_PI * t))


def w_entropy(space: ModelSpace, u: np.ndarray, t: float, m: float) -> float:
    """int (t |grad f|^2 + f - m) u dmu  with  f = -log u - (m/2) log(4 pi t)."""
    u = _checked_density(space, u)
    if not t > 0.0:
        raise ValueError("t must be positive")
    f = -np.log(u) - 0.5 * m * math.log(FOUR_PI * t)
    fp = gradient(space, f)
    return float(space.measure @ ((t * fp * fp + f - m) * u))


def w_entropy_via_rate(space: ModelSpace, op: DiscreteOperator, u: np.ndarray,
                       t: float, m: float) -> float:
    """The cross-formula route H_m + t dH_m/dt with dH_m/dt = dH/dt - m/2t."""
    u = _checked_density(space, u)
    hm = h_m_entropy(space, u, t, m)
    dhdt = -float(space.measure @ (op.apply(u) * np.log(u)))
    return hm + t * dhdt - 0.5 * m


# ---------------------------------------------------------------------------
# dissipation decomposition


@dataclass
class WDissipation:
    """dW/dt split into its three sign-definite pieces plus an FD cross-check.

    hessian_term, curvature_term and mn_term are quadratures of the analytic
    right side; dwdt_fd is a tight centered difference of w_entropy in t.
    When min Ric_{m,n} >= 0 each analytic piece is <= 0 by construction.
    """
    t: float
    m: float
    n: int
    dwdt_fd: float
    hessian_term: float
    curvature_term: float
    mn_term: float

    @property
    def rhs_total(self) -> float:
        return self.hessian_term + self.curvature_term + self.mn_term

    @property
    def residual(self) -> float:
        return self.dwdt_fd - self.rhs_total


def w_dissipation(space: ModelSpace, kern, t: float, m=None, n=None,
                  y_idx: int | None = None, fd_step: float | None = None) -> WDissipation:
    """Evaluate the dissipation decomposition on the kernel slice p_t(., y).

    The finite-difference step defaults to 1e-3 * t: tight enough that the
    O(dt^2) stencil error sits far below the O(h^2) quadrature error, so
    refinement sweeps of the residual see the spatial order.
    """
    m = float(space.m if m is None else m)
    n = int(space.n if n is None else n)
    if n != space.n:
        raise ValueError("n must match the represented dimension of the space")
    if m < n:
        raise ValueError("m must be >= n")
    if m == n and not _constant_potential(space):
        raise ValueError("m == n requires a constant potential")
    if y_idx is None:
        y_idx = space.n_nodes // 2
    if not t > 0.0:
        raise ValueError("t must be positive")

    u = kern.column(t, y_idx)
    u = _checked_density(space, u)
    f = -np.log(u) - 0.5 * m * math.log(FOUR_PI * t)
    fp = gradient(space, f)
    fpp = hessian(space, f)
    half_t = 0.5 / t

    hess_sq = (fpp - half_t) ** 2
    if space.n > 1:
        a_w = space.warp.logf_d1(space.nodes)
        hess_sq = hess_sq + (space.n - 1) * (a_w * fp - half_t) ** 2
    hessian_term = -2.0 * t * float(space.measure @ (hess_sq * u))

    curv = ric_mn(space, m, n)
    curvature_term = -2.0 * t * float(space.measure @ (curv * fp * fp * u))

    if m == n:
        mn_term = 0.0
    else:
        phi_p = space.potential.d1(space.nodes)
        q = phi_p * fp + (m - n) * half_t
        mn_term = -(2.0 / (m - n)) * t * float(space.measure @ (q * q * u))

    dt_fd = (1e-3 * t) if fd_step is None else float(fd_step)
    w_lo = w_entropy(space, kern.column(t - dt_fd, y_idx), t - dt_fd, m)
    w_hi = w_entropy(space, kern.column(t + dt_fd, y_idx), t + dt_fd, m)
    dwdt_fd = (w_hi - w_lo) / (2.0 * dt_fd)

    return WDissipation(t=float(t), m=m, n=n, dwdt_fd=dwdt_fd,
                        hessian_term=hessian_term,
                        curvature_term=curvature_term, mn_term=mn_term)


def _constant_potential(space: ModelSpace) -> bool:
    vals = space.phi
    scale = max(1.0, float(np.max(np.abs(vals))))
    return float(np.ptp(vals)) <= 1e-13 * scale


# ---------------------------------------------------------------------------
# traces over a time grid


TRACE_COLUMNS = (
    "t", "H", "dHdt", "d2H_flux", "d2H_geometric", "Hm", "dHmdt", "d2Hmdt2",
    "W_direct", "W_via_rate", "dWdt_fd", "dWdt_hessian", "dWdt_curvature",
    "dWdt_mn", "resid_w_forms", "resid_second_derivs",
)


@dataclass
class EntropyTrace:
    """Per-time entropy quantities with every cross-identity residual.

    resid_w_forms       = W_direct - W_via_rate (quadrature + stencil error)
    resid_second_derivs = (d2Hmdt2 - d2H_flux) - m/2t^2, exact algebra on
                          computed values, so it is roundoff-sized always.
    """
    space: ModelSpace
    m: float
    times: np.ndarray
    columns: dict

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    def to_csv(self, path) -> None:
        names = [c for c in TRACE_COLUMNS if c in self.columns]
        with open(path, "w") as fh:
            fh.write(",".join(names) + "\n")
            for j in range(self.times.size):
                fh.write(",".join(repr(float(self.columns[c][j])) for c in names)
                         + "\n")


def geometric_times(t0: float, ratio: float, count: int) -> np.ndarray:
    """t_j = t0 * ratio^j; entropy quantities move fastest at small t."""
    if not (t0 > 0.0 and ratio > 1.0 and count >= 3):
        raise ValueError("need t0 > 0, ratio > 1 and at least 3 times")
    return t0 * ratio ** np.arange(count)


def nonuniform_derivative(ts: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """3-point Lagrange d/dt on an arbitrary strictly increasing grid."""
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if ts.size != vals.size or ts.size < 3:
        raise ValueError("need matching grids with at least 3 points")
    out = np.empty_like(vals)
    for j in range(ts.size):
        k = min(max(j - 1, 0), ts.size - 3)
        t0, t1, t2 = ts[k:k + 3]
        x = ts[j]
        w0 = (2.0 * x - t1 - t2) / ((t0 - t1) * (t0 - t2))
        w1 = (2.0 * x - t0 - t2) / ((t1 - t0) * (t1 - t2))
        w2 = (2.0 * x - t0 - t1) / ((t2 - t0) * (t2 - t1))
        out[j] = w0 * vals[k] + w1 * vals[k + 1] + w2 * vals[k + 2]
    return out


def h_m_trace(space: ModelSpace, kern, m: float, times: np.ndarray,
              y_idx: int | None = None, op: DiscreteOperator | None = None,
              n: int | None = None) -> EntropyTrace:
    """Evaluate every entropy quantity along kernel slices p_t(., y)."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0.0) or np.any(times <= 0.0):
        raise ValueError("times must be positive and strictly increasing")
    m = float(m)
    n = int(space.n if n is None else n)
    if y_idx is None:
        y_idx = space.n_nodes // 2
    if op is None:
        op = kern.op
    if op is None:
        raise ValueError("an operator is required (analytic kernels carry none)")

    cols = {name: np.empty(times.size) for name in TRACE_COLUMNS}
    cols["t"] = times.copy()
    for j, t in enumerate(times):
        u = kern.column(t, y_idx)
        dhdt, flux, geom = entropy_derivatives(space, op, u)
        h = boltzmann_entropy(space, u)
        hm = h - 0.5 * m * (1.0 + math.log(FOUR_PI * t))
        dis = w_dissipation(space, kern, t, m, n, y_idx=y_idx)
        d2hmdt2 = flux + 0.5 * m / (t * t)
        cols["H"][j] = h
        cols["dHdt"][j] = dhdt
        cols["d2H_flux"][j] = flux
        cols["d2H_geometric"][j] = geom
        cols["Hm"][j] = hm
        cols["dHmdt"][j] = dhdt - 0.5 * m / t
        cols["d2Hmdt2"][j] = d2hmdt2
        cols["W_direct"][j] = w_entropy(space, u, t, m)
        cols["W_via_rate"][j] = hm + t * dhdt - 0.5 * m
        cols["dWdt_hessian"][j] = dis.hessian_term
        cols["dWdt_curvature"][j] = dis.curvature_term
        cols["dWdt_mn"][j] = dis.mn_term
        cols["resid_w_forms"][j] = cols["W_direct"][j] - cols["W_via_rate"][j]
        cols["resid_second_derivs"][j] = (d2hmdt2 - flux) - 0.5 * m / (t * t)
    cols["dWdt_fd"] = nonuniform_derivative(times, cols["W_direct"])
    return EntropyTrace(space=space, m=m, times=times, columns=cols)


# ---------------------------------------------------------------------------
# check wrappers


def w_rigidity(space: ModelSpace, kern, m: float, times: np.ndarray,
               y_idx: int | None = None, op: DiscreteOperator | None = None,
               tolerance: float = 1e-3) -> CheckReport:
    """|W| and |dW/dt| stay at zero for the exact Gaussian flow, m = n = 1.

    Requires a localization guard: boundary mass below 1e-8 at every sampled
    time, else the verdict is inconclusive rather than fail.
    """
    times = np.asarray(times, dtype=float)
    if y_idx is None:
        y_idx = space.n_nodes // 2
    ws = np.empty(times.size)
    guard_ok = True
    worst_mass = 0.0
    for j, t in enumerate(times):
        u = kern.column(t, y_idx)
        mass = space.boundary_mass_fraction(u)
        worst_mass = max(worst_mass, mass)
        if mass > 1e-8:
            guard_ok = False
        ws[j] = w_entropy(space, u, t, m)
    dw = nonuniform_derivative(times, ws)
    worst = max(float(np.max(np.abs(ws))), float(np.max(np.abs(dw))))
    j = int(np.argmax(np.abs(ws)))
    return make_report(
        "w_rigidity", -worst, tolerance,
        witness={"t": float(times[j])},
        sample_size=times.size,
        details={"max_abs_w": float(np.max(np.abs(ws))),
                 "max_abs_dwdt": float(np.max(np.abs(dw))),
                 "boundary_mass": worst_mass},
        inconclusive=not guard_ok,
    )


def w_monotonicity(space: ModelSpace, kern, m: float, times: np.ndarray,
                   y_idx: int | None = None,
                   tolerance: float = 1e-6) -> CheckReport:
    """W non-increasing along the trace when min Ric_{m,n} >= 0."""
    times = np.asarray(times, dtype=float)
    if y_idx is None:
        y_idx = space.n_nodes // 2
    min_curv = float(np.min(ric_mn(space, m)))
    ws = np.array([w_entropy(space, kern.column(t, y_idx), t, m) for t in times])
    drops = ws[:-1] - ws[1:]          # >= 0 when W is non-increasing
    j = int(np.argmin(drops))
    # the localization guard detects truncation of a noncompact model; walls
    # of the compact kinds (reflection planes, measure-degenerate pole cuts)
    # are genuine parts of the space, so mass reaching them is fine
    guard = space.kind != "line-truncated" or all(
        space.boundary_mass_fraction(kern.column(t, y_idx)) <= 1e-6 for t in times)
    return make_report(
        "w_monotonicity", float(np.min(drops)), tolerance,
        witness={"t": float(times[j + 1])},
        sample_size=times.size - 1,
        details={"min_ric_mn": min_curv, "w_first": float(ws[0]),
                 "w_last": float(ws[-1])},
        inconclusive=(min_curv < 0.0) or not guard,
    )


def dissipation_identity(space: ModelSpace, kern, t: float, m=None, n=None,
                         y_idx: int | None = None,
                         tolerance: float = 5e-2) -> CheckReport:
    """|dW/dt(FD) - analytic right side| at one slice; runner sweeps grids."""
    dis = w_dissipation(space, kern, t, m, n, y_idx=y_idx)
    return make_report(
        "w_dissipation", -abs(dis.residual), tolerance,
        witness={"t": float(dis.t)},
        sample_size=space.n_nodes,
        details={"dwdt_fd": dis.dwdt_fd, "rhs_total": dis.rhs_total,
                 "hessian_term": dis.hessian_term,
                 "curvature_term": dis.curvature_term,
                 "mn_term": dis.mn_term},
    )
