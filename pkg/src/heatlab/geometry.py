"""Discretized 1-D model geometries with a smooth positive weight.

A model space is a uniform grid on a circle, a reflecting interval, a
truncated line, or the radial part of a rotationally symmetric manifold,
carrying the weight  w(x) = J(x) * exp(-phi(x))  that defines the reference
measure  d mu = w dx.  Interval-type grids are vertex-centered (the walls are
nodes) with trapezoid quadrature weights, so the domain endpoints enter every
nodewise curvature scan exactly.

Curvature bookkeeping: ric_radial holds the radial Ricci entry supplied by the
warp (-(n-1) f''/f, zero for flat kinds), `ric_l` adds phi'' and `ric_mn`
subtracts phi'^2/(m-n).  The space's K is the exact nodewise lower-bound
constant max(0, -min ric_mn).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_fn

from .reports import make_report

KINDS = ("circle", "interval-reflecting", "line-truncated", "radial-reduction")

# Relative spread below which a sampled potential counts as constant.
_CONST_TOL = 1e-12


# ---------------------------------------------------------------------------
# potentials and warps

@dataclass(frozen=True, eq=False)
class Potential:
    """Weight potential phi with analytic first and second derivatives.

    kinds: "constant" (value c), "quadratic" (c x^2 / 2 + offset),
    "cosine" (c cos(2 pi x / period) + offset), "tabulated" (cubic spline
    through sample points; derivatives come from the spline).
    """

    kind: str
    coeff: float = 0.0
    offset: float = 0.0
    period: float | None = None
    xs: np.ndarray | None = None
    ys: np.ndarray | None = None

    @cached_property
    def _spline(self):
        return CubicSpline(self.xs, self.ys)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.coeff)
        if self.kind == "quadratic":
            return 0.5 * self.coeff * x * x + self.offset
        if self.kind == "cosine":
            return self.coeff * np.cos(2.0 * np.pi * x / self.period) + self.offset
        return self._spline(x)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(x)
        if self.kind == "quadratic":
            return self.coeff * x
        if self.kind == "cosine":
            k = 2.0 * np.pi / self.period
            return -self.coeff * k * np.sin(k * x)
        return self._spline(x, 1)

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(x)
        if self.kind == "quadratic":
            return np.full_like(x, self.coeff)
        if self.kind == "cosine":
            k = 2.0 * np.pi / self.period
            return -self.coeff * k * k * np.cos(k * x)
        return self._spline(x, 2)

    @property
    def analytic(self) -> bool:
        return self.kind != "tabulated"


def constant_potential(c=0.0) -> Potential:
    return Potential(kind="constant", coeff=float(c))


def quadratic_potential(coeff=1.0, offset=0.0) -> Potential:
    return Potential(kind="quadratic", coeff=float(coeff), offset=float(offset))


def cosine_potential(amplitude, period, offset=0.0) -> Potential:
    return Potential(kind="cosine", coeff=float(amplitude), offset=float(offset),
                     period=float(period))


def tabulated_potential(xs, ys) -> Potential:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 4:
        raise ValueError("tabulated potential needs matching 1-D arrays, >= 4 points")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("tabulated potential abscissae must be strictly increasing")
    return Potential(kind="tabulated", xs=xs, ys=ys)


def tabulated_potential_from_csv(path) -> Potential:
    """Two-column CSV (x, phi) -> tabulated potential."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (x, phi)")
    return tabulated_potential(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class Warp:
    """Warp profile f(r) of a rotationally symmetric metric dr^2 + f^2 g_sphere.

    Supplies the volume-density factor f^(n-1), its logarithmic derivative
    f'/f, and the radial Ricci curvature coefficient -f''/f analytically.
    """

    kind: str  # "linear" | "sine" | "sinh"

    def f(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return x
        if self.kind == "sine":
            return np.sin(x)
        return np.sinh(x)

    def logf_d1(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return 1.0 / x
        if self.kind == "sine":
            return 1.0 / np.tan(x)
        return 1.0 / np.tanh(x)

    def curvature(self, x):
        # -f''/f per unit sphere direction
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return np.zeros_like(x)
        if self.kind == "sine":
            return np.ones_like(x)
        return -np.ones_like(x)


_WARPS = {"linear", "sine", "sinh"}


# ---------------------------------------------------------------------------
# the model space

@dataclass(frozen=True, eq=False)
class ModelSpace:
    kind: str
    nodes: np.ndarray
    h: float
    length: float
    start: float
    n: int
    m: float
    potential: Potential
    warp: Warp | None
    phi: np.ndarray
    vol_density: np.ndarray
    ric_radial: np.ndarray
    weights: np.ndarray      # J * exp(-phi) at nodes
    quad_weights: np.ndarray  # trapezoid factors (1, or 1/2 at walls)
    measure: np.ndarray      # quad_weights * weights * h
    K: float

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def periodic(self) -> bool:
        return self.kind == "circle"

    @property
    def total_measure(self) -> float:
        return float(self.measure.sum())

    @cached_property
    def ric_l_bound(self) -> float:
        """Exact nodewise constant with ric_l >= -ric_l_bound."""
        return max(0.0, -float(np.min(ric_l(self))))

    def drift(self, x):
        """(log w)'(x), the drift of the canonical diffusion, at arbitrary x."""
        b = -self.potential.d1(x)
        if self.warp is not None and self.n > 1:
            b = b + (self.n - 1) * self.warp.logf_d1(x)
        return b

    def distance(self, x, y):
        return geodesic_distance(self, x, y)

    def boundary_mass_fraction(self, u) -> float:
        """Fraction of the mass of u sitting within 3h of a wall (0 on circles)."""
        if self.periodic:
            return 0.0
        x = self.nodes
        near = (x <= self.start + 3.0 * self.h) | (x >= self.start + self.length - 3.0 * self.h)
        total = float(np.dot(self.measure, u))
        if total <= 0.0:
            return 0.0
        return float(np.dot(self.measure[near], np.asarray(u)[near]) / total)

    def index_of(self, x) -> int:
        return int(np.argmin(np.abs(self.nodes - x)))


def _as_potential(phi) -> Potential:
    if phi is None:
        return constant_potential(0.0)
    if isinstance(phi, Potential):
        return phi
    raise TypeError("phi must be a Potential (use the *_potential constructors)")


def build_space(kind, n_nodes, length, phi=None, warp=None, m=1.0, n=1,
                start=None) -> ModelSpace:
    """Build a discretized model space.

    Parameters
    ----------
    kind : one of "circle", "interval-reflecting", "line-truncated",
        "radial-reduction".
    n_nodes : number of grid nodes, at least 8.
    length : circumference (circle) or domain length (others), > 0.
    phi : Potential, default constant 0.
    warp : Warp for radial reductions (required iff kind is radial-reduction).
    m : effective dimension, m >= n (math.inf allowed).
    n : topological dimension represented (1 unless a warp is given).
    start : left endpoint; defaults to 0 for circles, -length/2 for intervals;
        required for radial reductions (must keep the warp positive).
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    n_nodes = int(n_nodes)
    if n_nodes < 8:
        raise ValueError("n_nodes must be at least 8")
    length = float(length)
    if not length > 0.0:
        raise ValueError("length must be positive")
    n = int(n)
    m = float(m)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (m >= n):
        raise ValueError(f"m must be >= n (got m={m}, n={n})")

    potential = _as_potential(phi)

    if kind == "radial-reduction":
        if warp is None:
            raise ValueError("radial-reduction requires a warp")
        if isinstance(warp, str):
            warp = Warp(warp)
        if warp.kind not in _WARPS:
            raise ValueError(f"warp kind must be one of {sorted(_WARPS)}")
        if n < 2:
            raise ValueError("radial-reduction requires n >= 2")
        if start is None:
            raise ValueError("radial-reduction requires an explicit start")
    else:
        if warp is not None:
            raise ValueError(f"warp is only meaningful for radial-reduction, not {kind}")
        if n != 1:
            raise ValueError("n > 1 requires kind='radial-reduction' with a warp")

    if kind == "circle":
        start = 0.0 if start is None else float(start)
        h = length / n_nodes
        nodes = start + h * np.arange(n_nodes)
        quad_w = np.ones(n_nodes)
    else:
        start = (-0.5 * length if start is None else float(start))
        h = length / (n_nodes - 1)
        nodes = start + h * np.arange(n_nodes)
        quad_w = np.ones(n_nodes)
        quad_w[0] = quad_w[-1] = 0.5

    phi_vals = potential.value(nodes)
    if warp is not None:
        f_vals = warp.f(nodes)
        if np.any(f_vals <= 0.0):
            raise ValueError("warp profile must stay positive on the domain")
        vol_density = f_vals ** (n - 1)
        ric_radial = (n - 1) * warp.curvature(nodes)
    else:
        vol_density = np.ones(n_nodes)
        ric_radial = np.zeros(n_nodes)

    weights = vol_density * np.exp(-phi_vals)
    if np.any(weights <= 0.0) or not np.all(np.isfinite(weights)):
        raise ValueError("weight J * exp(-phi) must be positive and finite")

    phi_const = _is_constant(phi_vals)
    if m == n and not phi_const:
        raise ValueError("m == n requires a constant potential")

    space = ModelSpace(
        kind=kind, nodes=nodes, h=float(h), length=length, start=float(start),
        n=n, m=m, potential=potential, warp=warp, phi=phi_vals,
        vol_density=vol_density, ric_radial=ric_radial, weights=weights,
        quad_weights=quad_w, measure=quad_w * weights * h, K=0.0,
    )
    object.__setattr__(space, "K", max(0.0, -float(np.min(ric_mn(space)))))
    return space


def _is_constant(vals) -> bool:
    scale = max(1.0, float(np.max(np.abs(vals))))
    return float(np.ptp(vals)) <= _CONST_TOL * scale


# ---------------------------------------------------------------------------
# curvature fields

def ric_l(space: ModelSpace) -> np.ndarray:
    """Nodewise radial entry of Ric + Hess(phi)."""
    return space.ric_radial + space.potential.d2(space.nodes)


def ric_mn(space: ModelSpace, m=None, n=None) -> np.ndarray:
    """Nodewise radial entry of Ric + Hess(phi) - (dphi (x) dphi)/(m-n).

    m == n (constant potential) and m == inf both reduce to ric_l.
    """
    m = space.m if m is None else float(m)
    n = space.n if n is None else int(n)
    base = ric_l(space)
    if m == n or math.isinf(m):
        return base
    d1 = space.potential.d1(space.nodes)
    return base - d1 * d1 / (m - n)


# ---------------------------------------------------------------------------
# distances and volumes

def geodesic_distance(space: ModelSpace, x, y):
    """Geodesic distance between coordinates (arrays broadcast)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.abs(x - y)
    if space.periodic:
        d = np.minimum(d, space.length - d)
    return d if d.ndim else float(d)


def ball_volume(space: ModelSpace, center, r) -> float:
    """mu-measure of the geodesic ball B_center(r), trapezoid rule at the cut.

    Nodes at the edge of the selected run carry weight 1/2 (which coincides
    with the intrinsic wall weight when the ball reaches a domain wall); a
    ball covering the whole space returns the total measure exactly.
    """
    if r < 0:
        raise ValueError("radius must be >= 0")
    d = geodesic_distance(space, space.nodes, float(center))
    mask = d <= r * (1.0 + 1e-12) + 1e-15
    if not np.any(mask):
        return 0.0
    if np.all(mask):
        return space.total_measure
    prev_in = np.roll(mask, 1) if space.periodic else np.concatenate([[False], mask[:-1]])
    next_in = np.roll(mask, -1) if space.periodic else np.concatenate([mask[1:], [False]])
    factors = np.where(prev_in & next_in, space.quad_weights, 0.5)
    return float(np.sum((space.weights * space.h * factors)[mask]))


def ball_inside(space: ModelSpace, center, r) -> bool:
    """Whether B_center(r) stays inside a bounded domain (always true on circles)."""
    if space.periodic:
        return True
    return (center - r >= space.start - 1e-12 and
            center + r <= space.start + space.length + 1e-12)


def sphere_area(m: float) -> float:
    """Surface measure of the unit (m-1)-sphere, Gamma-continued in m."""
    return 2.0 * math.pi ** (m / 2.0) / gamma_fn(m / 2.0)


def comparison_volume(m: float, K: float, r: float) -> float:
    """Volume of the radius-r ball in the constant-curvature comparison model.

    V(r) = omega_{m-1} * int_0^r (sinh(a s)/a)^(m-1) ds with a = sqrt(K/(m-1));
    the K -> 0 (and m -> 1) limit is the flat integrand s^(m-1).
    """
    m = float(m)
    K = float(K)
    r = float(r)
    if m < 1.0:
        raise ValueError("m must be >= 1")
    if K < 0.0:
        raise ValueError("K must be >= 0")
    if r < 0.0:
        raise ValueError("r must be >= 0")
    omega = sphere_area(m)
    if r == 0.0:
        return 0.0
    if m == 1.0 or K == 0.0:
        # (anything)^0 == 1 when m == 1; flat integrand otherwise
        return omega * r ** m / m
    a = math.sqrt(K / (m - 1.0))
    val, _err = quad(lambda s: (math.sinh(a * s) / a) ** (m - 1.0), 0.0, r,
                     limit=200)
    return omega * val


# ---------------------------------------------------------------------------
# volume-ratio checks

def bishop_gromov_check(space: ModelSpace, m=None, K=None, t=1.0, center=None,
                        tol=0.05):
    """Ratio of concentric ball volumes at radii sqrt(t), sqrt(t/2) against
    the envelope 2^(m/2) exp(sqrt((m-1) K) t).

    Inconclusive when either ball exits a truncated domain.
    """
    m = space.m if m is None else float(m)
    K = space.K if K is None else float(K)
    if center is None:
        center = space.start + 0.5 * space.length
    r_big = math.sqrt(t)
    r_small = math.sqrt(t / 2.0)
    inconclusive = not ball_inside(space, center, r_big)
    v_big = ball_volume(space, center, r_big)
    v_small = ball_volume(space, center, r_small)
    ratio = v_big / v_small if v_small > 0 else math.inf
    bound = 2.0 ** (m / 2.0) * math.exp(math.sqrt(max(0.0, (m - 1.0) * K)) * t)
    return make_report(
        "bishop_gromov", bound - ratio, tol,
        witness={"t": t, "x": float(center)},
        sample_size=1,
        details={"ratio": ratio, "bound": bound, "v_big": v_big, "v_small": v_small},
        inconclusive=inconclusive,
    )


def volume_ratio_check(space: ModelSpace, m=None, K=None, t=0.25, tol=0.05,
                       max_pairs=400, seed=0):
    """Two-center comparison mu(B_y(sqrt t)) / mu(B_x(sqrt t)) against
    ((d + sqrt t)/sqrt t)^m * exp(sqrt((m-1) K) d) over sampled node pairs.

    Margins are relative to the envelope; pairs whose balls leave a truncated
    domain are skipped (counted, and the check goes inconclusive if nothing
    remains).
    """
    m = space.m if m is None else float(m)
    K = space.K if K is None else float(K)
    rt = math.sqrt(t)
    rng = np.random.default_rng(seed)
    nodes = space.nodes
    idx = rng.integers(0, nodes.size, size=(max_pairs, 2))
    worst = math.inf
    witness = {}
    skipped = 0
    used = 0
    vol_cache: dict[int, float] = {}

    def vol(i):
        if i not in vol_cache:
            vol_cache[i] = ball_volume(space, nodes[i], rt)
        return vol_cache[i]

    for i, j in idx:
        xi, yj = nodes[i], nodes[j]
        if not (ball_inside(space, xi, rt) and ball_inside(space, yj, rt)):
            skipped += 1
            continue
        d = geodesic_distance(space, xi, yj)
        envelope = ((d + rt) / rt) ** m * math.exp(math.sqrt(max(0.0, (m - 1.0) * K)) * d)
        ratio = vol(int(j)) / vol(int(i))
        rel_margin = (envelope - ratio) / envelope
        used += 1
        if rel_margin < worst:
            worst = rel_margin
            witness = {"t": t, "x": float(xi), "y": float(yj)}
    return make_report(
        "volume_ratio", worst if used else 0.0, tol,
        witness=witness, sample_size=used, excluded=0,
        details={"skipped_pairs": skipped, "radius": rt},
        inconclusive=(used == 0),
    )
