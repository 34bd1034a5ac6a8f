"""Monte Carlo engine for the canonical diffusion and its pinned bridges.

The process solves dX = b(X) dt + sqrt(2) dW with b = (log w)', so its
generator is exactly the operator the grid modules discretize (second
derivative plus drift, full Laplacian normalization).  Bridges are the
same process with the extra drift 2 d/dx log p_{T-t}(x, y), integrated to
T - 10 dt and snapped to the target, where the drift turns singular.

Every stochastic check reports a 95% confidence interval and never passes
on a point estimate alone.  Estimators use paired per-path differences
where the two sides share paths, which cancels most of the MC variance.

Reproducibility: path p draws its noise from a counter-based stream keyed
by (seed, p), so results are bit-identical for a given (seed, dt, n_paths,
space) regardless of chunking, and paths can be regenerated independently.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .geometry import ModelSpace, ric_l
from .heatflow import CLAMP, HeatKernel, HeatSolution
from .operators import gradient, hessian
from .reports import CheckReport, make_report

Z95 = 1.959963984540054  # two-sided 95% normal quantile

_MASK64 = (1 << 64) - 1

# Euler steps larger than this multiple of h^2 would let single increments
# jump across grid-scale structure the drift interpolation cannot see
DT_CAP_FACTOR = 10.0

MIN_PATHS = 1000

PATH_MAGIC = b"HLPATHS1"


@dataclass(frozen=True, eq=False)
class DiffusionEnsemble:
    """Simulated paths of the canonical diffusion (or its bridge).

    paths has shape (n_paths, times.size); row p is path p sampled at
    `times`.  For bridges the final column sits at exactly T (snapped to
    the target) while the marching stops at T - 10 dt.  disp holds the
    final unwrapped displacement on periodic spaces, None elsewhere.
    """
    space: ModelSpace
    seed: int
    n_paths: int
    dt: float
    x0: float
    times: np.ndarray
    paths: np.ndarray
    boundary: str                # "wrap" or "reflect"
    bridge: bool = False
    target: tuple | None = None  # (y, T) when bridge
    disp: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    def index_at(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def at(self, t: float) -> np.ndarray:
        return self.paths[:, self.index_at(t)]


def _check_mc_params(space: ModelSpace, dt: float, n_paths: int) -> None:
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    cap = DT_CAP_FACTOR * space.h * space.h
    if dt > cap:
        raise ValueError(
            f"dt = {dt:g} exceeds the stability guard {cap:g} "
            f"(= {DT_CAP_FACTOR:g} h^2) for this grid")
    if n_paths < MIN_PATHS:
        raise ValueError(f"n_paths must be >= {MIN_PATHS}")


def _wrap(space: ModelSpace, x: np.ndarray) -> np.ndarray:
    a = space.start
    if space.periodic:
        return (x - a) % space.length + a
    d = (x - a) % (2.0 * space.length)
    return a + np.where(d <= space.length, d, 2.0 * space.length - d)


def _interp(space: ModelSpace, xs: np.ndarray, f_grid: np.ndarray) -> np.ndarray:
    """Linear interpolation of a grid function, periodic-aware."""
    if space.periodic:
        nodes = np.append(space.nodes, space.start + space.length)
        vals = np.append(f_grid, f_grid[0])
        return np.interp(xs, nodes, vals)
    return np.interp(xs, space.nodes, f_grid)


def _path_noise(seed: int, p_lo: int, p_hi: int, steps: int) -> np.ndarray:
    """(p_hi - p_lo, steps) standard normals, stream keyed by (seed, p)."""
    out = np.empty((p_hi - p_lo, steps))
    key = np.empty(2, dtype=np.uint64)
    key[0] = seed & _MASK64
    for i, p in enumerate(range(p_lo, p_hi)):
        key[1] = p
        out[i] = Generator(Philox(key=key.copy())).standard_normal(steps)
    return out


_CHUNK = 4096


def simulate(space: ModelSpace, x0: float, T: float, dt: float, n_paths: int,
             seed: int) -> DiffusionEnsemble:
    """Euler-Maruyama paths of dX = b(X) dt + sqrt(2) dW from x0.

    dt is rounded so an integer number of steps lands exactly on T.
    Exits are wrapped on circles and mirror-reflected otherwise, matching
    the grid operator's closure.
    """
    _check_mc_params(space, dt, n_paths)
    if T <= 0.0:
        raise ValueError("T must be positive")
    steps = max(1, int(round(T / dt)))
    dt = T / steps
    times = np.arange(steps + 1) * dt
    paths = np.empty((n_paths, steps + 1))
    disp = np.empty(n_paths) if space.periodic else None
    root = math.sqrt(2.0 * dt)
    for lo in range(0, n_paths, _CHUNK):
        hi = min(lo + _CHUNK, n_paths)
        noise = _path_noise(seed, lo, hi, steps)
        x = np.full(hi - lo, float(x0))
        raw = x.copy()
        block = paths[lo:hi]
        block[:, 0] = x
        for j in range(steps):
            inc = space.drift(x) * dt + root * noise[:, j]
            raw += inc
            x = _wrap(space, x + inc)
            block[:, j + 1] = x
        if disp is not None:
            disp[lo:hi] = raw - x0
    assert paths.min() >= space.start - 1e-12
    assert paths.max() <= space.start + space.length + 1e-12
    return DiffusionEnsemble(space=space, seed=seed, n_paths=n_paths, dt=dt,
                             x0=float(x0), times=times, paths=paths,
                             boundary="wrap" if space.periodic else "reflect",
                             disp=disp)


def simulate_bridge(space: ModelSpace, kern: HeatKernel, x0: float, y: float,
                    T: float, dt: float, n_paths: int,
                    seed: int) -> DiffusionEnsemble:
    """Pinned paths: extra drift 2 d/dx log p_{T-t}(x, y), stop at T - 10 dt.

    The conditioning drift is evaluated by linear interpolation of the
    spectral log-kernel gradient on the grid.  The final stored column is
    snapped to y at time exactly T (the pinned process hits y almost
    surely; the last 10 dt are below the time resolution of the scheme).
    """
    _check_mc_params(space, dt, n_paths)
    steps = int(round(T / dt)) - 10
    if steps < 10:
        raise ValueError("T must cover at least 20 steps of size dt")
    y_idx = space.index_of(y)
    y = float(space.nodes[y_idx])

    # conditioning drift on the grid, sampled at each step's time midpoint
    # (the remaining-time 1/tau scale varies within a step; midpoint
    # sampling cancels the first-order integration bias near the stop)
    taus = T - (np.arange(steps) + 0.5) * dt   # >= 9.5 dt
    cols = kern.columns(taus, y_idx)           # (n_nodes, steps)
    glog = gradient(space, np.log(np.maximum(cols, CLAMP)).T).T

    times = np.append(np.arange(steps + 1) * dt, T)
    paths = np.empty((n_paths, steps + 2))
    root = math.sqrt(2.0 * dt)
    for lo in range(0, n_paths, _CHUNK):
        hi = min(lo + _CHUNK, n_paths)
        noise = _path_noise(seed, lo, hi, steps)
        x = np.full(hi - lo, float(x0))
        block = paths[lo:hi]
        block[:, 0] = x
        for j in range(steps):
            b = space.drift(x) + 2.0 * _interp(space, x, glog[:, j])
            x = _wrap(space, x + b * dt + root * noise[:, j])
            block[:, j + 1] = x
        block[:, steps + 1] = y
    return DiffusionEnsemble(space=space, seed=seed, n_paths=n_paths, dt=dt,
                             x0=float(x0), times=times, paths=paths,
                             boundary="wrap" if space.periodic else "reflect",
                             bridge=True, target=(y, float(T)))


# ---------------------------------------------------------------------------
# pathwise functional of the gradient-estimate proof

def psi_weight(K: float, t):
    """(1 - e^{-2Kt}) / 2K, the weight solving psi' + 2K psi = 1; t at K=0."""
    t = np.asarray(t, dtype=float)
    out = t if K == 0.0 else -np.expm1(-2.0 * K * t) / (2.0 * K)
    return out if out.ndim else float(out)


def supermartingale_h(space: ModelSpace, solution: HeatSolution, K: float,
                      T: float, ensemble: DiffusionEnsemble,
                      n_slices: int = 9, tolerance: float = 1e-8) -> CheckReport:
    """E[h(X_s, T-s)] is non-decreasing in s, within paired 95% bands.

    h(x, t) = psi(t) |grad u(t,x)|^2 / u(t,x) - u(t,x) log(A / u(t,x)) with
    A the space-time supremum of the solution.  The drift part of h along
    the diffusion is nonnegative (that is the content of the gradient
    estimate), so each paired increment must clear -z * SE, and the
    endpoint must satisfy E[h(X_T, 0)] >= h(x0, T) - band.
    """
    if ensemble.bridge:
        raise ValueError("supermartingale_h expects an unconditioned ensemble")
    a_sup = solution.sup
    s_grid = np.unique(ensemble.times[np.linspace(
        0, ensemble.index_at(T), n_slices).round().astype(int)])

    h_paths = np.empty((len(s_grid), ensemble.n_paths))
    for i, s in enumerate(s_grid):
        tau = T - float(s)
        u = solution.at(tau)
        h_grid = -u * np.log(a_sup / u)
        if tau > 0.0:
            g = gradient(space, np.log(u))
            h_grid = psi_weight(K, tau) * g * g * u + h_grid
        h_paths[i] = _interp(space, ensemble.at(float(s)), h_grid)

    rp = math.sqrt(ensemble.n_paths)
    inc_margin = math.inf
    worst = {}
    for i in range(len(s_grid) - 1):
        d = h_paths[i + 1] - h_paths[i]
        band = Z95 * float(np.std(d)) / rp
        m = float(np.mean(d)) + band
        if m < inc_margin:
            inc_margin = m
            worst = {"s_lo": float(s_grid[i]), "s_hi": float(s_grid[i + 1]),
                     "band": band}
    u_T = solution.at(T)
    gT = gradient(space, np.log(u_T))
    h0 = float(_interp(space, np.array([ensemble.x0]),
                       psi_weight(K, T) * gT * gT * u_T
                       - u_T * np.log(a_sup / u_T))[0])
    end_band = Z95 * float(np.std(h_paths[-1])) / rp
    end_margin = float(np.mean(h_paths[-1])) + end_band - h0
    return make_report(
        "supermartingale_h", min(inc_margin, end_margin), tolerance,
        witness=worst, sample_size=ensemble.n_paths,
        ci_halfwidth=max(worst.get("band", 0.0), end_band),
        details={"K": K, "h_start": h0,
                 "h_means": [float(np.mean(r)) for r in h_paths],
                 "s_grid": [float(s) for s in s_grid],
                 "endpoint_margin": end_margin, "increment_margin": inc_margin},
    )


# ---------------------------------------------------------------------------
# bridge functionals of the log-kernel

def _log_kernel_on_paths(space, kern, ensemble, y_idx, t_indices, order=0):
    """Rows: functional of J(t, .) = log p_{T-t}(., y) along paths at t_j."""
    _, T = ensemble.target
    out = np.empty((len(t_indices), ensemble.n_paths))
    taus = T - ensemble.times[t_indices]
    cols = kern.columns(taus, y_idx)
    logs = np.log(np.maximum(cols, CLAMP))
    for i, j in enumerate(t_indices):
        f = logs[:, i]
        if order == 1:
            f = gradient(space, f)
        elif order == 2:
            f = hessian(space, f)
        out[i] = _interp(space, ensemble.paths[:, j], f)
    return out


def bridge_energy_identity(space: ModelSpace, kern: HeatKernel, x0: float,
                           y: float, T: float, ensemble: DiffusionEnsemble,
                           rel_tolerance: float = 0.05) -> CheckReport:
    """E[J(T/2, X_{T/2})] - J(0, x0) = E[int_0^{T/2} |grad J|^2 dt], paired.

    J(t, .) = log p_{T-t}(., y) along bridge paths.  The per-path residual
    Y_p = (J_half - J_0) - quadrature_p has mean zero in the limit; the
    check passes when |mean Y| clears both the relative gate and the 95%
    band widened by an explicit Euler/trapezoid bias allowance O(dt).
    """
    if not ensemble.bridge:
        raise ValueError("bridge_energy_identity expects a bridge ensemble")
    y_idx = space.index_of(y)
    half = ensemble.index_at(0.5 * T)
    idx = np.arange(half + 1)
    j_end = _log_kernel_on_paths(space, kern, ensemble, y_idx, [half])[0]
    gj = _log_kernel_on_paths(space, kern, ensemble, y_idx, idx, order=1)
    energy = np.trapezoid(gj * gj, ensemble.times[idx], axis=0)
    logp_T = np.log(np.maximum(kern.column(T, y_idx), CLAMP))
    j0 = float(_interp(space, np.array([float(x0)]), logp_T)[0])

    resid = (j_end - j0) - energy
    gap = float(np.mean(resid))
    se = float(np.std(resid)) / math.sqrt(ensemble.n_paths)
    # quadrature + weak-Euler bias allowance: dt times the swing of the
    # integrand mean across the window, plus dt relative to the scale
    mean_rate = np.mean(gj * gj, axis=1)
    bias = ensemble.dt * (0.5 * float(np.abs(np.diff(mean_rate)).sum())
                          + float(np.max(mean_rate)))
    scale = max(abs(float(np.mean(j_end)) - j0), float(np.mean(energy)), 1e-12)
    allowance = min(rel_tolerance * scale, Z95 * se + bias)
    return make_report(
        "bridge_energy_identity", allowance - abs(gap), 0.0,
        sample_size=ensemble.n_paths, ci_halfwidth=Z95 * se,
        witness={"t": 0.5 * T},
        details={"gap": gap, "lhs": float(np.mean(j_end)) - j0,
                 "rhs": float(np.mean(energy)), "scale": scale,
                 "rel_gap": abs(gap) / scale, "bias_allowance": bias},
    )


def gradient_energy_derivative(space: ModelSpace, kern: HeatKernel,
                               ensemble: DiffusionEnsemble, t: float,
                               window: int = 20,
                               rel_tolerance: float = 1e-3) -> CheckReport:
    """d/dt E|grad J(t, X_t)|^2 = 2 E[(grad^2 J)^2 + ric_l (grad J)^2].

    The left side is a per-path least-squares slope over a symmetric step
    window around t (centering kills the quadratic-term bias); the right
    side is evaluated on the same paths at t, so the comparison is a
    paired mean whose 95% band gates the verdict.
    """
    if not ensemble.bridge:
        raise ValueError("gradient_energy_derivative expects a bridge ensemble")
    y, T = ensemble.target
    y_idx = space.index_of(y)
    jc = ensemble.index_at(t)
    if jc - window < 0 or jc + window > ensemble.n_steps - 1:
        raise ValueError("t too close to the ends for the slope window")
    idx = np.arange(jc - window, jc + window + 1)
    gj = _log_kernel_on_paths(space, kern, ensemble, y_idx, idx, order=1)
    ts = ensemble.times[idx]
    tc = ts - ts.mean()
    slope = (tc @ (gj * gj)) / float(tc @ tc)   # per-path OLS slope

    gj_t = _log_kernel_on_paths(space, kern, ensemble, y_idx, [jc], order=1)[0]
    hj_t = _log_kernel_on_paths(space, kern, ensemble, y_idx, [jc], order=2)[0]
    ric_t = _interp(space, ensemble.paths[:, jc], ric_l(space))
    rhs = 2.0 * (hj_t * hj_t + ric_t * gj_t * gj_t)

    d = slope - rhs
    gap = float(np.mean(d))
    se = float(np.std(d)) / math.sqrt(ensemble.n_paths)
    scale = max(abs(float(np.mean(slope))), abs(float(np.mean(rhs))), 1.0)
    allowance = Z95 * se + rel_tolerance * scale
    return make_report(
        "gradient_energy_derivative", allowance - abs(gap), 0.0,
        sample_size=ensemble.n_paths, ci_halfwidth=Z95 * se,
        witness={"t": float(ensemble.times[jc])},
        details={"gap": gap, "lhs_slope": float(np.mean(slope)),
                 "rhs": float(np.mean(rhs)), "scale": scale,
                 "window_halfwidth": float(ts[-1] - ts[window])},
    )


def harnack_via_bridge(space: ModelSpace, kern: HeatKernel, x0: float,
                       y: float, T: float, ensemble: DiffusionEnsemble,
                       K: float, grid_tolerance: float = 1e-3) -> CheckReport:
    """|grad log p_T(x0, y)|^2 <= 2 (1/T + K) E[log(p_{T/2}(X_{T/2}, y)/p_T(x0, y))].

    Left side from the spectral kernel, right side over bridge paths;
    passes when margin >= -(95% band + grid tolerance).
    """
    if not ensemble.bridge:
        raise ValueError("harnack_via_bridge expects a bridge ensemble")
    y_idx = space.index_of(y)
    logp_T = np.log(np.maximum(kern.column(T, y_idx), CLAMP))
    lhs_grid = gradient(space, logp_T) ** 2
    lhs = float(_interp(space, np.array([float(x0)]), lhs_grid)[0])

    half = ensemble.index_at(0.5 * T)
    j_half = _log_kernel_on_paths(space, kern, ensemble, y_idx, [half])[0]
    log_ratio = j_half - float(_interp(space, np.array([float(x0)]), logp_T)[0])
    coeff = 2.0 * (1.0 / T + K)
    rhs = coeff * float(np.mean(log_ratio))
    band = coeff * Z95 * float(np.std(log_ratio)) / math.sqrt(ensemble.n_paths)
    return make_report(
        "harnack_via_bridge", rhs - lhs, band + grid_tolerance,
        sample_size=ensemble.n_paths, ci_halfwidth=band,
        witness={"x": float(x0), "y": float(y), "t": float(T)},
        details={"lhs": lhs, "rhs": rhs, "K": K,
                 "mean_log_ratio": float(np.mean(log_ratio))},
    )


# ---------------------------------------------------------------------------
# law-level cross checks

def empirical_law_distance(space: ModelSpace, kern: HeatKernel,
                           ensemble: DiffusionEnsemble, t: float | None = None,
                           tolerance: float = 0.05) -> CheckReport:
    """L1 distance between the empirical law at t and the kernel law.

    The bin count is capped so the multinomial noise floor ~ sqrt(bins/P)
    stays resolution-independent: finer grids refine the model law inside
    each bin, they must not inflate the distance.  Distance <= tolerance is
    the scenario-level gate; the constant in front of dt + P^{-1/2} is
    reported for the record.
    """
    if ensemble.bridge:
        raise ValueError("empirical_law_distance expects an unconditioned ensemble")
    t = float(ensemble.times[-1] if t is None else t)
    xs = ensemble.at(t)
    col = kern.column(t, space.index_of(ensemble.x0))   # density wrt mu
    cell = col * space.measure                          # node probabilities

    n_bins = max(4, min(24, space.n_nodes // 8))
    edges = np.linspace(space.start, space.start + space.length, n_bins + 1)
    emp, _ = np.histogram(xs, bins=edges)
    emp = emp / ensemble.n_paths
    model = np.zeros(n_bins)
    bin_of = np.clip(((space.nodes - space.start) / space.length * n_bins)
                     .astype(int), 0, n_bins - 1)
    np.add.at(model, bin_of, cell)
    model = model / model.sum()
    l1 = float(np.abs(emp - model).sum())
    rate = ensemble.dt + 1.0 / math.sqrt(ensemble.n_paths)
    return make_report(
        "empirical_law", tolerance - l1, 0.0,
        sample_size=ensemble.n_paths, witness={"t": t},
        details={"l1": l1, "n_bins": n_bins, "fitted_constant": l1 / rate},
    )


def girsanov_consistency(space: ModelSpace, kern: HeatKernel,
                         free: DiffusionEnsemble, bridge: DiffusionEnsemble,
                         t: float | None = None,
                         tolerance: float = 1e-3) -> CheckReport:
    """Reweighting free paths by p_{T-t}(X_t, y) / p_T(x0, y) reproduces
    bridge expectations of bounded observables, within joint 95% bands."""
    if bridge.target is None:
        raise ValueError("second ensemble must be a bridge")
    if free.bridge:
        raise ValueError("first ensemble must be unconditioned")
    y, T = bridge.target
    y_idx = space.index_of(y)
    t = float(0.5 * T if t is None else t)
    xf = free.at(t)
    xb = bridge.at(t)
    col = kern.column(T - t, y_idx)
    logp_T = np.log(np.maximum(kern.column(T, y_idx), CLAMP))
    p_x0 = math.exp(_interp(space, np.array([free.x0]), logp_T)[0])
    w = _interp(space, xf, col) / max(p_x0, CLAMP)
    rp = math.sqrt(free.n_paths)
    margin = math.inf
    ci = 0.0
    obs = {}
    for name, f in (("position", lambda x: x),
                    ("spread", lambda x: (x - y) ** 2)):
        fw = f(xf) * w
        lhs = float(np.mean(fw))
        rhs = float(np.mean(f(xb)))
        band = Z95 * (float(np.std(fw)) / rp
                      + float(np.std(f(xb))) / math.sqrt(bridge.n_paths))
        m = band + tolerance - abs(lhs - rhs)
        obs[name] = {"reweighted": lhs, "bridge": rhs, "band": band}
        ci = max(ci, band)
        margin = min(margin, m)
    return make_report(
        "girsanov_consistency", margin, 0.0,
        sample_size=free.n_paths, ci_halfwidth=ci, witness={"t": t},
        details={"observables": obs, "weight_mean": float(np.mean(w))},
    )


# ---------------------------------------------------------------------------
# exports

def export_moments_csv(ensemble: DiffusionEnsemble, path) -> None:
    """Per-time ensemble summaries: mean, variance, extremes."""
    with open(path, "w") as fh:
        fh.write("t,mean,var,min,max\n")
        for j, t in enumerate(ensemble.times):
            col = ensemble.paths[:, j]
            fh.write(",".join(repr(float(v)) for v in
                              (t, col.mean(), col.var(), col.min(), col.max()))
                     + "\n")


def dump_paths(ensemble: DiffusionEnsemble, path) -> None:
    """Binary layout: magic, uint64 n_paths, uint64 n_times, float64 dt,
    times array, then the row-major (n_paths, n_times) float64 path matrix.
    All fields little-endian."""
    with open(path, "wb") as fh:
        fh.write(PATH_MAGIC)
        fh.write(struct.pack("<QQd", ensemble.n_paths, ensemble.times.size,
                             ensemble.dt))
        fh.write(ensemble.times.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(ensemble.paths, dtype="<f8").tobytes())


def load_paths(path):
    """Inverse of dump_paths: (times, paths, dt)."""
    with open(path, "rb") as fh:
        if fh.read(8) != PATH_MAGIC:
            raise ValueError("not a path dump")
        n_paths, n_times, dt = struct.unpack("<QQd", fh.read(24))
        times = np.frombuffer(fh.read(8 * n_times), dtype="<f8")
        paths = np.frombuffer(fh.read(8 * n_paths * n_times),
                              dtype="<f8").reshape(n_paths, n_times)
    return times, paths, float(dt)
