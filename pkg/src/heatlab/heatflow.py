"""Heat flow and heat kernel of the weighted Laplacian.

Two routes to the same semigroup, kept deliberately independent so they can
cross-check each other:

* `solve` marches u' = L u with Crank–Nicolson (the first step is replaced by
  two backward-Euler half-steps, which reuses the same factored matrix, keeps
  second-order accuracy for smooth data and preserves positivity for rough
  data);
* `kernel` diagonalizes D^(1/2) (-L) D^(-1/2) densely and evaluates
  p_t(x, y) = sum_k exp(-lambda_k t) e_k(x) e_k(y) with the eigenbasis
  orthonormal in L^2(mu).

Kernel values far below the spectral roundoff floor are numerical noise; the
log accessors clamp at 1e-300 and report a validity mask so downstream checks
can exclude (and count) those nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .geometry import ModelSpace
from .operators import DiscreteOperator, gradient

CLAMP = 1e-300
LOG_CLAMP = float(np.log(CLAMP))
# relative floor under which dense-eigh kernel values are treated as noise
NOISE_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# initial profiles

def normalize(space: ModelSpace, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    mass = float(np.dot(space.measure, u))
    if mass <= 0.0:
        raise ValueError("cannot normalize a profile with non-positive mass")
    return u / mass

def uniform_density(space: ModelSpace) -> np.ndarray:
    return np.full(space.n_nodes, 1.0 / space.total_measure)

def bump_density(space: ModelSpace, center=None, width=None) -> np.ndarray:
    """Strictly positive normalized Gaussian bump."""
    if center is None:
        center = space.start + 0.5 * space.length
    if width is None:
        width = space.length / 8.0
    d = space.distance(space.nodes, float(center))
    return normalize(space, np.exp(-((d / width) ** 2)))

def two_bump_density(space: ModelSpace, separation=None, width=None) -> np.ndarray:
    if separation is None:
        separation = space.length / 2.5
    if width is None:
        width = space.length / 12.0
    mid = space.start + 0.5 * space.length
    d1 = space.distance(space.nodes, mid - 0.5 * separation)
    d2 = space.distance(space.nodes, mid + 0.5 * separation)
    prof = np.exp(-((d1 / width) ** 2)) + 0.6 * np.exp(-((d2 / width) ** 2))
    return normalize(space, prof)


# ---------------------------------------------------------------------------
# time stepping

@dataclass(frozen=True, eq=False)
class HeatSolution:
    space: ModelSpace
    times: np.ndarray      # snapshot times, times[0] == 0
    data: np.ndarray       # (n_snapshots, n_nodes), data[0] == u0
    dt: float

    @property
    def sup(self) -> float:
        """Supremum over space and all stored times (t = 0 included)."""
        return float(self.data.max())

    def at(self, t: float) -> np.ndarray:
        return self.data[self.index_at(t)]

    def index_at(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    @property
    def mass_drift(self) -> float:
        masses = self.data @ self.space.measure
        return float(np.max(np.abs(masses / masses[0] - 1.0)))


def solve(op: DiscreteOperator, u0: np.ndarray, t_end: float, dt: float | None = None,
          store_every: int | None = None) -> HeatSolution:
    """March u' = L u from u0 to t_end.

    dt defaults to h^2/2 and is rounded so an integer number of steps lands
    exactly on t_end.  Snapshots are stored every `store_every` steps (first
    and last always); the default keeps at most ~600 rows.
    """
    space = op.space
    u = np.asarray(u0, dtype=float).copy()
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    if t_end == 0:
        return HeatSolution(space=space, times=np.zeros(1), data=u[None, :], dt=0.0)
    if dt is None:
        dt = 0.5 * space.h * space.h
    steps = max(1, int(np.ceil(t_end / dt - 1e-9)))
    dt = t_end / steps
    if store_every is None:
        store_every = max(1, steps // 600)

    n = space.n_nodes
    eye = sp.identity(n, format="csc")
    lmat = op.matrix()
    solver = splu((eye - 0.5 * dt * lmat).tocsc())
    forward = (eye + 0.5 * dt * lmat).tocsr()

    times = [0.0]
    rows = [u.copy()]
    for j in range(steps):
        if j == 0:
            # two backward-Euler half-steps; same matrix as the CN solve
            u = solver.solve(u)
            u = solver.solve(u)
        else:
            u = solver.solve(forward @ u)
        if (j + 1) % store_every == 0 or j == steps - 1:
            times.append((j + 1) * dt)
            rows.append(u.copy())
    return HeatSolution(space=space, times=np.asarray(times),
                        data=np.asarray(rows), dt=dt)


# ---------------------------------------------------------------------------
# spectral kernel

@dataclass(frozen=True, eq=False)
class HeatKernel:
    space: ModelSpace
    op: DiscreteOperator
    lam: np.ndarray    # eigenvalues of -L, ascending, lam[0] ~ 0
    basis: np.ndarray  # (n_nodes, n_modes), columns orthonormal in L^2(mu)

    def column(self, t: float, j: int) -> np.ndarray:
        """p_t(. , x_j) on the grid."""
        coef = np.exp(-self.lam * t) * self.basis[j]
        return self.basis @ coef

    def columns(self, ts: np.ndarray, j: int) -> np.ndarray:
        """(n_nodes, len(ts)) batch of p_t(., x_j), one BLAS call."""
        ts = np.asarray(ts, dtype=float)
        coef = self.basis[j][:, None] * np.exp(-np.outer(self.lam, ts))
        return self.basis @ coef

    def matrix(self, t: float) -> np.ndarray:
        return (self.basis * np.exp(-self.lam * t)) @ self.basis.T

    def value(self, t: float, i: int, j: int) -> float:
        return float(np.dot(self.basis[i] * np.exp(-self.lam * t), self.basis[j]))

    def log_column(self, t: float, j: int):
        """(log p clamped at log 1e-300, validity mask above the noise floor)."""
        col = self.column(t, j)
        floor = max(CLAMP, NOISE_FLOOR * float(col.max()))
        return np.log(np.maximum(col, CLAMP)), col > floor

    def mass_defect(self, t: float) -> float:
        """max_i |int p_t(x_i, y) d mu(y) - 1| (exact stochastic completeness)."""
        proj = self.basis.T @ self.space.measure  # <e_k, 1>_mu
        vals = self.basis @ (np.exp(-self.lam * t) * proj)
        return float(np.max(np.abs(vals - 1.0)))

    def export_csv(self, path, t: float) -> None:
        """Snapshot CSV: first row y-coordinates, first column x-coordinates."""
        mat = self.matrix(t)
        nodes = self.space.nodes
        with open(path, "w") as fh:
            fh.write("x\\y," + ",".join(repr(v) for v in nodes) + "\n")
            for i, x in enumerate(nodes):
                fh.write(repr(float(x)) + "," +
                         ",".join(repr(float(v)) for v in mat[i]) + "\n")


def kernel(op: DiscreteOperator) -> HeatKernel:
    """Dense symmetric eigendecomposition of D^(1/2) (-L) D^(-1/2)."""
    d = op.measure
    s = np.sqrt(d)
    a = (-op.matrix()).toarray()
    sym = a * (s[:, None] / s[None, :])
    sym = 0.5 * (sym + sym.T)
    lam, vecs = scipy.linalg.eigh(sym)
    return HeatKernel(space=op.space, op=op, lam=lam, basis=vecs / s[:, None])


class AnalyticGaussianKernel:
    """Closed-form free-line Gaussian kernel, duck-typed like HeatKernel.

    Valid as an oracle on flat truncated lines (phi == 0, measure = dx) away
    from the walls: p_t(x, y) = exp(-(x-y)^2 / 4t) / sqrt(4 pi t).
    """

    def __init__(self, space: ModelSpace):
        self.space = space
        self.op = None

    def _vals(self, t: float, j: int) -> np.ndarray:
        d = self.space.nodes - self.space.nodes[j]
        return np.exp(-d * d / (4.0 * t)) / np.sqrt(4.0 * np.pi * t)

    def column(self, t: float, j: int) -> np.ndarray:
        return self._vals(t, j)

    def columns(self, ts, j: int) -> np.ndarray:
        return np.stack([self._vals(t, j) for t in np.asarray(ts, dtype=float)], axis=1)

    def value(self, t: float, i: int, j: int) -> float:
        return float(self._vals(t, j)[i])

    def log_column(self, t: float, j: int):
        col = self._vals(t, j)
        return np.log(np.maximum(col, CLAMP)), col > CLAMP * 10.0


class AnalyticOUKernel:
    """Closed-form Mehler kernel for a quadratic potential on the line.

    For phi = a x^2/2 + c the diffusion is Ornstein-Uhlenbeck; the kernel
    with respect to mu = e^(-phi) dx is

        p_t(x, y) = exp(-(y - e^(-at) x)^2 / (2 v) + phi(y)) / sqrt(2 pi v),
        v = (1 - e^(-2at)) / a,

    symmetric in (x, y).  Oracle use only: valid on truncated lines while
    the mass near the walls is negligible.
    """

    def __init__(self, space: ModelSpace):
        pot = space.potential
        if pot.kind != "quadratic" or pot.coeff <= 0.0:
            raise ValueError("AnalyticOUKernel needs a quadratic potential with"
                             " positive coefficient")
        self.space = space
        self.op = None
        self._a = pot.coeff

    def _vals(self, t: float, j: int) -> np.ndarray:
        a = self._a
        v = -np.expm1(-2.0 * a * t) / a
        y = self.space.nodes
        sq = (y - np.exp(-a * t) * self.space.nodes[j]) ** 2
        return np.exp(-sq / (2.0 * v) + self.space.phi) / np.sqrt(2.0 * np.pi * v)

    def column(self, t: float, j: int) -> np.ndarray:
        return self._vals(t, j)

    def columns(self, ts, j: int) -> np.ndarray:
        return np.stack([self._vals(t, j) for t in np.asarray(ts, dtype=float)], axis=1)

    def value(self, t: float, i: int, j: int) -> float:
        return float(self._vals(t, j)[i])

    def log_column(self, t: float, j: int):
        col = self._vals(t, j)
        return np.log(np.maximum(col, CLAMP)), col > CLAMP * 10.0


# ---------------------------------------------------------------------------
# Hamilton-Jacobi residual of the log-kernel

@dataclass(frozen=True)
class HJDefect:
    times: np.ndarray
    per_t: np.ndarray
    max_defect: float
    excluded: int
    sample_size: int


def hamilton_jacobi_defect(kern: HeatKernel, T: float, y_idx: int,
                           ts: np.ndarray | None = None, pad: int = 3,
                           rel_floor: float = 1e-5) -> HJDefect:
    """Residual of  dJ/dt + L J + |grad J|^2 = 0  for J(t) = log p_(T-t)(., y).

    dJ/dt is evaluated spectrally (-L p / p, exact in t), L J and grad J with
    the discrete operator and nodal stencils, so the residual measures pure
    spatial discretization error, O(h^2) on fixed (t, y).  Times keep a
    10-step window clear of t = T (kernel blow-up), with dt_ref = h^2/2.

    The default grid spans kernel ages s = T - t from 0.95*T down to T/4,
    an h-independent window, so maxima are comparable across refinement
    levels (an s tied to the blow-up guard would shrink with h and amplify
    the stencil error like 1/h^2 instead of shrinking like h^2).  The floor
    T/4 keeps the sharpest slice resolved at desk-scale grids; pass ts to
    probe closer to the blow-up window.

    rel_floor sets the trust window p >= rel_floor * max(p): approaching the
    1e-12 validity floor, tail round-off corrupts log p at O(1) and its
    stencils blow up like 1/h^2, so the defect is read a couple of decades
    above it.  The window shrinks by 2 nodes at its seams.
    """
    space = kern.space
    dt_ref = 0.5 * space.h * space.h
    if ts is None:
        hi = T - max(T / 4.0, 10.0 * dt_ref)
        lo = 0.05 * T
        if not hi > lo:
            raise ValueError("T too small for the default interior time grid")
        ts = np.geomspace(lo, hi, 6)
    ts = np.asarray(ts, dtype=float)
    if np.any(T - ts < 10.0 * dt_ref - 1e-15):
        raise ValueError("times must satisfy T - t >= 10 * dt (kernel blow-up window)")

    interior = np.ones(space.n_nodes, dtype=bool)
    if not space.periodic and pad > 0:
        interior[:pad] = interior[-pad:] = False

    per_t = np.empty(ts.size)
    excluded = 0
    total = 0
    for k, t in enumerate(ts):
        s = T - t
        p = kern.column(s, y_idx)
        logp, valid = kern.log_column(s, y_idx)
        djdt = np.where(p > 0, -kern.op.apply(p) / np.maximum(p, CLAMP), 0.0)
        lj = kern.op.apply(logp)
        gj = gradient(space, logp)
        defect = djdt + lj + gj * gj
        # trust window, shrunk by 2 so no stencil straddles its seam (roll is
        # wrap-correct on circles; ends are inside the interior pad otherwise)
        ok = valid & (p >= rel_floor * float(p.max()))
        for _ in range(2):
            ok &= np.roll(ok, 1) & np.roll(ok, -1)
        use = ok & interior
        total += int(interior.sum())
        excluded += int(interior.sum() - use.sum())
        per_t[k] = float(np.max(np.abs(defect[use]))) if use.any() else np.nan
    return HJDefect(times=ts, per_t=per_t, max_defect=float(np.nanmax(per_t)),
                    excluded=excluded, sample_size=total)
