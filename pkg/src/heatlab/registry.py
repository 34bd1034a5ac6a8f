"""Named check registry: every scenario-runnable check with its anchor.

Each entry binds a check name to a runner over a per-level context and
declares how the runner participates in the grid-refinement ladder:

``level``   runs at every ladder level; each level gets its own verdict.
``finest``  runs once, at the finest level (oracle comparisons and Monte
            Carlo checks whose cost or accuracy gate only makes sense on
            the best grid).
``ladder``  runs at every level to fit a constant or measure a defect
            (informational rows), then a combiner turns the per-level
            values into one cross-level verdict: a convergence order or a
            drift bound on a fitted constant.

The anchor and gist strings are presentation data consumed by list-checks
and report.md so results can be matched against the source statements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import entropy as ent
from . import geometry as geo
from . import harnack as har
from . import lsi as lsi_mod
from . import stochastic as sto
from .heatflow import AnalyticGaussianKernel, AnalyticOUKernel, bump_density, \
    hamilton_jacobi_defect, normalize, two_bump_density, uniform_density
from .operators import bochner_defect, ibp_defect, row_sum_defect, symmetry_defect
from .reports import PASS, CheckReport, make_report


@dataclass(frozen=True)
class CheckDef:
    name: str
    anchor: str
    gist: str
    mode: str                   # "level" | "finest" | "ladder"
    tolerance: float            # margin tolerance; for ladder: the combiner's
    runner: object              # fn(ctx, tol) -> CheckReport
    combiner: object = None     # fn(levels: [(n, CheckReport)], tol) -> CheckReport
    uses_mc: bool = False


# ---------------------------------------------------------------------------
# structural checks


def _run_operator_structure(ctx, tol):
    op = ctx.op
    space = ctx.space
    u = bump_density(space)
    v = np.cos(2.0 * np.pi * (space.nodes - space.start) / space.length)
    defects = {
        "symmetry": symmetry_defect(op),
        "row_sums": row_sum_defect(op),
        "ibp": ibp_defect(op, u, v),
    }
    worst = max(defects, key=defects.get)
    return make_report("operator_structure", -defects[worst], tol,
                       sample_size=space.n_nodes, details=defects)


def _run_mass_conservation(ctx, tol):
    drift = ctx.solution.mass_drift
    kdefs = [ctx.kern.mass_defect(float(t)) for t in ctx.times]
    value = max(drift, max(kdefs))
    j = int(np.argmax(kdefs))
    return make_report("mass_conservation", -value, tol,
                       witness={"t": float(ctx.times[j])},
                       sample_size=ctx.space.n_nodes,
                       details={"solution_mass_drift": drift,
                                "kernel_mass_defect": max(kdefs)})


def _smooth_test_function(space):
    xs = space.nodes
    if space.periodic:
        return np.exp(np.sin(2.0 * np.pi * (xs - space.start) / space.length))
    c = space.start + 0.5 * space.length
    s = space.length / 8.0
    return np.exp(-0.5 * ((xs - c) / s) ** 2)


def _run_bochner(ctx, tol):
    _, defect = bochner_defect(ctx.space, ctx.op, _smooth_test_function(ctx.space))
    sup = float(np.max(np.abs(defect)))
    return make_report("bochner", 0.0, 0.0, informational=True,
                       sample_size=defect.size, details={"defect_sup": sup})


def _orders(levels, key):
    ns = [n for n, _ in levels]
    vals = [rep.details[key] for _, rep in levels]
    out = []
    for (n0, v0), (n1, v1) in zip(zip(ns, vals), zip(ns[1:], vals[1:])):
        if v1 <= 0.0:
            out.append(math.inf)
        else:
            out.append(math.log(v0 / v1) / math.log(n1 / n0))
    return vals, out


def _combine_bochner(levels, tol):
    vals, orders = _orders(levels, "defect_sup")
    rep = make_report("bochner_order", min(orders) - tol, 0.0,
                      sample_size=len(levels),
                      details={"orders": orders, "required": tol,
                               "defect_sups": vals})
    rep.refinement.extend([[n, v] for (n, _), v in zip(levels, vals)])
    return rep


def _run_hamilton_jacobi(ctx, tol):
    hj = hamilton_jacobi_defect(ctx.kern, ctx.cfg.t_max,
                                ctx.space.n_nodes // 2)
    # the noise-floor mask is part of the estimator, not lost data, so the
    # masked node count goes to details instead of the exclusion budget
    return make_report("hamilton_jacobi", 0.0, 0.0, informational=True,
                       sample_size=hj.sample_size,
                       details={"max_defect": hj.max_defect,
                                "masked_nodes": hj.excluded,
                                "per_t": [float(v) for v in hj.per_t],
                                "times": [float(v) for v in hj.times]})


def _combine_hamilton_jacobi(levels, tol):
    # asymptotic order read off the finest pair; the coarsest level still has
    # its defect peak at the mask seam and drags the pairwise order down
    vals, orders = _orders(levels, "max_defect")
    rep = make_report("hamilton_jacobi_order", orders[-1] - tol, 0.0,
                      sample_size=len(levels),
                      details={"orders": orders, "required": tol,
                               "max_defects": vals})
    rep.refinement.extend([[n, v] for (n, _), v in zip(levels, vals)])
    return rep


# ---------------------------------------------------------------------------
# closed-form kernel oracle


def _reference_kernel(space):
    if space.warp is not None or space.kind == "circle":
        return None
    pot = space.potential
    if pot.kind == "constant":
        return AnalyticGaussianKernel(space)
    if pot.kind == "quadratic" and pot.coeff > 0.0:
        return AnalyticOUKernel(space)
    return None


def _run_kernel_oracle(ctx, tol):
    space = ctx.space
    ref = _reference_kernel(space)
    if ref is None:
        return make_report("kernel_oracle", 0.0, tol, sample_size=0,
                           details={"reason": "no closed form for this space"},
                           inconclusive=True)
    center = space.start + 0.5 * space.length
    radius = min(3.0, space.length / 4.0)
    idx = np.nonzero(np.abs(space.nodes - center) <= radius)[0]
    worst = 0.0
    witness = {}
    per_t = {}
    for t in (0.1, 0.5, 1.0):
        pmat = ctx.kern.matrix(t)[np.ix_(idx, idx)]
        rmat = np.stack([ref.column(t, int(j))[idx] for j in idx], axis=1)
        err = np.abs(pmat - rmat)
        sup = float(rmat.max())
        rel = float(err.max()) / sup
        per_t[repr(t)] = rel
        if rel > worst:
            worst = rel
            i, j = np.unravel_index(int(np.argmax(err)), err.shape)
            witness = {"t": t, "x": float(space.nodes[idx[i]]),
                       "y": float(space.nodes[idx[j]])}
    ci = int(space.index_of(center))
    return make_report(
        "kernel_oracle", tol - worst, 0.0,
        witness=witness, sample_size=3 * idx.size * idx.size,
        details={"mode_relative": per_t, "window_radius": radius,
                 "p1_center_spectral": ctx.kern.value(1.0, ci, ci),
                 "p1_center_reference": ref.value(1.0, ci, ci)})


def _run_bishop_gromov(ctx, tol):
    return geo.bishop_gromov_check(ctx.space, t=0.25, tol=tol)


def _run_volume_ratio(ctx, tol):
    return geo.volume_ratio_check(ctx.space, tol=tol)


# ---------------------------------------------------------------------------
# entropy checks


def _run_w_rigidity(ctx, tol):
    return ent.w_rigidity(ctx.space, ctx.kern, ctx.cfg.m, ctx.times,
                          tolerance=tol)


def _admissible_m(space, m_floor: float):
    """Smallest m >= m_floor with min Ric_{m,n} >= 0, or None.

    Ric_{m,n} = ric_l - phi'^2/(m-n) increases toward ric_l as m grows, so
    an admissible m exists iff every node has ric_l > 0 or (ric_l == 0 and
    phi' == 0); the binding node fixes m = n + max(phi'^2 / ric_l).
    """
    ric = geo.ric_l(space)
    g = space.potential.d1(space.nodes) ** 2
    if np.any((g > 0.0) & (ric <= 0.0)) or np.any((g == 0.0) & (ric < 0.0)):
        return None
    active = g > 0.0
    need = 0.0 if not active.any() else float(np.max(g[active] / ric[active]))
    m = max(float(m_floor), space.n + need * (1.0 + 1e-9))
    if float(np.min(geo.ric_mn(space, m))) < 0.0:
        return None
    return m


def _run_w_monotonicity(ctx, tol):
    m = _admissible_m(ctx.space, ctx.cfg.m)
    if m is None:
        rep = ent.w_monotonicity(ctx.space, ctx.kern, ctx.cfg.m, ctx.times,
                                 tolerance=tol)
    else:
        rep = ent.w_monotonicity(ctx.space, ctx.kern, m, ctx.times,
                                 tolerance=tol)
        rep.details["m_used"] = m
    return rep


def _run_w_dissipation(ctx, tol):
    t_mid = float(ctx.times[ctx.times.size // 2])
    rep = ent.dissipation_identity(ctx.space, ctx.kern, t_mid,
                                   m=ctx.cfg.m, n=ctx.cfg.n)
    details = dict(rep.details)
    details["residual"] = abs(rep.margin)
    return replace(rep, informational=True, verdict=PASS, margin=0.0,
                   details=details)


def _combine_w_dissipation(levels, tol):
    vals, orders = _orders(levels, "residual")
    # the FD side carries a time-grid truncation floor independent of h; once
    # the finest residual sits below 1e-4 of the rate itself, the spatial
    # order is unreadable but no wrong identity term (each >= 1e-3 of the
    # rate) could hide there, so agreement passes on the absolute criterion
    scale = max(abs(levels[-1][1].details["dwdt_fd"]), 1.0)
    floor = 1e-4 * scale
    order_margin = min(orders) - tol
    floor_margin = (floor - vals[-1]) / floor
    rep = make_report("w_dissipation_order", max(order_margin, floor_margin),
                      0.0, sample_size=len(levels),
                      details={"orders": orders, "required": tol,
                               "residuals": vals, "fd_floor": floor})
    rep.refinement.extend([[n, v] for (n, _), v in zip(levels, vals)])
    return rep


def _run_entropy_flux_match(ctx, tol):
    tr = ctx.trace
    a = tr["d2H_flux"]
    b = tr["d2H_geometric"]
    rel = np.abs(a - b) / np.maximum(1.0, np.abs(a))
    j = int(np.argmax(rel))
    wdiff = float(np.max(np.abs(tr["resid_w_forms"])))
    return make_report("entropy_flux_match", tol - float(rel[j]), 0.0,
                       witness={"t": float(tr.times[j])},
                       sample_size=tr.times.size,
                       details={"max_rel_diff": float(rel[j]),
                                "w_forms_max_diff": wdiff})


def _run_entropy_chain_rule(ctx, tol):
    tr = ctx.trace
    resid = np.abs(tr["resid_second_derivs"])
    j = int(np.argmax(resid))
    return make_report("entropy_chain_rule", -float(resid[j]), tol,
                       witness={"t": float(tr.times[j])},
                       sample_size=tr.times.size,
                       details={"max_residual": float(resid[j])})


# ---------------------------------------------------------------------------
# Harnack / kernel-estimate checks


def _run_harnack_improved(ctx, tol):
    return har.harnack_improved(ctx.space, ctx.solution, tolerance=tol)


def _run_harnack_hamilton(ctx, tol):
    return har.harnack_hamilton(ctx.space, ctx.solution, tolerance=tol)


def _run_harnack_drift_form(ctx, tol):
    return har.harnack_drift_form(ctx.space, ctx.solution)


def _run_lsi_semigroup(ctx, tol):
    space = ctx.space
    f0 = 1.0 + 0.5 * np.sin(2.0 * np.pi * (space.nodes - space.start)
                            / space.length)
    return har.lsi_semigroup(space, ctx.kern, f0, tolerance=tol)


def _run_liouville(ctx, tol):
    return har.liouville_check(ctx.space, ctx.kern)


def _run_kernel_gaussian_bounds(ctx, tol):
    return har.kernel_gaussian_bounds(ctx.space, ctx.kern, m=ctx.cfg.m)


def _combine_kernel_bounds(levels, tol):
    ups = [[n, rep.details["c1"]] for n, rep in levels]
    los = [[n, rep.details["c2"]] for n, rep in levels]
    lam = levels[-1][1].details["lambda_km"]
    up = har.drift_verdict("kernel_bound_upper_drift", ups, tol,
                           details={"lambda_km": lam})
    lo = har.drift_verdict("kernel_bound_lower_drift", los, tol,
                           details={"lambda_km": lam})
    return [up, lo]


def _run_log_kernel_gradient(ctx, tol):
    return har.log_kernel_gradient(ctx.space, ctx.kern, ctx.cfg.t_max)


def _combine_log_kernel_gradient(levels, tol):
    vals = [[n, rep.details["c_star"]] for n, rep in levels]
    return har.drift_verdict("log_kernel_gradient_drift", vals, tol)


def _run_log_kernel_hessian(ctx, tol):
    return har.log_kernel_gradient_n2(ctx.space, ctx.kern, ctx.cfg.t_max)


def _combine_log_kernel_hessian(levels, tol):
    vals = [[n, rep.details["c_star"]] for n, rep in levels]
    return har.drift_verdict("log_kernel_gradient_n2_drift", vals, tol)


# ---------------------------------------------------------------------------
# stochastic checks


def _run_empirical_law(ctx, tol):
    return sto.empirical_law_distance(ctx.space, ctx.kern, ctx.free_ensemble,
                                      tolerance=tol)


def _run_supermartingale(ctx, tol):
    return sto.supermartingale_h(ctx.space, ctx.solution,
                                 ctx.space.ric_l_bound, ctx.cfg.mc_t_end,
                                 ctx.free_ensemble, tolerance=tol)


def _run_bridge_energy(ctx, tol):
    return sto.bridge_energy_identity(ctx.space, ctx.kern, ctx.mc_x0,
                                      ctx.mc_y, ctx.cfg.mc_t_end,
                                      ctx.bridge_ensemble, rel_tolerance=tol)


def _run_gradient_energy_rate(ctx, tol):
    return sto.gradient_energy_derivative(ctx.space, ctx.kern,
                                          ctx.bridge_ensemble,
                                          0.5 * ctx.cfg.mc_t_end,
                                          rel_tolerance=tol)


def _run_harnack_via_bridge(ctx, tol):
    return sto.harnack_via_bridge(ctx.space, ctx.kern, ctx.mc_x0, ctx.mc_y,
                                  ctx.cfg.mc_t_end, ctx.bridge_ensemble,
                                  ctx.space.ric_l_bound, grid_tolerance=tol)


def _run_girsanov(ctx, tol):
    return sto.girsanov_consistency(ctx.space, ctx.kern, ctx.free_ensemble,
                                    ctx.bridge_ensemble, tolerance=tol)


# ---------------------------------------------------------------------------
# log-Sobolev checks


def _run_mu_minimization(ctx, tol):
    est = ctx.mu_estimate
    return make_report("mu_minimization", tol - est.spread, 0.0,
                       sample_size=len(est.restart_values),
                       details={"mu": est.mu, "tau": est.tau, "m": est.m,
                                "iterations": est.iterations,
                                "grad_norm": est.grad_norm,
                                "converged": est.converged,
                                "restart_values": list(est.restart_values)})


def _run_lsi_check(ctx, tol):
    space = ctx.space
    est = ctx.mu_estimate
    trials = {
        "uniform": uniform_density(space),
        "bump": bump_density(space),
        "two_bump": two_bump_density(space),
    }
    margins = {}
    for label, u in trials.items():
        v = np.sqrt(normalize(space, u))
        rep = lsi_mod.lsi_check(space, v, ctx.cfg.lsi_tau, ctx.cfg.m, est)
        margins[label] = rep.margin
    worst_trial = min(margins, key=margins.get)
    return make_report("lsi_check", margins[worst_trial], tol,
                       sample_size=len(trials),
                       details={"margins": margins, "mu": est.mu,
                                "tau": ctx.cfg.lsi_tau,
                                "worst_trial": worst_trial})


def _run_mu_scan(ctx, tol):
    return lsi_mod.mu_lower_bound_scan(ctx.space, ctx.cfg.m, ctx.cfg.lsi_taus)


# ---------------------------------------------------------------------------
# the registry


def _c(name, anchor, gist, mode, tolerance, runner, combiner=None,
       uses_mc=False) -> CheckDef:
    return CheckDef(name=name, anchor=anchor, gist=gist, mode=mode,
                    tolerance=tolerance, runner=runner, combiner=combiner,
                    uses_mc=uses_mc)


REGISTRY = {c.name: c for c in [
    _c("operator_structure", "§1",
       "self-adjointness in L²(μ), L1 = 0, ∫⟨∇u,∇v⟩dμ = −∫(Lu)v dμ",
       "level", 1e-12, _run_operator_structure),
    # kernel mass sums N eigenmode products, so its round-off grows past the
    # 1e-12 structural budget by N = 512; one decade of headroom
    _c("mass_conservation", "§1",
       "∫ p_t(x,·) dμ = 1 and heat flow preserves mass (stochastic completeness)",
       "level", 1e-11, _run_mass_conservation),
    _c("bochner", "Eq. (1)",
       "L|∇u|² − 2⟨∇u,∇Lu⟩ = 2|∇²u|² + 2Ric(L)|∇u|², order ≥ 1.9",
       "ladder", 1.9, _run_bochner, _combine_bochner),
    _c("bishop_gromov", "Eq. (23)",
       "concentric-ball volume ratio below the constant-curvature envelope",
       "level", 0.05, _run_bishop_gromov),
    _c("volume_ratio", "Eq. (5)",
       "μ(B_y(√t))/μ(B_x(√t)) ≤ ((d+√t)/√t)^m · e^{√((m−1)K) d}",
       "level", 0.05, _run_volume_ratio),
    _c("hamilton_jacobi", "Eq. (16)",
       "∂_t J + LJ + |∇J|² = 0 for J = log p_{T−t}(·,y), order ≥ 1.5",
       "ladder", 1.5, _run_hamilton_jacobi, _combine_hamilton_jacobi),
    _c("kernel_oracle", "§1",
       "spectral p_t vs closed-form kernel, mode-relative error ≤ 10⁻³",
       "finest", 1e-3, _run_kernel_oracle),
    _c("w_rigidity", "Thm 1.6",
       "W ≡ 0 and dW/dt ≡ 0 on the exact Gaussian flow (m = n = 1)",
       "finest", 1e-3, _run_w_rigidity),
    _c("w_monotonicity", "Thm 1.6",
       "dW_m/dt ≤ 0 along the heat kernel when Ric_{m,n}(L) ≥ 0",
       "level", 1e-6, _run_w_monotonicity),
    _c("w_dissipation", "Eq. (4)",
       "dW/dt = −2∫t(|∇²f − g/2t|² + Ric_{m,n}(∇f,∇f))u dμ − mn-term, order ≥ 1.5",
       "ladder", 1.5, _run_w_dissipation, _combine_w_dissipation),
    _c("entropy_flux_match", "Eq. (33)/(34)",
       "two forms of d²H/dt² agree: −2∫(|∇²log u|² + Ric(L)|∇log u|²)u dμ",
       "level", 2e-2, _run_entropy_flux_match),
    _c("entropy_chain_rule", "Eq. (36)",
       "d²H_m/dt² = d²H/dt² + m/2t² exactly on computed traces",
       "level", 1e-12, _run_entropy_chain_rule),
    _c("harnack_improved", "Eq. (2)",
       "|∇log u|² ≤ (2K/(1−e^{−2Kt})) log(A/u)",
       "level", 1e-6, _run_harnack_improved),
    _c("harnack_hamilton", "Eq. (3)",
       "|∇log u|² ≤ (1/t + 2K) log(A/u), with 2K/(1−e^{−2Kt}) ≤ 1/t + 2K",
       "level", 1e-6, _run_harnack_hamilton),
    _c("harnack_drift_form", "Eq. (7)",
       "fitted C in |∇log u|² ≤ C(1/t + K)(1 + log(A/u)) (informational)",
       "level", 0.25, _run_harnack_drift_form),
    _c("lsi_semigroup", "Eq. (6)",
       "|∇P_T f|²/P_T f ≤ (2K/(1−e^{−2KT}))(P_T(f log f) − P_T f log P_T f)",
       "level", 1e-6, _run_lsi_semigroup),
    _c("liouville", "Cor. 1.3",
       "Ric(L) ≥ 0 ⇒ bounded L-harmonic functions are constant (kernel dim 1)",
       "level", 0.0, _run_liouville),
    _c("kernel_gaussian_bounds", "Prop. 3.1",
       "fitted C₁, C₂ in the Gaussian envelope bounds Eq. (9)/(10), drift ≤ 25%",
       "ladder", 0.25, _run_kernel_gaussian_bounds, _combine_kernel_bounds),
    _c("log_kernel_gradient", "Thm 1.4",
       "fitted C* in |∇log p_t| ≤ C(d/t + 1/√t), drift ≤ 10%",
       "ladder", 0.10, _run_log_kernel_gradient, _combine_log_kernel_gradient),
    _c("log_kernel_gradient_n2", "Thm 1.5",
       "fitted C₂* in |∇²log p_t| ≤ C₂(d/t + 1/√t)², drift ≤ 10%",
       "ladder", 0.10, _run_log_kernel_hessian, _combine_log_kernel_hessian),
    _c("empirical_law", "Eq. (15)",
       "L¹ distance between the simulated law and the kernel law ≤ 0.05",
       "finest", 0.05, _run_empirical_law, uses_mc=True),
    _c("supermartingale_h", "§2 (Thm 1.1 proof)",
       "h(X_t, T−t) = ψ|∇u|²/u − u log(A/u) has nonincreasing mean",
       "finest", 1e-8, _run_supermartingale, uses_mc=True),
    _c("bridge_energy_identity", "Eq. (21)",
       "E[J(T/2,·)] − J(0,x0) = E[∫₀^{T/2}|∇J|²dt] on the bridge, gap ≤ 5%",
       "finest", 0.05, _run_bridge_energy, uses_mc=True),
    _c("gradient_energy_derivative", "Eq. (18)",
       "d/dt E[|∇J|²] = 2E[|∇²J|² + Ric(L)(∇J,∇J)] along the bridge",
       "finest", 1e-3, _run_gradient_energy_rate, uses_mc=True),
    _c("harnack_via_bridge", "Eq. (19)",
       "|∇log p_T(x0,y)|² ≤ 2(1/T + K) E[log(p_{T/2}(X_{T/2},y)/p_T(x0,y))]",
       "finest", 1e-3, _run_harnack_via_bridge, uses_mc=True),
    _c("girsanov_consistency", "Lemma 4.1",
       "bridge observables reweighted by p_{T−t}/p_T match the free diffusion",
       "finest", 1e-3, _run_girsanov, uses_mc=True),
    _c("mu_minimization", "§6",
       "μ(τ) = inf W_m over the unit L²(μ) sphere; restart spread ≤ 10⁻³",
       "finest", 1e-3, _run_mu_minimization),
    _c("lsi_check", "Thm 1.7",
       "∫v²log v² dμ ≤ 4τ∫|∇v|²dμ − m(1 + ½log 4πτ) − μ(τ) on a trial battery",
       "finest", 1e-6, _run_lsi_check),
    _c("mu_lower_bound_scan", "§6",
       "μ(τ) stays finite over a ≥ 2-decade τ scan; floor constant reported",
       "finest", 0.0, _run_mu_scan),
]}


def registry_size() -> int:
    return len(REGISTRY)


def list_checks() -> str:
    """One line per registered check: name → anchor: gist."""
    lines = [f"{c.name} → {c.anchor}: {c.gist}" for c in REGISTRY.values()]
    lines.append(f"({len(REGISTRY)} checks)")
    return "\n".join(lines)
