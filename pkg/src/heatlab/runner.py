"""Scenario execution: ladder orchestration and artifact emission.

A run walks the refinement ladder coarse to fine, building one lazy
LevelContext per level so expensive objects (operator, spectral kernel,
heat solution, Monte Carlo ensembles, the μ-minimizer) are shared by every
check that needs them and never built when nothing does.  All numeric
output is serialized with repr() so identical configs reproduce identical
bytes; nothing in the artifact directory carries a timestamp.
"""

from __future__ import annotations

import json
import os
import platform
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy

from . import __version__
from .config import ScenarioConfig
from .entropy import h_m_trace
from .heatflow import bump_density, kernel, solve
from .lsi import minimize_mu
from .operators import assemble
from .registry import REGISTRY
from .reports import CheckReport, make_report
from .stochastic import simulate, simulate_bridge

SUMMARY_COLUMNS = ("check", "level", "margin", "tolerance", "verdict",
                   "witness_t", "witness_x", "witness_y", "ci_halfwidth")


class LevelContext:
    """Shared lazily-built state for all checks at one ladder level."""

    def __init__(self, cfg: ScenarioConfig, n_nodes: int):
        self.cfg = cfg
        self.n_nodes = int(n_nodes)

    @cached_property
    def space(self):
        return self.cfg.build_space(self.n_nodes)

    @cached_property
    def op(self):
        return assemble(self.space)

    @cached_property
    def kern(self):
        return kernel(self.op)

    @cached_property
    def times(self):
        return self.cfg.times()

    @cached_property
    def solution(self):
        t_end = max(self.cfg.t_max, self.cfg.mc_t_end)
        dt = self.cfg.dt_factor * self.space.h ** 2
        return solve(self.op, bump_density(self.space), t_end, dt)

    @cached_property
    def trace(self):
        return h_m_trace(self.space, self.kern, self.cfg.m, self.times,
                         n=self.cfg.n)

    @property
    def mc_x0(self) -> float:
        if self.cfg.mc_x0 is not None:
            return self.cfg.mc_x0
        return self.space.start + self.space.length * (0.5 - 1.0 / 16.0)

    @property
    def mc_y(self) -> float:
        if self.cfg.mc_y is not None:
            return self.cfg.mc_y
        return self.space.start + self.space.length * (0.5 + 1.0 / 16.0)

    @cached_property
    def free_ensemble(self):
        return simulate(self.space, self.mc_x0, self.cfg.mc_t_end,
                        self.cfg.mc_dt, self.cfg.mc_paths, self.cfg.mc_seed)

    @cached_property
    def bridge_ensemble(self):
        return simulate_bridge(self.space, self.kern, self.mc_x0, self.mc_y,
                               self.cfg.mc_t_end, self.cfg.mc_dt,
                               self.cfg.mc_paths, self.cfg.mc_seed + 1)

    @cached_property
    def mu_estimate(self):
        return minimize_mu(self.space, self.cfg.lsi_tau, self.cfg.m,
                           restarts=3, tol=1e-6)


@dataclass
class RunArtifact:
    config: ScenarioConfig
    out_dir: str
    rows: list = field(default_factory=list)     # (level, CheckReport)
    files: list = field(default_factory=list)
    ok: bool = False

    def finest_rows(self):
        finest = self.config.n_ladder[-1]
        return [(n, r) for n, r in self.rows if n == finest]


def resolve_out_dir(cfg: ScenarioConfig, out_root=None) -> str:
    root = out_root if out_root is not None else os.environ.get("HEATLAB_OUT_ROOT")
    out = cfg.out_dir
    if root and not os.path.isabs(out):
        out = os.path.join(root, out)
    return out


def _failure_report(name: str, tol: float, exc: Exception) -> CheckReport:
    return make_report(name, -1.0, tol, extra_ok=False,
                       details={"error": f"{type(exc).__name__}: {exc}"})


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _summary_line(level: int, rep: CheckReport) -> str:
    w = rep.witness
    fields = (rep.name, str(level), _fmt(rep.margin), _fmt(rep.tolerance),
              rep.verdict, _fmt(w.get("t")), _fmt(w.get("x")),
              _fmt(w.get("y")), _fmt(rep.ci_halfwidth))
    return ",".join(fields)


def run_scenario(cfg: ScenarioConfig, out_root=None) -> RunArtifact:
    out_dir = resolve_out_dir(cfg, out_root)
    os.makedirs(out_dir, exist_ok=True)
    art = RunArtifact(config=cfg, out_dir=out_dir)

    def emit(path_name: str, text: str):
        path = os.path.join(out_dir, path_name)
        with open(path, "w") as fh:
            fh.write(text)
        art.files.append(path_name)

    ladder_history = {name: [] for name in cfg.checks
                      if REGISTRY[name].mode == "ladder"}
    finest = cfg.n_ladder[-1]

    for n in cfg.n_ladder:
        ctx = LevelContext(cfg, n)
        for name in cfg.checks:
            cdef = REGISTRY[name]
            if cdef.mode == "finest" and n != finest:
                continue
            tol = cfg.tolerance_for(name, cdef.tolerance)
            try:
                rep = cdef.runner(ctx, tol)
            except Exception as exc:                     # keep the run going
                rep = _failure_report(name, tol, exc)
            art.rows.append((n, rep))
            emit(f"{rep.name}_N{n}.json", rep.to_json() + "\n")
            if cdef.mode == "ladder":
                ladder_history[name].append((n, rep))

        # side artifacts for whatever this level materialized
        if "trace" in vars(ctx):
            path = f"trace_N{n}.csv"
            ctx.trace.to_csv(os.path.join(out_dir, path))
            art.files.append(path)
        if "mu_estimate" in vars(ctx):
            est = ctx.mu_estimate
            emit(f"mu_tau{est.tau}_N{n}.json", est.to_json() + "\n")
            path = f"mu_minimizer_N{n}.csv"
            est.minimizer_csv(ctx.space, os.path.join(out_dir, path))
            art.files.append(path)

    for name, levels in ladder_history.items():
        cdef = REGISTRY[name]
        if not levels or cdef.combiner is None:
            continue
        tol = cfg.tolerance_for(name, cdef.tolerance)
        try:
            combined = cdef.combiner(levels, tol)
        except Exception as exc:
            combined = _failure_report(f"{name}_combined", tol, exc)
        reps = combined if isinstance(combined, list) else [combined]
        for rep in reps:
            art.rows.append((finest, rep))
            emit(f"{rep.name}_N{finest}.json", rep.to_json() + "\n")

    lines = [",".join(SUMMARY_COLUMNS)]
    lines += [_summary_line(n, rep) for n, rep in art.rows]
    emit("summary.csv", "\n".join(lines) + "\n")

    art.ok = all(rep.passed() for n, rep in art.finest_rows()
                 if not rep.informational)
    emit("report.md", _report_md(cfg, art))

    stamp = {
        "heatlab_version": __version__,
        "config_sha256": cfg.sha256,
        "scenario": cfg.name,
        "seed": cfg.mc_seed,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    emit("stamp.json", json.dumps(stamp, indent=2, sort_keys=True) + "\n")
    return art


def _anchor_for(check_name: str) -> str:
    if check_name in REGISTRY:
        return REGISTRY[check_name].anchor
    # derived rows (drift / convergence-order verdicts) inherit their parent's
    # anchor; longest prefix wins so _n2 rows do not fall back to the base fit
    best = ""
    best_len = -1
    for base, cdef in REGISTRY.items():
        if check_name.startswith(base) and len(base) > best_len:
            best, best_len = cdef.anchor, len(base)
    if best:
        return best
    known = {"kernel_bound_upper_drift": "Prop. 3.1",
             "kernel_bound_lower_drift": "Prop. 3.1"}
    return known.get(check_name, "")


def _report_md(cfg: ScenarioConfig, art: RunArtifact) -> str:
    out = [f"# heatlab run: {cfg.name}", ""]
    out.append(f"- config sha256: `{cfg.sha256}`")
    out.append(f"- heatlab version: {__version__}")
    out.append(f"- ladder: {list(cfg.n_ladder)}")
    out.append(f"- mc seed: {cfg.mc_seed}")
    out.append("")
    out.append("| check | anchor | level | margin | tolerance | verdict |")
    out.append("|---|---|---|---|---|---|")
    for n, rep in art.rows:
        tag = " (informational)" if rep.informational else ""
        out.append(f"| {rep.name} | {_anchor_for(rep.name)} | {n} "
                   f"| {rep.margin!r} | {rep.tolerance!r} "
                   f"| {rep.verdict}{tag} |")
    out.append("")
    verdictish = [rep for _, rep in art.finest_rows() if not rep.informational]
    status = "PASS" if art.ok else "FAIL"
    out.append(f"Overall: **{status}** "
               f"({sum(r.passed() for r in verdictish)}/{len(verdictish)} "
               f"non-informational checks pass at N={cfg.n_ladder[-1]}).")
    out.append("")
    out.append("Artifacts:")
    for path in art.files:
        out.append(f"- `{path}`")
    out.append("")
    return "\n".join(out)


def run(config_path, out_root=None) -> RunArtifact:
    """Parse a config file and execute it (the library face of `run`)."""
    from .config import parse_config
    cfg = parse_config(config_path, known_checks=REGISTRY)
    return run_scenario(cfg, out_root=out_root)
