"""Scenario configs: flat `key = value` text with dotted section names.

Grammar, by example::

    # comment
    scenario.name   = gaussian-space
    space.kind      = line-truncated
    space.n_ladder  = 128, 256, 512
    space.length    = 16.0
    space.potential = quadratic:1.0,0.9189385332046727
    space.m         = 1.0
    checks          = operator_structure, harnack_hamilton
    check.harnack_hamilton.tolerance = 1e-6
    output.dir      = runs/gaussian-space

No nesting, no quoting; values are scalars or comma lists.  Unknown keys are
rejected so typos surface as errors instead of silently-ignored settings.

Potential specs: ``none``, ``quadratic:coeff[,offset]``,
``cosine:amplitude,period[,offset]``, ``csv:path`` (two-column x,phi file).
Warp specs: ``none``, ``linear``, ``sine``, ``sinh``.

Tolerance semantics: for per-level and finest-only checks the override
replaces the margin tolerance; for ladder checks it replaces the tolerance
of the cross-level (drift or convergence-order) verdict.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    KINDS,
    Potential,
    Warp,
    build_space,
    constant_potential,
    cosine_potential,
    quadratic_potential,
    tabulated_potential_from_csv,
)


class ConfigError(ValueError):
    """Validation failure; message always leads with the offending field."""

    def __init__(self, field_name: str, message: str, line: int | None = None):
        self.field = field_name
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field_name}: {message}{where}")


_KNOWN_KEYS = {
    "scenario.name",
    "space.kind", "space.n_ladder", "space.length", "space.start",
    "space.potential", "space.warp", "space.m", "space.n",
    "solver.dt_factor", "solver.t_min", "solver.t_max", "solver.t_ratio",
    "mc.paths", "mc.dt", "mc.seed", "mc.x0", "mc.y", "mc.t_end",
    "lsi.tau", "lsi.taus",
    "checks",
    "output.dir",
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed and validated scenario."""

    name: str
    kind: str
    n_ladder: tuple
    length: float
    start: float | None
    potential_spec: str
    warp_spec: str
    m: float
    n: int
    dt_factor: float
    t_min: float
    t_max: float
    t_ratio: float
    mc_paths: int
    mc_dt: float
    mc_seed: int
    mc_x0: float | None
    mc_y: float | None
    mc_t_end: float
    lsi_tau: float
    lsi_taus: tuple
    checks: tuple
    tolerances: dict = field(default_factory=dict)
    out_dir: str = ""
    sha256: str = ""
    source: str = ""

    # -- derived helpers ---------------------------------------------------

    def potential(self) -> Potential | None:
        return _parse_potential(self.potential_spec)

    def build_space(self, n_nodes: int):
        warp = None if self.warp_spec == "none" else Warp(self.warp_spec)
        return build_space(self.kind, n_nodes, self.length,
                           phi=self.potential(), warp=warp,
                           m=self.m, n=self.n, start=self.start)

    def times(self) -> np.ndarray:
        """Geometric time grid t_min * ratio^j capped by t_max (inclusive)."""
        count = int(math.floor(
            math.log(self.t_max / self.t_min) / math.log(self.t_ratio) + 1e-9)) + 1
        return self.t_min * self.t_ratio ** np.arange(count)

    def tolerance_for(self, check: str, default: float) -> float:
        return float(self.tolerances.get(check, default))


def _parse_potential(spec: str) -> Potential | None:
    if spec == "none":
        return None
    head, _, rest = spec.partition(":")
    try:
        if head == "quadratic":
            vals = [float(v) for v in rest.split(",")]
            return quadratic_potential(*vals)
        if head == "cosine":
            vals = [float(v) for v in rest.split(",")]
            return cosine_potential(*vals)
        if head == "constant":
            return constant_potential(float(rest))
        if head == "csv":
            return tabulated_potential_from_csv(rest)
    except (TypeError, ValueError, OSError) as exc:
        raise ConfigError("space.potential", f"bad spec {spec!r}: {exc}") from exc
    raise ConfigError("space.potential", f"unknown potential kind {head!r}")


def _floats(raw: str):
    return tuple(float(v) for v in raw.split(","))


def _ints(raw: str):
    return tuple(int(v) for v in raw.split(","))


def parse_text(text: str, *, name_hint: str = "scenario",
               known_checks=None) -> ScenarioConfig:
    """Parse config text; raise ConfigError naming the field on any problem."""
    pairs: dict[str, str] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError("<syntax>", f"expected key = value, got {stripped!r}",
                              lineno)
        key, _, val = stripped.partition("=")
        key = key.strip()
        val = val.strip()
        if key in pairs:
            raise ConfigError(key, "duplicate key", lineno)
        pairs[key] = val
        lines[key] = lineno

    def take(key, default=None, required=False):
        if key in pairs:
            return pairs.pop(key)
        if required:
            raise ConfigError(key, "missing required key")
        return default

    def num(key, conv, default=None, required=False):
        raw = take(key, required=required)
        if raw is None:
            return default
        try:
            return conv(raw)
        except ValueError as exc:
            raise ConfigError(key, f"bad value {raw!r}", lines.get(key)) from exc

    name = take("scenario.name", default=name_hint)
    kind = take("space.kind", required=True)
    if kind not in KINDS:
        raise ConfigError("space.kind", f"must be one of {KINDS}, got {kind!r}",
                          lines.get("space.kind"))
    ladder = num("space.n_ladder", _ints, required=True)
    if len(ladder) < 1 or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ConfigError("space.n_ladder", "must be strictly increasing",
                          lines.get("space.n_ladder"))
    length = num("space.length", float, required=True)
    if not length > 0:
        raise ConfigError("space.length", "must be positive",
                          lines.get("space.length"))
    start = num("space.start", float)
    potential_spec = take("space.potential", default="none")
    _parse_potential(potential_spec)  # fail early with the right field name
    warp_spec = take("space.warp", default="none")
    if warp_spec not in ("none", "linear", "sine", "sinh"):
        raise ConfigError("space.warp", f"unknown warp {warp_spec!r}",
                          lines.get("space.warp"))
    m = num("space.m", float, default=1.0)
    n = num("space.n", int, default=1)
    if n < 1:
        raise ConfigError("space.n", "must be >= 1", lines.get("space.n"))
    if m < n:
        raise ConfigError("space.m", f"must be >= space.n (m={m}, n={n})",
                          lines.get("space.m"))

    dt_factor = num("solver.dt_factor", float, default=0.5)
    t_min = num("solver.t_min", float, default=0.05)
    t_max = num("solver.t_max", float, default=1.0)
    t_ratio = num("solver.t_ratio", float, default=2.0)
    if not dt_factor > 0:
        raise ConfigError("solver.dt_factor", "must be positive",
                          lines.get("solver.dt_factor"))
    if not (0 < t_min < t_max):
        raise ConfigError("solver.t_min", "need 0 < t_min < t_max",
                          lines.get("solver.t_min"))
    if not t_ratio > 1:
        raise ConfigError("solver.t_ratio", "must exceed 1",
                          lines.get("solver.t_ratio"))

    mc_paths = num("mc.paths", int, default=10000)
    mc_dt = num("mc.dt", float, default=1e-3)
    mc_seed = num("mc.seed", int, default=20260816)
    if mc_paths < 1:
        raise ConfigError("mc.paths", "must be positive", lines.get("mc.paths"))
    if not mc_dt > 0:
        raise ConfigError("mc.dt", "must be positive", lines.get("mc.dt"))
    if mc_seed < 0:
        raise ConfigError("mc.seed", "must be nonnegative", lines.get("mc.seed"))
    mc_x0 = num("mc.x0", float)
    mc_y = num("mc.y", float)
    mc_t_end = num("mc.t_end", float, default=1.0)
    if not mc_t_end > 0:
        raise ConfigError("mc.t_end", "must be positive", lines.get("mc.t_end"))

    lsi_tau = num("lsi.tau", float, default=0.25)
    if not lsi_tau > 0:
        raise ConfigError("lsi.tau", "must be positive", lines.get("lsi.tau"))
    lsi_taus = num("lsi.taus", _floats, default=(0.02, 0.2, 2.0))
    if len(lsi_taus) < 3 or any(v <= 0 for v in lsi_taus):
        raise ConfigError("lsi.taus", "need >= 3 positive values",
                          lines.get("lsi.taus"))

    checks_raw = take("checks", required=True)
    checks = tuple(c.strip() for c in checks_raw.split(",") if c.strip())
    if not checks:
        raise ConfigError("checks", "empty check list", lines.get("checks"))
    if len(set(checks)) != len(checks):
        raise ConfigError("checks", "duplicate check names", lines.get("checks"))

    out_dir = take("output.dir", default=f"runs/{name}")

    tolerances = {}
    for key in list(pairs):
        parts = key.split(".")
        if len(parts) == 3 and parts[0] == "check" and parts[2] == "tolerance":
            cname = parts[1]
            if cname not in checks:
                raise ConfigError(key, f"{cname!r} is not in the check list",
                                  lines.get(key))
            raw = pairs.pop(key)
            try:
                tol = float(raw)
            except ValueError as exc:
                raise ConfigError(key, f"bad value {raw!r}",
                                  lines.get(key)) from exc
            if not tol > 0:
                raise ConfigError(key, "tolerance must be positive",
                                  lines.get(key))
            tolerances[cname] = tol

    for key in pairs:
        if key not in _KNOWN_KEYS:
            raise ConfigError(key, "unknown key", lines.get(key))
    leftovers = [k for k in pairs if k in _KNOWN_KEYS]
    if leftovers:  # known key that the logic above never consumed: a bug here
        raise ConfigError(leftovers[0], "internal: unconsumed key")

    cfg = ScenarioConfig(
        name=name, kind=kind, n_ladder=ladder, length=length, start=start,
        potential_spec=potential_spec, warp_spec=warp_spec, m=m, n=n,
        dt_factor=dt_factor, t_min=t_min, t_max=t_max, t_ratio=t_ratio,
        mc_paths=mc_paths, mc_dt=mc_dt, mc_seed=mc_seed,
        mc_x0=mc_x0, mc_y=mc_y, mc_t_end=mc_t_end,
        lsi_tau=lsi_tau, lsi_taus=lsi_taus,
        checks=checks, tolerances=tolerances, out_dir=out_dir,
        sha256=hashlib.sha256(text.encode()).hexdigest(), source=text,
    )

    if known_checks is not None:
        unknown = [c for c in checks if c not in known_checks]
        if unknown:
            raise ConfigError("checks", f"unknown check name(s): {unknown}")
        needs_ladder = [c for c in checks
                        if known_checks[c].mode == "ladder"]
        if needs_ladder and len(ladder) < 2:
            raise ConfigError(
                "space.n_ladder",
                f"checks {needs_ladder} compare refinement levels; "
                "need at least 2 ladder entries")

    # build_space revalidates geometry-level constraints (m == n needs a
    # constant potential, warps need radial-reduction, ...) at the coarsest
    # level so config errors surface before any heavy work
    try:
        cfg.build_space(ladder[0])
    except ValueError as exc:
        raise ConfigError("space", str(exc)) from exc
    return cfg


def parse_config(path, known_checks=None) -> ScenarioConfig:
    with open(path) as fh:
        text = fh.read()
    hint = os.path.splitext(os.path.basename(str(path)))[0]
    return parse_text(text, name_hint=hint, known_checks=known_checks)
