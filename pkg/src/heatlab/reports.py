"""Uniform result record for every inequality / identity check in the lab.

Margins are signed with the convention  margin >= 0  <=>  the tested statement
holds at the worst sampled point.  A check passes when the worst margin clears
-tolerance and fewer than 5% of the sampled points had to be excluded
(underflow clamps, boundary guards).  Checks that cannot decide (for example a
geodesic ball leaving a truncated domain) report verdict "inconclusive" rather
than failing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"

MAX_EXCLUDED_FRACTION = 0.05


@dataclass
class CheckReport:
    name: str
    margin: float
    tolerance: float
    verdict: str
    witness: dict = field(default_factory=dict)   # worst-case {"t","x","y"} subset
    sample_size: int = 0
    excluded: int = 0
    ci_halfwidth: float | None = None
    refinement: list = field(default_factory=list)  # [[n_nodes, margin], ...]
    informational: bool = False
    details: dict = field(default_factory=dict)

    def passed(self) -> bool:
        return self.verdict == PASS

    def to_json(self, path=None) -> str:
        text = json.dumps(_plain(asdict(self)), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def make_report(name, margin, tolerance, *, witness=None, sample_size=0,
                excluded=0, ci_halfwidth=None, informational=False,
                details=None, extra_ok=True, inconclusive=False) -> CheckReport:
    """Assemble a CheckReport with the shared verdict rule.

    extra_ok folds in any check-specific side conditions (coefficient
    dominance, widened-tolerance nodes near the supremum, ...); inconclusive
    overrides the pass/fail decision entirely.
    """
    margin = float(margin)
    if inconclusive:
        verdict = INCONCLUSIVE
    else:
        ok = margin >= -tolerance and extra_ok
        if sample_size > 0 and excluded > MAX_EXCLUDED_FRACTION * sample_size:
            ok = False
        verdict = PASS if ok else FAIL
    return CheckReport(
        name=name,
        margin=margin,
        tolerance=float(tolerance),
        verdict=verdict,
        witness=dict(witness or {}),
        sample_size=int(sample_size),
        excluded=int(excluded),
        ci_halfwidth=None if ci_halfwidth is None else float(ci_halfwidth),
        informational=informational,
        details=dict(details or {}),
    )


def _plain(obj):
    # JSON-safe copy: numpy scalars -> python, non-finite floats -> strings
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        try:
            obj = obj.item()
        except (AttributeError, ValueError):
            pass
    if hasattr(obj, "tolist"):
        return _plain(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj
