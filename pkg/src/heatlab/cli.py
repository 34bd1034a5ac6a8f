"""Command-line front end: run <config>, list-checks, version.

`run` accepts either a path to a config file or the name of a bundled
scenario (euclid-rigidity, gaussian-space, circle-weighted, sphere-radial).
The output root can be overridden with the HEATLAB_OUT_ROOT environment
variable.  Exit code 0 means every non-informational check passed at the
finest ladder level; 1 means at least one failed; 2 means the config did
not validate.
"""

from __future__ import annotations

import argparse
import os
import sys
from importlib import resources

from . import __version__
from .config import ConfigError, parse_config, parse_text
from .registry import REGISTRY, list_checks
from .runner import run_scenario


def _bundled_names():
    pkg = resources.files("heatlab.scenarios")
    return sorted(p.name[:-4] for p in pkg.iterdir() if p.name.endswith(".cfg"))


def _load_config(arg: str):
    if os.path.exists(arg):
        return parse_config(arg, known_checks=REGISTRY)
    pkg = resources.files("heatlab.scenarios")
    candidate = pkg / f"{arg}.cfg"
    if candidate.is_file():
        return parse_text(candidate.read_text(), name_hint=arg,
                          known_checks=REGISTRY)
    raise ConfigError("config", f"{arg!r} is neither a file nor a bundled "
                                f"scenario {_bundled_names()}")


def _cmd_run(args) -> int:
    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    art = run_scenario(cfg)
    for n, rep in art.rows:
        if n != cfg.n_ladder[-1]:
            continue
        tag = " [info]" if rep.informational else ""
        print(f"{rep.verdict.upper():12s} {rep.name}{tag} "
              f"margin={rep.margin:.6g} tol={rep.tolerance:g}")
    print(f"artifacts: {art.out_dir}")
    return 0 if art.ok else 1


def _cmd_list_checks(_args) -> int:
    print(list_checks())
    return 0


def _cmd_version(_args) -> int:
    print(f"heatlab {__version__}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heatlab",
        description="Run inequality/identity check scenarios on weighted "
                    "1-D model geometries.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario config")
    p_run.add_argument("config",
                       help="path to a .cfg file, or a bundled scenario name")
    p_run.set_defaults(func=_cmd_run)

    p_list = sub.add_parser("list-checks",
                            help="print every registered check with its anchor")
    p_list.set_defaults(func=_cmd_list_checks)

    p_ver = sub.add_parser("version", help="print the package version")
    p_ver.set_defaults(func=_cmd_version)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
