"""Command-line entry point.

Subcommands ``solve-sub``, ``solve-mp``, ``scalar``, ``constants``, ``verify``
and ``sweep``.  Every configuration key is also a flag (``--model.beta 0.5``);
``--config FILE`` is loaded first and flags override it.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, config_keys, load_config
from .diagnostics import (
    EXIT_CONFIG,
    EXIT_OK,
    WORKERS_ENV,
    format_table,
    run,
    sweep,
    verify_command,
)

_REGIME_OF = {
    "solve-sub": "subcritical",
    "solve-mp": "mountain_pass",
    "scalar": "scalar",
    "constants": "constants",
    "verify": "verify",
    "sweep": None,
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the CLI contract reserves 2 for non-convergence."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _dest(key: str) -> str:
    return "cfg__" + key.replace(".", "__")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="YAML file with dotted keys")
    grp = p.add_argument_group("configuration keys")
    for key, (_, _, help_) in config_keys().items():
        if key == "regime":
            continue
        grp.add_argument(f"--{key}", dest=_dest(key), default=None, metavar="V", help=help_)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coupled-nls", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in _REGIME_OF:
        p = sub.add_parser(name)
        _add_config_flags(p)
        if name == "verify":
            p.add_argument("--report", help="stored report.json to check (omit for an inline run)")
            p.add_argument("--regime", dest="verify_regime", default=None,
                           help="regime of the inline run (subcritical or mountain_pass)")
            p.add_argument("--check-config", action="store_true",
                           help="fail when the stored report was produced with a different config")
        if name == "sweep":
            p.add_argument("--regime", dest="sweep_regime", default="subcritical")
            p.add_argument("--axis", action="append", default=[], metavar="KEY=V1,V2,...",
                           help=f"sweep axis (repeatable); workers from ${WORKERS_ENV}")
    return parser


def _overrides(ns: argparse.Namespace) -> dict:
    out = {}
    for key in config_keys():
        v = getattr(ns, _dest(key), None)
        if v is not None:
            out[key] = v
    return out


def _parse_axes(specs: list[str]) -> dict:
    axes = {}
    for spec in specs:
        if "=" not in spec:
            raise ConfigError(f"--axis {spec!r}: expected KEY=V1,V2,...")
        key, vals = spec.split("=", 1)
        if key not in config_keys():
            raise ConfigError(f"{key}: unknown configuration key")
        axes[key] = [v for v in vals.split(",") if v != ""]
    if not axes:
        raise ConfigError("sweep: at least one --axis is required")
    return axes


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        over = _overrides(ns)
        regime = _REGIME_OF[ns.command]
        if ns.command == "sweep":
            regime = ns.sweep_regime
        if ns.command == "verify":
            regime = ns.verify_regime or "verify"
        if regime is not None:
            over["regime"] = regime
        cfg = load_config(ns.config, over)
        if ns.command == "verify":
            return verify_command(cfg, ns.report, compare_config=ns.check_config)
        if ns.command == "sweep":
            reports = sweep(cfg, _parse_axes(ns.axis))
            for i, rep in enumerate(reports):
                print(f"run_{i:03d}: {rep.status} (exit {rep.exit_code})")
            return max((r.exit_code for r in reports), default=EXIT_OK)
        rep = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"regime: {rep.regime}   status: {rep.status}")
    if rep.clauses:
        print(format_table(rep))
    print(f"report: {cfg.output_dir}/report.json")
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
