"""Command-line entry point: ``nls-lab <subcommand> --config FILE --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError, NumericalFailure
from .config import load_config

log = logging.getLogger("nls_lab")

SUBCOMMANDS = {
    "validate-kernels": "validate_kernels",
    "scatter": "scatter_convergence",
    "recover": "recovery_sweep",
    "stability": "stability_curve",
    "modified-structure": "modified_structure",
}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nls-lab", description="Coefficient-recovery experiments "
                                 "for the 1D nonlinear Schroedinger equation.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, scen in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=f"run the {scen} scenario")
        sp.add_argument("--config", required=True, help="YAML experiment config")
        sp.add_argument("--out", default=None, help="output directory (overrides output_dir)")
        sp.add_argument("--dry-run", action="store_true", help="validate the config and exit")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    scenario = SUBCOMMANDS[args.command]
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    if cfg.scenario != scenario:
        print(f"config error: scenario: '{args.command}' runs {scenario}, config has "
              f"{cfg.scenario}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dry_run:
        print(f"config ok: {scenario} (hash {cfg.config_hash()})")
        return EXIT_OK

    from .runner import run  # heavy imports only when something runs

    try:
        res = run(cfg, args.out)
    except NumericalFailure as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    log.info("wrote %s", res.out_dir)
    print((res.out_dir / "summary.txt").read_text(), end="")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
