"""Command line entry point: ``sdmgrid run`` and ``sdmgrid experiment``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .harness.engine import SimulationError, metrics_csv, run_scenario
from .harness.experiments import EXPERIMENTS
from .harness.scenario import ConfigError, Scenario, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

log = logging.getLogger("sdmgrid")


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdmgrid", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", type=Path, default=Path("out"))
    common.add_argument("--periods", type=int, default=None)
    common.add_argument("--dvsss", type=_on_off, default=None, metavar="on|off")
    common.add_argument("-v", "--verbose", action="store_true")

    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="simulate a scenario file")
    run.add_argument("config", type=Path)
    exp = sub.add_parser("experiment", parents=[common], help="run a named experiment")
    exp.add_argument("name", choices=sorted(EXPERIMENTS))
    exp.add_argument("--config", type=Path, default=None, help="base scenario file")
    return p


def _overrides(args) -> dict:
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.periods is not None:
        kw["periods"] = args.periods
    if args.dvsss is not None:
        kw["dvsss_enabled"] = args.dvsss
    return kw


def _write(out_dir: Path, tables: dict[str, str]):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in tables.items():
        (out_dir / name).write_text(text)
        log.info("wrote %s", out_dir / name)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            s = load_scenario(args.config).with_overrides(**_overrides(args))
            trace, metrics = run_scenario(s)
            _write(args.out_dir, {"trace.csv": trace.to_csv(), "metrics.csv": metrics_csv(metrics)})
        else:
            base = load_scenario(args.config) if args.config else Scenario()
            kw = _overrides(args)
            if "dvsss_enabled" in kw:
                base = base.with_overrides(dvsss_enabled=kw.pop("dvsss_enabled"))
            fn = EXPERIMENTS[args.name]
            call = {"seed": kw.get("seed", base.seed), "base": base}
            if "periods" in kw:
                if args.name not in ("exp_static", "exp_dos_static", "exp_dos_dvsss"):
                    raise ConfigError(f"--periods does not apply to {args.name}")
                call["periods"] = kw["periods"]
            _write(args.out_dir, fn(**call).tables)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
