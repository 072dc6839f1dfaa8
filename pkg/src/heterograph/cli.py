"""``heterograph`` command line: generate, train, ablate, analyze, report.

Exit codes: 0 success, 1 failed runs or runtime errors, 2 invalid
configuration or usage.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import experiments as ex
from .config import ABLATION_SETS, ConfigError, load_config
from .dataio import read_results

log = logging.getLogger("heterograph")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    name = os.environ.get("HETEROGRAPH_LOG", "warn").lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(level=level or logging.WARNING, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    if level is None:
        log.warning("HETEROGRAPH_LOG=%r not one of %s; using warn", name, sorted(LOG_LEVELS))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heterograph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("generate", "write synthetic graph bundles over an h grid"),
                        ("train", "train variants on bundles"),
                        ("ablate", "run the D1/D2/D3 ablation sets"),
                        ("analyze", "robustness, two-hop and spectral reports"),
                        ("report", "merge result files into tables and curves")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, metavar="PATH", help="JSON experiment config")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
        p.add_argument("--seed", type=_u64, metavar="U64", help="base seed (overrides config)")
        p.add_argument("--jobs", type=int, metavar="N", help="parallel runs (overrides config)")
        p.add_argument("--force", action="store_true", help="write into a non-empty output directory")
        p.add_argument("--dry-run", action="store_true", help="print the plan and write nothing")
    return parser


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


class UsageError(Exception):
    pass


def _prepare_out(out: Path, force: bool) -> None:
    if out.exists() and not out.is_dir():
        raise UsageError(f"output path {out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()) and not force:
        raise UsageError(f"output directory {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)


def _section(cfg, name):
    section = getattr(cfg, name)
    if section is None:
        raise ConfigError(name, f"section required by the '{name}' command")
    return section


def cmd_generate(cfg, out: Path, args) -> int:
    gen = _section(cfg, "generate")
    plans = ex.plan_bundles(gen, cfg.seed)
    if args.dry_run:
        for p in plans:
            print(f"{p.name}\ttarget_h={p.target_h:.2f}\tseed={p.seed}")
        print(f"{len(plans)} bundles planned")
        return 0
    _prepare_out(out, args.force)
    rows = ex.generate_bundles(gen, cfg.seed, out)
    print("bundle\ttarget_h\tmeasured_h\tedges")
    for r in rows:
        print(f"{r['name']}\t{r['target_h']:.2f}\t{r['measured_h']:.4f}\t{r['num_edges']}")
    return 0


def _sweep(cfg, section, variants, out: Path, args, extra=None):
    runs = ex.plan_runs(section, variants, cfg.seed)
    if args.dry_run:
        for r in runs:
            print(f"{r.dataset}\t{r.variant}\tsplit={r.split}\tseed={r.seed}")
        print(f"{len(runs)} runs planned")
        return None, 0
    _prepare_out(out, args.force)
    outcomes = ex.run_all(runs, section, out, cfg.jobs)
    ex.write_run_outputs(outcomes, out, extra)
    failed = [o for o in outcomes if o.status != "ok"]
    for o in failed:
        log.error("run %s/%s split %d failed: %s", o.spec.dataset, o.spec.variant, o.spec.split, o.error)
    return outcomes, 1 if failed else 0


def cmd_train(cfg, out: Path, args) -> int:
    section = _section(cfg, "train")
    outcomes, code = _sweep(cfg, section, section.variants, out, args)
    if outcomes is not None:
        ok = [o for o in outcomes if o.record]
        print(f"{len(ok)}/{len(outcomes)} runs succeeded; results in {out / 'results.csv'}")
    return code


def cmd_ablate(cfg, out: Path, args) -> int:
    section = _section(cfg, "ablate")
    outcomes, code = _sweep(cfg, section, section.variants, out, args, {"axes": list(section.axes)})
    if outcomes is None:
        return code
    tables = ex.write_ablation(read_results(out / "results.csv"), section.axes, out) \
        if (out / "results.csv").exists() else {}
    for axis, table in tables.items():
        print(ex.render_table(table, ABLATION_SETS[axis], axis))
    return code


def cmd_analyze(cfg, out: Path, args) -> int:
    section = _section(cfg, "analyze")
    if args.dry_run:
        for name in ("thresholds", "two_hop", "spectral"):
            if getattr(section, name) is not None:
                print(f"analysis: {name}")
        return 0
    _prepare_out(out, args.force)
    written = ex.run_analyze(section, cfg.seed, out)
    for name in written:
        print(f"{name}: written to {out}")
    return 0


def cmd_report(cfg, out: Path, args) -> int:
    section = _section(cfg, "report")
    if args.dry_run:
        for p in section.inputs:
            print(f"input: {p}")
        return 0
    records = ex.merge_results(section.inputs)  # fail before touching the output directory
    _prepare_out(out, args.force)
    info = ex.run_report(section, out)
    print(f"merged {len(records)} records over {len(info['variants'])} variants into {out / 'report.md'}")
    return 0


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "ablate": cmd_ablate,
            "analyze": cmd_analyze, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        cfg = load_config(args.config, {"out": args.out, "seed": args.seed, "jobs": args.jobs})
        return COMMANDS[args.command](cfg, Path(cfg.out), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, IndexError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
