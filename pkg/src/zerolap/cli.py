"""``zerolap`` command line: ``run`` a configuration or ``describe`` a scenario.

``run`` writes one CSV per table plus ``summary.json`` into ``--out``. The
exit status is 0 when every check passes, 1 when any check fails, and 2
for configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import SCENARIOS, SCHEMA_VERSION, ConfigError, default_config_text, load_config
from .scenarios import COLUMN_DOCS, describe, run_scenario

__all__ = ["main", "run", "write_table"]

log = logging.getLogger("zerolap")


def write_table(path: Path, header, rows) -> None:
    """Comma-separated UTF-8 with a header row; floats are written with ``repr``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def run(cfg, out: Path, workers: int = 1, seed: int | None = None) -> dict:
    """Execute the configured scenarios in order and write their outputs."""
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if seed is None else int(seed)
    checks, files, errors = [], {}, {}
    for name in cfg.scenarios:
        log.info("running %s", name)
        res = run_scenario(name, cfg, workers=workers, seed=seed)
        for tab in res.tables:
            fname = f"{tab.name}.csv"
            write_table(out / fname, tab.header, tab.rows)
            files[fname] = {col: COLUMN_DOCS.get(col, "") for col in tab.header}
        checks += [c.as_dict() for c in res.checks]
        if res.error:
            errors[name] = res.error
            log.error("%s failed: %s", name, res.error)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.source,
        "seed": seed,
        "scenarios": cfg.scenarios,
        "columns": files,
        "checks": checks,
        "errors": errors,
        "n_checks": len(checks),
        "n_failed": sum(not c["pass"] for c in checks),
        "passed": all(c["pass"] for c in checks),
    }
    with open(out / cfg.block("output")["summary"], "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return summary


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zerolap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the scenarios of a configuration file")
    r.add_argument("--config", type=Path, default=None, help="YAML configuration (defaults: no scenarios)")
    r.add_argument("--out", type=Path, default=Path("zerolap-out"), help="output directory")
    r.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    r.add_argument("--seed", type=int, default=None, help="override the configured seed")
    r.add_argument("--scenario", action="append", choices=SCENARIOS,
                   help="run only these scenarios (repeatable), overriding the configured list")
    r.add_argument("-v", "--verbose", action="store_true")
    d = sub.add_parser("describe", help="print what a scenario checks")
    d.add_argument("scenario", nargs="?", help="scenario name; omit to list all")
    d.add_argument("--dump-config", action="store_true", help="print the default configuration")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "describe":
        if args.dump_config:
            sys.stdout.write(default_config_text())
            return 0
        names = [args.scenario] if args.scenario else list(SCENARIOS)
        try:
            for n in names:
                sys.stdout.write(describe(n))
        except KeyError as exc:
            print(f"error: {exc.args[0]}", file=sys.stderr)
            return 2
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.scenario:
        cfg = cfg.with_overrides(scenarios=list(dict.fromkeys(args.scenario)))
    summary = run(cfg, args.out, workers=args.workers, seed=args.seed)
    for c in summary["checks"]:
        mark = "PASS" if c["pass"] else "FAIL"
        print(f"{mark} {c['scenario']}.{c['check']}: {c['value']} {c['comparison']} {c['threshold']}")
    print(f"{summary['n_checks'] - summary['n_failed']}/{summary['n_checks']} checks passed")
    return 0 if summary["passed"] else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
