"""Command-line entry point.

Subcommands::

    mmse-audit audit  --config cfg.json [--out DIR] [--seed S] [--delta D]
    mmse-audit sweep  --config cfg.json --out DIR [--seed S] [--jobs K] [--delta D]
    mmse-audit figure --csv results.csv --config cfg.json --out DIR
    mmse-audit verify
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import checks
from .errors import AuditError
from .experiment import ExperimentConfig, audit_point, emit_csv, read_csv, run_audit, write_report
from .plotting import emit_plot


def _load_config(args) -> ExperimentConfig:
    with open(args.config) as fh:
        raw = json.load(fh)
    cfg = ExperimentConfig.from_dict(raw)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "delta", None) is not None:
        overrides["delta"] = args.delta
    return replace(cfg, **overrides) if overrides else cfg


def _figures(cfg_figures, rows, out: Path) -> list[Path]:
    paths = []
    for i, spec in enumerate(cfg_figures):
        name = spec.get("name", f"fig_{i}")
        if not name.startswith("fig_"):
            name = "fig_" + name
        paths.append(emit_plot(rows, spec, out / f"{name}.svg"))
    return paths


def cmd_audit(args) -> int:
    cfg = _load_config(args)
    row = audit_point(cfg, args.point, 0)
    print(json.dumps(row, indent=2, sort_keys=True, default=float))
    if args.out:
        out = Path(args.out)
        write_report(cfg, [row], out / "report.json")
    return 1 if row.get("error") else 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    rows = run_audit(cfg, jobs=args.jobs)
    csv_path = emit_csv(rows, out / "results.csv")
    write_report(cfg, rows, out / "report.json")
    _figures(cfg.figures, read_csv(csv_path), out)
    n_err = sum(1 for r in rows if r.get("error"))
    print(f"wrote {csv_path} ({len(rows)} rows, {n_err} errors)")
    return 0


def cmd_figure(args) -> int:
    with open(args.config) as fh:
        figs = json.load(fh).get("figures", [])
    if args.spec:
        with open(args.spec) as fh:
            figs = [json.load(fh)]
    for p in _figures(figs, read_csv(args.csv), Path(args.out)):
        print(f"wrote {p}")
    return 0


def cmd_verify(args) -> int:
    return 0 if checks.run_all() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmse-audit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", help="one audit at a single grid point")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--point", type=int, default=0, help="grid index (default 0)")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="run a full grid and write results.csv, report.json, figures")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--delta", type=float)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("figure", help="render SVG figures from an existing results.csv")
    p.add_argument("--csv", required=True)
    p.add_argument("--config", required=True, help="config whose 'figures' list is rendered")
    p.add_argument("--spec", help="a single plot spec JSON file, used instead of the config list")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("verify", help="run the built-in invariant checks")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AuditError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
