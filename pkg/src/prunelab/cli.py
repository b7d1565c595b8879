"""Command-line entry point.

Subcommands: run (execute a config), ticket (build and save one ticket),
check (structurally attack a saved ticket), ratios (print a schedule),
report (reformat a rows file).  Exit codes: 0 success, 1 runtime failure
with a one-line error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .data import load_dataset
from .errors import DomainError, PrunelabError
from .harness import emit_report, load_config, parse_rows, run_experiment
from .models import ArchFamily, PRESET_NAMES, preset_specs
from .pipelines import (
    TICKET_KINDS,
    TrainConfig,
    apply_structural_check,
    build_ticket,
    load_ticket,
    save_ticket,
)
from .pruning import keep_ratios, sparsity
from .schedules import SCHEDULE_KINDS, schedule_by_name
from . import seeding


def _parse_dataset_arg(text):
    """Compact dataset syntax: kind:key=value,key=value."""
    if ":" not in text:
        return {"kind": text}
    kind, _, rest = text.partition(":")
    source = {"kind": kind}
    if kind == "csv" and "=" not in rest:
        source["path"] = rest
        return source
    for item in rest.split(","):
        if not item:
            continue
        if "=" not in item:
            raise DomainError(f"dataset option {item!r} is not key=value")
        key, _, value = item.partition("=")
        try:
            source[key] = json.loads(value)
        except json.JSONDecodeError:
            source[key] = value
    return source


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.out:
        import dataclasses

        cfg = dataclasses.replace(cfg, output_dir=args.out)

    def progress(i, total, row):
        acc = "failed" if row.accuracy is None else f"{row.accuracy:.2f}%"
        print(f"[{i}/{total}] {row.pipeline} {row.check} p={row.sparsity} "
              f"seed={row.seed}: {acc}")

    rows = run_experiment(cfg, progress=progress if not args.quiet else None)
    ok = sum(1 for r in rows if r.accuracy is not None)
    print(f"done: {ok}/{len(rows)} cells succeeded")
    return 0


def _cmd_ticket(args):
    specs_shape = None
    split = None
    if args.data:
        split = load_dataset(_parse_dataset_arg(args.data))
        specs_shape = split.train.sample_shape
        classes = split.train.class_count
    else:
        if args.kind != "random":
            raise DomainError(f"pipeline {args.kind!r} needs --data")
        specs_shape = tuple(int(d) for d in args.input_shape.split("x"))
        classes = args.classes
    specs = preset_specs(args.arch, specs_shape, classes)
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed)
    params = {"family": args.family, "schedule": args.schedule, "mode": args.mode,
              "round_fraction": args.round_fraction}
    if args.rewind_epoch is not None:
        params["rewind_epoch"] = args.rewind_epoch
    ticket = build_ticket(args.kind, specs, split, args.sparsity, args.seed, cfg, params)
    save_ticket(ticket, args.out)
    ratios = ", ".join(f"{r:.4f}" for r in keep_ratios(ticket.mask))
    print(f"wrote {args.out}: kind={args.kind} sparsity={sparsity(ticket.mask):.6f} "
          f"keep=[{ratios}]")
    return 0


def _cmd_check(args):
    ticket = load_ticket(args.ticket)
    rng = seeding.stream(args.seed, seeding.CHECK)
    attacked = apply_structural_check(ticket, args.check, rng)
    save_ticket(attacked, args.out)
    print(f"wrote {args.out}: applied {args.check} to {args.ticket}")
    return 0


def _cmd_ratios(args):
    shape = tuple(int(d) for d in args.input_shape.split("x"))
    specs = preset_specs(args.preset, shape, args.classes)
    sizes = [s.weight_count for s in specs]
    schedule = schedule_by_name(args.kind, sizes, specs, args.sparsity,
                                ArchFamily(args.family))
    print(f"{'layer':>5}  {'kind':<6} {'size':>8} {'quota':>8} {'ratio':>10}")
    for i, (spec, m, q, r) in enumerate(
        zip(specs, sizes, schedule.quotas, schedule.ratios), start=1
    ):
        print(f"{i:>5}  {spec.kind:<6} {m:>8} {q:>8} {r:>10.6f}")
    total = sum(sizes)
    kept = schedule.total_kept
    print(f"total retained {kept} of {total} "
          f"(target sparsity {args.sparsity}, achieved {1 - kept / total:.6f})")
    return 0


def _cmd_report(args):
    rows = parse_rows(args.rows)
    out = args.out or (args.rows.rsplit(".", 1)[0] +
                       (".md" if args.format == "markdown-table" else ".out.csv"))
    emit_report(rows, args.format, out)
    print(f"wrote {out} ({len(rows)} detail rows)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="prunelab",
        description="Desk-scale pruning laboratory: schedules, tickets, sanity checks.",
    )
    parser.add_argument("--version", action="version", version=f"prunelab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.add_argument("--out", help="override the config's output directory")
    p_run.add_argument("--quiet", action="store_true", help="suppress per-cell progress")
    p_run.set_defaults(fn=_cmd_run)

    p_ticket = sub.add_parser("ticket", help="build one ticket and save it")
    p_ticket.add_argument("kind", choices=[k for k in TICKET_KINDS if k != "dense"])
    p_ticket.add_argument("--arch", default="mlp-4", choices=PRESET_NAMES)
    p_ticket.add_argument("--sparsity", type=float, default=0.9)
    p_ticket.add_argument("--seed", type=int, default=0)
    p_ticket.add_argument("--data", help="dataset, e.g. synthetic-blobs:classes=3,dim=16,n=600,seed=7")
    p_ticket.add_argument("--input-shape", default="16", help="AxBxC input shape for data-free kinds")
    p_ticket.add_argument("--classes", type=int, default=3)
    p_ticket.add_argument("--family", default="plain", choices=[f.value for f in ArchFamily])
    p_ticket.add_argument("--schedule", default="smart",
                          choices=[k for k in SCHEDULE_KINDS if k != "extracted"])
    p_ticket.add_argument("--mode", default="reset", choices=("reset", "lr-rewind", "hybrid"))
    p_ticket.add_argument("--round-fraction", type=float, default=0.2)
    p_ticket.add_argument("--rewind-epoch", type=int, default=None)
    p_ticket.add_argument("--epochs", type=int, default=40)
    p_ticket.add_argument("--out", default="ticket.plab")
    p_ticket.set_defaults(fn=_cmd_ticket)

    p_check = sub.add_parser("check", help="apply a structural sanity check to a ticket")
    p_check.add_argument("ticket", help="path to a saved ticket")
    p_check.add_argument("check", choices=("rearrange", "shuffle-weights"))
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--out", default="ticket-checked.plab")
    p_check.set_defaults(fn=_cmd_check)

    p_ratios = sub.add_parser("ratios", help="print a keep-ratio schedule")
    p_ratios.add_argument("preset", choices=PRESET_NAMES)
    p_ratios.add_argument("sparsity", type=float)
    p_ratios.add_argument("family", choices=[f.value for f in ArchFamily])
    p_ratios.add_argument("--kind", default="smart",
                          choices=[k for k in SCHEDULE_KINDS if k != "extracted"])
    p_ratios.add_argument("--input-shape", default=None,
                          help="AxBxC input shape (defaults per preset)")
    p_ratios.add_argument("--classes", type=int, default=3)
    p_ratios.set_defaults(fn=_cmd_ratios)

    p_report = sub.add_parser("report", help="reformat a rows CSV")
    p_report.add_argument("rows", help="path to a rows CSV")
    p_report.add_argument("--format", default="csv", choices=("csv", "markdown-table"))
    p_report.add_argument("--out")
    p_report.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    if getattr(args, "command", None) == "ratios" and args.input_shape is None:
        args.input_shape = "16" if args.preset == "mlp-4" else "1x8x8"
    try:
        return args.fn(args)
    except PrunelabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: FileNotFound: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
