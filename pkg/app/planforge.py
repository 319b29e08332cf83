"""planforge command-line interface.

Gebruik:
    python planforge.py ingest --manifest M --out DIR [--lenient] [--adversarial F]
    python planforge.py shard --in corpus.jsonl --out DIR [--shard-size N]
    python planforge.py train --config run.json --data DIR --out DIR [--resume]
    python planforge.py kill-test --config run.json --data DIR --out DIR --at-step N
    python planforge.py eval --protocol robovqa-bleu|egoplan-top1 --pred P --gold G --out R
    python planforge.py report RUN_DIR... --out DIR [--registry]

Elk commando schrijft één regel JSON naar stdout; logs gaan naar stderr.
Exit codes: 0 ok, 1 data, 2 gebruik, 3 IO.
"""
import argparse
import json
import logging
import os
import sys

import config
import registry
from config import DEFAULT_SHARD_SIZE, load_run_config
from errors import PlanforgeError, StorageError, UsageError
from evalharness import PROTOCOL_IDS, run_eval
from ingest import ingest_corpus, read_corpus
from logging_config import get_logger, setup_logging
from orchestrator import Orchestrator, kill_test
from report import build_report, write_report
from rng import SplitMix64
from shardstore import write_task_shards
from trainer import build_trainer

logger = get_logger(__name__)


def _emit(summary):
    sys.stdout.write(json.dumps(summary, sort_keys=True, separators=(",", ":")) + "\n")
    sys.stdout.flush()


# --- Commando's ---

def cmd_ingest(args):
    report = ingest_corpus(args.manifest, args.out, lenient=args.lenient,
                           adversarial=args.adversarial, threads=args.threads, seed=args.seed)
    datasets = report.to_dict()["datasets"]
    return {
        "command": "ingest",
        "out": args.out,
        "datasets": len(datasets),
        "emitted": sum(c["emitted"] for c in datasets.values()),
        "dropped": sum(c["dropped_point_count"] + c["dropped_outdoor"] + c["dropped_schema"]
                       for c in datasets.values()),
        "conserved": report.conserved(),
    }


def cmd_shard(args):
    seed = args.seed if args.seed is not None else 0
    manifests = write_task_shards(read_corpus(args.input), args.shard_size, args.out, seed=seed)
    return {
        "command": "shard",
        "out": args.out,
        "tasks": {task.value: m.total_records for task, m in sorted(
            manifests.items(), key=lambda kv: kv[0].value)},
        "shards": sum(len(m.shards) for m in manifests.values()),
    }


def cmd_train(args):
    run_config = load_run_config(args.config, seed_override=args.seed)
    registry.init_registry()
    orchestrator = Orchestrator(run_config, build_trainer(run_config), args.data, args.out)
    summary = orchestrator.run(resume=args.resume)
    return {
        "command": "train",
        "out": args.out,
        "resumed": args.resume,
        "steps": summary.steps,
        "checkpoints": len(summary.checkpoints_written),
        "alerts": len(summary.alerts),
        "final_losses": summary.final_losses,
        "trace_digest": summary.trace_digest,
    }


def cmd_kill_test(args):
    run_config = load_run_config(args.config, seed_override=args.seed)
    steps = set(args.at_step or [])
    if args.random_kills:
        rng = SplitMix64(run_config.seed)
        target = min(len(steps) + args.random_kills, run_config.total_steps)
        while len(steps) < target:
            steps.add(1 + rng.below(run_config.total_steps))
    if not steps:
        raise UsageError("INVALID_CONFIG", "geef --at-step of --random-kills")
    result = kill_test(run_config, args.data, args.out, steps)
    summary = {"command": "kill-test", "out": args.out}
    summary.update({k: v for k, v in result.items() if k != "kills"})
    summary["kills"] = len(result["kills"])
    if not result["passed"]:
        logger.error("Kill-test gefaald", extra=summary)
    return summary


def cmd_eval(args):
    report = run_eval(args.protocol, args.pred, args.gold, args.out)
    if registry.init_registry():
        name = args.name or os.path.splitext(os.path.basename(args.pred))[0]
        registry.record_eval(report.to_dict(), name)
    return {
        "command": "eval",
        "out": args.out,
        "protocol": report.protocol,
        "scores": report.scores,
        "items": report.counts["items"],
    }


def cmd_report(args):
    extra = []
    if args.registry:
        if not registry.init_registry():
            logger.warning("Registry gevraagd maar niet geconfigureerd")
        extra = registry.list_eval_reports()
    consolidated = build_report(args.paths, extra_reports=extra)
    write_report(consolidated, args.out)
    return {
        "command": "report",
        "out": args.out,
        "protocol": consolidated["protocol"],
        "rows": len(consolidated["rows"]),
        "runs": len(consolidated["runs"]),
    }


# --- Parser ---

def _fraction(value):
    f = float(value)
    if not 0.0 <= f <= 1.0:
        raise argparse.ArgumentTypeError("fractie moet in [0, 1] liggen")
    return f


def _positive(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("moet >= 1 zijn")
    return n


def build_parser():
    parser = argparse.ArgumentParser(prog="planforge",
                                     description="Multi-task multimodal training-data pipeline")
    parser.add_argument("--seed", type=int, default=None, help="overschrijf de seed")
    parser.add_argument("--threads", type=_positive, default=1, help="parallelle ingest")
    parser.add_argument("--quiet", action="store_true", help="alleen waarschuwingen loggen")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="bronrecords naar uniform-sample JSONL")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--adversarial", type=_fraction, default=None)
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("shard", help="corpus.jsonl naar per-taak shards")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--shard-size", type=_positive, default=DEFAULT_SHARD_SIZE)
    p.set_defaults(handler=cmd_shard)

    p = sub.add_parser("train", help="training-run (of hervatting)")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("kill-test", help="crash/resume harnas tegen een ononderbroken run")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--at-step", type=_positive, action="append")
    p.add_argument("--random-kills", type=_positive, default=0)
    p.set_defaults(handler=cmd_kill_test)

    p = sub.add_parser("eval", help="scoor voorspellingen tegen gold")
    p.add_argument("--protocol", required=True, choices=sorted(PROTOCOL_IDS))
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default=None, help="naam in de registry")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("report", help="vergelijkingstabel over eval-rapporten en runs")
    p.add_argument("paths", nargs="*")
    p.add_argument("--out", required=True)
    p.add_argument("--registry", action="store_true")
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    level = logging.WARNING if args.quiet else getattr(logging, config.LOG_LEVEL.upper(),
                                                        logging.INFO)
    setup_logging(level)

    try:
        summary = args.handler(args)
    except PlanforgeError as e:
        logger.error("Commando mislukt", extra={"command": args.command, "error": e.code,
                                                "details": e.details})
        _emit({"command": args.command, "ok": False, **e.to_dict()})
        return e.exit_code
    except OSError as e:
        error = StorageError("IO_FAILURE", str(e))
        logger.error("Commando mislukt", extra={"command": args.command, "error": error.code})
        _emit({"command": args.command, "ok": False, **error.to_dict()})
        return error.exit_code

    summary["ok"] = True
    _emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
