"""``mebns`` command line: split, train, eval, migration, theorem-check."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .analysis import ScoreLog, migration_matrix, verify_landscape_gap
from .autodiff import ParamStore
from .config import parse_config
from .errors import ConfigError, MebnsError
from .evaluation import evaluate
from .graph import load_graph, split_edges, write_split_manifest
from .model import encode
from .pipeline import SCHEMA_VERSION, RunConfig, TrainReport, prepare, run_mebns

EXIT_OK, EXIT_RUN, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("mebns")


def dump_json(obj, path):
    """Stable-key JSON; same object -> same bytes."""
    text = json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")
    return text


def _stamp(kind, body, config=None, seed=None):
    out = {"schema_version": SCHEMA_VERSION, "kind": kind, **body}
    if config is not None:
        out["config"] = config
    if seed is not None:
        out["seed"] = seed
    return out


def emit_report(report, path):
    """Write a TrainReport (plus ScoreLog CSV and timings when present) next to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dump_json(_stamp("train_report", report.to_dict()), path)
    written = [path]
    if report.timings:
        tpath = path.with_name("timings.json")
        dump_json(_stamp("timings", {"timings": report.timings}, report.config, report.config.get("seed")), tpath)
        written.append(tpath)
    if report.score_log is not None:
        spath = path.with_name("scores.csv")
        report.score_log.write_csv(spath)
        written.append(spath)
    return written


def read_report(path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported schema_version {data.get('schema_version')!r}")
    return TrainReport.from_dict(data)


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def _config_from_args(args, **extra):
    overrides = {
        "edge_file": getattr(args, "edges", None),
        "feature_file": getattr(args, "features", None),
        "split_manifest": getattr(args, "split", None),
        "num_nodes": getattr(args, "num_nodes", None),
        "seed": getattr(args, "seed", None),
        **extra,
    }
    if getattr(args, "config", None):
        return parse_config(args.config, overrides)
    return RunConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def cmd_split(args):
    cfg = _config_from_args(args)
    if cfg.edge_file is None:
        raise ConfigError("split needs --edges or a config with edge_file")
    g = load_graph(cfg.edge_file, cfg.feature_file, cfg.num_nodes, cfg.num_features)
    split = split_edges(g, cfg.seed)
    write_split_manifest(split, args.out)
    print(f"split: train={len(split.train)} valid={len(split.valid)} test={len(split.test)} -> {args.out}")
    return EXIT_OK


def cmd_train(args):
    extra = {}
    if args.mebns is not None:
        extra["mebns"] = args.mebns
    if args.log_scores:
        extra["log_scores"] = True
    if args.sampler:
        extra["sampler"] = args.sampler
    cfg = _config_from_args(args, **extra)
    out = Path(args.out)
    report = run_mebns(cfg, checkpoint_dir=out / "checkpoints")
    for name in emit_report(report, out / "report.json"):
        print(f"wrote {name}")
    t = report.test["final"]
    print(f"test auc={t['auc']:.4f} hits@20={t['hits@20']:.4f} hits@30={t['hits@30']:.4f}")
    return EXIT_OK


def cmd_eval(args):
    cfg = _config_from_args(args)
    data = prepare(cfg)
    params = ParamStore.load(args.checkpoint)
    emb = encode(data.split.message_graph, params)
    body = {"checkpoint": str(args.checkpoint), "metrics": {s: evaluate(emb, data.evalset, s) for s in ("valid", "test")}}
    text = dump_json(_stamp("eval", body, cfg.to_dict(), cfg.seed), args.out)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_migration(args):
    slog = ScoreLog.read_csv(args.scores)
    counts, rec = migration_matrix(slog, args.e1, args.e2, args.gap)
    rec.write_csv(args.out)
    body = {
        "counts": counts,
        "e1": args.e1,
        "e2": args.e2,
        "gap_threshold": args.gap,
        "probe_size": len(slog),
        "red_fraction": rec.red_fraction(),
        "scores": str(args.scores),
        "thresholds": list(rec.thresholds),
    }
    summary = Path(args.out).with_suffix(".json")
    dump_json(_stamp("migration", body, {"e1": args.e1, "e2": args.e2, "gap_threshold": args.gap}), summary)
    print(json.dumps(counts, sort_keys=True))
    return EXIT_OK


def cmd_theorem(args):
    rep = verify_landscape_gap(args.instances, args.size, args.seed)
    params = {"instances": args.instances, "size": args.size}
    text = json.dumps(_stamp("theorem_check", rep, params, args.seed), sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK if rep["pass"] else EXIT_RUN


def build_parser():
    p = argparse.ArgumentParser(prog="mebns", description="Meta-bootstrapped negative sampling for GCN link prediction")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp, split=True):
        sp.add_argument("--config", help="config file (flags override its values)")
        sp.add_argument("--edges", help="edge TSV")
        sp.add_argument("--features", help="feature CSV")
        sp.add_argument("--num-nodes", type=int)
        if split:
            sp.add_argument("--split", help="split manifest JSON")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("split", help="write a 70/10/20 split manifest")
    data_args(sp, split=False)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("train", help="train teacher (and student) and write a report")
    data_args(sp)
    sp.add_argument("--mebns", type=_on_off, metavar="on|off")
    sp.add_argument("--sampler", choices=("uniform", "pns", "dns"))
    sp.add_argument("--log-scores", action="store_true", help="record probe scores every epoch")
    sp.add_argument("--out", required=True, help="output folder")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="metrics for a saved checkpoint")
    data_args(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("migration", help="migration colors between two logged epochs")
    sp.add_argument("--scores", required=True, help="scores.csv from train --log-scores")
    sp.add_argument("--e1", type=int, required=True)
    sp.add_argument("--e2", type=int, required=True)
    sp.add_argument("--gap", type=float, default=0.3)
    sp.add_argument("--out", required=True, help="per-sample CSV; a .json summary is written alongside")
    sp.set_defaults(func=cmd_migration)

    sp = sub.add_parser("theorem-check", help="numeric check of the sampling-landscape inequality")
    sp.add_argument("--instances", type=int, default=200)
    sp.add_argument("--size", type=int, default=10)
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_theorem)
    return p


def _error_line(e):
    return " ".join(str(e).split())


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except MebnsError as e:
        kind = getattr(e, "kind", "error")
        print(f"mebns: {kind} error: {_error_line(e)}", file=sys.stderr)
        return EXIT_CONFIG if kind == "config" else EXIT_RUN
    except OSError as e:
        print(f"mebns: io error: {_error_line(e)}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
