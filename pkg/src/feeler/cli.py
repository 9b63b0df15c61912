"""Command-line entry points for the experiment pipeline and service."""

from __future__ import annotations

import argparse
import json
import sys

from . import metrics as metrics_mod
from . import pipeline


def _cmd_init(args):
    exp = pipeline.cmd_init(args.space, args.config, args.dir, seed=args.seed)
    print(f"initialized experiment at {exp.root}")


def _cmd_round(args):
    result = pipeline.cmd_round(args.dir, source=args.source, ratings_csv=args.ratings)
    print(json.dumps(result, sort_keys=True))


def _cmd_tune(args):
    result = pipeline.cmd_tune(args.dir, source=args.source, votes_file=args.votes)
    print(json.dumps(result, sort_keys=True))


def _cmd_evaluate(args):
    result = pipeline.cmd_evaluate(args.dir)
    print(json.dumps(result, sort_keys=True))


def _cmd_analyze(args):
    pair = tuple(args.pair.split(",", 1)) if args.pair else None
    result = pipeline.cmd_analyze(args.dir, variable=args.variable, pair=pair,
                                  n_samples=args.samples, k=args.top_k)
    print(json.dumps(result, sort_keys=True))


def _read_ranking_csv(path):
    import csv
    ids, scores = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or {"id", "score"} - set(reader.fieldnames):
            raise metrics_mod.RankingInputError(f"{path}: needs 'id,score' columns")
        for row in reader:
            ids.append(row["id"])
            scores.append(float(row["score"]))
    return ids, scores


def _cmd_metrics(args):
    label_ids, label_scores = _read_ranking_csv(args.labels)
    pred_ids, pred_scores = _read_ranking_csv(args.predictions)
    label_rank = metrics_mod.rank_by_score(label_ids, label_scores)
    pred_rank = metrics_mod.rank_by_score(pred_ids, pred_scores)
    by_id = dict(zip(pred_ids, pred_scores))
    report = {
        "ap": metrics_mod.average_precision(label_rank, pred_rank, args.rho),
        "ndcg": metrics_mod.ndcg(label_rank, pred_rank, args.folds),
        "mae": metrics_mod.mae(label_scores, [by_id[i] for i in label_ids]),
        "params": {"ap_rho": args.rho, "ndcg_folds": args.folds},
    }
    print(json.dumps(report, sort_keys=True))


def _cmd_serve(args):
    import uvicorn

    from .service import create_app
    app = create_app(args.dir, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feeler",
                                     description="two-stage preference exploration pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create an experiment directory")
    p.add_argument("--space", required=True, help="design-space JSON file")
    p.add_argument("--config", default=None, help="experiment config JSON file")
    p.add_argument("--dir", required=True, help="output experiment directory")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.set_defaults(func=_cmd_init)

    p = sub.add_parser("round", help="label the pending round and refit the model")
    p.add_argument("--dir", required=True)
    p.add_argument("--source", choices=["oracle", "csv"], default="oracle")
    p.add_argument("--ratings", default=None, help="ratings CSV (csv source)")
    p.set_defaults(func=_cmd_round)

    p = sub.add_parser("tune", help="build the stage-2 comparison model")
    p.add_argument("--dir", required=True)
    p.add_argument("--source", choices=["oracle", "votes"], default="oracle")
    p.add_argument("--votes", default=None, help="votes JSON (votes source)")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("evaluate", help="hold-out metrics for both stages")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("analyze", help="variable analysis reports")
    p.add_argument("--dir", required=True)
    p.add_argument("--variable", default=None, help="restrict to one variable")
    p.add_argument("--pair", default=None, help="two variables 'a,b' for correlation")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--top-k", type=int, default=None)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("metrics", help="score a predicted ranking against labels")
    p.add_argument("--labels", required=True, help="labeled ranking CSV (id,score)")
    p.add_argument("--predictions", required=True, help="predicted ranking CSV (id,score)")
    p.add_argument("--rho", type=float, default=metrics_mod.DEFAULT_AP_THRESHOLD)
    p.add_argument("--folds", type=int, default=metrics_mod.DEFAULT_NDCG_FOLDS)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("serve", help="HTTP panel for live labeling and what-if")
    p.add_argument("--dir", required=True)
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static", default=None, help="built frontend directory")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # surface clean one-line errors to the shell
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
