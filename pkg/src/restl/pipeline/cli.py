"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error (bad
formula, signal or dataset), 3 pipeline stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Optional

from ..curriculum import MODES, TAGS, CurriculumItem, order
from ..encoders import HashedTfidfEncoder
from ..rewards import METRIC_TAGS, MetricRewards, reward_vector
from ..reward_model import TrainConfig, load_preferences, train_reward_model
from ..rl.policy import GrammarPolicy
from ..rl.ppo import train_loop
from ..stl import STLError, SignalError, check, evaluate, load_signal_csv, parse, render, render_templated_nl, to_template
from .config import ConfigError, load_config, with_overrides
from .dataset import DataError, load_dataset, load_predictions, read_jsonl, write_jsonl
from .errors import error_profile
from .evaluation import evaluate_corpus
from .runner import STAGES, Pipeline, StageFailure, grammar_from_records

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_STAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _horizons(pairs: List[str]) -> dict:
    out = {}
    for item in pairs or []:
        name, _, value = item.partition("=")
        try:
            out[name] = float(value)
        except ValueError:
            raise UsageError(f"--horizon expects NAME=VALUE, got {item!r}") from None
    return out


def _emit(obj, args):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if getattr(args, "out", None):
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_parse(args, cfg):
    f = parse(args.formula)
    print(render(to_template(f)) if args.template else render(f))
    if args.nl:
        print(render_templated_nl(f))
    return EXIT_OK


def cmd_monitor(args, cfg):
    f = parse(args.formula)
    signal = load_signal_csv(args.signal)
    horizons = _horizons(args.horizon)
    verdict = evaluate(f, signal, args.time, horizons) if args.time else check(f, signal, horizons)
    print("true" if verdict else "false")
    return EXIT_OK


def cmd_score(args, cfg):
    hyp, ref = parse(args.hyp), parse(args.ref)
    scores = MetricRewards(HashedTfidfEncoder())(args.x, hyp, ref)
    _emit(reward_vector(scores, cfg.weights(), args.kl).to_dict(), args)
    return EXIT_OK


def _pipeline_for(args, cfg, dataset: Optional[str]) -> Pipeline:
    if dataset:
        cfg = with_overrides(cfg, dataset=dataset)
    return Pipeline(cfg, Path(args.output_dir))


def cmd_make_prefs(args, cfg):
    """Ingest, generate candidates and write one preference file per metric."""
    pipe = _pipeline_for(args, cfg, args.dataset)
    pipe.run(stop_after="preferences")
    for tag in METRIC_TAGS:
        print(pipe.p(f"preferences/{tag}.jsonl"))
    return EXIT_OK


def cmd_order_curriculum(args, cfg):
    rows = read_jsonl(args.items)
    items = [CurriculumItem(int(r["index"]), float(r["difficulty"]), r.get("tag", args.tag)) for r in rows]
    perm = order(items, args.mode, seed=cfg.seed)
    by_index = {it.index: it for it in items}
    ordered = [asdict(by_index[i]) for i in perm]
    if args.out:
        write_jsonl(args.out, ordered)
    else:
        for row in ordered:
            print(json.dumps(row, sort_keys=True))
    return EXIT_OK


def cmd_train_rm(args, cfg):
    prefs = load_preferences(args.prefs)
    if not prefs:
        raise DataError(f"no preference pairs in {args.prefs}")
    encoder = HashedTfidfEncoder.fit(p.x for p in prefs)
    tc = TrainConfig(epochs=args.epochs or cfg.rm_epochs, lr=args.lr or cfg.rm_lr,
                     batch_size=args.batch_size or cfg.rm_batch_size, seed=cfg.seed)
    params, trace = train_reward_model(prefs, tc, encoder)
    out = Path(args.out)
    params.save(out)
    print(json.dumps({"model": str(out), "pairs": len(prefs), "loss": trace}, sort_keys=True))
    return EXIT_OK


def cmd_train_ppo(args, cfg):
    records = load_dataset(args.dataset).records
    data = [(r.input, r.formula) for r in records]
    spec = grammar_from_records(records, cfg.policy_max_depth, cfg.policy_feature_dim)
    policy0 = GrammarPolicy(spec)
    encoder = HashedTfidfEncoder.fit(r.input for r in records)
    ppo = cfg.ppo()
    if args.episodes:
        ppo = replace(ppo, total_episodes=args.episodes)
    result = train_loop(data, policy0, MetricRewards(encoder), ppo)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.policy.save(out / "policy.json")
    result.write_curve(out / "curve.csv")
    result.write_summary(out / "summary.json", dataset=data, ref=policy0)
    print(json.dumps(result.summary(dataset=data, ref=policy0), indent=2, sort_keys=True))
    return EXIT_OK


def _prediction_pairs(path):
    pairs = []
    for ref_text, hyp_text in load_predictions(path):
        ref = parse(ref_text)
        try:
            hyp = parse(hyp_text) if hyp_text is not None else None
        except STLError:
            hyp = None
        pairs.append((ref, hyp))
    return pairs


def cmd_evaluate(args, cfg):
    report = evaluate_corpus(_prediction_pairs(args.predictions))
    print(report.to_table() if args.format == "table" else report.to_json())
    return EXIT_OK


def cmd_analyze_errors(args, cfg):
    profile = error_profile(_prediction_pairs(args.predictions))
    body = profile.to_json()
    if not args.per_sample:
        body.pop("per_sample")
    _emit(body, args)
    return EXIT_OK


def cmd_run(args, cfg):
    result = Pipeline(cfg, Path(args.output_dir)).run()
    print(json.dumps({"output_dir": str(result.output_dir), "executed": result.executed,
                      "skipped": result.skipped}, indent=2))
    return EXIT_OK


def cmd_dry_run(args, cfg):
    for stage, action in Pipeline(cfg, Path(args.output_dir)).plan():
        print(f"{stage:<14} {action}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="restl", description="NL-to-STL toolkit: parsing, monitoring, rewards, training pipeline.")
    ap.add_argument("--config", help="key = value run config file")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--output-dir", default="restl-out", help="artifact directory (default: restl-out)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="check and canonicalize a formula")
    p.add_argument("formula")
    p.add_argument("--template", action="store_true", help="print the template instead")
    p.add_argument("--nl", action="store_true", help="also print the templated English rendering")
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("monitor", help="check a formula against a signal CSV")
    p.add_argument("formula")
    p.add_argument("signal", help="CSV with a leading time column")
    p.add_argument("--time", type=float, default=0.0)
    p.add_argument("--horizon", action="append", metavar="NAME=VALUE", help="bind a symbolic bound such as T")
    p.set_defaults(fn=cmd_monitor)

    p = sub.add_parser("score", help="reward vector for one candidate")
    p.add_argument("--x", required=True, help="natural-language input")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--kl", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("make-prefs", help="generate candidates and per-metric preference pairs")
    p.add_argument("--dataset", help="JSONL dataset (default: config dataset)")
    p.set_defaults(fn=cmd_make_prefs)

    p = sub.add_parser("order-curriculum", help="order JSONL {index, difficulty} items")
    p.add_argument("items")
    p.add_argument("--mode", choices=MODES, default="forward")
    p.add_argument("--tag", choices=TAGS, default="ap_count")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_order_curriculum)

    p = sub.add_parser("train-rm", help="train a Bradley-Terry reward model on a preference file")
    p.add_argument("prefs")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.set_defaults(fn=cmd_train_rm)

    p = sub.add_parser("train-ppo", help="train the grammar policy with metric rewards")
    p.add_argument("dataset")
    p.add_argument("--episodes", type=int)
    p.set_defaults(fn=cmd_train_ppo)

    p = sub.add_parser("evaluate", help="formula/template accuracy and BLEU for a predictions file")
    p.add_argument("predictions", help="JSONL with reference/output and prediction fields")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("analyze-errors", help="AP/operator/value/redundancy error counts")
    p.add_argument("predictions")
    p.add_argument("--per-sample", action="store_true")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_analyze_errors)

    p = sub.add_parser("run", help=f"run the full pipeline ({' -> '.join(STAGES)})")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("dry-run", help="list the stages a run would execute")
    p.set_defaults(fn=cmd_dry_run)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed)
        return args.fn(args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"restl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, STLError, SignalError, OSError) as exc:
        print(f"restl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StageFailure as exc:
        print(f"restl: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
