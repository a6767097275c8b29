"""Staged end-to-end pipeline with per-stage manifests and resume.

Stages run in a fixed order. Each one writes its artifacts under the output
directory and then ``manifests/<stage>.json`` recording the seed, a hash of
its inputs (config plus upstream artifacts) and the hashes of its outputs. A
stage whose manifest matches the current inputs and whose outputs are intact
is skipped on the next run.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from ..curriculum import (
    CurriculumItem,
    difficulty_ap_count,
    difficulty_formula_length,
    difficulty_nl_similarity,
    difficulty_stl_similarity,
    load_manifest,
    order,
)
from ..encoders import HashedTfidfEncoder, HttpEncoder, TextEncoder
from ..rewards import METRIC_TAGS, MetricRewards
from ..reward_model import (
    CandidateSet,
    ModelRewards,
    PreferencePair,
    RewardModelParams,
    build_preferences,
    train_reward_model,
)
from ..rl.backends import HttpGenerator, PolicyBackend, ReferenceMutationGenerator, candidate_set
from ..rl.policy import GrammarPolicy, GrammarSpec
from ..rl.ppo import train_loop
from ..stl import Formula, atoms, depth, parse, render, walk
from ..stl.syntax import Finally, Globally, Until
from .config import RunConfig
from .dataset import DataError, NlStlRecord, atomic_write, load_dataset, read_jsonl, save_dataset, write_jsonl
from .errors import error_profile
from .evaluation import evaluate_corpus

log = logging.getLogger(__name__)

STAGES = ("ingest", "candidates", "preferences", "curriculum", "reward_models", "ppo", "evaluate")


class StageFailure(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def bundled_toy_corpus() -> Path:
    return Path(str(resources.files("restl") / "data" / "toy_corpus.jsonl"))


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def grammar_from_records(records: Sequence[NlStlRecord], max_depth: int = 0, feature_dim: int = 256) -> GrammarSpec:
    """A grammar whose bins cover the references' variables, constants and intervals."""
    variables, comparators, thresholds, los, widths = set(), set(), set(), set(), set()
    deepest = 1
    for r in records:
        deepest = max(deepest, depth(r.formula))
        for a in atoms(r.formula):
            if len(a.lhs) == 1 and a.lhs[0][1] is not None and a.op is not None:
                variables.add(a.lhs[0][1])
                comparators.add(a.op)
                thresholds.add(a.rhs)
        for n in walk(r.formula):
            if isinstance(n, (Globally, Finally, Until)) and n.interval is not None and not n.interval.symbolic:
                los.add(n.interval.lo)
                widths.add(n.interval.hi - n.interval.lo)
    return GrammarSpec(
        variables=tuple(sorted(variables)) or ("x",),
        comparators=tuple(sorted(comparators)) or (">", "<"),
        thresholds=tuple(sorted(thresholds)) or (0.0,),
        lo_bins=tuple(sorted(los)) or (0.0,),
        width_bins=tuple(sorted(widths)) or (1.0,),
        max_depth=max_depth or min(4, deepest),
        feature_dim=feature_dim,
    )


@dataclass
class RunResult:
    output_dir: Path
    executed: List[str] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)


class Pipeline:
    def __init__(self, cfg: RunConfig, output_dir, hooks: Optional[Dict[str, Callable[[], None]]] = None):
        self.cfg = cfg
        self.out = Path(output_dir)
        # hooks run before a stage body; tests use them to simulate crashes
        self.hooks = hooks or {}
        self._encoder: Optional[TextEncoder] = None

    # ---- paths -------------------------------------------------------------
    def p(self, rel: str) -> Path:
        return self.out / rel

    def dataset_path(self) -> Path:
        return bundled_toy_corpus() if self.cfg.dataset == "toy" else Path(self.cfg.dataset)

    STAGE_INPUTS = {
        "ingest": [],
        "candidates": ["data/records.jsonl"],
        "preferences": ["data/records.jsonl", "candidates.jsonl"],
        "curriculum": ["data/records.jsonl", "candidates.jsonl"],
        "reward_models": [f"preferences/{t}.jsonl" for t in METRIC_TAGS] + [f"curriculum/{t}.jsonl" for t in METRIC_TAGS],
        "ppo": ["data/records.jsonl"] + [f"reward_models/{t}.json" for t in METRIC_TAGS],
        "evaluate": ["data/records.jsonl", "ppo/policy.json"],
    }

    def inputs_hash(self, stage: str) -> Optional[str]:
        parts = {"stage": stage, "config": self.cfg.digest()}
        if stage == "ingest":
            try:
                parts["dataset"] = file_hash(self.dataset_path())
            except OSError as exc:
                raise DataError(f"cannot read dataset {self.dataset_path()}: {exc}") from exc
        for rel in self.STAGE_INPUTS[stage]:
            if not self.p(rel).exists():
                return None
            parts[rel] = file_hash(self.p(rel))
        return hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()

    def manifest_path(self, stage: str) -> Path:
        return self.p(f"manifests/{stage}.json")

    def is_complete(self, stage: str) -> bool:
        mp = self.manifest_path(stage)
        if not mp.exists():
            return False
        try:
            manifest = json.loads(mp.read_text(encoding="utf-8"))
            if manifest.get("inputs_hash") != self.inputs_hash(stage):
                return False
            return all(self.p(rel).exists() and file_hash(self.p(rel)) == digest
                       for rel, digest in manifest["outputs"].items())
        except (ValueError, KeyError, OSError):
            return False

    def plan(self) -> List[tuple]:
        """(stage, 'skip' | 'run') without touching the filesystem.

        A stage after one that must run is reported as 'run' since its inputs
        may change.
        """
        out, dirty = [], False
        for stage in STAGES:
            done = not dirty and self.out.exists() and self.is_complete(stage)
            dirty = dirty or not done
            out.append((stage, "skip" if done else "run"))
        return out

    # ---- orchestration ----------------------------------------------------
    def run(self, stop_after: Optional[str] = None) -> RunResult:
        """Run every stage, or stages up to and including ``stop_after``."""
        if stop_after is not None and stop_after not in STAGES:
            raise ValueError(f"unknown stage {stop_after!r}")
        result = RunResult(self.out)
        for sub in ("manifests", "data", "preferences", "curriculum", "reward_models", "ppo", "eval"):
            self.p(sub).mkdir(parents=True, exist_ok=True)
        for stage in STAGES:
            if self.is_complete(stage):
                log.info("stage %s: up to date, skipping", stage)
                result.skipped.append(stage)
                if stage == stop_after:
                    break
                continue
            log.info("stage %s: running", stage)
            self.manifest_path(stage).unlink(missing_ok=True)
            try:
                if stage in self.hooks:
                    self.hooks[stage]()
                outputs = getattr(self, f"stage_{stage}")()
            except DataError:
                raise
            except Exception as exc:
                raise StageFailure(stage, exc) from exc
            manifest = {
                "stage": stage,
                "seed": self.cfg.seed,
                "config_digest": self.cfg.digest(),
                "inputs_hash": self.inputs_hash(stage),
                "outputs": {rel: file_hash(self.p(rel)) for rel in sorted(outputs)},
            }
            _write_json(self.manifest_path(stage), manifest)
            result.executed.append(stage)
            if stage == stop_after:
                break
        return result

    # ---- helpers -----------------------------------------------------------
    def records(self) -> List[NlStlRecord]:
        return [NlStlRecord(r["instruction"], r["input"], r["output"]) for r in read_jsonl(self.p("data/records.jsonl"))]

    def encoder(self) -> TextEncoder:
        if self._encoder is None:
            if self.cfg.encoder == "http":
                self._encoder = HttpEncoder(self.cfg.encoder_url)
            else:
                self._encoder = HashedTfidfEncoder.fit(r.input for r in self.records())
        return self._encoder

    def candidates(self) -> List[dict]:
        return read_jsonl(self.p("candidates.jsonl"))

    def backend(self, records):
        cfg = self.cfg
        if cfg.backend == "mutation":
            return ReferenceMutationGenerator({r.input: r.formula for r in records})
        if cfg.backend == "policy":
            spec = grammar_from_records(records, cfg.policy_max_depth, cfg.policy_feature_dim)
            return PolicyBackend(GrammarPolicy(spec))
        return HttpGenerator(cfg.generator_url, cfg.prompt_template, token_env=cfg.generator_token_env)

    # ---- stages ------------------------------------------------------------
    def stage_ingest(self):
        loaded = load_dataset(self.dataset_path())
        save_dataset(self.p("data/records.jsonl"), loaded.records)
        write_jsonl(self.p("data/rejects.jsonl"), loaded.rejects)
        if loaded.rejects:
            log.warning("%d dataset lines rejected; see data/rejects.jsonl", len(loaded.rejects))
        return ["data/records.jsonl", "data/rejects.jsonl"]

    def stage_candidates(self):
        records = self.records()
        backend = self.backend(records)
        rows = []
        for i, r in enumerate(records):
            cs, parsed = candidate_set(backend, r.input, self.cfg.samples_per_input, self.cfg.candidates_k,
                                       seed=self.cfg.seed * 1_000_003 + i)
            rows.append({
                "index": i,
                "x": r.input,
                "candidates": [render(c) for c in cs.candidates],
                "provenance": cs.provenance,
                "failures": [{"text": t, "error": e} for t, e in parsed.failures],
            })
        write_jsonl(self.p("candidates.jsonl"), rows)
        return ["candidates.jsonl"]

    def stage_preferences(self):
        records = self.records()
        enc = self.encoder()
        outputs = []
        for tag in METRIC_TAGS:
            rows = []
            for row in self.candidates():
                cands = tuple(parse(c) for c in row["candidates"])
                if len(cands) < 2:
                    continue
                cs = CandidateSet(row["x"], cands, row["provenance"])
                for pair in build_preferences(cs, records[row["index"]].formula, tag, enc):
                    rows.append({**pair.to_json(), "index": row["index"]})
            rel = f"preferences/{tag}.jsonl"
            write_jsonl(self.p(rel), rows)
            outputs.append(rel)
        return outputs

    def difficulty(self, tag: str, record: NlStlRecord, candidates: Sequence[Formula]) -> float:
        if tag == "ap_count":
            return difficulty_ap_count(record.formula)
        if tag == "formula_length":
            return difficulty_formula_length(record.formula)
        cands = list(candidates) or [record.formula]
        if tag == "nl_similarity":
            return difficulty_nl_similarity(record.input, cands, self.encoder())
        return difficulty_stl_similarity(record.formula, cands)

    def stage_curriculum(self):
        records = self.records()
        cands = {row["index"]: [parse(c) for c in row["candidates"]] for row in self.candidates()}
        outputs = []
        for metric in METRIC_TAGS:
            tag, mode = self.cfg.curriculum(metric)
            items = [CurriculumItem(i, self.difficulty(tag, r, cands.get(i, ())), tag) for i, r in enumerate(records)]
            by_index = {it.index: it for it in items}
            rel = f"curriculum/{metric}.jsonl"
            ordered = [by_index[i] for i in order(items, mode, seed=self.cfg.seed)]
            write_jsonl(self.p(rel), [asdict(it) for it in ordered])
            outputs.append(rel)
        return outputs

    def stage_reward_models(self):
        enc = self.encoder()
        outputs = []
        for metric in METRIC_TAGS:
            rows = read_jsonl(self.p(f"preferences/{metric}.jsonl"))
            rank = {it.index: pos for pos, it in enumerate(load_manifest(self.p(f"curriculum/{metric}.jsonl")))}
            rows.sort(key=lambda r: rank[r["index"]])  # stable: pair order within a record is kept
            prefs = [PreferencePair.from_json(r) for r in rows]
            if not prefs:
                raise RuntimeError(f"no preference pairs for metric {metric!r}; candidates were all tied")
            params, trace = train_reward_model(prefs, self.cfg.rm(), enc, metric)
            params.save(self.p(f"reward_models/{metric}.json"))
            _write_json(self.p(f"reward_models/{metric}_loss.json"), {"metric": metric, "pairs": len(prefs), "loss": trace})
            outputs += [f"reward_models/{metric}.json", f"reward_models/{metric}_loss.json"]
        return outputs

    def training_set(self):
        return [(r.input, r.formula) for r in self.records()]

    def stage_ppo(self):
        records = self.records()
        spec = grammar_from_records(records, self.cfg.policy_max_depth, self.cfg.policy_feature_dim)
        policy0 = GrammarPolicy(spec)
        if self.cfg.reward_mode == "model":
            models = {t: RewardModelParams.load(self.p(f"reward_models/{t}.json")) for t in METRIC_TAGS}
            rewards = ModelRewards(models, self.encoder())
        else:
            rewards = MetricRewards(self.encoder())
        data = self.training_set()
        result = train_loop(data, policy0, rewards, self.cfg.ppo())
        result.policy.save(self.p("ppo/policy.json"))
        result.write_curve(self.p("ppo/curve.csv"))
        result.write_summary(self.p("ppo/summary.json"), dataset=data, ref=policy0)
        return ["ppo/policy.json", "ppo/curve.csv", "ppo/summary.json"]

    def stage_evaluate(self):
        records = self.records()
        policy = GrammarPolicy.load(self.p("ppo/policy.json"))
        preds = [policy.greedy(r.input) for r in records]
        write_jsonl(self.p("eval/predictions.jsonl"), [
            {"input": r.input, "reference": r.output, "prediction": render(h)} for r, h in zip(records, preds)
        ])
        report = evaluate_corpus([(r.formula, h) for r, h in zip(records, preds)])
        atomic_write(self.p("eval/report.json"), report.to_json() + "\n")
        atomic_write(self.p("eval/report.txt"), report.to_table() + "\n")
        profile = error_profile([(r.formula, h) for r, h in zip(records, preds)])
        _write_json(self.p("eval/errors.json"), profile.to_json())
        return ["eval/predictions.jsonl", "eval/report.json", "eval/report.txt", "eval/errors.json"]


def run_pipeline(cfg: RunConfig, output_dir, hooks=None) -> RunResult:
    return Pipeline(cfg, output_dir, hooks).run()


def dry_run(cfg: RunConfig, output_dir) -> List[tuple]:
    return Pipeline(cfg, output_dir).plan()
