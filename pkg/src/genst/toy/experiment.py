"""Nine-system comparison on synthetic data: Base, Multi-* (Bal/All), Specialized (Bal/All).

Each system is scored on the held-out benchmark with matched gender tags
and again with every tag flipped (scored against swapped expectations),
which is the conflict condition: the pitch says one gender, the tag the
other, and the expected output follows the tag.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

from genst.corpus import Gender, ManifestRow
from genst.metrics import EvalReport, counts_to_dict, evaluate, swap_expectation
from genst.prep import schedule_balanced_batches, split_specialized, subsample_balanced
from genst.toy.model import Strategy, ToyModel
from genst.toy.synth import SynthConfig, SyntheticData, gen_synthetic
from genst.toy.train import (Hyper, finetune_specialized, init_multi_gender, new_model, train,
                             translate_batch)

logger = logging.getLogger(__name__)

MULTI_STRATEGIES = (Strategy.DEC_PREP, Strategy.DEC_MERGE, Strategy.ENC_MERGE)
SUBSETS = ("overall", "F", "M", "conflict", "conflict_M_audio", "conflict_F_audio")


def system_names() -> list[str]:
    names = ["Base"]
    names += [f"Multi-{s.value}-{c}" for s in MULTI_STRATEGIES for c in ("Bal", "All")]
    names += ["Specialized-Bal", "Specialized-All"]
    return names


@dataclass
class ExperimentConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    base: Hyper = field(default_factory=lambda: Hyper(lr=3e-4, epochs=2))
    multi: Hyper = field(default_factory=lambda: Hyper(lr=3e-4, epochs=2))
    # the learning rate here is the base rate; fine-tuning applies the 0.1 scale
    specialized: Hyper = field(default_factory=lambda: Hyper(lr=3e-4, epochs=20))
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class System:
    name: str
    strategy: Strategy
    models: dict      # Gender -> ToyModel for specialized systems, else {None: model}

    def pick(self, tag: Gender | None) -> ToyModel:
        """The model serving a given tag (specialized systems select by gender)."""
        return self.models.get(tag, self.models.get(None))


def _decode(system: System, rows: list[ManifestRow], tags: list[Gender]) -> dict[str, str]:
    hyps: dict[str, str] = {}
    for key in sorted(system.models, key=lambda k: "" if k is None else k.value):
        model = system.models[key]
        idx = [i for i, t in enumerate(tags) if key is None or t is key]
        if not idx:
            continue
        sub_tags = [tags[i] for i in idx] if system.strategy is not Strategy.NONE else None
        outs = translate_batch(model, [rows[i].src.split() for i in idx],
                               [rows[i].pitch for i in idx], system.strategy, sub_tags)
        hyps.update((rows[i].id, " ".join(o)) for i, o in zip(idx, outs))
    return hyps


def evaluate_system(system: System, data: SyntheticData) -> tuple[EvalReport, EvalReport]:
    """(matched, conflict) reports for one system."""
    by_id = {r.id: r for r in data.test}
    rows = [by_id[e.id] for e in data.benchmark]
    matched_tags = [r.gender for r in rows]
    flipped_tags = [r.gender.opposite() for r in rows]
    matched = evaluate(data.benchmark, _decode(system, rows, matched_tags))
    conflict = evaluate(swap_expectation(data.benchmark), _decode(system, rows, flipped_tags))
    return matched, conflict


def _record(system: str, subset: str, counts, bleu=None) -> dict:
    rec = {"system": system, "subset": subset}
    if bleu is not None:
        rec["bleu_correct"] = round(bleu[0], 2)
        rec["bleu_wrong"] = round(bleu[1], 2)
    rec.update(counts_to_dict(counts))
    return rec


def build_systems(cfg: ExperimentConfig, data: SyntheticData) -> dict[str, System]:
    seed = cfg.seed
    train_rows = data.train
    t0 = time.perf_counter()

    base_hyper = Hyper(**{**asdict(cfg.base), "seed": seed})
    base = train(new_model(train_rows, seed=seed), train_rows, Strategy.NONE, base_hyper).model
    systems = {"Base": System("Base", Strategy.NONE, {None: base})}
    logger.info("Base trained (%.1fs)", time.perf_counter() - t0)

    balanced = subsample_balanced(train_rows, seed)
    plans = [schedule_balanced_batches(train_rows, cfg.multi.batch_size, seed * 1000 + e)
             for e in range(cfg.multi.epochs)]
    for k, strategy in enumerate(MULTI_STRATEGIES):
        for condition in ("Bal", "All"):
            start = init_multi_gender(base, seed + 101 + k)
            hyper = Hyper(**{**asdict(cfg.multi), "seed": seed + 11 * (k + 1)})
            if condition == "Bal":
                model = train(start, balanced, strategy, hyper).model
            else:
                model = train(start, train_rows, strategy, hyper, batch_plan=plans).model
            name = f"Multi-{strategy.value}-{condition}"
            systems[name] = System(name, strategy, {None: model})
            logger.info("%s trained (%.1fs)", name, time.perf_counter() - t0)

    spec_hyper = Hyper(**{**asdict(cfg.specialized), "seed": seed + 7})
    female = finetune_specialized(base, split_specialized(train_rows, Gender.F), spec_hyper).model
    male_all = finetune_specialized(base, split_specialized(train_rows, Gender.M), spec_hyper).model
    male_bal = finetune_specialized(base, split_specialized(balanced, Gender.M), spec_hyper).model
    # the female model is shared: the balanced subset keeps every female row
    systems["Specialized-Bal"] = System("Specialized-Bal", Strategy.NONE,
                                        {Gender.F: female, Gender.M: male_bal})
    systems["Specialized-All"] = System("Specialized-All", Strategy.NONE,
                                        {Gender.F: female, Gender.M: male_all})
    logger.info("Specialized systems trained (%.1fs)", time.perf_counter() - t0)
    return systems


def run_experiment(cfg: ExperimentConfig | None = None, data: SyntheticData | None = None,
                   systems: dict[str, System] | None = None) -> dict:
    """Train (unless ``systems`` is given) and score every system; returns the JSON-ready report."""
    cfg = cfg or ExperimentConfig()
    data = data or gen_synthetic(cfg.synth)
    systems = systems or build_systems(cfg, data)
    records = []
    for name in system_names():
        matched, conflict = evaluate_system(systems[name], data)
        records.append(_record(name, "overall", matched.overall,
                               (matched.bleu_correct, matched.bleu_wrong)))
        records.append(_record(name, "F", matched.per_gender[Gender.F]))
        records.append(_record(name, "M", matched.per_gender[Gender.M]))
        records.append(_record(name, "conflict", conflict.overall,
                               (conflict.bleu_correct, conflict.bleu_wrong)))
        # per_gender is keyed by the speaker (audio) gender
        records.append(_record(name, "conflict_M_audio", conflict.per_gender[Gender.M]))
        records.append(_record(name, "conflict_F_audio", conflict.per_gender[Gender.F]))
    return {
        "config": cfg.to_dict(),
        "data": {"train_segments": len(data.train), "benchmark_entries": len(data.benchmark),
                 "train_female": sum(r.gender is Gender.F for r in data.train)},
        "records": records,
    }


def lookup(report: dict, system: str, subset: str) -> dict:
    for rec in report["records"]:
        if rec["system"] == system and rec["subset"] == subset:
            return rec
    raise KeyError((system, subset))


def _fmt(v) -> str:
    return "  n/a" if v is None else f"{v:6.2f}"


def render_tables(report: dict) -> str:
    """Plain-text tables shaped like the BLEU / coverage-accuracy / per-gender / conflict views."""
    lines = ["System                 BLEU   Cover.  Acc. | F-Cov  F-Acc  M-Cov  M-Acc | "
             "MaFt-Cov MaFt-Acc FaMt-Cov FaMt-Acc"]
    for name in system_names():
        o, f, m = (lookup(report, name, s) for s in ("overall", "F", "M"))
        cm, cf = lookup(report, name, "conflict_M_audio"), lookup(report, name, "conflict_F_audio")
        lines.append(
            f"{name:<20} {_fmt(o['bleu_correct'])} {_fmt(o['coverage_pct'])} "
            f"{_fmt(o['accuracy_pct'])} | {_fmt(f['coverage_pct'])} {_fmt(f['accuracy_pct'])} "
            f"{_fmt(m['coverage_pct'])} {_fmt(m['accuracy_pct'])} | "
            f"{_fmt(cm['coverage_pct'])}   {_fmt(cm['accuracy_pct'])}   "
            f"{_fmt(cf['coverage_pct'])}   {_fmt(cf['accuracy_pct'])}")
    return "\n".join(lines) + "\n"


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False) + "\n"
