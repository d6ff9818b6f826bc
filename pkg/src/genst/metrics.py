"""Gender translation scoring: term coverage, gender accuracy and corpus BLEU.

Coverage is the share of annotated gender-marked terms that a system
produces in either form; accuracy is the share of produced terms that carry
the expected gender. Both are reported overall and per speaker gender.
"""

from __future__ import annotations

import enum
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from genst.corpus import BenchmarkEntry, Gender, TermPair

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

DEFAULT_CATEGORY = "1"


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and break out every punctuation mark.

    >>> tokenize("Quand j'étais petite")
    ['quand', 'j', "'", 'étais', 'petite']
    """
    return _TOKEN_RE.findall(text.lower())


def find_span(tokens: Sequence[str], span: Sequence[str], used: Sequence[bool] | None = None) -> int:
    """Index of the first occurrence of ``span`` in ``tokens`` avoiding used positions, else -1."""
    n = len(span)
    if n == 0:
        return -1
    for i in range(len(tokens) - n + 1):
        if tokens[i:i + n] == list(span) and (used is None or not any(used[i:i + n])):
            return i
    return -1


def contains_span(tokens: Sequence[str], span: Sequence[str]) -> bool:
    return find_span(list(tokens), span) >= 0


class TermOutcome(str, enum.Enum):
    CORRECT = "CorrectForm"
    WRONG = "WrongForm"
    NOT_COVERED = "NotCovered"


def match_terms(hyp_tokens: Sequence[str], terms: Iterable[TermPair]) -> list[TermOutcome]:
    # Spans are consumed so a term annotated twice needs two productions.
    tokens = list(hyp_tokens)
    used = [False] * len(tokens)
    outcomes = []
    for term in terms:
        for form, outcome in ((term.correct, TermOutcome.CORRECT), (term.wrong, TermOutcome.WRONG)):
            span = tokenize(" ".join(form))
            start = find_span(tokens, span, used)
            if start >= 0:
                used[start:start + len(span)] = [True] * len(span)
                outcomes.append(outcome)
                break
        else:
            outcomes.append(TermOutcome.NOT_COVERED)
    return outcomes


# --------------------------------------------------------------------------
# BLEU


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
                max_order: int = 4) -> float:
    """Unsmoothed corpus BLEU on pre-tokenized input, scaled to [0, 100]."""
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    if not hypotheses:
        raise ValueError("corpus_bleu needs at least one segment")

    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            hyp_counts = _ngrams(hyp, n)
            ref_counts = _ngrams(ref, n)
            matches[n - 1] += sum((hyp_counts & ref_counts).values())
            totals[n - 1] += sum(hyp_counts.values())

    if hyp_len == 0 or any(m == 0 for m in matches):
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_order
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision)


# --------------------------------------------------------------------------
# evaluation


@dataclass
class EvalCounts:
    terms_total: int = 0
    covered: int = 0
    covered_correct: int = 0
    covered_wrong: int = 0

    def add(self, outcome: TermOutcome) -> None:
        self.terms_total += 1
        if outcome is TermOutcome.CORRECT:
            self.covered += 1
            self.covered_correct += 1
        elif outcome is TermOutcome.WRONG:
            self.covered += 1
            self.covered_wrong += 1

    def __add__(self, other: "EvalCounts") -> "EvalCounts":
        return EvalCounts(self.terms_total + other.terms_total, self.covered + other.covered,
                          self.covered_correct + other.covered_correct,
                          self.covered_wrong + other.covered_wrong)

    @property
    def coverage_pct(self) -> float | None:
        if self.terms_total == 0:
            return None
        return 100.0 * self.covered / self.terms_total

    @property
    def accuracy_pct(self) -> float | None:
        """None when nothing was covered: no evidence either way."""
        if self.covered == 0:
            return None
        return 100.0 * self.covered_correct / self.covered


@dataclass(frozen=True)
class SegmentOutcome:
    id: str
    term: TermPair
    outcome: TermOutcome


@dataclass
class EvalReport:
    bleu_correct: float
    bleu_wrong: float
    overall: EvalCounts
    per_gender: dict[Gender, EvalCounts]
    per_segment: list[SegmentOutcome] | None = None

    @property
    def coverage_pct(self) -> float | None:
        return self.overall.coverage_pct

    @property
    def accuracy_pct(self) -> float | None:
        return self.overall.accuracy_pct


def evaluate(benchmark: Iterable[BenchmarkEntry], hyps: Mapping[str, str],
             category_filter: str | None = DEFAULT_CATEGORY,
             per_segment: bool = False) -> EvalReport:
    """Score hypotheses against a benchmark.

    ``category_filter=None`` keeps every category.
    """
    entries = [e for e in benchmark if category_filter is None or e.category == category_filter]
    if not entries:
        raise ValueError(f"no benchmark entries left after category filter {category_filter!r}")
    missing = sorted(e.id for e in entries if e.id not in hyps)
    if missing:
        raise KeyError(f"missing hypotheses for ids: {', '.join(missing)}")

    per_gender = {Gender.F: EvalCounts(), Gender.M: EvalCounts()}
    segments = [] if per_segment else None
    hyp_toks, refc_toks, refw_toks = [], [], []
    for entry in entries:
        tokens = tokenize(hyps[entry.id])
        hyp_toks.append(tokens)
        refc_toks.append(tokenize(entry.ref_correct))
        refw_toks.append(tokenize(entry.ref_wrong))
        for term, outcome in zip(entry.terms, match_terms(tokens, entry.terms)):
            per_gender[entry.gender].add(outcome)
            if segments is not None:
                segments.append(SegmentOutcome(entry.id, term, outcome))

    if segments is not None:
        segments.sort(key=lambda s: s.id)  # stable: annotation order kept within an id
    return EvalReport(
        bleu_correct=corpus_bleu(hyp_toks, refc_toks),
        bleu_wrong=corpus_bleu(hyp_toks, refw_toks),
        overall=per_gender[Gender.F] + per_gender[Gender.M],
        per_gender=per_gender,
        per_segment=segments,
    )


def swap_expectation(benchmark: Iterable[BenchmarkEntry]) -> list[BenchmarkEntry]:
    """Exchange correct and wrong references and term forms; keep the speaker gender."""
    return [replace(e, ref_correct=e.ref_wrong, ref_wrong=e.ref_correct,
                    terms=tuple(t.swapped() for t in e.terms))
            for e in benchmark]


# --------------------------------------------------------------------------
# rendering


def _pct(value: float | None) -> float | None:
    return None if value is None else round(value, 2)


def counts_to_dict(counts: EvalCounts) -> dict:
    return {
        "terms_total": counts.terms_total,
        "covered": counts.covered,
        "covered_correct": counts.covered_correct,
        "covered_wrong": counts.covered_wrong,
        "coverage_pct": _pct(counts.coverage_pct),
        "accuracy_pct": _pct(counts.accuracy_pct),
    }


def report_to_dict(report: EvalReport) -> dict:
    out = {
        "bleu_correct": round(report.bleu_correct, 2),
        "bleu_wrong": round(report.bleu_wrong, 2),
        "overall": counts_to_dict(report.overall),
        "per_gender": {g.value: counts_to_dict(report.per_gender.get(g, EvalCounts()))
                       for g in (Gender.F, Gender.M)},
    }
    if report.per_segment is not None:
        out["per_segment"] = [
            {"id": s.id, "term_correct": " ".join(s.term.correct),
             "term_wrong": " ".join(s.term.wrong), "outcome": s.outcome.value}
            for s in report.per_segment]
    return out


def render_report(report: EvalReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n"
