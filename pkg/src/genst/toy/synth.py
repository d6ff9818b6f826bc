"""Synthetic gender-inflected translation data with a pitch proxy.

Sources are English-like template sentences. Targets prefix every function
word with ``t_``; a gendered stem takes ``a`` (feminine) or ``o``
(masculine) and a neutral stem takes ``e``. Speakers come in talks of a
single gender, and each segment's pitch is drawn from that gender's normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from genst.corpus import (BenchmarkEntry, Gender, ManifestRow, Pronoun, SpeakerRecord,
                          TermPair)
from genst.prep import make_rng

TEMPLATES = (
    "i am {}",
    "i was {} yesterday",
    "as a {} i work",
    "i felt {} today",
)

GENDERED_WORDS = (
    "proud", "tired", "happy", "born", "elected", "chosen", "lucky", "ready", "sure",
    "alone", "afraid", "married", "invited", "raised", "hired", "surprised", "scared",
    "excited", "worried", "convinced", "engaged", "trained", "bored", "sorry",
)
NEUTRAL_WORDS = (
    "calm", "brave", "strong", "kind", "young", "free", "able", "smart", "quick", "fine",
    "loyal", "noble", "gentle", "humble", "clever",
)

SUFFIX = {Gender.F: "a", Gender.M: "o"}
NEUTRAL_SUFFIX = "e"
SEGMENTS_PER_TALK = 10
CATEGORY = "1"


@dataclass
class SynthConfig:
    n_segments: int = 5000
    male_fraction: float = 0.71
    gendered_stems: int = 20
    neutral_stems: int = 10
    pitch_means: dict = field(default_factory=lambda: {"F": 0.7, "M": 0.3})
    pitch_std: float = 0.12
    heldout_fraction: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.n_segments < 20:
            raise ValueError(f"n_segments must be at least 20, got {self.n_segments}")
        if not 0.0 < self.male_fraction < 1.0:
            raise ValueError(f"male_fraction must lie in (0, 1), got {self.male_fraction}")
        if self.pitch_std <= 0 or self.gendered_stems <= 0 or self.neutral_stems < 0:
            raise ValueError("pitch_std and stem counts must be positive")
        for g, m in self.pitch_means.items():
            if not 0.0 <= m <= 1.0:
                raise ValueError(f"pitch mean for {g} outside [0, 1]")


def _stems(words, n, prefix):
    return list(words[:n]) + [f"{prefix}{i}" for i in range(max(0, n - len(words)))]


def gendered_stems(cfg: SynthConfig) -> list[str]:
    return _stems(GENDERED_WORDS, cfg.gendered_stems, "gstem")


def neutral_stems(cfg: SynthConfig) -> list[str]:
    return _stems(NEUTRAL_WORDS, cfg.neutral_stems, "nstem")


def translate_source(src: str, gender: Gender, gendered: set[str], neutral: set[str]) -> str:
    out = []
    for word in src.split():
        if word in gendered:
            out.append(word + SUFFIX[gender])
        elif word in neutral:
            out.append(word + NEUTRAL_SUFFIX)
        else:
            out.append("t_" + word)
    return " ".join(out)


def gendered_words(tgt: str, gendered: set[str]) -> list[tuple[str, str]]:
    """(feminine, masculine) forms of every gendered word in a target."""
    pairs = []
    for word in tgt.split():
        stem, suffix = word[:-1], word[-1:]
        if stem in gendered and suffix in SUFFIX.values():
            pairs.append((stem + SUFFIX[Gender.F], stem + SUFFIX[Gender.M]))
    return pairs


def swap_gender_forms(tgt: str, gendered: set[str]) -> str:
    """The same target with every gendered word in the opposite form."""
    swap = {}
    for f, m in gendered_words(tgt, gendered):
        swap[f], swap[m] = m, f
    return " ".join(swap.get(w, w) for w in tgt.split())


@dataclass
class SyntheticData:
    train: list[ManifestRow]
    benchmark: list[BenchmarkEntry]
    test: list[ManifestRow]     # held-out rows (with pitch) backing the benchmark
    speakers: list[SpeakerRecord]


def gen_synthetic(cfg: SynthConfig) -> SyntheticData:
    cfg.validate()
    rng = make_rng(cfg.seed)
    g_stems, n_stems = gendered_stems(cfg), neutral_stems(cfg)
    g_set, n_set = set(g_stems), set(n_stems)
    all_stems = g_stems + n_stems

    n_talks = max(2, -(-cfg.n_segments // SEGMENTS_PER_TALK))
    n_male = min(n_talks - 1, max(1, round(n_talks * cfg.male_fraction)))
    talk_genders = np.array([Gender.M] * n_male + [Gender.F] * (n_talks - n_male), dtype=object)
    talk_genders = talk_genders[rng.permutation(n_talks)]
    talk_ids = [f"talk{t:04d}" for t in range(n_talks)]
    speakers = [SpeakerRecord(tid, f"speaker {t}", Pronoun.SHE if g is Gender.F else Pronoun.HE)
                for t, (tid, g) in enumerate(zip(talk_ids, talk_genders))]

    # held-out talks are balanced by gender, like the evaluation benchmark
    n_held = max(2, round(n_talks * cfg.heldout_fraction))
    per_gender = n_held // 2
    held: set[str] = set()
    for gender in (Gender.F, Gender.M):
        pool = [tid for tid, g in zip(talk_ids, talk_genders) if g is gender]
        take = min(per_gender, len(pool) - 1) if len(pool) > 1 else 0
        held.update(pool[i] for i in sorted(rng.choice(len(pool), size=take, replace=False)))

    train, test, benchmark = [], [], []
    for i in range(cfg.n_segments):
        talk = i // SEGMENTS_PER_TALK
        tid, gender = talk_ids[talk], talk_genders[talk]
        template = TEMPLATES[rng.integers(len(TEMPLATES))]
        stem = all_stems[rng.integers(len(all_stems))]
        src = template.format(stem)
        tgt = translate_source(src, gender, g_set, n_set)
        pitch = float(np.clip(rng.normal(cfg.pitch_means[gender.value], cfg.pitch_std), 0.0, 1.0))
        row = ManifestRow(f"seg{i:06d}", tid, src, tgt, gender, pitch)
        if tid not in held:
            train.append(row)
            continue
        test.append(row)
        forms = gendered_words(tgt, g_set)
        if not forms:
            continue
        ref_w = swap_gender_forms(tgt, g_set)
        terms = tuple(TermPair((f,), (m,)) if gender is Gender.F else TermPair((m,), (f,))
                      for f, m in forms)
        benchmark.append(BenchmarkEntry(row.id, tid, src, tgt, ref_w, gender, CATEGORY, terms))
    return SyntheticData(train, benchmark, test, speakers)
