"""Training and validation data conditions built from gender-labelled manifests.

Every sampler is a pure function of its inputs and an integer seed; the
random source is numpy's PCG64 generator.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from genst.corpus import Gender, ManifestRow, SpeakerRecord

logger = logging.getLogger(__name__)

TAGS = {Gender.F: "<TO-F>", Gender.M: "<TO-M>"}


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _by_gender(rows: Iterable[ManifestRow]) -> dict[Gender, list[ManifestRow]]:
    groups: dict[Gender, list[ManifestRow]] = {Gender.F: [], Gender.M: []}
    for row in rows:
        if row.gender is None:
            raise ValueError(f"row {row.id} has no gender")
        groups[row.gender].append(row)
    return groups


def _majority_minority(groups) -> tuple[Gender, Gender]:
    # ties resolve to M as the majority so the result is deterministic
    if len(groups[Gender.F]) > len(groups[Gender.M]):
        return Gender.F, Gender.M
    return Gender.M, Gender.F


def sample_balanced_dev(manifest: Sequence[ManifestRow], speakers: Iterable[SpeakerRecord],
                        n_talks: int, seed: int) -> tuple[list[ManifestRow], list[ManifestRow]]:
    """Pick ``n_talks/2`` talks per gender; all their segments form the dev set."""
    if n_talks <= 0 or n_talks % 2:
        raise ValueError(f"n_talks must be a positive even count, got {n_talks}")
    talk_gender = {s.talk_id: s.pronoun.gender for s in speakers}
    present = sorted({row.talk_id for row in manifest})
    pools = {g: [t for t in present if talk_gender.get(t) is g] for g in (Gender.F, Gender.M)}
    per_gender = n_talks // 2
    for gender, pool in pools.items():
        if len(pool) < per_gender:
            raise ValueError(
                f"need {per_gender} {gender.value} talks, only {len(pool)} available")

    rng = make_rng(seed)
    chosen: set[str] = set()
    for gender in (Gender.F, Gender.M):
        picks = rng.choice(len(pools[gender]), size=per_gender, replace=False)
        chosen.update(pools[gender][i] for i in picks)

    dev = [r for r in manifest if r.talk_id in chosen]
    rest = [r for r in manifest if r.talk_id not in chosen]
    return dev, rest


def split_specialized(manifest: Iterable[ManifestRow], gender: Gender) -> list[ManifestRow]:
    rows = []
    for row in manifest:
        if row.gender is None:
            raise ValueError(f"row {row.id} has no gender")
        if row.gender is gender:
            rows.append(row)
    if not rows:
        logger.warning("no %s rows in manifest; specialized split is empty", gender.value)
    return rows


def subsample_balanced(manifest: Sequence[ManifestRow], seed: int) -> list[ManifestRow]:
    """All minority-gender rows plus an equally sized random subset of the majority.

    Balancing is by segment count. Input order is preserved.
    """
    groups = _by_gender(manifest)
    major, minor = _majority_minority(groups)
    k = len(groups[minor])
    rng = make_rng(seed)
    picks = rng.choice(len(groups[major]), size=k, replace=False)
    keep = {groups[major][i].id for i in picks} | {r.id for r in groups[minor]}
    return [r for r in manifest if r.id in keep]


@dataclass(frozen=True)
class BatchPlan:
    batches: list[list[str]]
    seed: int

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "batches": self.batches}) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BatchPlan":
        data = json.loads(text)
        return cls([list(b) for b in data["batches"]], int(data["seed"]))


def schedule_balanced_batches(manifest: Sequence[ManifestRow], batch_size: int,
                              seed: int) -> BatchPlan:
    """Batches with equal F/M counts; the minority gender is oversampled.

    Majority ids are used at most once (a trailing partial batch is dropped).
    Minority ids are drawn from successive reshuffled permutations, so their
    repetition counts differ by at most one.
    """
    if batch_size <= 0 or batch_size % 2:
        raise ValueError(f"batch_size must be a positive even count, got {batch_size}")
    groups = _by_gender(manifest)
    for gender, rows in groups.items():
        if not rows:
            raise ValueError(f"no {gender.value} rows: cannot balance batches")
    major, minor = _majority_minority(groups)
    half = batch_size // 2
    n_batches = len(groups[major]) // half
    if n_batches == 0:
        raise ValueError(f"fewer than {half} {major.value} rows: no complete batch")

    rng = make_rng(seed)
    major_ids = [groups[major][i].id for i in rng.permutation(len(groups[major]))]
    minor_pool = [r.id for r in groups[minor]]
    needed = n_batches * half
    minor_ids: list[str] = []
    while len(minor_ids) < needed:
        minor_ids.extend(minor_pool[i] for i in rng.permutation(len(minor_pool)))
    minor_ids = minor_ids[:needed]

    batches = [major_ids[b * half:(b + 1) * half] + minor_ids[b * half:(b + 1) * half]
               for b in range(n_batches)]
    return BatchPlan(batches, seed)


def prepend_tags(manifest: Iterable[ManifestRow]) -> list[ManifestRow]:
    tagged = []
    for row in manifest:
        if row.gender is None:
            raise ValueError(f"row {row.id} has no gender")
        first = row.src.split(" ", 1)[0]
        if first in TAGS.values():
            raise ValueError(f"row {row.id} is already tagged")
        tagged.append(replace(row, src=f"{TAGS[row.gender]} {row.src}"))
    return tagged
