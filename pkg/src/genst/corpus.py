"""Tab-separated data formats: speaker annotations, benchmarks, hypotheses, manifests.

All readers take a text stream, strip CR, and validate the header line.
Writers produce LF-terminated UTF-8 text that the matching reader accepts.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, TextIO

logger = logging.getLogger(__name__)

SPEAKERS_HEADER = ("TALK-ID", "NAME", "PRONOUN")
BENCHMARK_HEADER = ("ID", "TALK-ID", "SRC", "REF-C", "REF-W", "GENDER", "CATEGORY", "TERMS")
HYPOTHESES_HEADER = ("ID", "HYP")
MANIFEST_HEADER = ("ID", "TALK-ID", "SRC", "TGT", "GENDER")
MANIFEST_HEADER_PITCH = MANIFEST_HEADER + ("PITCH",)

FORBIDDEN_TERM_CHARS = frozenset("\t:;")


class FormatError(ValueError):
    """Raised for malformed or invalid input files."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"{message} at line {line}"
        super().__init__(message)
        self.line = line


class Gender(str, enum.Enum):
    F = "F"
    M = "M"

    def opposite(self) -> "Gender":
        return Gender.M if self is Gender.F else Gender.F


class Pronoun(str, enum.Enum):
    SHE = "She"
    HE = "He"
    THEY = "They"
    MIXED = "Mixed"
    UNKNOWN = "Unknown"

    @property
    def gender(self) -> Gender | None:
        """She/He map to F/M; every other label is excluded from selection."""
        return {Pronoun.SHE: Gender.F, Pronoun.HE: Gender.M}.get(self)


@dataclass(frozen=True)
class SpeakerRecord:
    talk_id: str
    name: str
    pronoun: Pronoun


@dataclass(frozen=True)
class TermPair:
    correct: tuple[str, ...]
    wrong: tuple[str, ...]

    def __post_init__(self):
        for side in (self.correct, self.wrong):
            if not side or any(not tok for tok in side):
                raise ValueError("term must contain at least one non-empty token")
            for tok in side:
                if FORBIDDEN_TERM_CHARS & set(tok) or any(c.isspace() for c in tok):
                    raise ValueError(f"forbidden character in term token {tok!r}")
        if self.correct == self.wrong:
            raise ValueError(f"correct and wrong forms are identical: {' '.join(self.correct)!r}")

    @classmethod
    def from_text(cls, correct: str, wrong: str) -> "TermPair":
        return cls(tuple(correct.split(" ")), tuple(wrong.split(" ")))

    def swapped(self) -> "TermPair":
        return TermPair(self.wrong, self.correct)

    def to_text(self) -> str:
        return f"{' '.join(self.correct)}:{' '.join(self.wrong)}"


@dataclass(frozen=True)
class BenchmarkEntry:
    id: str
    talk_id: str
    src: str
    ref_correct: str
    ref_wrong: str
    gender: Gender
    category: str
    terms: tuple[TermPair, ...]

    def validate(self) -> None:
        # local import keeps metrics -> corpus the only module-level dependency
        from genst.metrics import contains_span, tokenize

        if not self.terms:
            raise FormatError(f"entry {self.id}: empty TERMS")
        ref_c = tokenize(self.ref_correct)
        ref_w = tokenize(self.ref_wrong)
        for term in self.terms:
            if not contains_span(ref_c, tokenize(" ".join(term.correct))):
                raise FormatError(
                    f"entry {self.id}: term {' '.join(term.correct)!r} not found in REF-C")
            if not contains_span(ref_w, tokenize(" ".join(term.wrong))):
                raise FormatError(
                    f"entry {self.id}: term {' '.join(term.wrong)!r} not found in REF-W")


@dataclass(frozen=True)
class ManifestRow:
    id: str
    talk_id: str
    src: str
    tgt: str
    gender: Gender | None = None
    pitch: float | None = None

    def __post_init__(self):
        if self.pitch is not None and not 0.0 <= self.pitch <= 1.0:
            raise ValueError(f"pitch {self.pitch} outside [0, 1] for row {self.id}")


# --------------------------------------------------------------------------
# generic TSV plumbing


def _lines(source: TextIO | Iterable[str]) -> Iterator[tuple[int, list[str]]]:
    for lineno, raw in enumerate(source, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if lineno > 1 and not line.strip():
            continue
        yield lineno, line.split("\t")


def _read_table(source, header: tuple[str, ...], *alternatives: tuple[str, ...]):
    """Yield (lineno, fields, header) after checking the header line."""
    lines = _lines(source)
    try:
        lineno, first = next(lines)
    except StopIteration:
        raise FormatError("missing header")
    first = [f.strip() for f in first]
    accepted = (header,) + alternatives
    matched = next((h for h in accepted if tuple(first) == h), None)
    if matched is None:
        raise FormatError("missing header", lineno)
    for lineno, fields in lines:
        if len(fields) != len(matched):
            raise FormatError(
                f"expected {len(matched)} columns, found {len(fields)}", lineno)
        yield lineno, fields, matched


def _write_table(header, rows) -> str:
    out = ["\t".join(header)]
    out.extend("\t".join(r) for r in rows)
    return "\n".join(out) + "\n"


def _check_field(value: str, what: str, lineno: int | None = None) -> str:
    if "\t" in value or "\n" in value or "\r" in value:
        raise FormatError(f"{what} contains tab or newline", lineno)
    return value


def _parse_gender(value: str, lineno: int) -> Gender:
    try:
        return Gender(value)
    except ValueError:
        raise FormatError(f"unknown gender label {value!r}", lineno) from None


# --------------------------------------------------------------------------
# speakers.tsv


def parse_speakers(source) -> list[SpeakerRecord]:
    records = []
    seen: set[str] = set()
    for lineno, (talk_id, name, pronoun), _ in _read_table(source, SPEAKERS_HEADER):
        if not talk_id:
            raise FormatError("empty talk id", lineno)
        try:
            label = Pronoun(pronoun)
        except ValueError:
            raise FormatError("unknown pronoun label", lineno) from None
        if talk_id in seen:
            raise FormatError(f"duplicate talk id {talk_id!r}", lineno)
        seen.add(talk_id)
        records.append(SpeakerRecord(talk_id, name, label))
    return records


def format_speakers(records: Iterable[SpeakerRecord]) -> str:
    return _write_table(SPEAKERS_HEADER, (
        (_check_field(r.talk_id, "talk id"), _check_field(r.name, "name"), r.pronoun.value)
        for r in records))


# --------------------------------------------------------------------------
# benchmark.tsv


def parse_terms(field: str, lineno: int | None = None) -> tuple[TermPair, ...]:
    if not field.strip():
        raise FormatError("empty TERMS", lineno)
    pairs = []
    for chunk in field.split(";"):
        parts = chunk.split(":")
        if len(parts) != 2:
            raise FormatError(f"malformed term pair {chunk!r}", lineno)
        try:
            pairs.append(TermPair.from_text(*parts))
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from None
    return tuple(pairs)


def parse_benchmark(source) -> list[BenchmarkEntry]:
    entries = []
    seen: set[str] = set()
    for lineno, fields, _ in _read_table(source, BENCHMARK_HEADER):
        id_, talk_id, src, ref_c, ref_w, gender, category, terms = fields
        if not id_:
            raise FormatError("empty id", lineno)
        if id_ in seen:
            raise FormatError(f"duplicate id {id_!r}", lineno)
        seen.add(id_)
        if not terms.strip():
            raise FormatError(f"entry {id_}: empty TERMS", lineno)
        entry = BenchmarkEntry(
            id=id_, talk_id=talk_id, src=src, ref_correct=ref_c, ref_wrong=ref_w,
            gender=_parse_gender(gender, lineno), category=category,
            terms=parse_terms(terms, lineno))
        try:
            entry.validate()
        except FormatError as exc:
            raise FormatError(str(exc), lineno) from None
        entries.append(entry)
    return entries


def format_benchmark(entries: Iterable[BenchmarkEntry]) -> str:
    rows = []
    for e in entries:
        rows.append((
            e.id, e.talk_id, _check_field(e.src, "SRC"), _check_field(e.ref_correct, "REF-C"),
            _check_field(e.ref_wrong, "REF-W"), e.gender.value, e.category,
            ";".join(t.to_text() for t in e.terms)))
    return _write_table(BENCHMARK_HEADER, rows)


# --------------------------------------------------------------------------
# hypotheses.tsv


def parse_hypotheses(source) -> dict[str, str]:
    hyps: dict[str, str] = {}
    for lineno, (id_, text), _ in _read_table(source, HYPOTHESES_HEADER):
        if id_ in hyps:
            raise FormatError(f"duplicate id {id_!r}", lineno)
        hyps[id_] = text
    return hyps


def format_hypotheses(hyps: dict[str, str]) -> str:
    return _write_table(HYPOTHESES_HEADER, ((k, _check_field(v, "hypothesis"))
                                            for k, v in hyps.items()))


# --------------------------------------------------------------------------
# manifest.tsv


def _format_pitch(p: float) -> str:
    return repr(float(p))


def parse_manifest(source) -> list[ManifestRow]:
    rows = []
    seen: set[str] = set()
    for lineno, fields, header in _read_table(source, MANIFEST_HEADER, MANIFEST_HEADER_PITCH):
        id_, talk_id, src, tgt, gender = fields[:5]
        if id_ in seen:
            raise FormatError(f"duplicate id {id_!r}", lineno)
        seen.add(id_)
        pitch = None
        if len(header) == 6 and fields[5] != "":
            try:
                pitch = float(fields[5])
            except ValueError:
                raise FormatError(f"bad pitch value {fields[5]!r}", lineno) from None
            if not 0.0 <= pitch <= 1.0:
                raise FormatError(f"pitch {pitch} outside [0, 1]", lineno)
        rows.append(ManifestRow(
            id_, talk_id, src, tgt,
            _parse_gender(gender, lineno) if gender else None, pitch))
    return rows


def format_manifest(rows: Iterable[ManifestRow], with_pitch: bool | None = None) -> str:
    rows = list(rows)
    if with_pitch is None:
        with_pitch = any(r.pitch is not None for r in rows)
    out = []
    for r in rows:
        fields = [r.id, r.talk_id, _check_field(r.src, "SRC"), _check_field(r.tgt, "TGT"),
                  r.gender.value if r.gender else ""]
        if with_pitch:
            fields.append("" if r.pitch is None else _format_pitch(r.pitch))
        out.append(fields)
    return _write_table(MANIFEST_HEADER_PITCH if with_pitch else MANIFEST_HEADER, out)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class JoinResult:
    rows: list[ManifestRow]
    dropped: int


def join_gender(manifest: Iterable[ManifestRow], speakers: Iterable[SpeakerRecord]) -> JoinResult:
    """Attach speaker gender to each row via its talk id.

    Rows from They/Mixed/Unknown talks, or talks missing from the speaker
    table, are dropped and counted.
    """
    by_talk = {s.talk_id: s.pronoun.gender for s in speakers}
    kept, dropped = [], 0
    for row in manifest:
        gender = by_talk.get(row.talk_id)
        if gender is None:
            dropped += 1
            continue
        kept.append(replace(row, gender=gender))
    if dropped:
        logger.info("join_gender dropped %d rows without a binary speaker label", dropped)
    return JoinResult(kept, dropped)


def read_file(path, parser):
    with open(path, encoding="utf-8", newline="") as fh:
        return parser(fh)


def write_file(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
