from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from genst.corpus import Gender, ManifestRow, Pronoun, SpeakerRecord
from genst.prep import (BatchPlan, prepend_tags, sample_balanced_dev, schedule_balanced_batches,
                        split_specialized, subsample_balanced)


def rows_for(n_m, n_f, per_talk=1):
    rows = [ManifestRow(f"m{i}", f"tm{i // per_talk}", f"src m{i}", "tgt", Gender.M)
            for i in range(n_m)]
    rows += [ManifestRow(f"f{i}", f"tf{i // per_talk}", f"src f{i}", "tgt", Gender.F)
             for i in range(n_f)]
    return rows


def speakers_for(rows):
    talks = {r.talk_id: r.gender for r in rows}
    return [SpeakerRecord(t, "", Pronoun.SHE if g is Gender.F else Pronoun.HE)
            for t, g in sorted(talks.items())]


def check_plan(plan, rows, batch_size):
    gender = {r.id: r.gender for r in rows}
    counts = Counter(gender.values())
    major = Gender.F if counts[Gender.F] > counts[Gender.M] else Gender.M
    for batch in plan.batches:
        assert len(batch) == batch_size
        per = Counter(gender[i] for i in batch)
        assert per[Gender.F] == per[Gender.M] == batch_size // 2
    used = Counter(i for b in plan.batches for i in b)
    major_ids = [r.id for r in rows if r.gender is major]
    assert all(used[i] <= 1 for i in major_ids)
    assert sum(used[i] == 0 for i in major_ids) < batch_size // 2   # only the dropped remainder
    minor_uses = [used[r.id] for r in rows if r.gender is not major]
    assert max(minor_uses) - min(minor_uses) <= 1


class TestBalancedDev:
    def test_twenty_talks(self):
        rows = rows_for(300, 120, per_talk=10)
        dev, rest = sample_balanced_dev(rows, speakers_for(rows), 20, seed=5)
        talks = {r.talk_id: r.gender for r in dev}
        assert Counter(talks.values()) == {Gender.F: 10, Gender.M: 10}
        assert len(dev) == 200
        assert sorted(r.id for r in dev + rest) == sorted(r.id for r in rows)

    def test_insufficient_talks(self):
        rows = rows_for(6, 0)
        with pytest.raises(ValueError, match="F talks, only 0"):
            sample_balanced_dev(rows, speakers_for(rows), 2, seed=0)

    def test_deterministic(self):
        rows = rows_for(50, 30, per_talk=2)
        a = sample_balanced_dev(rows, speakers_for(rows), 6, seed=9)
        b = sample_balanced_dev(rows, speakers_for(rows), 6, seed=9)
        assert a == b

    def test_ignores_unlabelled_talks(self):
        rows = rows_for(4, 4) + [ManifestRow("x", "tx", "s", "t")]
        speakers = speakers_for(rows[:-1]) + [SpeakerRecord("tx", "", Pronoun.THEY)]
        dev, rest = sample_balanced_dev(rows, speakers, 4, seed=1)
        assert "x" in {r.id for r in rest}


class TestSplitSpecialized:
    def test_female_rows(self):
        rows = rows_for(3, 5)
        assert split_specialized(rows, Gender.F) == rows[3:]

    def test_empty_with_warning(self, caplog):
        rows = rows_for(0, 4)
        assert split_specialized(rows, Gender.M) == []
        assert "no M rows" in caplog.text

    def test_full_corpus_female_segments(self):
        rows = rows_for(178_841, 71_877)
        assert len(split_specialized(rows, Gender.F)) == 71_877


class TestSubsample:
    def test_counts(self):
        out = subsample_balanced(rows_for(100, 40), seed=3)
        assert Counter(r.gender for r in out) == {Gender.M: 40, Gender.F: 40}

    def test_balanced_input_unchanged(self):
        rows = rows_for(7, 7)
        assert sorted(subsample_balanced(rows, seed=1), key=lambda r: r.id) == \
            sorted(rows, key=lambda r: r.id)

    def test_full_corpus_subsample_size(self):
        assert len(subsample_balanced(rows_for(178_841, 71_877), seed=0)) == 2 * 71_877

    def test_female_majority(self):
        out = subsample_balanced(rows_for(3, 9), seed=2)
        assert Counter(r.gender for r in out) == {Gender.M: 3, Gender.F: 3}


class TestBatches:
    def test_six_two(self):
        rows = rows_for(6, 2)
        plan = schedule_balanced_batches(rows, 4, seed=0)
        assert len(plan.batches) == 3
        uses = Counter(i for b in plan.batches for i in b)
        assert uses["f0"] == uses["f1"] == 3
        check_plan(plan, rows, 4)

    def test_balanced_case(self):
        rows = rows_for(4, 4)
        plan = schedule_balanced_batches(rows, 4, seed=0)
        assert len(plan.batches) == 2
        assert Counter(i for b in plan.batches for i in b) == {r.id: 1 for r in rows}

    def test_leftover_dropped(self):
        rows = rows_for(5, 5)
        plan = schedule_balanced_batches(rows, 4, seed=0)
        assert len(plan.batches) == 2
        used = {i for b in plan.batches for i in b}
        assert sum(r.id not in used for r in rows if r.gender is Gender.M) == 1
        assert sum(r.id not in used for r in rows if r.gender is Gender.F) == 1

    def test_errors(self):
        with pytest.raises(ValueError, match="no F rows"):
            schedule_balanced_batches(rows_for(4, 0), 2, seed=0)
        with pytest.raises(ValueError, match="even"):
            schedule_balanced_batches(rows_for(4, 4), 3, seed=0)

    def test_json_round_trip(self):
        plan = schedule_balanced_batches(rows_for(6, 2), 4, seed=11)
        assert BatchPlan.from_json(plan.to_json()) == plan


class TestTags:
    def test_prepend(self):
        (row,) = prepend_tags([ManifestRow("1", "t", "i was elected", "x", Gender.F)])
        assert row.src == "<TO-F> i was elected"

    def test_double_tagging(self):
        rows = prepend_tags(rows_for(1, 0))
        with pytest.raises(ValueError, match="already tagged"):
            prepend_tags(rows)

    def test_distribution(self):
        rows = rows_for(5, 3)
        tags = Counter(r.src.split()[0] for r in prepend_tags(rows))
        assert tags == {"<TO-M>": 5, "<TO-F>": 3}


@settings(max_examples=100, deadline=None)
@given(n_m=st.integers(1, 60), n_f=st.integers(1, 60), half=st.integers(1, 4),
       seed=st.integers(0, 2**32 - 1))
def test_batch_plan_invariants(n_m, n_f, half, seed):
    rows = rows_for(n_m, n_f)
    if max(n_m, n_f) < half or (n_m == n_f and n_m < half):
        with pytest.raises(ValueError):
            schedule_balanced_batches(rows, 2 * half, seed)
        return
    plan = schedule_balanced_batches(rows, 2 * half, seed)
    check_plan(plan, rows, 2 * half)
    assert plan == schedule_balanced_batches(rows, 2 * half, seed)
