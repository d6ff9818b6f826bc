import json
from collections import Counter

import pytest

from genst import corpus
from genst.cli import main
from genst.corpus import Gender
from genst.prep import BatchPlan

BENCH = ("ID\tTALK-ID\tSRC\tREF-C\tREF-W\tGENDER\tCATEGORY\tTERMS\n"
         "s1\tt1\ti was elected\tsono stata eletta\tsono stato eletto\tF\t1\tstata:stato;eletta:eletto\n"
         "s2\tt2\ti was born here\tsono nato qui\tsono nata qui\tM\t1\tnato:nata\n"
         "s3\tt2\tthe table\til tavolo\tla tavola\tM\t2\ttavolo:tavola\n")
HYPS = "ID\tHYP\ns1\tsono stata eletto\ns2\tsono nato qui\ns3\tla tavola\n"


@pytest.fixture
def bench_files(tmp_path):
    b, h = tmp_path / "bench.tsv", tmp_path / "hyp.tsv"
    b.write_text(BENCH, encoding="utf-8")
    h.write_text(HYPS, encoding="utf-8")
    return b, h


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--segments", "300", "--seed", "3", "--out-dir", str(out)]) == 0
    return out


class TestEvaluate:
    def test_report(self, bench_files, tmp_path, capsys):
        b, h = bench_files
        out = tmp_path / "r.json"
        assert main(["evaluate", "--benchmark", str(b), "--hyp", str(h), "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["overall"]["terms_total"] == 3
        assert rep["overall"]["covered_correct"] == 2
        assert rep["per_gender"]["M"]["accuracy_pct"] == 100.0
        assert "accuracy 66.67%" in capsys.readouterr().out

    def test_all_categories_and_per_segment(self, bench_files, tmp_path):
        b, h = bench_files
        out = tmp_path / "r.json"
        main(["evaluate", "--benchmark", str(b), "--hyp", str(h), "--out", str(out),
              "--category", "all", "--per-segment"])
        rep = json.loads(out.read_text())
        assert rep["overall"]["terms_total"] == 4
        assert [s["outcome"] for s in rep["per_segment"]][-1] == "WrongForm"

    def test_swap_expected(self, bench_files, tmp_path):
        b, h = bench_files
        out = tmp_path / "r.json"
        main(["evaluate", "--benchmark", str(b), "--hyp", str(h), "--out", str(out),
              "--swap-expected"])
        assert json.loads(out.read_text())["overall"]["covered_correct"] == 1

    def test_byte_identical(self, bench_files, tmp_path):
        b, h = bench_files
        outs = [tmp_path / "a.json", tmp_path / "b.json"]
        for o in outs:
            main(["evaluate", "--benchmark", str(b), "--hyp", str(h), "--out", str(o)])
        assert outs[0].read_bytes() == outs[1].read_bytes()

    def test_missing_hypothesis(self, bench_files, tmp_path, capsys):
        b, h = bench_files
        h.write_text("ID\tHYP\ns1\tx\n")
        assert main(["evaluate", "--benchmark", str(b), "--hyp", str(h),
                     "--out", str(tmp_path / "r.json")]) == 1
        assert "missing hypotheses for ids: s2" in capsys.readouterr().err
        assert not (tmp_path / "r.json").exists()

    def test_malformed_benchmark(self, bench_files, tmp_path, capsys):
        b, h = bench_files
        b.write_text(BENCH.replace("\tF\t1\t", "\tX\t1\t"))
        assert main(["evaluate", "--benchmark", str(b), "--hyp", str(h),
                     "--out", str(tmp_path / "r.json")]) == 1
        assert "line 2" in capsys.readouterr().err


class TestUsage:
    @pytest.mark.parametrize("argv", [
        ["frobnicate"],
        ["evaluate", "--benchmark", "b.tsv"],
        ["evaluate", "--benchmark", "b", "--hyp", "h", "--out", "o", "--bogus"],
        ["prep", "split", "--manifest", "m", "--mode", "sideways", "--out", "o"],
        [],
    ])
    def test_exit_two(self, argv, capsys):
        assert main(argv) == 2
        assert "usage:" in capsys.readouterr().err

    def test_seed_required(self, synth_dir, tmp_path, capsys):
        code = main(["prep", "batches", "--manifest", str(synth_dir / "train.tsv"),
                     "--batch-size", "8", "--out", str(tmp_path / "p.json")])
        assert code == 2
        assert "--seed is required" in capsys.readouterr().err

    def test_stdout_is_summary_only(self, bench_files, tmp_path, capsys):
        b, h = bench_files
        main(["evaluate", "--benchmark", str(b), "--hyp", str(h), "--out", str(tmp_path / "r.json")])
        assert "{" not in capsys.readouterr().out


class TestPrep:
    def test_synth_outputs(self, synth_dir):
        train = corpus.read_file(synth_dir / "train.tsv", corpus.parse_manifest)
        bench = corpus.read_file(synth_dir / "benchmark.tsv", corpus.parse_benchmark)
        speakers = corpus.read_file(synth_dir / "speakers.tsv", corpus.parse_speakers)
        assert len(train) == 280 and all(r.pitch is not None for r in train)
        assert bench and {e.gender for e in bench} == {Gender.F, Gender.M}
        assert len(speakers) == 30

    def test_dev_balanced(self, synth_dir, tmp_path):
        dev, rest = tmp_path / "dev.tsv", tmp_path / "rest.tsv"
        assert main(["prep", "dev-balanced", "--manifest", str(synth_dir / "train.tsv"),
                     "--speakers", str(synth_dir / "speakers.tsv"), "--talks", "4",
                     "--seed", "1", "--out", str(dev), "--remaining-out", str(rest)]) == 0
        rows = corpus.read_file(dev, corpus.parse_manifest)
        talks = {r.talk_id: r.gender for r in rows}
        assert Counter(talks.values()) == {Gender.F: 2, Gender.M: 2}
        assert len(rows) + len(corpus.read_file(rest, corpus.parse_manifest)) == 280

    @pytest.mark.parametrize("mode,expect", [("specialized-f", {Gender.F}),
                                             ("specialized-m", {Gender.M})])
    def test_split_specialized(self, synth_dir, tmp_path, mode, expect):
        out = tmp_path / "s.tsv"
        assert main(["prep", "split", "--manifest", str(synth_dir / "train.tsv"),
                     "--mode", mode, "--out", str(out)]) == 0
        assert {r.gender for r in corpus.read_file(out, corpus.parse_manifest)} == expect

    def test_split_balanced(self, synth_dir, tmp_path):
        out = tmp_path / "s.tsv"
        main(["prep", "split", "--manifest", str(synth_dir / "train.tsv"), "--mode", "balanced",
              "--seed", "0", "--out", str(out)])
        counts = Counter(r.gender for r in corpus.read_file(out, corpus.parse_manifest))
        assert counts[Gender.F] == counts[Gender.M] > 0

    def test_tags(self, synth_dir, tmp_path):
        out = tmp_path / "t.tsv"
        main(["prep", "tags", "--manifest", str(synth_dir / "train.tsv"), "--out", str(out)])
        for row in corpus.read_file(out, corpus.parse_manifest):
            assert row.src.split()[0] == f"<TO-{row.gender.value}>"
        assert main(["prep", "tags", "--manifest", str(out), "--out", str(tmp_path / "u.tsv")]) == 1

    def test_batches_deterministic(self, synth_dir, tmp_path):
        outs = [tmp_path / "a.json", tmp_path / "b.json"]
        for o in outs:
            assert main(["prep", "batches", "--manifest", str(synth_dir / "train.tsv"),
                         "--batch-size", "8", "--seed", "5", "--out", str(o)]) == 0
        assert outs[0].read_bytes() == outs[1].read_bytes()
        plan = BatchPlan.from_json(outs[0].read_text())
        assert plan.seed == 5 and all(len(b) == 8 for b in plan.batches)

    def test_odd_batch_size(self, synth_dir, tmp_path):
        assert main(["prep", "batches", "--manifest", str(synth_dir / "train.tsv"),
                     "--batch-size", "7", "--seed", "5", "--out", str(tmp_path / "p.json")]) == 1


def test_toy_pipeline(synth_dir, tmp_path):
    d = str(synth_dir)
    base, multi, hyp, rep = (str(tmp_path / n) for n in ("base.json", "m.json", "h.tsv", "r.json"))
    assert main(["toy", "train", "--manifest", f"{d}/train.tsv", "--epochs", "1", "--seed", "0",
                 "--out", base]) == 0
    assert main(["toy", "train", "--manifest", f"{d}/train.tsv", "--epochs", "1", "--seed", "0",
                 "--init", base, "--strategy", "EncMerge", "--balanced-batches",
                 "--out", multi]) == 0
    assert main(["toy", "translate", "--model", multi, "--manifest", f"{d}/test.tsv",
                 "--out", hyp]) == 0
    hyps = corpus.read_file(hyp, corpus.parse_hypotheses)
    assert len(hyps) == 20
    assert main(["evaluate", "--benchmark", f"{d}/benchmark.tsv", "--hyp", hyp, "--out", rep]) == 0
    again = str(tmp_path / "h2.tsv")
    main(["toy", "translate", "--model", multi, "--manifest", f"{d}/test.tsv", "--out", again])
    assert open(hyp, "rb").read() == open(again, "rb").read()


def test_finetune_rejects_mixed_genders(synth_dir, tmp_path):
    base = str(tmp_path / "base.json")
    main(["toy", "train", "--manifest", f"{synth_dir}/train.tsv", "--epochs", "0", "--seed", "0",
          "--out", base])
    assert main(["toy", "finetune", "--init", base, "--manifest", f"{synth_dir}/train.tsv",
                 "--epochs", "1", "--seed", "0", "--out", str(tmp_path / "f.json")]) == 1


def test_gradcheck(tmp_path):
    out = tmp_path / "g.json"
    assert main(["toy", "gradcheck", "--seed", "0", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["max_relative_error"] < 1e-3
