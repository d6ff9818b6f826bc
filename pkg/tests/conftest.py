import io

import pytest

from genst.corpus import BenchmarkEntry, Gender, TermPair


def stream(text: str) -> io.StringIO:
    return io.StringIO(text)


def entry(id_, ref_c, ref_w, terms, gender=Gender.F, category="1", talk="t1", src="src"):
    return BenchmarkEntry(id_, talk, src, ref_c, ref_w, gender, category,
                          tuple(TermPair.from_text(c, w) for c, w in terms))


@pytest.fixture
def micro_benchmark():
    """Six entries, nine term pairs; hypotheses and expected outcomes hand-enumerated."""
    entries = [
        entry("s1", "sono stata eletta", "sono stato eletto",
              [("stata", "stato"), ("eletta", "eletto")], Gender.F),
        entry("s2", "fui eletta", "fui eletto", [("eletta", "eletto")], Gender.F),
        entry("s3", "ero la classica studentessa asiatica", "ero il classico studente asiatico",
              [("la classica studentessa asiatica", "il classico studente asiatico")], Gender.F),
        entry("s4", "sono nato qui e sono cresciuto qui", "sono nata qui e sono cresciuta qui",
              [("nato", "nata"), ("cresciuto", "cresciuta")], Gender.M),
        entry("s5", "sono stanco e stanco", "sono stanca e stanca",
              [("stanco", "stanca"), ("stanco", "stanca")], Gender.M),
        entry("s6", "quand j'étais petit", "quand j'étais petite", [("petit", "petite")],
              Gender.M),
    ]
    hyps = {
        "s1": "Sono stata eletto.",              # stata correct, eletta -> wrong
        "s2": "Fui selezionata",                 # not covered
        "s3": "ero la classica studentessa asiatica",  # correct (4-token term)
        "s4": "sono nata qui e sono cresciuto",  # nato -> wrong, cresciuto correct
        "s5": "sono stanco",                     # first stanco correct, second not covered
        "s6": "Quand J'ÉTAIS PETITE",            # wrong
    }
    # outcomes per term in annotation order
    outcomes = {
        "s1": ["CorrectForm", "WrongForm"],
        "s2": ["NotCovered"],
        "s3": ["CorrectForm"],
        "s4": ["WrongForm", "CorrectForm"],
        "s5": ["CorrectForm", "NotCovered"],
        "s6": ["WrongForm"],
    }
    return entries, hyps, outcomes


@pytest.fixture(scope="session")
def experiment():
    """The default nine-system run, trained once per test session."""
    import time

    from genst.toy.experiment import ExperimentConfig, build_systems, run_experiment
    from genst.toy.synth import gen_synthetic

    cfg = ExperimentConfig()
    start = time.perf_counter()
    data = gen_synthetic(cfg.synth)
    systems = build_systems(cfg, data)
    report = run_experiment(cfg, data, systems)
    return {"cfg": cfg, "data": data, "systems": systems, "report": report,
            "seconds": time.perf_counter() - start}
