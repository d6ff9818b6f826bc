"""genst command line: evaluation, data preparation, synthetic data and the toy testbed.

Exit codes: 0 success, 1 data or validation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from genst import corpus, metrics, prep

logger = logging.getLogger("genst")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _seed_required(args):
    if args.seed is None:
        raise UsageError("--seed is required for this command")


# -- evaluate ----------------------------------------------------------------


def cmd_evaluate(args):
    bench = corpus.read_file(args.benchmark, corpus.parse_benchmark)
    hyps = corpus.read_file(args.hyp, corpus.parse_hypotheses)
    if args.swap_expected:
        bench = metrics.swap_expectation(bench)
    category = None if args.category == "all" else args.category
    report = metrics.evaluate(bench, hyps, category_filter=category, per_segment=args.per_segment)
    corpus.write_file(args.out, metrics.render_report(report))
    acc = report.accuracy_pct
    print(f"BLEU(correct) {report.bleu_correct:.2f}  BLEU(wrong) {report.bleu_wrong:.2f}  "
          f"coverage {report.coverage_pct:.2f}%  accuracy "
          f"{'n/a' if acc is None else f'{acc:.2f}%'}")


# -- prep --------------------------------------------------------------------


def _manifest(path):
    return corpus.read_file(path, corpus.parse_manifest)


def _write_manifest(path, rows):
    corpus.write_file(path, corpus.format_manifest(rows))


def cmd_prep_join(args):
    result = corpus.join_gender(_manifest(args.manifest),
                                corpus.read_file(args.speakers, corpus.parse_speakers))
    _write_manifest(args.out, result.rows)
    print(f"kept {len(result.rows)} rows, dropped {result.dropped}")


def cmd_prep_dev(args):
    _seed_required(args)
    dev, rest = prep.sample_balanced_dev(_manifest(args.manifest),
                                         corpus.read_file(args.speakers, corpus.parse_speakers),
                                         args.talks, args.seed)
    _write_manifest(args.out, dev)
    if args.remaining_out:
        _write_manifest(args.remaining_out, rest)
    print(f"dev: {len(dev)} rows from {len({r.talk_id for r in dev})} talks; "
          f"remaining: {len(rest)} rows")


def cmd_prep_split(args):
    rows = _manifest(args.manifest)
    if args.mode == "balanced":
        _seed_required(args)
        out = prep.subsample_balanced(rows, args.seed)
    else:
        out = prep.split_specialized(rows, corpus.Gender(args.mode[-1].upper()))
    _write_manifest(args.out, out)
    print(f"{args.mode}: {len(out)} of {len(rows)} rows")


def cmd_prep_tags(args):
    out = prep.prepend_tags(_manifest(args.manifest))
    _write_manifest(args.out, out)
    print(f"tagged {len(out)} rows")


def cmd_prep_batches(args):
    _seed_required(args)
    plan = prep.schedule_balanced_batches(_manifest(args.manifest), args.batch_size, args.seed)
    corpus.write_file(args.out, plan.to_json())
    print(f"{len(plan.batches)} balanced batches of {args.batch_size}")


# -- synthetic data ------------------------------------------------------------


def _synth_config(args):
    from genst.toy.synth import SynthConfig

    return SynthConfig(n_segments=args.segments, male_fraction=args.skew, seed=args.seed)


def cmd_synth(args):
    from genst.toy.synth import gen_synthetic

    _seed_required(args)
    data = gen_synthetic(_synth_config(args))
    os.makedirs(args.out_dir, exist_ok=True)
    join = os.path.join
    _write_manifest(join(args.out_dir, "train.tsv"), data.train)
    _write_manifest(join(args.out_dir, "test.tsv"), data.test)
    corpus.write_file(join(args.out_dir, "benchmark.tsv"), corpus.format_benchmark(data.benchmark))
    corpus.write_file(join(args.out_dir, "speakers.tsv"), corpus.format_speakers(data.speakers))
    print(f"train {len(data.train)} rows, test {len(data.test)} rows, "
          f"benchmark {len(data.benchmark)} entries -> {args.out_dir}")


# -- toy model -----------------------------------------------------------------


def _hyper(args):
    from genst.toy.train import Hyper

    return Hyper(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)


def cmd_toy_train(args):
    from genst.toy.model import Strategy, load_checkpoint, save_checkpoint
    from genst.toy.train import init_multi_gender, new_model, train

    _seed_required(args)
    rows = _manifest(args.manifest)
    strategy = Strategy(args.strategy)
    if args.init:
        base, _ = load_checkpoint(args.init)
        model = init_multi_gender(base, args.seed) if strategy is not Strategy.NONE else base
    else:
        model = new_model(rows, seed=args.seed)
    plans = None
    if args.balanced_batches:
        plans = [prep.schedule_balanced_batches(rows, args.batch_size, args.seed * 1000 + e)
                 for e in range(args.epochs)]
    result = train(model, rows, strategy, _hyper(args), batch_plan=plans)
    save_checkpoint(result.model, args.out, {**result.meta, "epoch_losses": result.epoch_losses})
    print(f"trained {strategy.value} for {args.epochs} epochs; final loss "
          f"{result.epoch_losses[-1]:.4f}" if result.epoch_losses else "no epochs run")


def cmd_toy_finetune(args):
    from genst.toy.model import load_checkpoint, save_checkpoint
    from genst.toy.train import finetune_specialized

    _seed_required(args)
    base, _ = load_checkpoint(args.init)
    result = finetune_specialized(base, _manifest(args.manifest), _hyper(args))
    save_checkpoint(result.model, args.out, {**result.meta, "epoch_losses": result.epoch_losses})
    print(f"fine-tuned on {result.meta['gender']} data at lr {result.meta['lr']:g}")


def cmd_toy_translate(args):
    from genst.toy.model import Strategy, load_checkpoint
    from genst.toy.train import translate_batch

    model, meta = load_checkpoint(args.model)
    strategy = Strategy(args.strategy or meta.get("strategy", "None"))
    rows = _manifest(args.manifest)
    tags = None
    if strategy is not Strategy.NONE:
        if any(r.gender is None for r in rows):
            raise ValueError("every row needs a gender to derive its tag")
        tags = [r.gender.opposite() if args.flip_tags else r.gender for r in rows]
    outs = translate_batch(model, [r.src.split() for r in rows],
                           [0.0 if r.pitch is None else r.pitch for r in rows], strategy, tags)
    hyps = {r.id: " ".join(o) for r, o in zip(rows, outs)}
    corpus.write_file(args.out, corpus.format_hypotheses(hyps))
    print(f"translated {len(hyps)} segments with strategy {strategy.value}")


def cmd_toy_gradcheck(args):
    from genst.toy.model import Strategy
    from genst.toy.train import grad_check

    _seed_required(args)
    err = grad_check(seed=args.seed, strategy=Strategy(args.strategy))
    if args.out:
        corpus.write_file(args.out, json.dumps({"seed": args.seed, "strategy": args.strategy,
                                                "max_relative_error": err}) + "\n")
    print(f"max relative error {err:.3e}")


def cmd_experiment(args):
    from genst.toy.experiment import ExperimentConfig, dump_report, render_tables, run_experiment

    _seed_required(args)
    cfg = ExperimentConfig(synth=_synth_config(args), seed=args.seed)
    report = run_experiment(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    corpus.write_file(os.path.join(args.out_dir, "report.json"), dump_report(report))
    tables = render_tables(report)
    corpus.write_file(os.path.join(args.out_dir, "tables.txt"), tables)
    print(tables, end="")


# -- parser --------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="genst", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ev = sub.add_parser("evaluate", help="score hypotheses on a gender benchmark")
    ev.add_argument("--benchmark", required=True)
    ev.add_argument("--hyp", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--swap-expected", action="store_true",
                    help="expect the opposite gender form (conflict condition)")
    ev.add_argument("--per-segment", action="store_true")
    ev.add_argument("--category", default=metrics.DEFAULT_CATEGORY,
                    help='benchmark category to score, or "all"')
    ev.set_defaults(func=cmd_evaluate)

    pr = sub.add_parser("prep", help="data preparation")
    psub = pr.add_subparsers(dest="prep_command", required=True, parser_class=_Parser)

    j = psub.add_parser("join", help="attach speaker gender to manifest rows")
    j.add_argument("--manifest", required=True)
    j.add_argument("--speakers", required=True)
    j.add_argument("--out", required=True)
    j.set_defaults(func=cmd_prep_join)

    d = psub.add_parser("dev-balanced", help="gender-balanced validation talks")
    d.add_argument("--manifest", required=True)
    d.add_argument("--speakers", required=True)
    d.add_argument("--talks", type=int, default=20)
    d.add_argument("--seed", type=int)
    d.add_argument("--out", required=True)
    d.add_argument("--remaining-out")
    d.set_defaults(func=cmd_prep_dev)

    s = psub.add_parser("split", help="specialized or balanced subsets")
    s.add_argument("--manifest", required=True)
    s.add_argument("--mode", required=True,
                   choices=["specialized-f", "specialized-m", "balanced"])
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_prep_split)

    t = psub.add_parser("tags", help="prepend gender tags to sources")
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_prep_tags)

    b = psub.add_parser("batches", help="gender-balanced batch plan")
    b.add_argument("--manifest", required=True)
    b.add_argument("--batch-size", type=int, required=True)
    b.add_argument("--seed", type=int)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_prep_batches)

    sy = sub.add_parser("synth", help="generate synthetic training data and benchmark")
    sy.add_argument("--segments", type=int, default=5000)
    sy.add_argument("--skew", type=float, default=0.71, help="male fraction of talks")
    sy.add_argument("--seed", type=int)
    sy.add_argument("--out-dir", required=True)
    sy.set_defaults(func=cmd_synth)

    toy = sub.add_parser("toy", help="toy encoder-decoder")
    tsub = toy.add_subparsers(dest="toy_command", required=True, parser_class=_Parser)

    def train_flags(q, lr):
        q.add_argument("--manifest", required=True)
        q.add_argument("--epochs", type=int, default=2)
        q.add_argument("--lr", type=float, default=lr)
        q.add_argument("--batch-size", type=int, default=32)
        q.add_argument("--seed", type=int)
        q.add_argument("--out", required=True)

    tr = tsub.add_parser("train", help="train a base or multi-gender model")
    train_flags(tr, 3e-4)
    tr.add_argument("--strategy", default="None", choices=["None", "DecPrep", "DecMerge", "EncMerge"])
    tr.add_argument("--init", help="checkpoint to start from (gender embeddings are redrawn)")
    tr.add_argument("--balanced-batches", action="store_true",
                    help="oversample the minority gender in balanced batches")
    tr.set_defaults(func=cmd_toy_train)

    ft = tsub.add_parser("finetune", help="gender-specialized fine-tuning (lr scaled by 0.1)")
    train_flags(ft, 3e-4)
    ft.add_argument("--init", required=True)
    ft.set_defaults(func=cmd_toy_finetune)

    tl = tsub.add_parser("translate", help="greedy decoding of a manifest")
    tl.add_argument("--model", required=True)
    tl.add_argument("--manifest", required=True)
    tl.add_argument("--strategy", choices=["None", "DecPrep", "DecMerge", "EncMerge"])
    tl.add_argument("--flip-tags", action="store_true", help="feed the opposite gender tag")
    tl.add_argument("--out", required=True)
    tl.set_defaults(func=cmd_toy_translate)

    gc = tsub.add_parser("gradcheck", help="finite-difference gradient check")
    gc.add_argument("--seed", type=int)
    gc.add_argument("--strategy", default="DecPrep",
                    choices=["None", "DecPrep", "DecMerge", "EncMerge"])
    gc.add_argument("--out")
    gc.set_defaults(func=cmd_toy_gradcheck)

    ex = sub.add_parser("experiment", help="toy reproduction experiments")
    xsub = ex.add_subparsers(dest="experiment_command", required=True, parser_class=_Parser)
    full = xsub.add_parser("full", help="train and score all nine systems")
    full.add_argument("--segments", type=int, default=5000)
    full.add_argument("--skew", type=float, default=0.71)
    full.add_argument("--seed", type=int)
    full.add_argument("--out-dir", required=True)
    full.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"genst: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"genst: {msg}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
