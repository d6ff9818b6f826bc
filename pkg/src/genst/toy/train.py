"""Teacher-forced training, specialized fine-tuning, greedy decoding, gradient check."""

from __future__ import annotations

import copy
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Sequence

import torch
import torch.nn.functional as F

from genst.corpus import Gender, ManifestRow
from genst.prep import BatchPlan, make_rng
from genst.toy.model import BOS, EOS, PAD, Strategy, ToyConfig, ToyModel, build_vocab

logger = logging.getLogger(__name__)

SPECIALIZED_LR_SCALE = 0.1


@dataclass
class Hyper:
    lr: float = 3e-4
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)


@dataclass
class TrainResult:
    model: ToyModel
    epoch_losses: list[float]
    meta: dict = field(default_factory=dict)


class TrainingError(RuntimeError):
    pass


@contextmanager
def single_thread():
    prev = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(prev)


def _batch_tensors(model: ToyModel, rows: Sequence[ManifestRow]):
    src = model.pad_batch([model.ids(r.src.split()) for r in rows])
    tgt_ids = [model.ids(r.tgt.split()) + [model.index[EOS]] for r in rows]
    bos = model.index[BOS]
    prefix = model.pad_batch([[bos] + t[:-1] for t in tgt_ids])
    gold = model.pad_batch(tgt_ids)
    pitch = torch.tensor([0.0 if r.pitch is None else r.pitch for r in rows],
                         dtype=model.out.weight.dtype)
    tags = [r.gender for r in rows]
    return src, pitch, prefix, gold, tags


def batch_loss(model: ToyModel, rows: Sequence[ManifestRow], strategy: Strategy) -> torch.Tensor:
    """Summed token cross-entropy over the batch divided by its non-pad target count."""
    src, pitch, prefix, gold, tags = _batch_tensors(model, rows)
    if strategy is not Strategy.NONE and any(t is None for t in tags):
        raise ValueError("rows need a gender when training with a gender strategy")
    logits = model(src, pitch, prefix, strategy, tags if strategy is not Strategy.NONE else None)
    return token_loss(logits, gold, model.index[PAD])


def token_loss(logits: torch.Tensor, gold: torch.Tensor, pad: int) -> torch.Tensor:
    total = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), gold.reshape(-1),
                            ignore_index=pad, reduction="sum")
    return total / gold.ne(pad).sum().clamp(min=1)


def new_model(rows: Sequence[ManifestRow], seed: int = 0, **overrides) -> ToyModel:
    texts = [r.src for r in rows] + [r.tgt for r in rows]
    max_len = max(len(t.split()) for t in texts) * 2 + 8
    cfg = ToyConfig(vocab=build_vocab(texts), max_len=max(32, max_len), **overrides)
    return ToyModel(cfg, seed=seed)


def _plan_for_epoch(batch_plan, epoch):
    if batch_plan is None:
        return None
    if isinstance(batch_plan, BatchPlan):
        return batch_plan
    return batch_plan[epoch % len(batch_plan)]


def train(model: ToyModel, manifest: Sequence[ManifestRow], strategy: Strategy, hyper: Hyper,
          batch_plan: BatchPlan | Sequence[BatchPlan] | None = None,
          in_place: bool = False) -> TrainResult:
    """Minimise teacher-forced cross-entropy with Adam.

    Without a batch plan, rows are reshuffled every epoch. A single plan is
    reused every epoch; a list of plans is cycled through, one per epoch.
    """
    if not manifest:
        raise ValueError("cannot train on an empty manifest")
    strategy = Strategy(strategy)
    if not in_place:
        model = copy.deepcopy(model)
    by_id = {r.id: r for r in manifest}
    rng = make_rng(hyper.seed)
    opt = torch.optim.Adam(model.parameters(), lr=hyper.lr, betas=hyper.betas)
    losses = []
    model.train()
    with single_thread():
        for epoch in range(hyper.epochs):
            plan = _plan_for_epoch(batch_plan, epoch)
            if plan is None:
                order = rng.permutation(len(manifest))
                batches = [[manifest[i] for i in order[s:s + hyper.batch_size]]
                           for s in range(0, len(order), hyper.batch_size)]
            else:
                batches = [[by_id[i] for i in b] for b in plan.batches]
                batches = [batches[i] for i in rng.permutation(len(batches))]
            total, weight = 0.0, 0
            for rows in batches:
                loss = batch_loss(model, rows, strategy)
                if not torch.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss {loss.item()} at epoch {epoch + 1}, "
                        f"batch starting with {rows[0].id}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item() * len(rows)
                weight += len(rows)
            losses.append(total / weight)
            logger.debug("epoch %d loss %.5f", epoch + 1, losses[-1])
    model.eval()
    meta = {"strategy": strategy.value, "lr": hyper.lr, "epochs": hyper.epochs,
            "batch_size": hyper.batch_size, "seed": hyper.seed,
            "balanced_plan": batch_plan is not None}
    return TrainResult(model, losses, meta)


def init_multi_gender(base: ToyModel, seed: int) -> ToyModel:
    """Copy of the base weights with freshly drawn gender embeddings."""
    model = copy.deepcopy(base)
    model.reset_gender_embeddings(seed)
    return model


def finetune_specialized(base: ToyModel, gender_manifest: Sequence[ManifestRow],
                         hyper: Hyper) -> TrainResult:
    genders = {r.gender for r in gender_manifest}
    if None in genders:
        raise ValueError("specialized fine-tuning needs gender-labelled rows")
    if len(genders) > 1:
        raise ValueError("specialized fine-tuning needs a single-gender manifest")
    tuned = Hyper(lr=hyper.lr * SPECIALIZED_LR_SCALE, epochs=hyper.epochs,
                  batch_size=hyper.batch_size, seed=hyper.seed, betas=hyper.betas)
    result = train(base, gender_manifest, Strategy.NONE, tuned)
    result.meta["base_lr"] = hyper.lr
    result.meta["gender"] = next(iter(genders)).value if genders else None
    return result


# -- decoding --------------------------------------------------------------


@torch.no_grad()
def translate_batch(model: ToyModel, sources: Sequence[Sequence[str]], pitches: Sequence[float],
                    strategy: Strategy, tags: Sequence[Gender] | None = None,
                    return_probs: bool = False):
    """Greedy decoding; each output stops at EOS or after 2*len(src)+5 tokens."""
    strategy = Strategy(strategy)
    if not sources:
        return ([], []) if return_probs else []
    if strategy is Strategy.NONE:
        tags = None
    elif tags is None:
        raise ValueError(f"strategy {strategy.value} requires tags")
    model.eval()
    with single_thread():
        src = model.pad_batch([model.ids(s) for s in sources])
        pitch = torch.tensor(list(pitches), dtype=model.out.weight.dtype)
        mem, pad = model.encode(src, pitch, strategy, tags)
        limits = [2 * len(s) + 5 for s in sources]
        prefix = torch.full((len(sources), 1), model.index[BOS], dtype=torch.long)
        eos = model.index[EOS]
        done = [False] * len(sources)
        outputs: list[list[str]] = [[] for _ in sources]
        step_probs = []
        for step in range(max(limits)):
            logits = model.decode(prefix, mem, pad, strategy, tags)[:, -1]
            probs = torch.softmax(logits.double(), dim=-1)
            if return_probs:
                step_probs.append(probs)
            nxt = probs.argmax(dim=-1)
            for i, tok in enumerate(nxt.tolist()):
                if done[i]:
                    continue
                if tok == eos or len(outputs[i]) >= limits[i]:
                    done[i] = True
                else:
                    outputs[i].append(model.cfg.vocab[tok])
                    if len(outputs[i]) >= limits[i]:
                        done[i] = True
            if all(done):
                break
            prefix = torch.cat([prefix, nxt[:, None]], dim=1)
    return (outputs, step_probs) if return_probs else outputs


def translate(model: ToyModel, src: Sequence[str], pitch: float, strategy: Strategy,
              tag: Gender | None = None) -> list[str]:
    tags = None if tag is None else [tag]
    return translate_batch(model, [list(src)], [pitch], strategy, tags)[0]


# -- gradient check ----------------------------------------------------------


def _gradcheck_batch(seed: int):
    rng = make_rng(seed)
    words = ["i", "am", "was", "proud", "calm"]
    rows = []
    for k in range(4):
        src = " ".join(rng.choice(words, size=int(rng.integers(2, 5))))
        gender = Gender.F if k % 2 else Gender.M
        tgt = " ".join("t_" + w for w in src.split())
        rows.append(ManifestRow(f"g{k}", "t", src, tgt, gender, float(rng.uniform())))
    return rows


def grad_check(seed: int = 0, model_dim: int = 8, heads: int = 2, ffn_dim: int = 16,
               n_coords: int = 256, step: float = 1e-4, strategy: Strategy = Strategy.DEC_PREP,
               rows: Sequence[ManifestRow] | None = None) -> float:
    """Max relative error between autograd and central differences, in float64.

    The relative error of one coordinate is |a - n| / max(|a|, |n|, 1e-8).
    """
    if model_dim > 8:
        raise ValueError("grad_check is meant for a tiny model (model_dim <= 8)")
    rows = list(rows) if rows is not None else _gradcheck_batch(seed)
    model = new_model(rows, seed=seed, model_dim=model_dim, layers=1, heads=heads,
                      ffn_dim=ffn_dim).double()
    params = [p for p in model.parameters()]
    with single_thread():
        loss = batch_loss(model, rows, strategy)
        model.zero_grad()
        loss.backward()
    flat = [(pi, j) for pi, p in enumerate(params) for j in range(p.numel())]
    rng = make_rng(seed + 7)
    picks = rng.choice(len(flat), size=min(n_coords, len(flat)), replace=False)
    worst = 0.0
    with torch.no_grad(), single_thread():
        for k in sorted(picks):
            pi, j = flat[k]
            view = params[pi].view(-1)
            grad = params[pi].grad
            analytic = 0.0 if grad is None else grad.view(-1)[j].item()
            orig = view[j].item()
            view[j] = orig + step
            up = batch_loss(model, rows, strategy).item()
            view[j] = orig - step
            down = batch_loss(model, rows, strategy).item()
            view[j] = orig
            numeric = (up - down) / (2 * step)
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst
