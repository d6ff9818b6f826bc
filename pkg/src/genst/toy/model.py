"""Minimal transformer encoder-decoder with speaker-gender conditioning.

The "audio" input is a token sequence plus one scalar pitch value that is
projected and added at every encoder position. Gender can be injected in
three ways, mirroring target-forcing in multilingual translation:

* ``DecPrep``  - the gender embedding replaces the decoder start symbol
* ``DecMerge`` - the gender embedding is added to every decoder input
* ``EncMerge`` - the gender embedding is added to every encoder input
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import torch
from torch import nn

from genst.corpus import Gender

PAD, BOS, EOS, UNK, TAG_F, TAG_M = "<pad>", "<s>", "</s>", "<unk>", "<TO-F>", "<TO-M>"
SPECIALS = (PAD, BOS, EOS, UNK, TAG_F, TAG_M)
GENDER_INDEX = {Gender.F: 0, Gender.M: 1}

CHECKPOINT_VERSION = 1


class Strategy(str, enum.Enum):
    NONE = "None"
    DEC_PREP = "DecPrep"
    DEC_MERGE = "DecMerge"
    ENC_MERGE = "EncMerge"


@dataclass
class ToyConfig:
    vocab: list[str]
    model_dim: int = 64
    layers: int = 2
    heads: int = 4
    ffn_dim: int = 128
    max_len: int = 32
    gender_init: float = 0.1

    def __post_init__(self):
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        for sp in SPECIALS:
            if self.vocab.count(sp) != 1:
                raise ValueError(f"special token {sp} must appear exactly once in vocab")
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("vocab has duplicate tokens")


def build_vocab(texts: Sequence[str]) -> list[str]:
    words = sorted({w for t in texts for w in t.split()} - set(SPECIALS))
    return list(SPECIALS) + words


def sinusoidal_positions(length: int, dim: int, dtype=torch.float32) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64)[:, None]
    rate = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * rate)
    pe[:, 1::2] = torch.cos(pos * rate)[:, : dim // 2]
    return pe.to(dtype)


class Attention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.o = nn.Linear(dim, dim)

    def forward(self, x, mem, key_pad=None, causal=False):
        b, tq, d = x.shape
        tk = mem.shape[1]
        h = self.heads

        def split(t, n):
            return t.view(b, n, h, d // h).transpose(1, 2)

        q, k, v = split(self.q(x), tq), split(self.k(mem), tk), split(self.v(mem), tk)
        scores = q @ k.transpose(-1, -2) / math.sqrt(d // h)
        if key_pad is not None:
            scores = scores.masked_fill(key_pad[:, None, None, :], float("-inf"))
        if causal:
            future = torch.ones(tq, tk, dtype=torch.bool).triu(1)
            scores = scores.masked_fill(future, float("-inf"))
        ctx = torch.softmax(scores, dim=-1) @ v
        return self.o(ctx.transpose(1, 2).reshape(b, tq, d))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ToyConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.model_dim)
        self.attn = Attention(cfg.model_dim, cfg.heads)
        self.norm2 = nn.LayerNorm(cfg.model_dim)
        self.ffn = nn.Sequential(nn.Linear(cfg.model_dim, cfg.ffn_dim), nn.ReLU(),
                                 nn.Linear(cfg.ffn_dim, cfg.model_dim))

    def forward(self, x, pad):
        y = self.norm1(x)
        x = x + self.attn(y, y, key_pad=pad)
        return x + self.ffn(self.norm2(x))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ToyConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.model_dim)
        self.self_attn = Attention(cfg.model_dim, cfg.heads)
        self.norm2 = nn.LayerNorm(cfg.model_dim)
        self.cross_attn = Attention(cfg.model_dim, cfg.heads)
        self.norm3 = nn.LayerNorm(cfg.model_dim)
        self.ffn = nn.Sequential(nn.Linear(cfg.model_dim, cfg.ffn_dim), nn.ReLU(),
                                 nn.Linear(cfg.ffn_dim, cfg.model_dim))

    def forward(self, x, mem, src_pad):
        y = self.norm1(x)
        x = x + self.self_attn(y, y, causal=True)
        x = x + self.cross_attn(self.norm2(x), mem, key_pad=src_pad)
        return x + self.ffn(self.norm3(x))


class ToyModel(nn.Module):
    """All learnable tensors of the toy system live here."""

    def __init__(self, cfg: ToyConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.index = {tok: i for i, tok in enumerate(cfg.vocab)}
        d = cfg.model_dim
        gen = torch.Generator().manual_seed(seed)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.tok_emb = nn.Embedding(len(cfg.vocab), d)
            self.gender_emb = nn.Parameter(torch.empty(2, d))
            self.pitch_proj = nn.Parameter(torch.empty(d))
            self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.layers))
            self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.layers))
            self.enc_norm = nn.LayerNorm(d)
            self.dec_norm = nn.LayerNorm(d)
            self.out = nn.Linear(d, len(cfg.vocab))
        nn.init.normal_(self.tok_emb.weight, std=1.0, generator=gen)
        nn.init.normal_(self.pitch_proj, std=1.0, generator=gen)
        self.reset_gender_embeddings(seed + 1)
        self.register_buffer("positions", sinusoidal_positions(cfg.max_len, d), persistent=False)

    def reset_gender_embeddings(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            a = self.cfg.gender_init
            self.gender_emb.copy_(torch.rand(2, self.cfg.model_dim, generator=gen,
                                             dtype=torch.float64) * 2 * a - a)

    # -- token handling --------------------------------------------------

    def ids(self, tokens: Sequence[str]) -> list[int]:
        unk = self.index[UNK]
        return [self.index.get(t, unk) for t in tokens]

    def pad_batch(self, seqs: Sequence[Sequence[int]]) -> torch.Tensor:
        width = max(1, max(len(s) for s in seqs))
        out = torch.full((len(seqs), width), self.index[PAD], dtype=torch.long)
        for i, s in enumerate(seqs):
            out[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        return out

    def _gender_vectors(self, strategy: Strategy, tags) -> torch.Tensor | None:
        if strategy is Strategy.NONE:
            return None
        if tags is None:
            raise ValueError(f"strategy {strategy.value} requires a gender tag")
        idx = torch.tensor([GENDER_INDEX[Gender(t)] for t in tags], dtype=torch.long)
        return self.gender_emb[idx]

    # -- inputs ------------------------------------------------------------

    def encode_inputs(self, src: torch.Tensor, pitch: torch.Tensor, strategy: Strategy,
                      tags=None) -> torch.Tensor:
        """token embedding + pitch * projection + position (+ gender for EncMerge)."""
        x = self.tok_emb(src) + pitch[:, None, None] * self.pitch_proj
        x = x + self.positions[: src.shape[1]]
        g = self._gender_vectors(strategy, tags)
        if strategy is Strategy.ENC_MERGE:
            x = x + g[:, None, :]
        return x

    def decoder_inputs(self, prefix: torch.Tensor, strategy: Strategy, tags=None) -> torch.Tensor:
        """``prefix`` starts with BOS; DecPrep swaps that slot for the gender embedding."""
        x = self.tok_emb(prefix)
        g = self._gender_vectors(strategy, tags)
        if strategy is Strategy.DEC_PREP:
            x = torch.cat([g[:, None, :], x[:, 1:]], dim=1)
        elif strategy is Strategy.DEC_MERGE:
            x = x + g[:, None, :]
        return x + self.positions[: prefix.shape[1]]

    # -- forward -----------------------------------------------------------

    def encode(self, src, pitch, strategy, tags=None):
        pad = src.eq(self.index[PAD])
        x = self.encode_inputs(src, pitch, strategy, tags)
        for layer in self.encoder:
            x = layer(x, pad)
        return self.enc_norm(x), pad

    def decode(self, prefix, mem, src_pad, strategy, tags=None):
        x = self.decoder_inputs(prefix, strategy, tags)
        for layer in self.decoder:
            x = layer(x, mem, src_pad)
        return self.out(self.dec_norm(x))

    def forward(self, src, pitch, prefix, strategy=Strategy.NONE, tags=None):
        mem, pad = self.encode(src, pitch, strategy, tags)
        return self.decode(prefix, mem, pad, strategy, tags)


def encode_inputs(model: ToyModel, src_tokens: Sequence[str], pitch: float, strategy: Strategy,
                  tag: Gender | None = None) -> torch.Tensor:
    """Encoder input vectors (length x model_dim) for one source sequence."""
    strategy = Strategy(strategy)
    src = torch.tensor([model.ids(src_tokens)], dtype=torch.long)
    p = torch.tensor([pitch], dtype=model.pitch_proj.dtype)
    tags = None if strategy is Strategy.NONE else [tag] if tag is not None else None
    return model.encode_inputs(src, p, strategy, tags)[0]


def decoder_inputs(model: ToyModel, prefix_tokens: Sequence[str], strategy: Strategy,
                   tag: Gender | None = None) -> torch.Tensor:
    """Decoder input vectors for a target prefix; BOS is prepended here."""
    strategy = Strategy(strategy)
    prefix = torch.tensor([[model.index[BOS]] + model.ids(prefix_tokens)], dtype=torch.long)
    tags = None if strategy is Strategy.NONE else [tag] if tag is not None else None
    return model.decoder_inputs(prefix, strategy, tags)[0]


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(model: ToyModel, path, meta: dict | None = None) -> None:
    tensors = {name: {"shape": list(t.shape), "data": t.detach().double().flatten().tolist()}
               for name, t in model.state_dict().items()}
    payload = {"version": CHECKPOINT_VERSION, "config": asdict(model.cfg),
               "meta": meta or {}, "tensors": tensors}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> tuple[ToyModel, dict]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    model = ToyModel(ToyConfig(**payload["config"]))
    state = {}
    for name, spec in payload["tensors"].items():
        ref = model.state_dict()[name]
        state[name] = torch.tensor(spec["data"], dtype=ref.dtype).reshape(spec["shape"])
    model.load_state_dict(state)
    return model, payload["meta"]
