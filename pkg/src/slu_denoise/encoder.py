"""Reference sequence model: embeddings, 3-token window encoder, two softmax heads.

Architecture, for token ids x_1..x_L:

    e_i = embeddings[x_i]
    c_i = [e_{i-1}; e_i; e_{i+1}]          (zero padding at the boundaries)
    h_i = tanh(W_h c_i + b_h)
    h_0 = mean_i h_i                        (pooled sentence state)
    intent distribution  = softmax(W_I h_0 + b_I)
    slot distribution i  = softmax(W_S h_i + b_S)

Everything is float64 and the backward pass is exact, so gradients can be
checked against central finite differences. forward/backward are pure given
the parameters; only the optimizer mutates them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data_model import Corpus, LabelSchema

UNK_TOKEN = "<unk>"
UNK_ID = 0

_CHECKPOINT_MAGIC = b"SLUTEN01"


@dataclass(frozen=True)
class Vocab:
    """Token-to-id map with a reserved id 0 for unknown tokens."""

    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens or self.tokens[0] != UNK_TOKEN:
            raise ValueError(f"vocabulary must start with {UNK_TOKEN!r}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate vocabulary tokens")

    @cached_property
    def _ids(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, words: Sequence[str]) -> np.ndarray:
        """Ids for a token sequence; unseen tokens map to the UNK id."""
        return np.array([self._ids.get(w, UNK_ID) for w in words], dtype=np.int64)


def build_vocab(corpora: Iterable[Corpus]) -> Vocab:
    """Sorted vocabulary over all tokens appearing in the given corpora."""
    seen: set[str] = set()
    for corpus in corpora:
        for inst in corpus:
            seen.update(inst.tokens)
    seen.discard(UNK_TOKEN)
    return Vocab(tokens=(UNK_TOKEN, *sorted(seen)))


@dataclass
class ModelParams:
    """All trainable tensors. Mutated in place only by the optimizer."""

    embeddings: np.ndarray  # (V, d)
    w_hidden: np.ndarray    # (d, 3d)
    b_hidden: np.ndarray    # (d,)
    w_intent: np.ndarray    # (n_intents, d)
    b_intent: np.ndarray    # (n_intents,)
    w_slot: np.ndarray      # (n_slot_tags, d)
    b_slot: np.ndarray      # (n_slot_tags,)

    @property
    def vocab_size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        """Named tensors in a fixed order (shared with Gradients and Adam state)."""
        return {
            "embeddings": self.embeddings,
            "w_hidden": self.w_hidden,
            "b_hidden": self.b_hidden,
            "w_intent": self.w_intent,
            "b_intent": self.b_intent,
            "w_slot": self.w_slot,
            "b_slot": self.b_slot,
        }

    def copy(self) -> ModelParams:
        return ModelParams(**{k: v.copy() for k, v in self.tensors().items()})

    def same_shapes(self, other: ModelParams) -> bool:
        return all(
            a.shape == b.shape for a, b in zip(self.tensors().values(), other.tensors().values())
        )


# Gradients mirror the parameter tensors exactly.
Gradients = ModelParams


def zero_gradients(params: ModelParams) -> Gradients:
    return ModelParams(**{k: np.zeros_like(v) for k, v in params.tensors().items()})


def init_params(vocab_size: int, dim: int, schema: LabelSchema, seed) -> ModelParams:
    """Uniform [-0.1, 0.1] initialization, deterministic per seed."""
    if vocab_size < 1:
        raise ValueError("vocab_size must be >= 1")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)

    def u(*shape: int) -> np.ndarray:
        return rng.uniform(-0.1, 0.1, size=shape)

    return ModelParams(
        embeddings=u(vocab_size, dim),
        w_hidden=u(dim, 3 * dim),
        b_hidden=u(dim),
        w_intent=u(schema.n_intents, dim),
        b_intent=u(schema.n_intents),
        w_slot=u(schema.n_slot_tags, dim),
        b_slot=u(schema.n_slot_tags),
    )


@dataclass(frozen=True)
class ForwardCache:
    """Activations backward() needs; kept alongside the prediction."""

    token_ids: np.ndarray
    context: np.ndarray  # (L, 3d)
    hidden: np.ndarray   # (L, d)
    pooled: np.ndarray   # (d,)


@dataclass(frozen=True)
class Prediction:
    """Output distributions, plus the forward cache when produced by one model."""

    intent_dist: np.ndarray
    slot_dists: np.ndarray  # (L, n_slot_tags)
    cache: ForwardCache | None = None


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: ModelParams, token_ids: Sequence[int] | np.ndarray) -> Prediction:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size < 1:
        raise ValueError("token_ids must be a non-empty 1-D sequence")
    if ids.min() < 0 or ids.max() >= params.vocab_size:
        raise ValueError(f"token id out of range [0, {params.vocab_size})")

    emb = params.embeddings[ids]  # (L, d)
    length, dim = emb.shape
    context = np.zeros((length, 3 * dim))
    context[1:, :dim] = emb[:-1]
    context[:, dim : 2 * dim] = emb
    context[:-1, 2 * dim :] = emb[1:]

    hidden = np.tanh(context @ params.w_hidden.T + params.b_hidden)
    pooled = hidden.mean(axis=0)

    intent_dist = softmax(params.w_intent @ pooled + params.b_intent)
    slot_dists = softmax(hidden @ params.w_slot.T + params.b_slot)
    cache = ForwardCache(token_ids=ids, context=context, hidden=hidden, pooled=pooled)
    return Prediction(intent_dist=intent_dist, slot_dists=slot_dists, cache=cache)


def _softmax_vjp(p: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. logits given gradient w.r.t. softmax output (rows)."""
    inner = (p * upstream).sum(axis=-1, keepdims=True)
    return p * (upstream - inner)


def backward(
    params: ModelParams,
    token_ids: Sequence[int] | np.ndarray,
    prediction: Prediction,
    d_intent_dist: np.ndarray,
    d_slot_dists: np.ndarray,
) -> Gradients:
    """Exact gradients of a scalar loss given its gradients w.r.t. the output
    distributions. Parameters untouched by the input (e.g. embedding rows of
    absent tokens) get exactly zero gradient."""
    cache = prediction.cache
    if cache is None:
        raise ValueError("prediction carries no forward cache")
    ids = np.asarray(token_ids, dtype=np.int64)
    if not np.array_equal(ids, cache.token_ids):
        raise ValueError("token_ids do not match the cached forward pass")
    length, dim = cache.hidden.shape

    dz_intent = _softmax_vjp(prediction.intent_dist, np.asarray(d_intent_dist))
    dz_slots = _softmax_vjp(prediction.slot_dists, np.asarray(d_slot_dists))

    g_w_intent = np.outer(dz_intent, cache.pooled)
    g_b_intent = dz_intent.copy()
    d_pooled = params.w_intent.T @ dz_intent

    g_w_slot = dz_slots.T @ cache.hidden
    g_b_slot = dz_slots.sum(axis=0)
    d_hidden = dz_slots @ params.w_slot

    d_hidden = d_hidden + d_pooled / length  # pooled state is the token mean

    d_pre = (1.0 - cache.hidden**2) * d_hidden
    g_w_hidden = d_pre.T @ cache.context
    g_b_hidden = d_pre.sum(axis=0)
    d_context = d_pre @ params.w_hidden  # (L, 3d)

    d_emb = d_context[:, dim : 2 * dim].copy()
    d_emb[:-1] += d_context[1:, :dim]        # position i feeds c_{i+1}'s left block
    d_emb[1:] += d_context[:-1, 2 * dim :]   # position i feeds c_{i-1}'s right block

    g_embeddings = np.zeros_like(params.embeddings)
    np.add.at(g_embeddings, ids, d_emb)

    return ModelParams(
        embeddings=g_embeddings,
        w_hidden=g_w_hidden,
        b_hidden=g_b_hidden,
        w_intent=g_w_intent,
        b_intent=g_b_intent,
        w_slot=g_w_slot,
        b_slot=g_b_slot,
    )


def ensemble_predict(models: Sequence[ModelParams], token_ids: Sequence[int] | np.ndarray) -> Prediction:
    """Arithmetic mean of the member models' output distributions."""
    if not models:
        raise ValueError("need at least one model")
    first = models[0]
    for m in models[1:]:
        if not m.same_shapes(first):
            raise ValueError("ensemble members have mismatched shapes")
    preds = [forward(m, token_ids) for m in models]
    intent = np.mean([p.intent_dist for p in preds], axis=0)
    slots = np.mean([p.slot_dists for p in preds], axis=0)
    return Prediction(intent_dist=intent, slot_dists=slots, cache=None)


# ---------------------------------------------------------------------------
# Tensor dump format: magic, 8-byte little-endian header length, JSON header
# (tensor names/shapes/dtypes plus optional metadata), then the raw buffers in
# header order. Byte-for-byte deterministic and exact for float64.
# ---------------------------------------------------------------------------


def save_tensors(tensors: dict[str, np.ndarray], path: str | Path, meta: dict | None = None) -> None:
    entries = [
        {"name": k, "shape": list(v.shape), "dtype": np.dtype(v.dtype).str}
        for k, v in tensors.items()
    ]
    header = json.dumps({"version": 1, "tensors": entries, "meta": meta or {}}, sort_keys=True)
    blob = header.encode("utf-8")
    with Path(path).open("wb") as f:
        f.write(_CHECKPOINT_MAGIC)
        f.write(len(blob).to_bytes(8, "little"))
        f.write(blob)
        for v in tensors.values():
            f.write(np.ascontiguousarray(v).tobytes())


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with Path(path).open("rb") as f:
        magic = f.read(len(_CHECKPOINT_MAGIC))
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a tensor dump (bad magic)")
        header_len = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(header_len).decode("utf-8"))
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(count * dtype.itemsize)
            tensors[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return tensors, header.get("meta", {})


def save_params(params: ModelParams, path: str | Path, meta: dict | None = None) -> None:
    save_tensors(params.tensors(), path, meta=meta)


def load_params(path: str | Path) -> ModelParams:
    tensors, _ = load_tensors(path)
    return ModelParams(**tensors)
