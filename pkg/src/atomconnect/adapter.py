"""Patch-token refinement by cross-attention and splicing into a text sequence.

Patch tokens act as queries. Each block lets them attend to one another,
then to every node embedding of their own graph, then passes them through a
feed-forward layer (pre-norm residual throughout). The refined tokens are
projected to the language-model width and replace the placeholder token of
the sequence that mentions the graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .numcore import DiffArray, asdiff, concat, constant, take_rows
from .numcore.nn import MLP, LayerNorm, Linear, Module, MultiHeadAttention
from .patcher import PatchResult

IGNORE_INDEX = -100


@dataclass
class FusionConfig:
    d_enc: int
    d_llm: int
    d_model: int = 64
    heads: int = 4
    blocks: int = 2
    ffn_hidden: int = 0  # 0 means 4 * d_model
    dropout: float = 0.0

    def __post_init__(self):
        if self.blocks < 1:
            raise ValueError("fusion stack needs at least one block")
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")


class FusionBlock(Module):
    def __init__(self, cfg: FusionConfig, rng: np.random.Generator):
        d = cfg.d_model
        self.self_norm = LayerNorm(d)
        self.self_attn = MultiHeadAttention(d, cfg.heads, rng)
        self.cross_norm = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(d, cfg.heads, rng)
        self.ffn_norm = LayerNorm(d)
        self.ffn = MLP(d, cfg.ffn_hidden or 4 * d, d, rng, dropout=cfg.dropout, activation="gelu")

    def __call__(self, q: DiffArray, nodes: DiffArray, patch_mask, node_mask,
                 rng: np.random.Generator | None = None) -> DiffArray:
        h = self.self_norm(q)
        q = q + self.self_attn(h, h, patch_mask)
        q = q + self.cross_attn(self.cross_norm(q), nodes, node_mask)
        return q + self.ffn(self.ffn_norm(q), rng)


class FusionStack(Module):
    def __init__(self, cfg: FusionConfig, rng: np.random.Generator):
        self._config = cfg
        self.patch_norm = LayerNorm(cfg.d_enc)
        self.patch_proj = Linear(cfg.d_enc, cfg.d_model, rng)
        self.node_norm = LayerNorm(cfg.d_enc)
        self.node_proj = Linear(cfg.d_enc, cfg.d_model, rng)
        self.blocks = [FusionBlock(cfg, rng) for _ in range(cfg.blocks)]
        self.out_proj = Linear(cfg.d_model, cfg.d_llm, rng)
        self.out_norm = LayerNorm(cfg.d_llm)

    @property
    def config(self) -> FusionConfig:
        return self._config

    def attention_weights(self) -> list[np.ndarray]:
        """Weights from the most recent call, self then cross per block."""
        out = []
        for blk in self.blocks:
            out += [blk.self_attn._weights, blk.cross_attn._weights]
        return [w for w in out if w is not None]


def _padded_nodes(X: DiffArray, batch_index: np.ndarray, num_graphs: int):
    """Scatter flat node rows into a (G, N_max, D) block plus its validity mask."""
    sizes = np.bincount(batch_index, minlength=num_graphs)
    n_max = int(sizes.max())
    n = X.shape[0]
    index = np.full((num_graphs, n_max), n, dtype=np.int64)  # row n is the zero pad row
    mask = np.zeros((num_graphs, n_max), dtype=bool)
    for g in range(num_graphs):
        rows = np.flatnonzero(batch_index == g)
        index[g, : len(rows)] = rows
        mask[g, : len(rows)] = True
    padded = concat([X, constant(np.zeros((1, X.shape[1])))], axis=0)
    return take_rows(padded, index.reshape(-1)).reshape(num_graphs, n_max, X.shape[1]), mask


def retrieve_geometry(patch: PatchResult, X, batch_index, stack: FusionStack,
                      rng: np.random.Generator | None = None) -> DiffArray:
    """Refine patch tokens against their graph's nodes; returns (G, K, D_llm)
    with zero rows at invalid slots. ``rng`` switches dropout on."""
    X = asdiff(X)
    b = np.asarray(batch_index, dtype=np.int64)
    G, K = patch.mask.shape
    empty = np.flatnonzero(~patch.mask.any(axis=1))
    if len(empty):
        raise ValueError(f"empty patch set for graph {int(empty[0])}")
    nodes, node_mask = _padded_nodes(X, b, G)
    if not node_mask.any(axis=1).all():
        raise ValueError("a graph with patches has no nodes")
    kv = stack.node_proj(stack.node_norm(nodes))
    q = stack.patch_proj(stack.patch_norm(patch.tokens))
    for blk in stack.blocks:
        q = blk(q, kv, patch.mask, node_mask, rng)
    out = stack.out_norm(stack.out_proj(q))
    return out * patch.mask[:, :, None].astype(np.float64)


@dataclass
class ModalitySequence:
    embeddings: DiffArray  # (L, D)
    attention_mask: np.ndarray  # (L,) bool
    labels: np.ndarray  # (L,) int, IGNORE_INDEX where unsupervised
    token_ids: np.ndarray  # (L,) int, -1 on injected geometry rows
    injections: list[tuple[int, int]] = field(default_factory=list)  # (position, count) in output coords

    def __post_init__(self):
        n = self.embeddings.shape[0]
        if not (len(self.attention_mask) == len(self.labels) == len(self.token_ids) == n):
            raise ValueError("mask, labels and ids must match the embedding length")

    def __len__(self) -> int:
        return self.embeddings.shape[0]

    def placeholders(self, y_ins: int) -> np.ndarray:
        return find_placeholders(self.token_ids, y_ins)


def find_placeholders(token_ids, y_ins: int) -> np.ndarray:
    return np.flatnonzero(np.asarray(token_ids) == y_ins)


def inject_tokens(seq: ModalitySequence, geometry: DiffArray, mask: np.ndarray, y_ins: int,
                  assignment=None) -> ModalitySequence:
    """Replace each placeholder with the valid geometry rows of its graph.

    ``assignment[j]`` names the graph (row of ``geometry``) that fills the
    j-th placeholder; by default placeholder j takes graph j.
    """
    pos = seq.placeholders(y_ins)
    graphs = list(range(geometry.shape[0])) if assignment is None else list(assignment)
    if len(pos) != len(graphs):
        raise ValueError(f"placeholder/graph count mismatch: {len(pos)} placeholders, {len(graphs)} graphs")
    pieces, masks, labels, ids, injections = [], [], [], [], []
    start, shift = 0, 0
    for p, g in zip(pos, graphs):
        k = int(mask[g].sum())
        if k == 0:
            raise ValueError(f"empty patch set for graph {g}")
        if p > start:
            pieces.append(seq.embeddings[start:p])
        valid = np.flatnonzero(mask[g])
        pieces.append(take_rows(geometry[g], valid))
        injections.append((int(p) + shift, k))
        shift += k - 1
        start = p + 1
    if start < len(seq):
        pieces.append(seq.embeddings[start:])
    if not injections:
        return replace(seq, injections=list(seq.injections))

    for a, b, k in _spans(pos, [c for _, c in injections], len(seq)):
        masks.append(seq.attention_mask[a:b])
        labels.append(seq.labels[a:b])
        ids.append(seq.token_ids[a:b])
        if k:
            masks.append(np.ones(k, dtype=bool))
            labels.append(np.full(k, IGNORE_INDEX, dtype=np.int64))
            ids.append(np.full(k, -1, dtype=np.int64))
    return ModalitySequence(
        embeddings=concat(pieces, axis=0),
        attention_mask=np.concatenate(masks),
        labels=np.concatenate(labels),
        token_ids=np.concatenate(ids),
        injections=list(seq.injections) + injections,
    )


def _spans(positions, counts, length):
    """(start, stop, inserted_count) text spans around each placeholder."""
    start = 0
    for p, k in zip(positions, counts):
        yield start, int(p), k
        start = int(p) + 1
    yield start, length, 0


def original_index_map(new_length: int, injections: list[tuple[int, int]]) -> np.ndarray:
    """For each output position, the index of the original token it came from,
    or -1 for injected rows. Rebuilt from the (position, count) record alone."""
    out = np.empty(new_length, dtype=np.int64)
    src, cursor = 0, 0
    for pos, count in sorted(injections):
        span = pos - cursor
        out[cursor:pos] = np.arange(src, src + span)
        src += span + 1  # skip the consumed placeholder
        out[pos: pos + count] = -1
        cursor = pos + count
    out[cursor:] = np.arange(src, src + new_length - cursor)
    return out
