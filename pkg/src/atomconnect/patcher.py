"""Instruction-conditioned adaptive patching of atom graphs.

A gate scores every atom given the instruction summary of its graph. The
highest-probability atoms become anchors until their softmax mass reaches
``rho``; every atom is then softly assigned to the anchors by squared distance
plus anchor logit, and each anchor pools its members into one token.

Only the anchor choice is discrete. Everything downstream of it is smooth, so
gradients are exact for a fixed anchor set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numcore import DiffArray, asdiff, concat, pad_rows, softmax, stack, take_rows, transpose
from .numcore.nn import MLP, Module

SELECTION_TOL = 1e-12


@dataclass
class PatchConfig:
    rho: float = 0.1
    k_max: int = 2048
    distance_scale: float = 1.0
    temperature: float = 0.1
    pooling_eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.distance_scale <= 0 or self.temperature <= 0 or self.pooling_eps <= 0:
            raise ValueError("distance_scale, temperature and pooling_eps must be positive")


class AnchorGate(Module):
    """Pointwise MLP on [X_i ; z_{b_i}] giving one anchor logit per atom."""

    def __init__(self, d_enc: int, d_text: int, rng: np.random.Generator,
                 hidden: int = 256, dropout: float = 0.1, zero_init: bool = False):
        self.mlp = MLP(d_enc + d_text, hidden, 1, rng, dropout=dropout)
        self._widths = (d_enc, d_text)
        if zero_init:
            self.mlp.fc2.weight.data[...] = 0.0

    def __call__(self, features: DiffArray, rng: np.random.Generator | None = None) -> DiffArray:
        return self.mlp(features, rng).reshape(-1)


@dataclass
class PatchResult:
    tokens: DiffArray  # (G, K, D)
    mask: np.ndarray  # (G, K) bool
    anchors: np.ndarray  # (G, K) local node index, -1 where invalid
    counts: np.ndarray  # (G,)
    membership: list[DiffArray] = field(default_factory=list)  # per graph (N_g, k_g)
    masses: list[np.ndarray] = field(default_factory=list)  # per graph m_a (with eps)
    logits: DiffArray | None = None

    @property
    def max_tokens(self) -> int:
        return int(self.mask.shape[1])

    def selection(self) -> tuple:
        """Hashable snapshot of every discrete choice (for gradient checks)."""
        return tuple(tuple(int(a) for a in row[row >= 0]) for row in self.anchors)

    def report(self) -> dict:
        return {
            "k_g": self.counts.tolist(),
            "anchors": [row[row >= 0].tolist() for row in self.anchors],
            "membership_row_sums": [w.data.sum(axis=1).tolist() for w in self.membership],
            "token_norms": [np.linalg.norm(self.tokens.data[g, : self.counts[g]], axis=1).tolist()
                            for g in range(len(self.counts))],
        }


def gate_logits(z, X, batch_index, gate: AnchorGate,
                rng: np.random.Generator | None = None) -> DiffArray:
    """ℓ_i = gate([X_i ; z_{b_i}]). ``rng`` switches dropout on."""
    b = np.asarray(batch_index, dtype=np.int64)
    z = asdiff(z)
    if len(b) and (b.min() < 0 or b.max() >= z.shape[0]):
        raise ValueError(f"batch index refers to missing graph (have {z.shape[0]} instruction rows)")
    return gate(concat([asdiff(X), take_rows(z, b)], axis=1), rng)


def select_anchors(logits, rho: float, k_max: int) -> np.ndarray:
    """Smallest prefix of atoms (sorted by probability, ties to lower index)
    whose softmax mass reaches ``rho``, capped at ``k_max``."""
    l = np.asarray(logits.data if isinstance(logits, DiffArray) else logits, dtype=np.float64)
    if l.size == 0:
        raise ValueError("cannot select anchors from an empty graph")
    p = np.exp(l - l.max())
    p /= p.sum()
    order = np.argsort(-p, kind="stable")
    mass = np.cumsum(p[order])
    # tolerance absorbs rounding in the running sum (uniform p gives exactly ceil(rho*N))
    hits = np.flatnonzero(mass >= rho - SELECTION_TOL)
    k = int(hits[0]) + 1 if len(hits) else len(l)
    return order[: min(k, k_max)]


def soft_assign(coords, anchors: np.ndarray, logits, config: PatchConfig) -> DiffArray:
    """W[i, a] = softmax_a((-s_d * |P_i - P_a|^2 + ℓ_a) / τ)."""
    P = asdiff(coords)
    n = P.shape[0]
    k = len(anchors)
    pa = take_rows(P, anchors)
    diff = P.reshape(n, 1, 3) - pa.reshape(1, k, 3)
    sq = (diff * diff).sum(axis=-1)
    bias = take_rows(asdiff(logits), anchors).reshape(1, k)
    return softmax(sq * (-config.distance_scale) + bias, axis=1, temperature=config.temperature)


def pool_patches(W: DiffArray, X, eps: float = 1e-8) -> tuple[DiffArray, DiffArray]:
    """t_a = sum_i W[i, a] X_i / (sum_i W[i, a] + eps). Returns (tokens, masses)."""
    W = asdiff(W)
    X = asdiff(X)
    if W.shape[0] != X.shape[0]:
        raise ValueError(f"membership has {W.shape[0]} rows but X has {X.shape[0]}")
    mass = W.sum(axis=0) + eps
    return transpose(W / mass) @ X, mass


def patch_from_logits(logits, X, coords, batch_index, config: PatchConfig,
                      num_graphs: int | None = None) -> PatchResult:
    """Selection, assignment and pooling for every graph given precomputed logits."""
    b = np.asarray(batch_index, dtype=np.int64)
    logits, X, P = asdiff(logits), asdiff(X), asdiff(coords)
    G = int(num_graphs if num_graphs is not None else (b.max() + 1 if len(b) else 0))
    per_graph = []
    for g in range(G):
        idx = np.flatnonzero(b == g)
        if len(idx) == 0:
            raise ValueError(f"graph {g} has no atoms")
        lg = take_rows(logits, idx)
        anchors = select_anchors(lg, config.rho, config.k_max)
        W = soft_assign(take_rows(P, idx), anchors, lg, config)
        tokens, mass = pool_patches(W, take_rows(X, idx), config.pooling_eps)
        per_graph.append((anchors, W, tokens, mass))

    K = max(len(a) for a, *_ in per_graph)
    counts = np.array([len(a) for a, *_ in per_graph], dtype=np.int64)
    mask = np.arange(K)[None, :] < counts[:, None]
    anchors = np.full((G, K), -1, dtype=np.int64)
    for g, (a, *_) in enumerate(per_graph):
        anchors[g, : len(a)] = a
    tokens = stack([pad_rows(t, K) for _, _, t, _ in per_graph], axis=0)
    return PatchResult(tokens=tokens, mask=mask, anchors=anchors, counts=counts,
                       membership=[w for _, w, _, _ in per_graph],
                       masses=[m.data for *_, m in per_graph], logits=logits)


def run_patching(z, X, coords, batch_index, gate: AnchorGate, config: PatchConfig,
                 rng: np.random.Generator | None = None) -> PatchResult:
    """Gate, select, assign and pool for a whole batch.

    Output slots beyond a graph's own count are zero tokens with mask False
    and anchor -1.
    """
    logits = gate_logits(z, X, batch_index, gate, rng)
    return patch_from_logits(logits, X, coords, batch_index, config, num_graphs=asdiff(z).shape[0])


def uniform_counts(sizes, config: PatchConfig) -> np.ndarray:
    """Anchor counts under a constant gate, without building any tokens."""
    return np.array([len(select_anchors(np.zeros(int(n)), config.rho, config.k_max)) for n in sizes],
                    dtype=np.int64)
