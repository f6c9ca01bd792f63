"""E(3)-equivariant graph encoder with masked-structure pretraining heads.

Each layer passes invariant messages built from both endpoint features and an
RBF expansion of the current interatomic distance, updates node features with
a residual MLP, and moves coordinates along relative position vectors scaled by
an invariant scalar. Node features never see raw coordinates, only distances,
so they are unchanged by rotations and translations.
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .numcore import (
    DiffArray,
    asdiff,
    concat,
    constant,
    cos,
    cross_entropy_rows,
    exp,
    segment_sum,
    sqrt,
    take_rows,
)
from .numcore.nn import MLP, Embedding, LayerNorm, Linear, Module
from .numcore.tensor import abs_
from .structgraph import vocab
from .structgraph.graph import BatchedGraph

NUM_ELEMENT_CLASSES = vocab.NUM_ELEMENTS + 1  # atomic numbers 0..118
_DIST_EPS = 1e-12


@dataclass
class EncoderConfig:
    hidden_size: int = 256
    depth: int = 8
    rbf_count: int = 32
    rbf_cutoff: float = 10.0
    dropout: float = 0.1
    coord_updates: bool = True
    use_layernorm: bool = True
    lambda_dist: float = 1.0
    lambda_dir: float = 1.0
    mask_fraction: float = 0.15
    direction_noise_sigma: float = 0.1
    region_size: int = 8

    def __post_init__(self):
        if min(self.hidden_size, self.depth, self.rbf_count) <= 0:
            raise ValueError("hidden_size, depth and rbf_count must be positive")
        if self.rbf_cutoff <= 0:
            raise ValueError("rbf_cutoff must be positive")
        if not 0.0 <= self.mask_fraction < 1.0:
            raise ValueError("mask_fraction must lie in [0, 1)")

    @classmethod
    def desk(cls, **overrides) -> "EncoderConfig":
        """Small configuration that trains in seconds on one core."""
        base = dict(hidden_size=32, depth=3, dropout=0.0)
        base.update(overrides)
        return cls(**base)


def rbf_expand(distance, config: EncoderConfig):
    """Gaussian bases on a uniform grid over [0, cutoff] times a cosine envelope.

    Accepts a float, an array, or a DiffArray; returns the same kind with a
    trailing axis of length ``rbf_count``.
    """
    differentiable = isinstance(distance, DiffArray)
    d = asdiff(distance)
    if (d.data < 0).any():
        raise ValueError("distance must be non-negative")
    c, n = config.rbf_cutoff, config.rbf_count
    centers = np.linspace(0.0, c, n)
    spacing = c / max(n - 1, 1)
    gamma = 1.0 / (spacing * spacing)
    d_col = d.reshape(d.shape + (1,))
    diff = d_col - centers
    basis = exp(diff * diff * (-gamma))
    inside = (d_col.data < c).astype(np.float64)
    envelope = (cos(d_col * (math.pi / c)) + 1.0) * (0.5 * inside)
    out = basis * envelope
    return out if differentiable else out.data


class EGNNLayer(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        d = cfg.hidden_size
        self.message = MLP(2 * d + cfg.rbf_count, d, d, rng, dropout=cfg.dropout)
        self.update = MLP(2 * d, d, d, rng, dropout=cfg.dropout)
        self.norm = LayerNorm(d) if cfg.use_layernorm else None
        self.coord = MLP(d, d, 1, rng, out_scale=0.1) if cfg.coord_updates else None


class Encoder(Module):
    """Parameters of the encoder trunk and its three pretraining heads."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        d = config.hidden_size
        self._config = config
        self.element_embed = Embedding(vocab.ELEMENT_MASK_ID + 1, d, rng)
        self.name_embed = Embedding(vocab.ATOM_NAME_MASK_ID + 1, d, rng)
        self.residue_embed = Embedding(len(vocab.RESIDUES), d, rng)
        self.flag_proj = Linear(2, d, rng)
        self.layers = [EGNNLayer(config, rng) for _ in range(config.depth)]
        self.type_head = MLP(d, d, NUM_ELEMENT_CLASSES, rng)
        self.dist_head = MLP(2 * d, d, 1, rng)
        self.dir_head = MLP(2 * d, d, 2, rng)

    @property
    def config(self) -> EncoderConfig:
        return self._config

    def __call__(self, batch: BatchedGraph, targets: "MaskTargets | None" = None,
                 rng: np.random.Generator | None = None) -> "EncoderOutput":
        return egnn_forward(batch, self._config, self, targets=targets, rng=rng)


@dataclass
class EncoderOutput:
    node_embeddings: DiffArray
    coords: DiffArray
    element_logits: DiffArray | None = None
    dist_pred: DiffArray | None = None
    dir_pred: DiffArray | None = None


@dataclass
class MaskTargets:
    """What was hidden by ``mask_regions`` and what the heads must recover."""

    atoms: np.ndarray  # masked atom indices, sorted
    elements: np.ndarray  # true atomic numbers of masked atoms
    edges: np.ndarray  # (E_M, 2) pairs with at least one masked endpoint
    distances: np.ndarray  # true d_ij on those pairs
    noisy_dirs: np.ndarray  # unit(r_i - r_j) + noise
    noise: np.ndarray  # the added noise: direction-head target


def _pair_vectors(x: DiffArray, src: np.ndarray, dst: np.ndarray):
    rel = take_rows(x, src) - take_rows(x, dst)
    sq = (rel * rel).sum(axis=-1)
    return rel, sqrt(sq + _DIST_EPS)


def egnn_forward(batch: BatchedGraph, config: EncoderConfig, params: Encoder,
                 targets: MaskTargets | None = None,
                 rng: np.random.Generator | None = None,
                 coords: DiffArray | None = None) -> EncoderOutput:
    """Run the trunk; when ``targets`` is given also evaluate the heads on the
    masked atoms and their incident pairs. ``rng`` enables dropout."""
    n = batch.num_atoms
    flags = batch.flags.astype(np.float64)
    h = (params.element_embed(batch.elements) + params.name_embed(batch.atom_name_ids)
         + params.residue_embed(batch.residue_ids) + params.flag_proj(constant(flags)))
    x = coords if coords is not None else constant(batch.coords)

    e = batch.edges.reshape(-1, 2)
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])
    degree = np.bincount(src, minlength=n).astype(np.float64)
    inv_degree = (1.0 / np.maximum(degree, 1.0))[:, None]
    self_rbf = constant(np.broadcast_to(rbf_expand(0.0, config), (n, config.rbf_count)))

    for k, layer in enumerate(params.layers):
        parts = [h, h, self_rbf]
        if len(src):
            rel, dist = _pair_vectors(x, src, dst)
            edge_in = concat([take_rows(h, src), take_rows(h, dst), rbf_expand(dist, config)], axis=1)
            msg_all = layer.message(concat([concat(parts, axis=1), edge_in], axis=0), rng)
            self_msg, msg = msg_all[:n], msg_all[n:]
            agg = self_msg + segment_sum(msg, src, n)
        else:
            agg = layer.message(concat(parts, axis=1), rng)
        h = h + layer.update(concat([h, agg], axis=1), rng)
        if layer.norm is not None:
            h = layer.norm(h)
        if layer.coord is not None and len(src):
            scale = layer.coord(msg) / (dist.reshape(-1, 1) + 1.0)
            x = x + segment_sum(rel * scale, src, n) * inv_degree
        if not (np.isfinite(h.data).all() and np.isfinite(x.data).all()):
            raise FloatingPointError(f"non-finite values in encoder layer {k}")

    out = EncoderOutput(node_embeddings=h, coords=x)
    if targets is not None:
        _apply_heads(out, params, targets)
    return out


def _apply_heads(out: EncoderOutput, params: Encoder, t: MaskTargets) -> None:
    h, x = out.node_embeddings, out.coords
    out.element_logits = params.type_head(take_rows(h, t.atoms))
    if len(t.edges) == 0:
        out.dist_pred = constant(np.zeros(0))
        out.dir_pred = constant(np.zeros((0, 3)))
        return
    i, j = t.edges[:, 0], t.edges[:, 1]
    hi, hj = take_rows(h, i), take_rows(h, j)
    pair = concat([hi + hj, hi * hj], axis=1)
    out.dist_pred = params.dist_head(pair).reshape(-1)
    # equivariant: a combination of the two available vectors with invariant weights
    coef = params.dir_head(pair)
    rel, dist = _pair_vectors(x, i, j)
    unit_now = rel / dist.reshape(-1, 1)
    out.dir_pred = coef[:, 0:1] * t.noisy_dirs + coef[:, 1:2] * unit_now


def _adjacency(batch: BatchedGraph) -> list[list[int]]:
    n = batch.num_atoms
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in batch.edges.reshape(-1, 2):
        adj[i].append(int(j))
        adj[j].append(int(i))
    x = batch.coords
    for i in range(n):
        adj[i].sort(key=lambda j: (float(np.sum((x[i] - x[j]) ** 2)), j))
    return adj


def mask_regions(batch: BatchedGraph, mask_fraction: float, seed: int,
                 noise_sigma: float = 0.1, region_size: int = 8):
    """Hide ceil(fraction * N_g) atoms per graph in BFS-grown regions.

    Regions start at random unmasked atoms and grow outward over nearest
    neighbors first; each region holds at most ``region_size`` atoms and growth
    stops exactly at the per-graph target. Masked atoms get the reserved MASK
    element id and MASK atom-name id (the name alone would give the element
    away). Returns ``(masked_batch, targets)``.
    """
    if not 0.0 < mask_fraction < 1.0:
        raise ValueError("mask_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    adj = _adjacency(batch)
    chosen = np.zeros(batch.num_atoms, dtype=bool)
    for g in range(batch.num_graphs):
        nodes = batch.node_indices(g)
        target = math.ceil(mask_fraction * len(nodes))
        count = 0
        while count < target:
            free = nodes[~chosen[nodes]]
            start = int(free[rng.integers(len(free))])
            queue, region = deque([start]), 0
            chosen[start] = True
            count += 1
            region += 1
            while queue and count < target and region < region_size:
                u = queue.popleft()
                for v in adj[u]:
                    if count >= target or region >= region_size:
                        break
                    if not chosen[v]:
                        chosen[v] = True
                        count += 1
                        region += 1
                        queue.append(v)
    atoms = np.flatnonzero(chosen)
    e = batch.edges.reshape(-1, 2)
    edge_sel = chosen[e[:, 0]] | chosen[e[:, 1]] if len(e) else np.zeros(0, dtype=bool)
    pairs = e[edge_sel]
    rel = batch.coords[pairs[:, 0]] - batch.coords[pairs[:, 1]]
    dist = np.linalg.norm(rel, axis=1)
    unit = rel / dist[:, None] if len(pairs) else np.zeros((0, 3))
    noise = rng.normal(0.0, noise_sigma, size=unit.shape)
    elements = batch.elements.copy()
    names = batch.atom_name_ids.copy()
    elements[atoms] = vocab.ELEMENT_MASK_ID
    names[atoms] = vocab.ATOM_NAME_MASK_ID
    masked = dataclasses.replace(batch, elements=elements, atom_name_ids=names)
    targets = MaskTargets(atoms=atoms, elements=batch.elements[atoms].copy(), edges=pairs,
                          distances=dist, noisy_dirs=unit + noise, noise=noise)
    return masked, targets


def pretrain_losses(output: EncoderOutput, targets: MaskTargets,
                    lambda_dist: float = 1.0, lambda_dir: float = 1.0) -> dict[str, DiffArray]:
    """Sum-reduced masked objectives: element cross-entropy, L1 distance error,
    squared direction-noise error, and their weighted total."""
    if len(targets.atoms) == 0:
        raise ValueError("no masked atoms")
    l_type = cross_entropy_rows(output.element_logits, targets.elements).sum()
    l_dist = abs_(output.dist_pred - targets.distances).sum()
    err = output.dir_pred - targets.noise
    l_dir = (err * err).sum()
    total = l_type + l_dist * lambda_dist + l_dir * lambda_dir
    return {"L_type": l_type, "L_dist": l_dist, "L_dir": l_dir, "L_enc": total}


def masked_accuracy(output: EncoderOutput, targets: MaskTargets) -> float:
    pred = output.element_logits.data.argmax(axis=1)
    return float((pred == targets.elements).mean())
