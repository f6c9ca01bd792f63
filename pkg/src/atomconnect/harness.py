"""Structural-token budget versus entity size.

Three tokenizations are compared at each node count N: adaptive patching
(one token per anchor), a fixed-K query connector, and one token per node.
Language-token counts come from the demo corpus so the structural share of
the whole input can be reported.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .corpus import demo_instruction_corpus
from .lmtoy import PLACEHOLDER, instruction_summary, tokenize
from .patcher import PatchConfig, run_patching, uniform_counts
from .structgraph import Atom, AtomGraph, batch_graphs, build_radius_graph

METHODS = ("adaptive", "fixed_k", "per_node")
CSV_HEADER = "node_count,method,structural_tokens,language_tokens,ratio"
DEFAULT_FIXED_K = 32


@dataclass
class BudgetRow:
    node_count: int
    method: str
    structural_tokens: int
    language_tokens: int

    @property
    def ratio(self) -> float:
        return self.structural_tokens / (self.structural_tokens + self.language_tokens)

    def csv(self) -> str:
        return f"{self.node_count},{self.method},{self.structural_tokens},{self.language_tokens},{self.ratio:.10f}"


@dataclass
class BudgetCurve:
    rows: list[BudgetRow] = field(default_factory=list)

    def tokens(self, method: str) -> dict[int, int]:
        return {r.node_count: r.structural_tokens for r in self.rows if r.method == method}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for r in self.rows:
            buf.write(r.csv() + "\n")
        return buf.getvalue()

    def check(self, config: PatchConfig, fixed_k: int) -> None:
        """Raise if any row breaks the budget invariants."""
        for r in self.rows:
            n = r.node_count
            if r.method == "per_node" and r.structural_tokens != n:
                raise AssertionError(f"per_node row for N={n} has {r.structural_tokens} tokens")
            if r.method == "fixed_k" and r.structural_tokens != fixed_k:
                raise AssertionError(f"fixed_k row for N={n} has {r.structural_tokens} tokens")
            if r.method == "adaptive" and not 1 <= r.structural_tokens <= min(config.k_max, n):
                raise AssertionError(f"adaptive row for N={n} has {r.structural_tokens} tokens")


def corpus_language_tokens(samples) -> int:
    """Mean words per sample (instruction without placeholder plus answer)."""
    counts = [len([t for t in tokenize(s.instruction) if t != PLACEHOLDER]) + len(tokenize(s.answer))
              for s in samples]
    return int(round(float(np.mean(counts))))


def synthetic_graph(n: int, seed: int = 0, density: float = 0.1, cutoff: float = 4.0) -> AtomGraph:
    """n carbon atoms placed uniformly in a cube of the given number density,
    connected within ``cutoff``. Only used to probe a trained gate at size n."""
    rng = np.random.default_rng([seed, n])
    side = (n / density) ** (1.0 / 3.0)
    coords = rng.uniform(0.0, side, size=(n, 3))
    return build_radius_graph(AtomGraph([Atom(element=6) for _ in range(n)], coords), cutoff)


def _trained_counts(sizes, model, instruction: str, graphs, seed: int) -> list[int]:
    ids = model.vocab.encode(instruction)
    z = instruction_summary(model.decoder, ids).data.reshape(1, -1)
    out = []
    for n in sizes:
        g = graphs.get(n) if graphs else None
        g = g if g is not None else synthetic_graph(n, seed)
        if g.num_atoms != n:
            raise ValueError(f"sample graph for N={n} has {g.num_atoms} atoms")
        b = batch_graphs([g])
        X = model.encoder(b).node_embeddings.data
        res = run_patching(z, X, b.coords, b.batch, model.gate, model.patch_config)
        out.append(int(res.counts.sum()))
    return out


def token_budget_curve(node_counts, gate_mode: str = "uniform", config: PatchConfig | None = None,
                       fixed_k: int = DEFAULT_FIXED_K, language_tokens: int | None = None,
                       model=None, graphs: dict | None = None,
                       instruction: str = "describe the structure <geo> .", seed: int = 0) -> BudgetCurve:
    """Rows in size order, methods in the order adaptive, fixed_k, per_node.

    ``uniform`` mode uses a constant gate, for which the anchor count depends
    on N alone, so no tokens are built. ``trained`` mode runs a model's
    encoder and gate on ``graphs[N]`` (or a synthetic graph of N atoms).
    """
    sizes = [int(n) for n in node_counts]
    if not sizes or min(sizes) < 1:
        raise ValueError("node counts must be positive")
    if fixed_k < 1:
        raise ValueError("fixed_k must be positive")
    if gate_mode == "uniform":
        config = config or PatchConfig()
        adaptive = uniform_counts(sizes, config).tolist()
    elif gate_mode == "trained":
        if model is None:
            raise ValueError("trained gate mode needs a checkpoint")
        config = model.patch_config
        adaptive = _trained_counts(sizes, model, instruction, graphs, seed)
    else:
        raise ValueError(f"unknown gate mode {gate_mode!r}")
    if language_tokens is None:
        language_tokens = corpus_language_tokens(demo_instruction_corpus())
    curve = BudgetCurve()
    for n, k in zip(sizes, adaptive):
        curve.rows += [BudgetRow(n, "adaptive", int(k), language_tokens),
                       BudgetRow(n, "fixed_k", fixed_k, language_tokens),
                       BudgetRow(n, "per_node", n, language_tokens)]
    curve.check(config, fixed_k)
    return curve
