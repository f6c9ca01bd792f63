"""A small causal decoder, its word vocabulary, and masked reasoning targets.

Targets take the form ``<think> filler </think> answer``: the filler comes from
a fixed pool of neutral templates and only answer tokens are supervised, so
the loss never depends on what is inside the think region.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass

import numpy as np

from .adapter import IGNORE_INDEX, ModalitySequence
from .numcore import DiffArray, Tape, asdiff, concat, constant, log_softmax, stack, take_rows
from .numcore.nn import MLP, Embedding, LayerNorm, Linear, Module, MultiHeadAttention
from .numcore.optim import OptimizerState, optimizer_step

PAD, GEO, THINK_OPEN, THINK_CLOSE, BOS, EOS, UNK = range(7)
RESERVED = ["<pad>", "<geo>", "<think>", "</think>", "<bos>", "<eos>", "<unk>"]
PLACEHOLDER = "<geo>"

FILLER_TEMPLATES = [
    "",
    "ok",
    "let me see",
    "looking at this",
    "first consider the input",
    "i will check each part",
    "consider the structure and the question",
    "start with the overall shape of it",
    "look at the parts one at a time and then",
    "think about what the question is asking here now",
    "the answer should follow from the input given above",
    "check the relevant details before giving the short answer",
    "step by step the structure tells us what we need to know",
    "hmm",
    "going through it carefully",
    "keep the question in mind and read the structure once more",
]

_TOKEN_RE = re.compile(r"<geo>|\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class ToyVocab:
    """Word-level vocabulary. Reserved symbols occupy ids 0..6; only ``<geo>``
    can come out of tokenizing plain text (and only when allowed)."""

    def __init__(self, words):
        self.itos = list(RESERVED) + sorted({w for w in words if w not in RESERVED})
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    @classmethod
    def build(cls, texts, include_templates: bool = True) -> "ToyVocab":
        words = [w for t in texts for w in tokenize(t) if w != PLACEHOLDER]
        if include_templates:
            words += [w for t in FILLER_TEMPLATES for w in tokenize(t)]
        return cls(words)

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, text: str, allow_placeholder: bool = True) -> list[int]:
        ids = []
        for tok in tokenize(text):
            if tok == PLACEHOLDER:
                if allow_placeholder:
                    ids.append(GEO)
                else:
                    ids += [self.stoi.get(t, UNK) for t in ("<", "geo", ">")]
                continue
            i = self.stoi.get(tok, UNK)
            ids.append(UNK if i < len(RESERVED) else i)
        return ids

    def decode(self, ids) -> str:
        return " ".join(self.itos[i] for i in ids)

    def template_pool(self) -> list[list[int]]:
        return [self.encode(t, allow_placeholder=False) for t in FILLER_TEMPLATES]


@dataclass
class AugmentedSample:
    instruction: list[int]
    reasoning: list[int]
    answer: list[int]
    target: list[int]  # [<think>, r..., </think>, a...]
    loss_mask: np.ndarray  # over target
    reasoning_positions: np.ndarray
    answer_positions: np.ndarray


def build_augmented_target(x, a, template_pool, seed: int,
                           supervise_delimiters: bool = False) -> AugmentedSample:
    if not template_pool:
        raise ValueError("empty template pool")
    if len(a) == 0:
        raise ValueError("answer must be non-empty")
    r = list(template_pool[int(np.random.default_rng(seed).integers(len(template_pool)))])
    y = [THINK_OPEN] + r + [THINK_CLOSE] + list(a)
    m = np.zeros(len(y))
    R = np.arange(1, 1 + len(r))
    A = np.arange(2 + len(r), len(y))
    m[A] = 1.0
    if supervise_delimiters:
        m[[0, 1 + len(r)]] = 1.0
    return AugmentedSample(list(x), r, list(a), y, m, R, A)


def masked_nll(logits: DiffArray, targets, mask) -> DiffArray:
    """-sum_t m_t log softmax(logits_t)[y_t].

    Only rows with m_t != 0 are gathered, so unsupervised rows get no loss
    term and an exactly zero gradient.
    """
    targets = np.asarray(targets, dtype=np.int64)
    m = np.asarray(mask, dtype=np.float64)
    logits = asdiff(logits)
    flat = logits.reshape(-1, logits.shape[-1])
    rows = np.flatnonzero(m.reshape(-1) != 0)
    if len(rows) == 0:
        warnings.warn("masked_nll: no supervised positions", RuntimeWarning, stacklevel=2)
        return DiffArray(0.0)
    lp = log_softmax(take_rows(flat, rows), axis=-1)
    picked = lp[np.arange(len(rows)), targets.reshape(-1)[rows]]
    return -(picked * m.reshape(-1)[rows]).sum()


def labels_nll(logits: DiffArray, labels) -> DiffArray:
    """masked_nll with the mask read off ignore-index labels."""
    labels = np.asarray(labels, dtype=np.int64)
    supervised = labels != IGNORE_INDEX
    return masked_nll(logits, np.where(supervised, labels, 0), supervised)


@dataclass
class DecoderConfig:
    vocab_size: int
    dim: int = 64
    heads: int = 4
    blocks: int = 2
    max_len: int = 256


class DecoderBlock(Module):
    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        self.attn_norm = LayerNorm(cfg.dim)
        self.attn = MultiHeadAttention(cfg.dim, cfg.heads, rng)
        self.ffn_norm = LayerNorm(cfg.dim)
        self.ffn = MLP(cfg.dim, 4 * cfg.dim, cfg.dim, rng, activation="gelu")


class ToyDecoder(Module):
    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        self._config = cfg
        self.token_embed = Embedding(cfg.vocab_size, cfg.dim, rng, scale=0.5)
        self.pos_embed = Embedding(cfg.max_len, cfg.dim, rng, scale=0.1)
        self.blocks = [DecoderBlock(cfg, rng) for _ in range(cfg.blocks)]
        self.final_norm = LayerNorm(cfg.dim)
        self.head = Linear(cfg.dim, cfg.vocab_size, rng)

    @property
    def config(self) -> DecoderConfig:
        return self._config

    def embed(self, ids) -> DiffArray:
        return self.token_embed(np.asarray(ids, dtype=np.int64))


def decoder_forward(embeddings, attention_mask, params: ToyDecoder) -> DiffArray:
    """Causal logits for (L, D) or (B, L, D) embeddings. Keys whose mask is
    false get zero weight from every query."""
    x = asdiff(embeddings)
    single = x.ndim == 2
    if single:
        x = x.reshape(1, *x.shape)
    am = np.asarray(attention_mask, dtype=bool).reshape(x.shape[0], x.shape[1])
    b, n, d = x.shape
    if n > params.config.max_len:
        raise ValueError(f"sequence length {n} exceeds max_len {params.config.max_len}")
    x = x + params.pos_embed(np.arange(n))
    allowed = np.tril(np.ones((n, n), dtype=bool))[None] & am[:, None, :]
    # a query with no visible key (e.g. leading padding) may look at itself
    allowed |= np.eye(n, dtype=bool)[None] & ~allowed.any(axis=-1, keepdims=True)
    for blk in params.blocks:
        h = blk.attn_norm(x)
        x = x + blk.attn(h, h, allowed)
        x = x + blk.ffn(blk.ffn_norm(x))
    logits = params.head(params.final_norm(x))
    return logits.reshape(n, -1) if single else logits


def instruction_summary(decoder: ToyDecoder, instruction_ids) -> DiffArray:
    """Mean of the instruction tokens' embeddings, placeholder excluded."""
    ids = [i for i in instruction_ids if i != GEO]
    if not ids:
        raise ValueError("empty instruction")
    return decoder.embed(ids).mean(axis=0)


def build_sequence(decoder: ToyDecoder, sample: AugmentedSample) -> ModalitySequence:
    """``<bos> instruction target <eos>`` as next-token inputs with shifted labels.

    Position t carries the label of token t+1 when that token is supervised.
    """
    tokens = [BOS] + list(sample.instruction) + list(sample.target) + [EOS]
    supervised = np.zeros(len(tokens), dtype=bool)
    offset = 1 + len(sample.instruction)
    supervised[offset + np.flatnonzero(sample.loss_mask)] = True
    supervised[-1] = bool(sample.loss_mask[-1])  # eos follows the last answer token
    inputs = np.array(tokens[:-1], dtype=np.int64)
    labels = np.where(supervised[1:], np.array(tokens[1:]), IGNORE_INDEX).astype(np.int64)
    return ModalitySequence(embeddings=decoder.embed(inputs), attention_mask=np.ones(len(inputs), dtype=bool),
                            labels=labels, token_ids=inputs)


def pad_batch(seqs: list[ModalitySequence]):
    """Right-pad sequences into (B, L, D) embeddings, (B, L) mask and labels."""
    n = max(len(s) for s in seqs)
    d = seqs[0].embeddings.shape[1]
    emb, masks, labels = [], [], []
    for s in seqs:
        extra = n - len(s)
        e = s.embeddings if extra == 0 else concat([s.embeddings, constant(np.zeros((extra, d)))], axis=0)
        emb.append(e)
        masks.append(np.concatenate([s.attention_mask, np.zeros(extra, dtype=bool)]))
        labels.append(np.concatenate([s.labels, np.full(extra, IGNORE_INDEX, dtype=np.int64)]))
    return stack(emb, axis=0), np.stack(masks), np.stack(labels)


def warmup_decoder(decoder: ToyDecoder, samples: list[AugmentedSample], steps: int = 200,
                   lr: float = 3e-3, seed: int = 0) -> list[float]:
    """Brief text-only language-model training so the frozen decoder has
    usable next-token statistics before any geometry is attached.

    Trains on every token of ``<bos> instruction target <eos>`` (placeholder
    rows included as ordinary inputs).
    """
    state = OptimizerState(lr=lr, weight_decay=0.0, warmup_steps=10)
    params = decoder.parameters()
    rows = []
    for s in samples:
        tokens = [BOS] + list(s.instruction) + list(s.target) + [EOS]
        rows.append(np.array(tokens, dtype=np.int64))
    losses = []
    for _ in range(steps):
        decoder.zero_grad()
        with Tape() as tape:
            total = None
            for t in rows:
                seq_logits = decoder_forward(decoder.embed(t[:-1]), np.ones(len(t) - 1, bool), decoder)
                loss = masked_nll(seq_logits, t[1:], np.ones(len(t) - 1))
                total = loss if total is None else total + loss
            tape.backward(total)
        optimizer_step(state, params)
        losses.append(total.item())
    return losses
