"""Three training stages: encoder pretraining, connector alignment, and
language-model adaptation.

Losses are sums over supervised targets so that accumulating micro-batch
gradients gives exactly the large-batch gradient. Reported losses are divided
by the number of targets (mean per masked atom / per supervised token).
Parameters outside a stage's selector are frozen for the duration of the
stage and checked bitwise afterwards.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .adapter import IGNORE_INDEX, FusionConfig, FusionStack, inject_tokens, retrieve_geometry
from .corpus import InstructionSample, round_robin
from .encoder import Encoder, EncoderConfig, mask_regions, masked_accuracy, pretrain_losses
from .lmtoy import (
    GEO,
    AugmentedSample,
    DecoderConfig,
    ToyDecoder,
    ToyVocab,
    build_augmented_target,
    build_sequence,
    decoder_forward,
    instruction_summary,
    labels_nll,
    pad_batch,
    warmup_decoder,
)
from .numcore import Tape, stack
from .numcore.nn import Module
from .numcore.optim import OptimizerState, optimizer_step
from .patcher import AnchorGate, PatchConfig, run_patching
from .structgraph import AtomGraph, batch_graphs

log = logging.getLogger(__name__)

STAGES = ("encoder_pretrain", "alignment", "adaptation")
SELECTORS = {
    "encoder_pretrain": ("encoder.",),
    "alignment": ("gate.", "fusion."),
    "adaptation": ("gate.", "fusion.", "decoder."),
}
CHECKPOINT_FORMAT = "atomconnect-checkpoint"

# Desk-scale defaults. Key names follow the usual hyperparameter table rows.
DEFAULT_CONFIG = {
    # encoder
    "graph_encoder_hidden_size": 32,
    "graph_encoder_depth": 3,
    "graph_encoder_dropout": 0.0,
    "coordinate_updates": True,
    "encoder_layernorm": True,
    "number_of_rbf_bases": 32,
    "rbf_cutoff_distance": 10.0,
    # patching and connector
    "max_anchors_per_graph": 2048,
    "mass_based_anchor_fraction": 0.1,
    "assignment_distance_scale": 1.0,
    "assignment_temperature": 0.1,
    "gate_mlp_hidden_size": 64,
    "gate_mlp_dropout": 0.0,
    "fusion_block_count": 2,
    "attention_head_count": 4,
    "fusion_model_width": 64,
    "fusion_mlp_intermediate_size": 256,
    "fusion_dropout": 0.0,
    # toy decoder standing in for the language model
    "language_model_width": 64,
    "language_model_head_count": 4,
    "language_model_block_count": 2,
    "language_model_max_length": 256,
    "decoder_warmup_steps": 150,
    "decoder_warmup_learning_rate": 3e-3,
    # encoder pretraining
    "mask_fraction": 0.15,
    "mask_region_size": 8,
    "mask_pool_size": 0,
    "direction_noise_sigma": 0.1,
    "distance_loss_weight": 1.0,
    "direction_loss_weight": 1.0,
    "encoder_learning_rate": 1e-3,
    "encoder_max_steps": 300,
    "encoder_warmup_steps": 20,
    "encoder_weight_decay": 0.0,
    # alignment / adaptation
    "learning_rate": 1e-4,
    "adaptation_learning_rate": 1e-5,
    "training_epochs": 4,
    "alignment_max_steps": 500,
    "adaptation_epochs": 2,
    "adaptation_max_steps": 0,
    "per_device_train_batch_size": 8,
    "gradient_accumulation_steps": 1,
    "warmup_steps": 20,
    "gradient_clipping_max_norm": 1.0,
    "weight_decay": 0.01,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_epsilon": 1e-8,
    "evaluation_split_ratio": 0.1,
    "evaluation_frequency_steps": 100,
    "logging_frequency_steps": 10,
    "interleave_modalities": True,
}


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then a flat JSON file, then explicit overrides."""
    cfg = dict(DEFAULT_CONFIG)
    extra = {}
    if path is not None:
        extra.update(json.loads(Path(path).read_text()))
    extra.update(overrides or {})
    unknown = sorted(set(extra) - set(cfg))
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")
    cfg.update(extra)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def encoder_config(cfg: dict) -> EncoderConfig:
    return EncoderConfig(
        hidden_size=cfg["graph_encoder_hidden_size"], depth=cfg["graph_encoder_depth"],
        rbf_count=cfg["number_of_rbf_bases"], rbf_cutoff=cfg["rbf_cutoff_distance"],
        dropout=cfg["graph_encoder_dropout"], coord_updates=cfg["coordinate_updates"],
        use_layernorm=cfg["encoder_layernorm"], lambda_dist=cfg["distance_loss_weight"],
        lambda_dir=cfg["direction_loss_weight"], mask_fraction=cfg["mask_fraction"],
        direction_noise_sigma=cfg["direction_noise_sigma"], region_size=cfg["mask_region_size"])


def patch_config(cfg: dict) -> PatchConfig:
    return PatchConfig(rho=cfg["mass_based_anchor_fraction"], k_max=cfg["max_anchors_per_graph"],
                       distance_scale=cfg["assignment_distance_scale"],
                       temperature=cfg["assignment_temperature"])


@dataclass
class StageConfig:
    stage: str
    lr: float
    epochs: int = 1
    max_steps: int = 0  # > 0 overrides epochs
    batch_size: int = 8
    grad_accum: int = 1
    warmup_steps: int = 0
    cosine_decay: bool = False
    clip_norm: float = 1.0
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    eval_ratio: float = 0.1
    eval_every: int = 100
    log_every: int = 10
    mask_pool: int = 0  # encoder stage: cycle this many fixed masks (0 = fresh mask each step)
    interleave: bool = True

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.lr <= 0 or self.batch_size < 1 or self.grad_accum < 1:
            raise ValueError("lr, batch_size and grad_accum must be positive")
        if self.max_steps <= 0 and self.epochs < 1:
            raise ValueError("need epochs >= 1 or max_steps >= 1")
        if not 0.0 <= self.eval_ratio < 1.0:
            raise ValueError("eval_ratio must lie in [0, 1)")

    @property
    def selector(self) -> tuple[str, ...]:
        return SELECTORS[self.stage]


def stage_config(cfg: dict, stage: str, seed: int = 0) -> StageConfig:
    common = dict(clip_norm=cfg["gradient_clipping_max_norm"], seed=seed,
                  betas=(cfg["adam_beta1"], cfg["adam_beta2"]), adam_eps=cfg["adam_epsilon"],
                  eval_ratio=cfg["evaluation_split_ratio"], eval_every=cfg["evaluation_frequency_steps"],
                  log_every=cfg["logging_frequency_steps"], interleave=cfg["interleave_modalities"])
    if stage == "encoder_pretrain":
        return StageConfig(stage, cfg["encoder_learning_rate"], max_steps=cfg["encoder_max_steps"],
                           batch_size=cfg["per_device_train_batch_size"],
                           grad_accum=cfg["gradient_accumulation_steps"],
                           warmup_steps=cfg["encoder_warmup_steps"], cosine_decay=True,
                           weight_decay=cfg["encoder_weight_decay"], mask_pool=cfg["mask_pool_size"], **common)
    shared = dict(batch_size=cfg["per_device_train_batch_size"], grad_accum=cfg["gradient_accumulation_steps"],
                  warmup_steps=cfg["warmup_steps"], weight_decay=cfg["weight_decay"], **common)
    if stage == "alignment":
        return StageConfig(stage, cfg["learning_rate"], epochs=cfg["training_epochs"],
                           max_steps=cfg["alignment_max_steps"], **shared)
    if stage == "adaptation":
        if not cfg["adaptation_learning_rate"] < cfg["learning_rate"]:
            raise ValueError("adaptation learning rate must be strictly smaller than the alignment rate")
        return StageConfig(stage, cfg["adaptation_learning_rate"], epochs=cfg["adaptation_epochs"],
                           max_steps=cfg["adaptation_max_steps"], **shared)
    raise ValueError(f"unknown stage {stage!r}")


@dataclass
class TrainReport:
    stage: str
    seed: int
    config_hash: str
    steps: list[dict] = field(default_factory=list)  # step, loss, lr, grad_norm, clipped
    evals: list[dict] = field(default_factory=list)
    final_metrics: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def losses(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.steps])

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, json_path, csv_path=None) -> None:
        Path(json_path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        if csv_path is not None:
            with open(csv_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["step", "loss", "lr", "grad_norm"])
                for r in self.steps:
                    w.writerow([r["step"], repr(r["loss"]), repr(r["lr"]), repr(r["grad_norm"])])


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(path, state: dict[str, np.ndarray], meta: dict) -> None:
    """JSON map name -> {shape, data} plus metadata. Same values, same bytes."""
    params = {k: {"shape": list(np.shape(v)), "data": np.asarray(v, dtype=np.float64).ravel().tolist()}
              for k, v in state.items()}
    doc = {"format": CHECKPOINT_FORMAT, "version": 1, "meta": meta, "params": params}
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a parameter checkpoint")
    state = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()}
    return state, doc["meta"]


class GeoModel(Module):
    """Encoder, anchor gate, fusion stack and decoder under one name tree.
    Each part draws its initial weights from its own seeded stream."""

    def __init__(self, cfg: dict, vocab: ToyVocab, seed: int = 0):
        self._config = dict(cfg)
        self._vocab = vocab
        self._seed = seed
        enc = encoder_config(cfg)
        d_llm = cfg["language_model_width"]
        self.encoder = Encoder(enc, np.random.default_rng([seed, 0]))
        self.gate = AnchorGate(enc.hidden_size, d_llm, np.random.default_rng([seed, 1]),
                               hidden=cfg["gate_mlp_hidden_size"], dropout=cfg["gate_mlp_dropout"])
        self.fusion = FusionStack(FusionConfig(
            d_enc=enc.hidden_size, d_llm=d_llm, d_model=cfg["fusion_model_width"],
            heads=cfg["attention_head_count"], blocks=cfg["fusion_block_count"],
            ffn_hidden=cfg["fusion_mlp_intermediate_size"], dropout=cfg["fusion_dropout"]),
            np.random.default_rng([seed, 2]))
        self.decoder = ToyDecoder(DecoderConfig(
            vocab_size=len(vocab), dim=d_llm, heads=cfg["language_model_head_count"],
            blocks=cfg["language_model_block_count"], max_len=cfg["language_model_max_length"]),
            np.random.default_rng([seed, 3]))

    @property
    def config(self) -> dict:
        return self._config

    @property
    def vocab(self) -> ToyVocab:
        return self._vocab

    @property
    def patch_config(self) -> PatchConfig:
        return patch_config(self._config)

    @property
    def dropout_active(self) -> bool:
        c = self._config
        return max(c["gate_mlp_dropout"], c["fusion_dropout"]) > 0

    def meta(self, stage: str) -> dict:
        return {"stage": stage, "seed": self._seed, "config": self._config,
                "config_hash": config_hash(self._config), "vocab": self._vocab.itos}

    def save(self, path, stage: str) -> None:
        save_checkpoint(path, self.state_dict(), self.meta(stage))

    @classmethod
    def load(cls, path) -> "GeoModel":
        state, meta = load_checkpoint(path)
        if "vocab" not in meta:
            raise ValueError(f"{path} holds no vocabulary (an encoder-only checkpoint?)")
        model = cls(load_config(overrides=meta["config"]), ToyVocab(meta["vocab"]), meta["seed"])
        model.load_state_dict(state)
        return model


def save_encoder(path, encoder: Encoder, cfg: dict, seed: int) -> None:
    meta = {"stage": "encoder_pretrain", "seed": seed, "config": cfg, "config_hash": config_hash(cfg)}
    save_checkpoint(path, {k: p.data for k, p in encoder.named_parameters("encoder.")}, meta)


def load_encoder_state(path) -> dict[str, np.ndarray]:
    state, _ = load_checkpoint(path)
    enc = {k[len("encoder."):]: v for k, v in state.items() if k.startswith("encoder.")}
    if not enc:
        raise ValueError(f"{path} holds no encoder parameters")
    return enc


# ---------------------------------------------------------------- freezing

def select_parameters(module: Module, prefixes) -> tuple[dict, dict]:
    """Split named parameters into (trainable, frozen) by name prefix."""
    prefixes = tuple(prefixes)
    train, frozen = {}, {}
    for name, p in module.named_parameters():
        (train if name.startswith(prefixes) else frozen)[name] = p
    if not train:
        raise ValueError(f"selector {prefixes} matches no parameters")
    return train, frozen


@contextmanager
def frozen(params: dict):
    """Stop recording gradients for ``params`` and verify afterwards that
    none of them changed (bitwise)."""
    snapshot = {k: p.data.copy() for k, p in params.items()}
    for p in params.values():
        p.requires_grad = False
        p.grad = None
    try:
        yield
    finally:
        for p in params.values():
            p.requires_grad = True
    changed = [k for k, p in params.items() if not np.array_equal(p.data, snapshot[k])]
    if changed:
        raise RuntimeError(f"frozen parameter changed: {changed[0]}")


# ---------------------------------------------------------------- loop

def split_eval(items: list, ratio: float, seed: int) -> tuple[list, list]:
    """floor(ratio * n) held-out items chosen by a seeded permutation. With
    none held out, evaluation runs on the training items."""
    n_eval = int(math.floor(ratio * len(items)))
    if n_eval == 0:
        return list(items), list(items)
    perm = np.random.default_rng([seed, 7]).permutation(len(items))
    held = set(perm[:n_eval].tolist())
    train = [x for i, x in enumerate(items) if i not in held]
    return train, [items[i] for i in sorted(held)]


def _stream(items: list, cfg: StageConfig, order_fn):
    epoch = 0
    while True:
        if order_fn is not None and cfg.interleave:
            order = order_fn(items)
        else:
            perm = np.random.default_rng([cfg.seed, 11, epoch]).permutation(len(items))
            order = [items[i] for i in perm]
        yield from order
        epoch += 1


def total_steps(n_train: int, cfg: StageConfig) -> int:
    if cfg.max_steps > 0:
        return cfg.max_steps
    return cfg.epochs * math.ceil(n_train / (cfg.batch_size * cfg.grad_accum))


def _run(cfg: StageConfig, params: dict, train: list, loss_fn, eval_fn, report: TrainReport,
         order_fn=None, dropout: bool = False) -> None:
    """Shared optimizer loop. ``loss_fn(chunk, step, micro, rng)`` returns
    (summed loss, target count); ``eval_fn()`` returns a metrics dict."""
    n_steps = total_steps(len(train), cfg)
    state = OptimizerState(lr=cfg.lr, beta1=cfg.betas[0], beta2=cfg.betas[1], eps=cfg.adam_eps,
                           weight_decay=cfg.weight_decay, warmup_steps=cfg.warmup_steps,
                           decay_steps=max(n_steps - cfg.warmup_steps, 1) if cfg.cosine_decay else 0)
    stream = _stream(train, cfg, order_fn)
    for step in range(1, n_steps + 1):
        for p in params.values():
            p.grad = None
        total, count = 0.0, 0
        for micro in range(cfg.grad_accum):
            chunk = [next(stream) for _ in range(cfg.batch_size)]
            rng = np.random.default_rng([cfg.seed, 13, step, micro]) if dropout else None
            with Tape() as tape:
                loss, n = loss_fn(chunk, step, micro, rng)
                tape.backward(loss)
            total += loss.item()
            count += n
        value = total / max(count, 1)
        if not math.isfinite(value):
            raise FloatingPointError(f"loss diverged at step {step}")
        info = optimizer_step(state, params, clip_norm=cfg.clip_norm)
        report.steps.append({"step": step, "loss": value, "lr": info["lr"],
                             "grad_norm": info["grad_norm"], "clipped": info["clipped"]})
        if cfg.log_every and step % cfg.log_every == 0:
            log.info("%s step %d loss %.6f lr %.3g grad_norm %.4g%s", cfg.stage, step, value, info["lr"],
                     info["grad_norm"], " (clipped)" if info["clipped"] else "")
        if (cfg.eval_every and step % cfg.eval_every == 0) or step == n_steps:
            metrics = eval_fn()
            report.evals.append({"step": step, **metrics})
            log.info("%s eval step %d %s", cfg.stage, step, metrics)
    report.final_metrics = dict(report.evals[-1]) if report.evals else {}
    report.final_metrics.pop("step", None)


# ---------------------------------------------------------------- encoder stage

EVAL_MASKS = 32


def _mask_seed(seed: int, key: int, micro: int) -> int:
    return int(np.random.default_rng([seed, 17, key, micro]).integers(2**31))


def evaluate_encoder(encoder: Encoder, graphs: list[AtomGraph], n_masks: int = EVAL_MASKS,
                     seed: int = 0) -> dict:
    """Masked element accuracy and mean loss per masked atom over fixed masks."""
    cfg = encoder.config
    batch = batch_graphs(graphs)
    correct, atoms, loss = 0.0, 0, 0.0
    for k in range(n_masks):
        masked, targets = mask_regions(batch, cfg.mask_fraction, _mask_seed(seed, 10_000 + k, 0),
                                       cfg.direction_noise_sigma, cfg.region_size)
        out = encoder(masked, targets)
        n = len(targets.atoms)
        correct += masked_accuracy(out, targets) * n
        atoms += n
        loss += pretrain_losses(out, targets, cfg.lambda_dist, cfg.lambda_dir)["L_enc"].item()
    return {"masked_type_accuracy": correct / atoms, "loss": loss / atoms}


def pretrain_encoder(graphs: list[AtomGraph], cfg: dict, seed: int = 0,
                     stage: StageConfig | None = None) -> tuple[Encoder, TrainReport]:
    """Masked reconstruction on all-atom graphs. Returns the trained encoder
    (parameter names prefixed ``encoder.`` when checkpointed) and its report."""
    if not graphs:
        raise ValueError("empty pretraining corpus")
    sc = stage or stage_config(cfg, "encoder_pretrain", seed)
    ecfg = encoder_config(cfg)
    encoder = Encoder(ecfg, np.random.default_rng([sc.seed, 0]))
    train, held = split_eval(list(graphs), sc.eval_ratio, sc.seed)
    sc_batch = min(sc.batch_size, len(train))
    if sc_batch != sc.batch_size:
        sc = StageConfig(**{**asdict(sc), "batch_size": sc_batch})
    params = encoder.parameters()
    report = TrainReport("encoder_pretrain", sc.seed, config_hash(cfg))

    def loss_fn(chunk, step, micro, rng):
        key = (step - 1) % sc.mask_pool if sc.mask_pool else step
        masked, targets = mask_regions(batch_graphs(chunk), ecfg.mask_fraction, _mask_seed(sc.seed, key, micro),
                                       ecfg.direction_noise_sigma, ecfg.region_size)
        out = encoder(masked, targets, rng)
        return pretrain_losses(out, targets, ecfg.lambda_dist, ecfg.lambda_dir)["L_enc"], len(targets.atoms)

    start = time.perf_counter()
    _run(sc, params, train, loss_fn, lambda: evaluate_encoder(encoder, held, seed=sc.seed), report,
         order_fn=lambda xs: list(xs), dropout=ecfg.dropout > 0)
    report.wall_clock = time.perf_counter() - start
    return encoder, report


# ---------------------------------------------------------------- LM stages

@dataclass
class PreparedSample:
    graph: AtomGraph
    aug: AugmentedSample
    X: np.ndarray  # cached node embeddings from the frozen encoder
    modality: str


def build_model(samples: list[InstructionSample], cfg: dict, seed: int = 0,
                encoder_state: dict | None = None, warmup: bool = True) -> tuple[GeoModel, list[float]]:
    """Vocabulary from the corpus, a seeded model, the given encoder weights,
    and a decoder briefly trained on the corpus text (the stand-in for a
    pretrained language model). Returns the model and warmup losses."""
    vocab = ToyVocab.build([s.instruction for s in samples] + [s.answer for s in samples])
    model = GeoModel(cfg, vocab, seed)
    if encoder_state is not None:
        model.encoder.load_state_dict(encoder_state)
    losses = []
    if warmup and cfg["decoder_warmup_steps"] > 0:
        augs = [_augment(model, s, i, seed) for i, s in enumerate(samples)]
        losses = warmup_decoder(model.decoder, augs, steps=cfg["decoder_warmup_steps"],
                                lr=cfg["decoder_warmup_learning_rate"], seed=seed)
    return model, losses


def _augment(model: GeoModel, s: InstructionSample, index: int, seed: int) -> AugmentedSample:
    v = model.vocab
    return build_augmented_target(v.encode(s.instruction), v.encode(s.answer, allow_placeholder=False),
                                  v.template_pool(), seed=int(np.random.default_rng([seed, 19, index]).integers(2**31)))


def prepare_samples(model: GeoModel, samples: list[InstructionSample], seed: int = 0) -> list[PreparedSample]:
    out = []
    for i, s in enumerate(samples):
        X = model.encoder(batch_graphs([s.graph])).node_embeddings.data.copy()
        out.append(PreparedSample(s.graph, _augment(model, s, i, seed), X, s.graph.modality))
    return out


def lm_loss(model: GeoModel, items: list[PreparedSample], rng: np.random.Generator | None = None):
    """Summed NLL over supervised answer tokens of injected sequences.
    Returns (loss, supervised token count, patch result)."""
    dec = model.decoder
    seqs = [build_sequence(dec, it.aug) for it in items]
    z = stack([instruction_summary(dec, it.aug.instruction) for it in items], axis=0)
    b = batch_graphs([it.graph for it in items])
    X = np.concatenate([it.X for it in items], axis=0)
    res = run_patching(z, X, b.coords, b.batch, model.gate, model.patch_config, rng)
    geo = retrieve_geometry(res, X, b.batch, model.fusion, rng)
    inj = [inject_tokens(sq, geo, res.mask, GEO, assignment=[g]) for g, sq in enumerate(seqs)]
    E, M, L = pad_batch(inj)
    logits = decoder_forward(E, M, dec)
    return labels_nll(logits, L), int((L != IGNORE_INDEX).sum()), res


def evaluate_lm(model: GeoModel, items: list[PreparedSample], batch_size: int = 8) -> dict:
    total, count = 0.0, 0
    for i in range(0, len(items), batch_size):
        loss, n, _ = lm_loss(model, items[i: i + batch_size])
        total += loss.item()
        count += n
    return {"masked_nll": total / count, "loss": total / count}


def _train_lm(model: GeoModel, samples: list[InstructionSample], sc: StageConfig) -> TrainReport:
    train_params, frozen_params = select_parameters(model, sc.selector)
    report = TrainReport(sc.stage, sc.seed, config_hash(model.config))
    start = time.perf_counter()
    with frozen(frozen_params):
        items = prepare_samples(model, samples, sc.seed)
        train, held = split_eval(items, sc.eval_ratio, sc.seed)

        def loss_fn(chunk, step, micro, rng):
            loss, n, _ = lm_loss(model, chunk, rng)
            return loss, n

        _run(sc, train_params, train, loss_fn, lambda: evaluate_lm(model, held, sc.batch_size), report,
             order_fn=lambda xs: round_robin(xs, key=lambda it: it.modality), dropout=model.dropout_active)
    report.wall_clock = time.perf_counter() - start
    return report


def align_connector(model: GeoModel, samples: list[InstructionSample], stage: StageConfig) -> TrainReport:
    """Train gate and fusion stack only; encoder and decoder stay bitwise fixed."""
    if stage.stage != "alignment":
        raise ValueError("align_connector needs an alignment StageConfig")
    return _train_lm(model, samples, stage)


def adapt_lm(model: GeoModel, samples: list[InstructionSample], stage: StageConfig,
             alignment_lr: float | None = None) -> TrainReport:
    """Connector and decoder trainable at a smaller rate; the encoder stays fixed."""
    if stage.stage != "adaptation":
        raise ValueError("adapt_lm needs an adaptation StageConfig")
    ref = model.config["learning_rate"] if alignment_lr is None else alignment_lr
    if not stage.lr < ref:
        raise ValueError(f"adaptation lr {stage.lr} must be below the alignment lr {ref}")
    return _train_lm(model, samples, stage)


__all__ = [
    "DEFAULT_CONFIG", "GeoModel", "PreparedSample", "STAGES", "SELECTORS", "StageConfig", "TrainReport",
    "adapt_lm", "align_connector", "build_model", "config_hash", "encoder_config", "evaluate_encoder",
    "evaluate_lm", "frozen", "lm_loss", "load_checkpoint", "load_config", "load_encoder_state",
    "patch_config", "prepare_samples", "pretrain_encoder", "round_robin", "save_checkpoint",
    "save_encoder", "select_parameters", "split_eval", "stage_config", "total_steps",
]
