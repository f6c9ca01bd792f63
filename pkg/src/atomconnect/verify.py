"""Finite-difference verification suite for the differentiable pipeline.

Every check compares tape gradients (or closed-form derivatives) against
central differences, with all discrete anchor choices held fixed. Errors are
|analytic - numeric| / max(1, |numeric|).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .adapter import FusionConfig, FusionStack, inject_tokens, retrieve_geometry
from .encoder import Encoder, EncoderConfig, egnn_forward, mask_regions, pretrain_losses
from .lmtoy import (
    GEO,
    DecoderConfig,
    ToyDecoder,
    build_augmented_target,
    build_sequence,
    decoder_forward,
    labels_nll,
    pad_batch,
)
from .numcore import DiffArray, Tape, finite_diff_check, softmax, softmax_jacobian
from .patcher import AnchorGate, PatchConfig, pool_patches, run_patching
from .structgraph import batch_graphs, molecule_from_smiles

PIPELINE_TOL = 1e-5
JACOBIAN_TOL = 1e-7
ENCODER_TOL = 1e-5


@dataclass
class CheckResult:
    name: str
    error: float
    threshold: float
    seconds: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.threshold)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{tag} {self.name}: max rel err {self.error:.3e} <= {self.threshold:.0e}, {self.seconds:.2f}s{extra}"


def _rel(a, n) -> float:
    a, n = np.asarray(a), np.asarray(n)
    return float((np.abs(a - n) / np.maximum(1.0, np.abs(n))).max())


# ---------------------------------------------------------------- full pipeline

VOCAB = 12  # 7 reserved ids plus five plain words


def pipeline_problem(seed: int, d_enc: int = 8):
    """A random two-graph instance (at most 12 atoms in total) with a tiny
    gate, fusion stack and decoder. Returns (loss_fn, params, selection_fn)."""
    rng = np.random.default_rng(seed)
    sizes = rng.integers(3, 7, size=2)
    n = int(sizes.sum())
    b = np.repeat([0, 1], sizes)
    X = DiffArray(rng.normal(size=(n, d_enc)), requires_grad=True)
    P = DiffArray(rng.normal(scale=1.5, size=(n, 3)), requires_grad=True)
    z = DiffArray(rng.normal(size=(2, 8)), requires_grad=True)
    gate = AnchorGate(d_enc, 8, rng, hidden=8, dropout=0.0)
    stack_ = FusionStack(FusionConfig(d_enc=d_enc, d_llm=8, d_model=8, heads=2, blocks=1, ffn_hidden=16), rng)
    dec = ToyDecoder(DecoderConfig(VOCAB, dim=8, heads=2, blocks=1, max_len=32), rng)
    words = np.arange(7, VOCAB)
    pool = [[int(w) for w in rng.choice(words, size=k)] for k in (0, 1, 2)]
    samples = []
    for g in range(2):
        instr = [int(rng.choice(words)), GEO, int(rng.choice(words))]
        answer = [int(w) for w in rng.choice(words, size=2)]
        samples.append(build_augmented_target(instr, answer, pool, seed=seed * 10 + g))
    cfg = PatchConfig(rho=0.5, temperature=0.5)
    state = {}

    def loss():
        res = run_patching(z, X, P, b, gate, cfg)
        state["sel"] = res.selection()
        geo = retrieve_geometry(res, X, b, stack_)
        seqs = [inject_tokens(build_sequence(dec, s), geo, res.mask, GEO, assignment=[g])
                for g, s in enumerate(samples)]
        E, M, L = pad_batch(seqs)
        return labels_nll(decoder_forward(E, M, dec), L)

    params = {"z": z, "X": X, "coords": P}
    params.update(gate.named_parameters("gate."))
    params.update(stack_.named_parameters("fusion."))
    params.update(dec.named_parameters("decoder."))
    return loss, params, lambda: state["sel"]


def pipeline_gradcheck(seed: int, h: float = 1e-4, max_coords: int = 12) -> CheckResult:
    """Gate -> patch -> pool -> fusion -> inject -> masked NLL, with the anchor
    sets required to be identical at every +/- h evaluation."""
    start = time.perf_counter()
    loss, params, selection = pipeline_problem(seed)
    rep = finite_diff_check(loss, params, h=h, selection=selection, max_coords=max_coords,
                            rng=np.random.default_rng(seed))
    return CheckResult(f"pipeline instance {seed}", rep.worst, PIPELINE_TOL, time.perf_counter() - start,
                       f"{rep.evaluations} evaluations")


# ---------------------------------------------------------------- closed forms

def _np_softmax(v):
    e = np.exp(v - v.max())
    return e / e.sum()


def softmax_jacobian_check(seed: int, h: float = 1e-6) -> CheckResult:
    """diag(y) - y y^T against central differences and against the tape, per
    row of a random 5x3 logit matrix."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(5, 3))
    worst = 0.0
    for row in S:
        closed = softmax_jacobian(_np_softmax(row))
        numeric = np.zeros((3, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            numeric[:, j] = (_np_softmax(row + e) - _np_softmax(row - e)) / (2 * h)
        worst = max(worst, _rel(closed, numeric))
        for i in range(3):
            x = DiffArray(row.copy(), requires_grad=True)
            with Tape() as tape:
                tape.backward(softmax(x)[i])
            worst = max(worst, _rel(x.grad, closed[i]))
    return CheckResult(f"softmax jacobian {seed}", worst, JACOBIAN_TOL, time.perf_counter() - start)


def pooling_gradient_check(seed: int, h: float = 1e-6, eps: float = 1e-8) -> CheckResult:
    """dt_a/dW[i,a] = (X_i - t_a) / m_a against central differences of the
    pooling map, and the tape against the closed form."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    W0 = rng.dirichlet(np.ones(3), size=5)
    X = rng.normal(size=(5, 4))

    def pool(W):
        m = W.sum(axis=0) + eps
        return (W / m).T @ X, m

    t, m = pool(W0)
    worst = 0.0
    for a in range(3):
        closed = (X - t[a]) / m[a]  # (5, D): derivative of t_a w.r.t. W[i, a]
        numeric = np.zeros_like(closed)
        for i in range(5):
            Wp, Wm = W0.copy(), W0.copy()
            Wp[i, a] += h
            Wm[i, a] -= h
            numeric[i] = (pool(Wp)[0][a] - pool(Wm)[0][a]) / (2 * h)
        worst = max(worst, _rel(closed, numeric))
        for d in range(X.shape[1]):
            W = DiffArray(W0.copy(), requires_grad=True)
            with Tape() as tape:
                tape.backward(pool_patches(W, X, eps)[0][a, d])
            expect = np.zeros_like(W0)
            expect[:, a] = closed[:, d]
            worst = max(worst, _rel(W.grad, expect))
    return CheckResult(f"pooling gradient {seed}", worst, JACOBIAN_TOL, time.perf_counter() - start)


def encoder_gradcheck(seed: int = 0, max_coords: int = 40) -> CheckResult:
    """Masked pretraining loss through a small encoder, coordinates included."""
    start = time.perf_counter()
    cfg = EncoderConfig(hidden_size=8, depth=2, rbf_count=8, dropout=0.0)
    enc = Encoder(cfg, np.random.default_rng(seed))
    b = batch_graphs([molecule_from_smiles("CCO"), molecule_from_smiles("CC(=O)N")])
    mb, t = mask_regions(b, 0.4, seed + 3)
    coords = DiffArray(mb.coords.copy(), requires_grad=True)
    params = dict(enc.parameters(), coords=coords)
    rep = finite_diff_check(lambda: pretrain_losses(egnn_forward(mb, cfg, enc, t, coords=coords), t)["L_enc"],
                            params, max_coords=max_coords, rng=np.random.default_rng(seed + 1))
    return CheckResult(f"encoder losses {seed}", rep.worst, ENCODER_TOL, time.perf_counter() - start)


def run_suite(instances: int = 5, seed: int = 0) -> list[CheckResult]:
    out = [pipeline_gradcheck(seed + k) for k in range(instances)]
    out += [softmax_jacobian_check(seed + k) for k in range(3)]
    out += [pooling_gradient_check(seed + k) for k in range(3)]
    out.append(encoder_gradcheck(seed))
    return out


__all__ = [
    "CheckResult", "encoder_gradcheck", "pipeline_gradcheck", "pipeline_problem",
    "pooling_gradient_check", "run_suite", "softmax_jacobian_check",
]
