import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atomconnect.encoder import (
    Encoder,
    EncoderConfig,
    EncoderOutput,
    MaskTargets,
    egnn_forward,
    mask_regions,
    pretrain_losses,
    rbf_expand,
)
from atomconnect.numcore import DiffArray, Tape, finite_diff_check
from atomconnect.numcore.optim import OptimizerState, optimizer_step
from atomconnect.structgraph import AtomGraph, batch_graphs, molecule_from_smiles
from atomconnect.structgraph import vocab
from atomconnect.structgraph.graph import Atom

from helpers import random_graph, random_motion

TINY = EncoderConfig(hidden_size=8, depth=2, rbf_count=8, dropout=0.0)


def moved(batch, rot, shift):
    return dataclasses.replace(batch, coords=batch.coords @ rot.T + shift)


class TestRBF:
    def test_zero_at_cutoff(self):
        cfg = EncoderConfig()
        np.testing.assert_array_equal(rbf_expand(cfg.rbf_cutoff, cfg), np.zeros(32))
        assert not rbf_expand(12.0, cfg).any()

    def test_first_basis_peaks_at_zero(self):
        v = rbf_expand(0.0, EncoderConfig())
        assert v.shape == (32,) and np.argmax(v) == 0

    def test_vectorized(self):
        cfg = EncoderConfig.desk(rbf_count=4, rbf_cutoff=3.0)
        out = rbf_expand(np.array([0.0, 1.0, 2.0]), cfg)
        assert out.shape == (3, 4)
        assert np.argmax(out[1]) == 1

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            rbf_expand(-0.5, EncoderConfig())

    def test_differentiable(self):
        cfg = EncoderConfig.desk(rbf_count=6, rbf_cutoff=4.0)
        d = DiffArray(np.array([0.3, 1.7, 3.9]), requires_grad=True)
        rep = finite_diff_check(lambda: (rbf_expand(d, cfg) ** 2).sum(), {"d": d}, h=1e-6)
        assert rep.passed(1e-7)


class TestConfig:
    def test_defaults(self):
        cfg = EncoderConfig()
        assert (cfg.hidden_size, cfg.depth, cfg.rbf_count, cfg.rbf_cutoff) == (256, 8, 32, 10.0)
        assert cfg.coord_updates and cfg.use_layernorm

    @pytest.mark.parametrize("kw", [{"hidden_size": 0}, {"depth": -1}, {"rbf_cutoff": 0.0},
                                    {"mask_fraction": 1.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            EncoderConfig(**kw)


class TestForward:
    def setup_method(self):
        self.enc = Encoder(EncoderConfig.desk(), np.random.default_rng(0))

    def test_shapes(self):
        b = batch_graphs([molecule_from_smiles("CCO"), molecule_from_smiles("c1ccccc1")])
        out = self.enc(b)
        assert out.node_embeddings.shape == (9, 32)
        assert out.coords.shape == (9, 3)

    def test_identical_graphs_identical_blocks(self):
        g = molecule_from_smiles("CC(=O)N")
        out = self.enc(batch_graphs([g, g]))
        x = out.node_embeddings.data
        np.testing.assert_allclose(x[:4], x[4:], atol=1e-12)

    def test_rotation_about_z(self):
        b = batch_graphs([molecule_from_smiles("OCC(=O)N")])
        rz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        a, c = self.enc(b), self.enc(moved(b, rz, np.zeros(3)))
        assert np.abs(a.node_embeddings.data - c.node_embeddings.data).max() <= 1e-6

    def test_translation(self):
        b = batch_graphs([molecule_from_smiles("OCC(=O)N")])
        a, c = self.enc(b), self.enc(moved(b, np.eye(3), np.array([100.0, 0, 0])))
        assert np.abs(a.node_embeddings.data - c.node_embeddings.data).max() <= 1e-6

    def test_isolated_node(self):
        g = AtomGraph([Atom(8), Atom(6)], np.array([[0.0, 0, 0], [30.0, 0, 0]]), [], "molecule")
        out = self.enc(batch_graphs([g]))
        assert np.isfinite(out.node_embeddings.data).all()
        np.testing.assert_array_equal(out.coords.data, g.coords)

    def test_nan_names_layer(self):
        b = batch_graphs([molecule_from_smiles("CC")])
        self.enc.layers[1].update.fc2.bias.data[0] = np.nan
        with pytest.raises(FloatingPointError, match="layer 1"):
            self.enc(b)

    def test_rigid_motion_sweep(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            b = batch_graphs([random_graph(rng, int(rng.integers(3, 15)))])
            base = self.enc(b)
            rot, t = random_motion(rng)
            out = self.enc(moved(b, rot, t))
            assert np.abs(out.node_embeddings.data - base.node_embeddings.data).max() <= 1e-6
            assert np.abs(out.coords.data - (base.coords.data @ rot.T + t)).max() <= 1e-6

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_permutation(self, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, 9)
        perm = rng.permutation(9)
        inv = np.argsort(perm)
        h = AtomGraph([g.atoms[k] for k in perm], g.coords[perm],
                      [(int(inv[i]), int(inv[j])) for i, j in g.edges], "molecule")
        a = self.enc(batch_graphs([g])).node_embeddings.data
        c = self.enc(batch_graphs([h])).node_embeddings.data
        assert np.abs(c - a[perm]).max() <= 1e-9

    def test_no_coord_updates(self):
        enc = Encoder(EncoderConfig.desk(coord_updates=False), np.random.default_rng(0))
        b = batch_graphs([molecule_from_smiles("CCO")])
        np.testing.assert_array_equal(enc(b).coords.data, b.coords)


class TestMasking:
    def batch(self, n):
        return batch_graphs([random_graph(np.random.default_rng(n), n, box=8.0)])

    def test_fraction_on_100(self):
        b = self.batch(100)
        _, t = mask_regions(b, 0.15, seed=4)
        assert len(t.atoms) == 15

    def test_deterministic(self):
        b = self.batch(50)
        (m1, t1), (m2, t2) = mask_regions(b, 0.3, 9), mask_regions(b, 0.3, 9)
        np.testing.assert_array_equal(t1.atoms, t2.atoms)
        np.testing.assert_array_equal(t1.noise, t2.noise)
        np.testing.assert_array_equal(m1.elements, m2.elements)

    def test_single_atom(self):
        b = batch_graphs([AtomGraph([Atom(6)], np.zeros((1, 3)))])
        _, t = mask_regions(b, 0.5, 0)
        assert t.atoms.tolist() == [0]

    def test_masked_features(self):
        b = self.batch(30)
        m, t = mask_regions(b, 0.2, 1)
        assert (m.elements[t.atoms] == vocab.ELEMENT_MASK_ID).all()
        assert (m.atom_name_ids[t.atoms] == vocab.ATOM_NAME_MASK_ID).all()
        keep = np.setdiff1d(np.arange(30), t.atoms)
        np.testing.assert_array_equal(m.elements[keep], b.elements[keep])
        np.testing.assert_array_equal(t.elements, b.elements[t.atoms])

    def test_incident_edges(self):
        b = self.batch(25)
        _, t = mask_regions(b, 0.2, 2)
        masked = set(t.atoms.tolist())
        expect = [tuple(e) for e in b.edges if e[0] in masked or e[1] in masked]
        assert [tuple(e) for e in t.edges] == expect
        np.testing.assert_allclose(np.linalg.norm(t.noisy_dirs - t.noise, axis=1), 1.0, atol=1e-12)

    def test_regions_are_contiguous(self):
        g = molecule_from_smiles("CCCCCCCCCCCCCCCCCCCC", cutoff=1.8)  # chain graph
        _, t = mask_regions(batch_graphs([g]), 0.2, seed=3, region_size=4)
        assert np.diff(t.atoms).tolist() == [1, 1, 1]

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 60), st.floats(0.01, 0.95), st.integers(0, 1000))
    def test_count_per_graph(self, n, frac, seed):
        b = batch_graphs([random_graph(np.random.default_rng(seed), n), random_graph(np.random.default_rng(seed + 1), 7)])
        _, t = mask_regions(b, frac, seed)
        counts = np.bincount(b.batch[t.atoms], minlength=2)
        assert counts.tolist() == [int(np.ceil(frac * n)), int(np.ceil(frac * 7))]


class TestLosses:
    def test_empty_mask(self):
        out = EncoderOutput(DiffArray(np.zeros((1, 2))), DiffArray(np.zeros((1, 3))))
        t = MaskTargets(np.zeros(0, int), np.zeros(0, int), np.zeros((0, 2), int),
                        np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)))
        with pytest.raises(ValueError, match="no masked atoms"):
            pretrain_losses(out, t)

    def targets(self):
        return MaskTargets(np.array([0, 1]), np.array([6, 8]), np.array([[0, 1]]), np.array([1.4]),
                           np.array([[1.05, 0.0, 0.0]]), np.array([[0.05, 0.0, 0.0]]))

    def test_perfect_predictions(self):
        t = self.targets()
        logits = np.full((2, 119), -1e4)
        logits[0, 6] = logits[1, 8] = 0.0
        out = EncoderOutput(DiffArray(np.zeros((2, 4))), DiffArray(np.zeros((2, 3))),
                            DiffArray(logits), DiffArray(np.array([1.4])), DiffArray(t.noise.copy()))
        parts = pretrain_losses(out, t)
        assert parts["L_type"].item() == 0.0
        assert parts["L_dist"].item() == 0.0
        assert parts["L_dir"].item() == 0.0

    def test_lambda_collapse(self):
        t = self.targets()
        rng = np.random.default_rng(0)
        out = EncoderOutput(DiffArray(np.zeros((2, 4))), DiffArray(np.zeros((2, 3))),
                            DiffArray(rng.normal(size=(2, 119))), DiffArray(np.array([0.3])),
                            DiffArray(rng.normal(size=(1, 3))))
        parts = pretrain_losses(out, t, 0.0, 0.0)
        assert parts["L_enc"].item() == parts["L_type"].item()
        full = pretrain_losses(out, t, 2.0, 3.0)
        expect = full["L_type"].item() + 2 * 1.1 + 3 * full["L_dir"].item()
        assert abs(full["L_enc"].item() - expect) <= 1e-12


def test_direction_head_equivariant():
    enc = Encoder(EncoderConfig.desk(), np.random.default_rng(1))
    b = batch_graphs([random_graph(np.random.default_rng(5), 10)])
    mb, t = mask_regions(b, 0.3, 0)
    rot, shift = random_motion(np.random.default_rng(2))
    t2 = dataclasses.replace(t, noisy_dirs=t.noisy_dirs @ rot.T)
    a = enc(mb, t)
    c = enc(moved(mb, rot, shift), t2)
    np.testing.assert_allclose(c.dir_pred.data, a.dir_pred.data @ rot.T, atol=1e-9)
    np.testing.assert_allclose(c.dist_pred.data, a.dist_pred.data, atol=1e-9)
    np.testing.assert_allclose(c.element_logits.data, a.element_logits.data, atol=1e-9)


def test_gradients_match_finite_differences():
    enc = Encoder(TINY, np.random.default_rng(0))
    b = batch_graphs([molecule_from_smiles("CCO"), molecule_from_smiles("CC(=O)N")])
    assert b.num_atoms <= 12
    mb, t = mask_regions(b, 0.4, 3)
    coords = DiffArray(mb.coords.copy(), requires_grad=True)
    params = dict(enc.parameters(), coords=coords)
    rep = finite_diff_check(lambda: pretrain_losses(egnn_forward(mb, TINY, enc, t, coords=coords), t)["L_enc"],
                            params, max_coords=40, rng=np.random.default_rng(1))
    assert rep.passed(1e-5), rep.worst


def test_overfit_block_means_decrease():
    """Four molecules, a pool of 20 masks cycled, cosine-decayed lr 1e-3."""
    b = batch_graphs([molecule_from_smiles(s) for s in ["CCO", "CC(=O)O", "c1ccncc1", "CN"]])
    enc = Encoder(EncoderConfig.desk(), np.random.default_rng(0))
    state = OptimizerState(lr=1e-3, weight_decay=0.0, warmup_steps=20, decay_steps=280)
    masks = [mask_regions(b, 0.15, k) for k in range(20)]
    losses = []
    for step in range(300):
        mb, t = masks[step % 20]
        enc.zero_grad()
        with Tape() as tape:
            loss = pretrain_losses(enc(mb, t), t)["L_enc"]
            tape.backward(loss)
        optimizer_step(state, enc.parameters())
        losses.append(loss.item())
    blocks = np.array(losses).reshape(15, 20).mean(axis=1)
    assert (np.diff(blocks) < 0).all(), blocks
    moving = np.convolve(losses, np.ones(20) / 20, mode="valid")
    assert (np.diff(moving) / moving[1:]).max() < 0.05
