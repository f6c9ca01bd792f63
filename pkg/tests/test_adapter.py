import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atomconnect.adapter import (
    IGNORE_INDEX,
    FusionConfig,
    FusionStack,
    ModalitySequence,
    find_placeholders,
    inject_tokens,
    original_index_map,
    retrieve_geometry,
)
from atomconnect.numcore import DiffArray, Tape, finite_diff_check
from atomconnect.patcher import PatchConfig, PatchResult, patch_from_logits

GEO = 1


def make_seq(ids, dim=4, seed=0):
    ids = np.asarray(ids)
    rng = np.random.default_rng(seed)
    labels = np.where(np.arange(len(ids)) % 2 == 0, ids, IGNORE_INDEX)
    return ModalitySequence(DiffArray(rng.normal(size=(len(ids), dim))), np.ones(len(ids), bool),
                            labels, ids)


def geometry(G, K, counts, dim=4, seed=1):
    mask = np.arange(K)[None, :] < np.asarray(counts)[:, None]
    data = np.random.default_rng(seed).normal(size=(G, K, dim)) * mask[:, :, None]
    return DiffArray(data), mask


def small_stack(d_enc=3, d_llm=4, seed=0, **kw):
    cfg = FusionConfig(d_enc=d_enc, d_llm=d_llm, d_model=kw.pop("d_model", 8), heads=kw.pop("heads", 2),
                       blocks=kw.pop("blocks", 1), **kw)
    return FusionStack(cfg, np.random.default_rng(seed))


def patches(sizes, rho=0.4, seed=0, d_enc=3):
    rng = np.random.default_rng(seed)
    b = np.repeat(np.arange(len(sizes)), sizes)
    X = rng.normal(size=(len(b), d_enc))
    res = patch_from_logits(rng.normal(size=len(b)), X, rng.normal(size=(len(b), 3)), b, PatchConfig(rho=rho))
    return res, X, b


class TestPlaceholders:
    def test_examples(self):
        assert find_placeholders([5, 9, 7, 9], 9).tolist() == [1, 3]
        assert find_placeholders([5, 7], 9).tolist() == []
        assert find_placeholders([9, 9, 9], 9).tolist() == [0, 1, 2]


class TestInject:
    def test_length_preserving(self):
        seq = make_seq([4, 10, GEO, 11, 12, 13])
        geo, mask = geometry(1, 3, [1])
        out = inject_tokens(seq, geo, mask, GEO)
        assert len(out) == 6
        np.testing.assert_array_equal(out.embeddings.data[2], geo.data[0, 0])
        np.testing.assert_array_equal(np.delete(out.embeddings.data, 2, 0), np.delete(seq.embeddings.data, 2, 0))

    def test_four_tokens(self):
        seq = make_seq([4, 10, GEO, 11, 12, 13])
        geo, mask = geometry(1, 5, [4])
        out = inject_tokens(seq, geo, mask, GEO)
        assert len(out) == 9
        np.testing.assert_array_equal(out.embeddings.data[6:], seq.embeddings.data[3:])
        np.testing.assert_array_equal(out.token_ids[6:], seq.token_ids[3:])
        assert (out.labels[2:6] == IGNORE_INDEX).all()
        assert out.attention_mask[2:6].all()
        assert out.injections == [(2, 4)]

    def test_supervised_labels_unchanged(self):
        seq = make_seq([4, 10, GEO, 11, 12, GEO, 13, 14])
        geo, mask = geometry(2, 3, [3, 2])
        out = inject_tokens(seq, geo, mask, GEO)
        keep = seq.labels[seq.labels != IGNORE_INDEX]
        keep_placeholder_free = [l for l, t in zip(seq.labels, seq.token_ids) if l != IGNORE_INDEX and t != GEO]
        assert out.labels[out.labels != IGNORE_INDEX].tolist() == keep_placeholder_free
        assert len(keep) >= len(keep_placeholder_free)

    def test_count_mismatch(self):
        seq = make_seq([4, GEO, 5])
        geo, mask = geometry(2, 1, [1, 1])
        with pytest.raises(ValueError, match="1 placeholders, 2 graphs"):
            inject_tokens(seq, geo, mask, GEO)

    def test_assignment(self):
        seq = make_seq([4, GEO, 5])
        geo, mask = geometry(3, 2, [2, 1, 2])
        out = inject_tokens(seq, geo, mask, GEO, assignment=[1])
        assert len(out) == 3
        np.testing.assert_array_equal(out.embeddings.data[1], geo.data[1, 0])

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(2, 6), min_size=1, max_size=12), st.data())
    def test_bookkeeping_reversible(self, ids, data):
        ids = np.array(ids)
        n_ph = data.draw(st.integers(0, 3))
        spots = data.draw(st.lists(st.integers(0, len(ids)), min_size=n_ph, max_size=n_ph))
        for s in sorted(spots, reverse=True):
            ids = np.insert(ids, s, GEO)
        counts = data.draw(st.lists(st.integers(1, 4), min_size=n_ph, max_size=n_ph))
        seq = make_seq(ids)
        geo, mask = geometry(n_ph, 4, counts) if n_ph else geometry(0, 1, np.zeros(0, int))
        out = inject_tokens(seq, geo, mask, GEO)
        assert len(out) == len(ids) + sum(c - 1 for c in counts)
        src = original_index_map(len(out), out.injections)
        text = src >= 0
        np.testing.assert_array_equal(out.embeddings.data[text], seq.embeddings.data[src[text]])
        np.testing.assert_array_equal(out.token_ids[text], ids[src[text]])
        assert (np.diff(src[text]) > 0).all()
        assert (out.labels[~text] == IGNORE_INDEX).all()
        assert (out.token_ids[~text] == -1).all()
        assert len(out.attention_mask) == len(out.labels) == len(out)


class TestRetrieve:
    def test_shape_and_zero_slots(self):
        res, X, b = patches([6, 9], rho=0.5)
        stk = small_stack()
        out = retrieve_geometry(res, X, b, stk)
        assert out.shape == (2, res.max_tokens, 4)
        assert not out.data[~res.mask].any()
        assert np.abs(out.data[res.mask]).sum() > 0

    def test_single_node_single_patch(self):
        X = np.array([[0.3, -1.2, 0.7]])
        res = patch_from_logits(np.zeros(1), X, np.zeros((1, 3)), np.zeros(1, int), PatchConfig())
        stk = small_stack()
        retrieve_geometry(res, X, np.zeros(1, int), stk)
        w = stk.blocks[0].cross_attn._weights
        assert w.shape[-1] == 1 and (w == 1.0).all()

    def test_attention_rows_sum_to_one(self):
        res, X, b = patches([4, 11, 7], rho=0.6)
        stk = small_stack(blocks=2)
        retrieve_geometry(res, X, b, stk)
        ws = stk.attention_weights()
        assert len(ws) == 4
        for w in ws:
            assert np.abs(w.sum(axis=-1) - 1.0).max() <= 1e-12
        cross = stk.blocks[0].cross_attn._weights
        assert (cross[0, :, :, 4:] == 0.0).all()  # padded nodes of the 4-atom graph
        self_w = stk.blocks[0].self_attn._weights
        for g in range(3):
            assert (self_w[g][..., ~res.mask[g]] == 0.0).all()

    def test_graph_isolation(self):
        res, X, b = patches([5, 8], rho=0.5)
        stk = small_stack()
        base = retrieve_geometry(res, X, b, stk).data
        X2 = X.copy()
        X2[b == 1] = 0.0
        res2 = patch_from_logits(res.logits.data, X2, np.zeros((13, 3)), b, PatchConfig(rho=0.5))
        res2.tokens.data[0] = res.tokens.data[0]
        out = retrieve_geometry(res2, X2, b, stk).data
        assert np.abs(out[0] - base[0]).max() <= 1e-12

    def test_empty_patch_set(self):
        res, X, b = patches([4, 4])
        mask = res.mask.copy()
        mask[1] = False
        bad = PatchResult(res.tokens, mask, res.anchors, res.counts)
        with pytest.raises(ValueError, match="empty patch set"):
            retrieve_geometry(bad, X, b, small_stack())

    def test_end_to_end_gradients(self):
        rng = np.random.default_rng(3)
        sizes = [5, 4]
        b = np.repeat([0, 1], sizes)
        X = DiffArray(rng.normal(size=(9, 3)), requires_grad=True)
        P = rng.normal(size=(9, 3))
        l = DiffArray(rng.normal(size=9), requires_grad=True)
        stk = small_stack()
        seq0 = make_seq([4, GEO, 5, 6, GEO, 7])
        E = DiffArray(seq0.embeddings.data.copy(), requires_grad=True)
        seq = ModalitySequence(E, seq0.attention_mask, seq0.labels, seq0.token_ids)
        target = rng.normal(size=(20, 4))
        state = {}

        def loss():
            res = patch_from_logits(l, X, P, b, PatchConfig(rho=0.5))
            state["sel"] = res.selection()
            out = inject_tokens(seq, retrieve_geometry(res, X, b, stk), res.mask, GEO)
            diff = out.embeddings - target[: len(out)]
            return (diff * diff).sum()

        rep = finite_diff_check(loss, dict(stk.parameters(), X=X, l=l, E=E), selection=lambda: state["sel"])
        assert rep.passed(1e-5), rep.max_rel_error


def test_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(d_enc=4, d_llm=4, blocks=0)
    with pytest.raises(ValueError):
        FusionConfig(d_enc=4, d_llm=4, d_model=10, heads=4)
