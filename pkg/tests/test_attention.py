import math

import numpy as np
import pytest

from factdecay import autodiff as ad
from factdecay.attention import (
    AttentionConfig,
    _attend_segments,
    attend,
    attend_entity,
    embed_facts,
    margin_loss,
    sample_corruptions,
    time_feature,
    translational_distance,
)
from factdecay.autodiff import Tensor


def small_params(rng, n_entities, n_relations, cfg):
    from factdecay.training import init_params
    from factdecay.encoder import EncoderConfig

    return init_params(n_entities, n_relations, cfg, EncoderConfig(out_dim=3, layers=1), rng)


class TestTimeFeature:
    def test_zero_age_zero_bias_is_one(self):
        freq = Tensor(np.array([[0.7]]))
        bias = Tensor(np.array([[0.0]]))
        assert time_feature(5, 5, freq, bias).item() == 1.0

    def test_quarter_period(self):
        freq = Tensor(np.array([[math.pi / 2]]))
        bias = Tensor(np.array([[0.0]]))
        assert abs(time_feature(0, 1, freq, bias).item()) < 1e-12

    def test_scalar_arithmetic_oracle(self):
        freq = Tensor(np.array([[0.1]]))
        bias = Tensor(np.array([[0.2]]))
        out = time_feature(0, 3, freq, bias).item()
        assert out == pytest.approx(math.cos(0.5), abs=1e-15)

    def test_future_dated_rejected(self):
        freq = Tensor(np.array([[0.1]]))
        bias = Tensor(np.array([[0.0]]))
        with pytest.raises(ValueError, match="future-dated"):
            time_feature(7, 5, freq, bias)

    def test_bounded_for_any_inputs(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            freq = Tensor(rng.normal(size=(1, 1)) * 100)
            bias = Tensor(rng.normal(size=(1, 1)) * 100)
            out = time_feature(0, int(rng.integers(0, 10000)), freq, bias).item()
            assert -1.0 <= out <= 1.0

    def test_differentiable_wrt_freq_and_bias(self):
        rng = np.random.default_rng(3)
        freq = Tensor(rng.normal(size=(1, 1)), requires_grad=True)
        bias = Tensor(rng.normal(size=(1, 1)), requires_grad=True)

        def f():
            return ad.tsum(time_feature(2, 9, freq, bias))

        assert ad.check_gradients(f, [freq, bias]) < 1e-4


class TestEmbedFacts:
    def test_identity_projection_is_plain_concat(self):
        cfg = AttentionConfig(entity_dim=1, relation_dim=1, heads=1)
        params = {
            "entity_emb": Tensor(np.array([[2.0], [4.0]])),
            "relation_emb": Tensor(np.array([[3.0]])),
            "time_freq": Tensor(np.array([[0.0]])),
            "time_bias": Tensor(np.array([[0.0]])),
            "fact_proj": Tensor(np.eye(4)),
        }
        out = embed_facts([0], [0], [1], [7], params, cfg, t_now=7)
        np.testing.assert_allclose(out.data, [[2.0, 3.0, 4.0, 1.0]], atol=1e-15)

    def test_pure_function_of_inputs(self):
        rng = np.random.default_rng(4)
        cfg = AttentionConfig(entity_dim=3, relation_dim=2, heads=1)
        params = small_params(rng, 5, 2, cfg)
        batch = embed_facts([1, 3], [0, 1], [2, 4], [1, 2], params, cfg, t_now=5)
        one = embed_facts([3], [1], [4], [2], params, cfg, t_now=5)
        np.testing.assert_allclose(batch.data[1], one.data[0], atol=1e-15)

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(5)
        cfg = AttentionConfig(entity_dim=3, relation_dim=2, heads=1)
        params = small_params(rng, 6, 3, cfg)
        h, r, t, day, t_now = 2, 1, 5, 4, 9
        out = embed_facts([h], [r], [t], [day], params, cfg, t_now)
        # independent recomputation with raw numpy
        E = params["entity_emb"].data
        R = params["relation_emb"].data
        phi = np.cos((t_now - day) * params["time_freq"].data[0, 0]
                     + params["time_bias"].data[0, 0])
        stacked = np.concatenate([E[h], R[r], E[t], [phi]])
        expected = stacked @ params["fact_proj"].data
        np.testing.assert_allclose(out.data[0], expected, atol=1e-12)

    def test_out_of_range_ids_rejected(self):
        rng = np.random.default_rng(6)
        cfg = AttentionConfig(entity_dim=2, relation_dim=2, heads=1)
        params = small_params(rng, 3, 2, cfg)
        with pytest.raises(ValueError, match="entity id"):
            embed_facts([3], [0], [0], [0], params, cfg, t_now=1)
        with pytest.raises(ValueError, match="relation id"):
            embed_facts([0], [2], [0], [0], params, cfg, t_now=1)


class TestAttention:
    def _setup(self, seed, n_facts, heads=2):
        rng = np.random.default_rng(seed)
        cfg = AttentionConfig(entity_dim=3, relation_dim=2, heads=heads)
        params = small_params(rng, 6, 3, cfg)
        emb = Tensor(rng.normal(size=(n_facts, cfg.output_dim)), requires_grad=True)
        return cfg, params, emb

    def test_single_neighbor_gets_full_weight(self):
        cfg, params, emb = self._setup(7, 1)
        offsets = np.array([0, 1])
        weighted, per_head = _attend_segments(emb, offsets, params, cfg)
        for head in per_head:
            assert head.item() == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(weighted.data, emb.data, atol=1e-15)
        out = attend_entity(emb, params, cfg)
        expected = np.where(emb.data.sum(0) >= 0, emb.data.sum(0),
                            cfg.leaky_slope * emb.data.sum(0))
        np.testing.assert_allclose(out.data[0], expected, atol=1e-12)

    def test_identical_neighbors_share_weight(self):
        cfg, params, _ = self._setup(8, 2)
        row = np.random.default_rng(0).normal(size=(1, cfg.output_dim))
        emb = Tensor(np.vstack([row, row]))
        _, per_head = _attend_segments(emb, np.array([0, 2]), params, cfg)
        for head in per_head:
            np.testing.assert_allclose(head.data.reshape(-1), [0.5, 0.5], atol=1e-12)

    def test_three_neighbors_match_brute_force_oracle(self):
        cfg, params, emb = self._setup(9, 3, heads=2)
        out = attend_entity(emb, params, cfg)
        # straight-line recomputation: scores, softmax, weighted sum, average heads
        slope = cfg.leaky_slope
        F = emb.data
        acc = np.zeros(cfg.output_dim)
        for m in range(cfg.heads):
            s = F @ params[f"attn_score_{m}"].data
            s = np.where(s >= 0, s, slope * s).reshape(-1)
            e = np.exp(s - s.max())
            a = e / e.sum()
            acc += (a[:, None] * F).sum(axis=0)
        acc /= cfg.heads
        expected = np.where(acc >= 0, acc, slope * acc)
        np.testing.assert_allclose(out.data[0], expected, atol=1e-12)

    def test_weights_sum_to_one_per_head(self):
        cfg, params, emb = self._setup(10, 11)
        offsets = np.array([0, 4, 7, 11])
        _, per_head = _attend_segments(emb, offsets, params, cfg)
        for head in per_head:
            sums = np.add.reduceat(head.data, offsets[:-1], axis=0)
            np.testing.assert_allclose(sums, 1.0, atol=1e-9)

    def test_empty_neighborhood_rejected(self):
        cfg, params, _ = self._setup(11, 1)
        with pytest.raises(ValueError, match="empty neighborhood"):
            attend_entity(Tensor(np.empty((0, cfg.output_dim))), params, cfg)

    def test_neighborhood_order_invariance(self):
        rng = np.random.default_rng(12)
        cfg = AttentionConfig(entity_dim=3, relation_dim=2, heads=2)
        params = small_params(rng, 6, 3, cfg)
        facts = rng.normal(size=(5, cfg.output_dim))
        out1 = attend_entity(Tensor(facts), params, cfg)
        perm = rng.permutation(5)
        out2 = attend_entity(Tensor(facts[perm]), params, cfg)
        np.testing.assert_allclose(out1.data, out2.data, atol=1e-10)

    def test_attend_returns_rows_in_input_order(self):
        rng = np.random.default_rng(13)
        cfg = AttentionConfig(entity_dim=2, relation_dim=2, heads=1)
        params = small_params(rng, 4, 2, cfg)
        emb = Tensor(rng.normal(size=(4, cfg.output_dim)))
        heads_ids = np.array([1, 0, 1, 0])
        weighted, entity_emb, ids = attend(emb, heads_ids, params, cfg)
        assert weighted.shape == emb.shape
        assert ids.tolist() == [0, 1]
        # rows of the same entity, reordered, give the same entity embedding
        weighted2, entity_emb2, _ = attend(
            ad.gather_rows(emb, [1, 3, 0, 2]), np.array([0, 0, 1, 1]), params, cfg
        )
        np.testing.assert_allclose(entity_emb.data, entity_emb2.data, atol=1e-10)


class TestMarginLoss:
    def _params_1d(self, tail_pos, tail_neg):
        return {
            "entity_emb": Tensor(
                np.array([[0.0], [tail_pos], [tail_neg]]), requires_grad=True
            ),
            "relation_emb": Tensor(np.array([[0.0]]), requires_grad=True),
        }

    def test_satisfied_margin_contributes_zero(self):
        # d_valid = 0.5, d_corrupt = 2.0, margin 1.0 -> hinge floor
        params = self._params_1d(-0.5, -2.0)
        cfg = AttentionConfig(entity_dim=1, relation_dim=1, margin=1.0)
        pos = np.array([[0, 0, 1, 0]])
        neg = np.array([[0, 0, 2, 0]])
        assert margin_loss(pos, neg, params, cfg).item() == 0.0

    def test_partial_violation(self):
        # d_valid = 1.0, d_corrupt = 1.2, margin 0.5 -> 0.3
        params = self._params_1d(-1.0, -1.2)
        cfg = AttentionConfig(entity_dim=1, relation_dim=1, margin=0.5)
        pos = np.array([[0, 0, 1, 0]])
        neg = np.array([[0, 0, 2, 0]])
        assert margin_loss(pos, neg, params, cfg).item() == pytest.approx(0.3, abs=1e-12)

    def test_exact_translation_fit_gives_zero_distance(self):
        params = {
            "entity_emb": Tensor(np.array([[1.0, 0.0], [1.0, 1.0]])),
            "relation_emb": Tensor(np.array([[0.0, 1.0]])),
        }
        d = translational_distance([0], [0], [1], params)
        assert d.item() == 0.0

    def test_inverted_orientation_flips_the_gap(self):
        params = self._params_1d(-1.0, -3.0)
        pos = np.array([[0, 0, 1, 0]])
        neg = np.array([[0, 0, 2, 0]])
        standard = margin_loss(
            pos, neg, params, AttentionConfig(entity_dim=1, relation_dim=1, margin=1.0)
        ).item()
        inverted = margin_loss(
            pos, neg, params,
            AttentionConfig(entity_dim=1, relation_dim=1, margin=1.0, invert_margin=True),
        ).item()
        # d_valid=1, d_corrupt=3: standard max(1-3+1,0)=0; inverted max(3-1+1,0)=3
        assert standard == 0.0
        assert inverted == pytest.approx(3.0, abs=1e-12)

    def test_hinge_zero_iff_margin_met(self):
        rng = np.random.default_rng(14)
        for _ in range(30):
            dv, dc, m = rng.uniform(0, 3, size=3)
            m = m + 0.01
            params = self._params_1d(-dv, -dc)
            cfg = AttentionConfig(entity_dim=1, relation_dim=1, margin=float(m))
            loss = margin_loss(
                np.array([[0, 0, 1, 0]]), np.array([[0, 0, 2, 0]]), params, cfg
            ).item()
            if dc >= dv + m:
                assert loss == 0.0
            else:
                assert loss > 0.0

    def test_corruptions_avoid_existing_quadruples(self):
        rng = np.random.default_rng(15)
        quads = np.array([[0, 0, 1, 0], [0, 0, 2, 0], [1, 0, 0, 0]], dtype=np.int64)
        known = {tuple(q) for q in quads.tolist()}
        for _ in range(20):
            neg = sample_corruptions(quads, n_entities=4, rng=rng)
            for row in neg.tolist():
                assert tuple(row) not in known

    def test_gradients_match_finite_differences_on_toy_graph(self):
        rng = np.random.default_rng(16)
        cfg = AttentionConfig(entity_dim=3, relation_dim=3, margin=1.0)
        params = {
            "entity_emb": Tensor(rng.normal(size=(5, 3)), requires_grad=True),
            "relation_emb": Tensor(rng.normal(size=(2, 3)), requires_grad=True),
        }
        pos = np.array([[0, 0, 1, 0], [1, 1, 2, 1], [3, 0, 4, 2]], dtype=np.int64)
        neg = sample_corruptions(pos, 5, np.random.default_rng(0))

        def f():
            return margin_loss(pos, neg, params, cfg)

        err = ad.check_gradients(f, list(params.values()))
        assert err < 1e-4
