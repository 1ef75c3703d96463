import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gradsurgery import surgery
from gradsurgery.errors import DegenerateTriplet, MismatchedStats, ValidationError
from gradsurgery.geometry import SimilarityPair
from gradsurgery.losses import LossParams, loss_function, numeric_gradient
from gradsurgery.surgery import (
    DirectionKind,
    MaskKind,
    PairWeightKind,
    RelativeStats,
    SurgeryConfig,
    TripletWeightKind,
    best_combination_preset,
    compose,
    pair_weights,
    positive_mask,
    relative_stats,
    triplet_weight,
    unit_directions,
)

from conftest import random_unit, relative_error

E1, E2, E3 = np.eye(3)
CFG = SurgeryConfig()
sims_st = st.floats(-1.0, 1.0)


def non_degenerate(rng, d, n):
    out = []
    while len(out) < n:
        f_a, f_p, f_n = random_unit(rng, d, 3)
        if f_a @ f_p < 1 - 1e-6 and f_a @ f_n < 1 - 1e-6:
            out.append((f_a, f_p, f_n))
    return out


class TestDirections:
    def test_cosine_example(self):
        dirs = unit_directions("cosine", E1, E2, E3)
        np.testing.assert_array_equal(dirs.e_p, -E1)
        np.testing.assert_array_equal(dirs.e_n, E1)
        np.testing.assert_array_equal(dirs.e_ap, -E2)
        np.testing.assert_array_equal(dirs.e_an, E3)

    def test_cosine_orthogonal_example(self):
        # Hand Gram-Schmidt: axis (1,-1,0)/sqrt2, e_n=(1,0,0) has 1/sqrt2 along it,
        # residual (1,0,0) - (1/2)(1,-1,0) = (1/2, 1/2, 0).
        f_n = np.array([0.6, 0.0, 0.8])
        dirs = unit_directions("cosine_orthogonal", E1, E2, f_n)
        np.testing.assert_allclose(dirs.e_n, [0.70711, 0.70711, 0], atol=1e-5)

    def test_euclidean_coincident(self):
        with pytest.raises(DegenerateTriplet):
            unit_directions("euclidean", E1, E1, E2)

    def test_euclidean_directions(self):
        dirs = unit_directions("euclidean", E1, E2, E3)
        np.testing.assert_allclose(dirs.e_p, (E2 - E1) / math.sqrt(2))
        np.testing.assert_allclose(dirs.e_n, (E1 - E3) / math.sqrt(2))
        np.testing.assert_allclose(dirs.e_ap, -dirs.e_p)
        np.testing.assert_allclose(dirs.e_an, -dirs.e_n)

    @pytest.mark.parametrize("kind", list(DirectionKind))
    def test_unit_norm(self, rng, kind):
        for trip in non_degenerate(rng, 8, 1000):
            for v in unit_directions(kind, *trip):
                assert abs(np.linalg.norm(v) - 1.0) < 1e-9

    @pytest.mark.parametrize("kind", ["euclidean_orthogonal", "cosine_orthogonal"])
    def test_orthogonality(self, rng, kind):
        for f_a, f_p, f_n in non_degenerate(rng, 8, 1000):
            dirs = unit_directions(kind, f_a, f_p, f_n)
            assert abs(dirs.e_n @ (f_a - f_p)) < 1e-9
            assert abs(dirs.e_an @ (f_a - f_p)) < 1e-9

    def test_anchor_toggle(self, rng):
        f_a, f_p, f_n = non_degenerate(rng, 6, 1)[0]
        kept = unit_directions("cosine_orthogonal", f_a, f_p, f_n, orthogonalize_anchor=False)
        np.testing.assert_array_equal(kept.e_an, f_n)

    def test_degenerate_orthogonalization_is_zero(self):
        # e_n = f_a is parallel to f_a - f_p when f_p = -f_a.
        dirs = unit_directions("cosine_orthogonal", E1, -E1, E2)
        np.testing.assert_array_equal(dirs.e_n, 0.0)


class TestPairWeights:
    def test_constant(self):
        assert pair_weights("constant", SimilarityPair(0.3, -0.2), CFG) == (1, 1)

    def test_euclidean(self):
        p = pair_weights("euclidean", SimilarityPair(0.5, 0.5), CFG)
        assert p == pytest.approx((1.0, 1.0))

    def test_linear(self):
        p = pair_weights("linear", SimilarityPair(0.8, 0.6), CFG)
        assert p == pytest.approx((0.2, 0.6))

    def test_sigmoid(self):
        p = pair_weights("sigmoid", SimilarityPair(0.8, 0.3), CFG)
        assert p.p_pos == pytest.approx(1 / (1 + math.exp(0.6)), abs=1e-12)
        assert p.p_neg == pytest.approx(1 / (1 + math.exp(2.0)), abs=1e-12)
        assert p == pytest.approx((0.35434, 0.11920), abs=1e-5)

    def test_sigmoid_ms(self):
        rel = RelativeStats(math.exp(0.6), 1.0, "sigmoid")
        p = pair_weights("sigmoid_ms", SimilarityPair(0.8, 0.3), CFG, rel)
        assert p.p_pos == pytest.approx(0.27441, abs=1e-5)
        assert p.p_pos == pytest.approx(1 / (2 * math.exp(0.6)), abs=1e-12)

    def test_linear_ms(self):
        rel = RelativeStats(0.3, -0.05, "linear")
        p = pair_weights("linear_ms", SimilarityPair(0.8, 0.6), CFG, rel)
        assert p == pytest.approx((0.14, 0.57), abs=1e-12)

    def test_mismatched_stats(self):
        with pytest.raises(MismatchedStats):
            pair_weights("sigmoid_ms", SimilarityPair(0.8, 0.3), CFG, RelativeStats(0, 0, "linear"))

    def test_clamped(self):
        assert pair_weights("linear", SimilarityPair(0.5, -0.4), CFG).p_neg == 0.0
        rel = RelativeStats(1.5, 0.0, "linear")
        assert pair_weights("linear_ms", SimilarityPair(0.5, 0.4), CFG, rel).p_pos == 0.0

    @given(sims_st, sims_st)
    def test_empty_sets_reduce_bitwise(self, s_ap, s_an):
        sims = SimilarityPair(s_ap, s_an)
        sig_rel = relative_stats("sigmoid", sims, [], [], CFG)
        lin_rel = relative_stats("linear", sims, [], [], CFG)
        assert pair_weights("sigmoid_ms", sims, CFG, sig_rel) == pair_weights("sigmoid", sims, CFG)
        assert pair_weights("linear_ms", sims, CFG, lin_rel) == pair_weights("linear", sims, CFG)

    def test_monotone(self):
        grid = np.linspace(0, 1, 201)
        lin_pos = [pair_weights("linear", SimilarityPair(s, 0.3), CFG).p_pos for s in grid]
        lin_neg = [pair_weights("linear", SimilarityPair(0.3, s), CFG).p_neg for s in grid]
        sig_pos = [pair_weights("sigmoid", SimilarityPair(s, 0.3), CFG).p_pos for s in grid]
        sig_neg = [pair_weights("sigmoid", SimilarityPair(0.3, s), CFG).p_neg for s in grid]
        assert np.all(np.diff(lin_pos) < 0)
        assert np.all(np.diff(lin_neg) >= 0)
        assert np.all(np.diff(sig_pos) < 0)
        assert np.all(np.diff(sig_neg) > 0)

    def test_sigmoid_ms_negative_decreasing_in_m(self):
        sims = SimilarityPair(0.7, 0.6)
        ms = np.linspace(0.1, 5, 50)
        w = [pair_weights("sigmoid_ms", sims, CFG, RelativeStats(1.0, m, "sigmoid")).p_neg for m in ms]
        assert np.all(np.diff(w) < 0)

    @pytest.mark.parametrize("m_neg", [0.25, 1.0, 3.0])
    def test_sigmoid_ms_max_penalty(self, m_neg):
        p = pair_weights("sigmoid_ms", SimilarityPair(0.5, 1.0), CFG,
                         RelativeStats(1.0, m_neg, "sigmoid"))
        assert abs(p.p_neg - 1 / (m_neg + math.exp(-5))) < 1e-12

    def test_guarded_exponent(self):
        cfg = SurgeryConfig(beta=1e6)
        p = pair_weights("sigmoid", SimilarityPair(0.0, -1.0), cfg)
        assert math.isfinite(p.p_neg) and p.p_neg > 0


class TestRelativeStats:
    def test_empty(self):
        sims = SimilarityPair(0.8, 0.6)
        assert relative_stats("sigmoid", sims, [], [], CFG)[:2] == (1.0, 1.0)
        assert relative_stats("linear", sims, [], [], CFG)[:2] == (0.0, 0.0)

    def test_linear_example(self):
        rel = relative_stats("linear", SimilarityPair(0.8, 0.6), [0.5], [0.65], CFG)
        assert rel.m_pos == pytest.approx(0.3)
        assert rel.m_neg == pytest.approx(-0.05)

    def test_sigmoid_means(self):
        sims = SimilarityPair(0.8, 0.6)
        rel = relative_stats("sigmoid", sims, [0.5, 0.7], [0.65], CFG)
        assert rel.m_pos == pytest.approx((math.exp(2 * 0.3) + math.exp(2 * 0.1)) / 2)
        assert rel.m_neg == pytest.approx(math.exp(-10 * -0.05))


class TestTripletWeights:
    def test_examples(self):
        assert triplet_weight("constant", SimilarityPair(0.1, 0.9), 1.0) == 0.5
        assert triplet_weight("cosine", SimilarityPair(0.4, 0.4), 1.0) == 0.5
        assert triplet_weight("cosine", SimilarityPair(0.8, 0.3), 1.0) == pytest.approx(
            1 / (1 + math.exp(0.5)), abs=1e-12)
        assert triplet_weight("circle", SimilarityPair(0.8, 0.3), 1.0) == pytest.approx(
            1 / (1 + math.exp(0.87)), abs=1e-12)
        assert triplet_weight("cosine", SimilarityPair(0.8, 0.3), 1.0) == pytest.approx(0.37754, abs=1e-5)
        assert triplet_weight("circle", SimilarityPair(0.8, 0.3), 1.0) == pytest.approx(0.29526, abs=1e-5)

    @given(sims_st, sims_st, st.floats(0.1, 10.0))
    def test_open_unit_interval(self, s_ap, s_an, tau):
        sims = SimilarityPair(s_ap, s_an)
        for kind in ("cosine", "circle"):
            assert 0 < triplet_weight(kind, sims, tau) < 1
        assert triplet_weight("constant", sims, tau) == 0.5


class TestMasks:
    def test_sc1(self):
        assert positive_mask("sc1", SimilarityPair(0.3, 0.5)) is False
        assert positive_mask("sc1", SimilarityPair(0.5, 0.3)) is True

    def test_sc2_boundary(self):
        assert positive_mask("sc2", SimilarityPair(0.3, 0.1)) is True
        assert positive_mask("sc2", SimilarityPair(0.9, 0.1)) is False

    def test_none(self):
        assert positive_mask("none", SimilarityPair(0.0, 1.0)) is True

    @pytest.mark.parametrize("mask", ["sc1", "sc2"])
    def test_mask_exactness(self, rng, mask):
        masked = SurgeryConfig(mask=mask, pair_weight="linear", triplet_weight="circle")
        plain = masked.with_(mask="none")
        hits = 0
        for trip in non_degenerate(rng, 4, 500):
            sims = surgery.similarities(*trip)
            got, ref = compose(masked, *trip), compose(plain, *trip)
            np.testing.assert_array_equal(got.g_n, ref.g_n)
            if not positive_mask(mask, sims):
                hits += 1
                assert not np.any(got.g_p)
            else:
                np.testing.assert_array_equal(got.g_p, ref.g_p)
        assert hits > 10


class TestCompose:
    def test_cosine_baseline_example(self):
        upd = compose(SurgeryConfig(), E1, E2, E3)
        np.testing.assert_allclose(upd.g_p, [-0.5, 0, 0])
        np.testing.assert_allclose(upd.g_n, [0.5, 0, 0])
        np.testing.assert_allclose(upd.g_a, [0, -0.5, 0.5])

    def test_sc1_masks_positive(self):
        f_a, f_p, f_n = E1, np.array([0.3, 0.0, math.sqrt(1 - 0.09)]), np.array([0.5, math.sqrt(0.75), 0])
        upd = compose(SurgeryConfig(mask="sc1"), f_a, f_p, f_n)
        assert np.array_equal(upd.g_p, np.zeros(3))

    @pytest.mark.parametrize("d", [3, 16, 64])
    def test_euclidean_matches_loss_gradient(self, rng, d):
        cfg = SurgeryConfig(direction="euclidean", pair_weight="euclidean", margin=0.3)
        loss = loss_function("euclidean", LossParams(margin=0.3))
        count = 0
        while count < 200:
            trip = tuple(random_unit(rng, d, 3))
            if loss(*trip) <= 1e-3:
                continue
            count += 1
            upd = compose(cfg, *trip)
            for g, role in zip(upd, ("anchor", "positive", "negative")):
                assert relative_error(g, numeric_gradient(loss, trip, role) / 4) < 1e-4

    @pytest.mark.parametrize("tau", [1.0, 5.0])
    def test_cosine_matches_loss_gradient(self, rng, tau):
        cfg = SurgeryConfig(direction="cosine", triplet_weight="cosine", tau=tau)
        loss = loss_function("cosine", LossParams(tau=tau))
        for trip in non_degenerate(rng, 16, 200):
            upd = compose(cfg, *trip)
            for g, role in zip(upd, ("anchor", "positive", "negative")):
                assert relative_error(g, numeric_gradient(loss, trip, role) / tau) < 1e-4

    def test_propagates_degenerate(self):
        with pytest.raises(DegenerateTriplet):
            compose(SurgeryConfig(direction="euclidean"), E1, E1, E2)


class TestConfig:
    def test_preset(self):
        cfg = best_combination_preset()
        assert cfg.direction is DirectionKind.COSINE_ORTHOGONAL
        assert cfg.pair_weight is PairWeightKind.LINEAR_MS
        assert cfg.triplet_weight is TripletWeightKind.CIRCLE
        assert cfg.mask is MaskKind.NONE
        assert (cfg.alpha, cfg.beta, cfg.lam) == (2.0, 10.0, 0.5)

    @pytest.mark.parametrize("bad", [dict(tau=0), dict(alpha=-1), dict(beta=0),
                                     dict(lam=1.5), dict(margin=-0.1)])
    def test_validation(self, bad):
        with pytest.raises(ValidationError):
            SurgeryConfig(**bad)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            SurgeryConfig(direction="sideways")
