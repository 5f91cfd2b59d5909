"""
model_core のテスト
"""
import math

import pytest

from app.causal_ceo import model_core
from app.causal_ceo.errors import ModelError
from app.causal_ceo.models import ChannelSet, ExtVariance, JointMmseMode, SourceModel


class TestStationaryVariance:
    def test_stable(self):
        v = model_core.stationary_variance(SourceModel(a=0.5, sigma_v2=1.0))
        assert v.variance == pytest.approx(4.0 / 3.0)
        assert not v.is_infinite

    @pytest.mark.parametrize("a", [1.0, -1.0, 1.2])
    def test_unstable_is_infinite(self, a):
        v = model_core.stationary_variance(SourceModel(a=a, sigma_v2=1.0))
        assert v.is_infinite
        assert v.precision == 0.0
        assert math.isinf(v.variance)


class TestLemmas:
    def test_lemma_back(self):
        assert model_core.lemma_back(1.0, 2.0) == pytest.approx(0.5)

    def test_lemma_back_rejects_impossible_pair(self):
        with pytest.raises(ModelError):
            model_core.lemma_back(2.0, 1.0)

    def test_one_shot_mmse_infinite_prior(self):
        assert model_core.one_shot_mmse(ExtVariance.infinite(), 0.7) == pytest.approx(0.7)

    def test_one_shot_joint_mmse(self):
        mmse, weights = model_core.one_shot_joint_mmse(ExtVariance.from_variance(1.0), ChannelSet(sigma_w2=[1.0, 1.0]))
        assert mmse == pytest.approx(1.0 / 3.0)
        assert weights == pytest.approx([1.0 / 3.0, 1.0 / 3.0])

    def test_lemma_combo_recovers_joint_estimate(self):
        # 2つの一回推定（誤差 1/2）の融合は 1/3
        fused, weights = model_core.lemma_combo(ExtVariance.from_variance(1.0), [0.5, 0.5])
        assert fused == pytest.approx(1.0 / 3.0)
        assert weights == pytest.approx([2.0 / 3.0, 2.0 / 3.0])

    def test_lemma_combo_single_estimate(self):
        fused, weights = model_core.lemma_combo(ExtVariance.infinite(), [0.4])
        assert fused == pytest.approx(0.4)
        assert weights == pytest.approx([1.0])

    def test_lemma_combo_rejects_nonpositive_precision(self):
        with pytest.raises(ModelError):
            model_core.lemma_combo(ExtVariance.from_variance(0.1), [1.0, 1.0])


class TestRiccati:
    def test_worked_fixed_point(self):
        p, q = model_core.steady_state_mmse(SourceModel(a=0.5, sigma_v2=1.0), 1.0)
        assert p == pytest.approx((-7.0 + math.sqrt(65.0)) / 2.0, abs=1e-12)
        assert q == pytest.approx(0.25 * p + 1.0)

    def test_memoryless_step(self):
        q, p = model_core.riccati_step(0.3, SourceModel(a=0.0, sigma_v2=1.0), 1.0)
        assert q == 1.0
        assert p == pytest.approx(0.5)

    def test_fixed_point_is_stationary(self):
        m = SourceModel(a=1.2, sigma_v2=0.7)
        p, _ = model_core.steady_state_mmse(m, 2.0)
        _, p_next = model_core.riccati_step(p, m, 2.0)
        assert p_next == pytest.approx(p, rel=1e-14)

    @pytest.mark.parametrize("a,sigma_v2,c", [
        (0.0, 1.0, 1.0),
        (0.9, 0.3, 0.5),
        (-0.95, 2.0, 3.0),
        (1.1, 1.0, 0.4),
        (-1.1, 0.5, 8.0),
    ])
    def test_closed_form_matches_iteration(self, a, sigma_v2, c):
        m = SourceModel(a=a, sigma_v2=sigma_v2)
        closed, _ = model_core.steady_state_mmse(m, c)
        iterated, _, _ = model_core.riccati_iterate(m, c, max_iter=10_000, tol=0.0)
        assert iterated == pytest.approx(closed, rel=1e-10)

    def test_no_observations_unstable_rejected(self):
        with pytest.raises(ModelError):
            model_core.steady_state_mmse(SourceModel(a=1.5, sigma_v2=1.0), 0.0)

    def test_no_observations_stable_gives_prior(self):
        p, _ = model_core.steady_state_mmse(SourceModel(a=0.5, sigma_v2=1.0), 0.0)
        assert p == pytest.approx(4.0 / 3.0)


class TestSteadyState:
    def test_fusion_gap_example(self):
        ss = model_core.steady_state(SourceModel(a=0.5, sigma_v2=1.0), ChannelSet(sigma_w2=[1.0, 1.0]))
        assert ss.s_joint_riccati == pytest.approx(0.342330, abs=1e-5)
        assert ss.s_joint_fusion == pytest.approx(0.331612, abs=1e-5)
        assert model_core.joint_mmse(ss, JointMmseMode.FUSION) == ss.s_joint_fusion
        assert model_core.joint_mmse(ss) == ss.s_joint_riccati

    @pytest.mark.parametrize("sigma_w2", [[1.0], [0.3, 2.0], [0.5, 1.0, 1.5, 2.5]])
    def test_memoryless_has_no_fusion_gap(self, sigma_w2):
        ss = model_core.steady_state(SourceModel(a=0.0, sigma_v2=1.3), ChannelSet(sigma_w2=sigma_w2))
        assert abs(ss.s_joint_riccati - ss.s_joint_fusion) <= 1e-12

    def test_symmetric_memoryless_values(self, memoryless_model, two_unit_channels):
        ss = model_core.steady_state(memoryless_model, two_unit_channels)
        assert ss.s == pytest.approx([0.5, 0.5])
        assert ss.q == pytest.approx([1.0, 1.0])
        assert ss.bar_v == pytest.approx([0.5, 0.5])
        assert ss.kappa == pytest.approx([0.5, 0.5])
        assert ss.s_joint_riccati == pytest.approx(1.0 / 3.0)
        assert model_core.innovation_variance(ss, 1) == pytest.approx(0.5)

    def test_joint_below_each_channel(self):
        ss = model_core.steady_state(SourceModel(a=0.8, sigma_v2=1.0), ChannelSet(sigma_w2=[0.5, 2.0, 1.0]))
        assert ss.s_joint_riccati < min(ss.s)

    def test_unstable_source(self):
        ss = model_core.steady_state(SourceModel(a=1.2, sigma_v2=1.0), ChannelSet(sigma_w2=[1.0, 1.0]))
        assert ss.sigma_x2.is_infinite
        assert all(math.isfinite(s) for s in ss.s)
        # 融合公式は 1/σ_X² = 0 で和の精度になる
        assert 1.0 / ss.s_joint_fusion == pytest.approx(sum(1.0 / s for s in ss.s))

    def test_predicted_keeps_infinity(self):
        m = SourceModel(a=0.5, sigma_v2=1.0)
        assert math.isinf(model_core.predicted(m, math.inf))
        assert model_core.predicted(m, 2.0) == pytest.approx(1.5)

    def test_one_shot_steady_state(self):
        ss = model_core.one_shot_steady_state(SourceModel(a=0.5, sigma_v2=0.75), ChannelSet(sigma_w2=[1.0]))
        assert ss.model.a == 0.0
        assert ss.sigma_x2.variance == pytest.approx(1.0)
        assert ss.s == pytest.approx([0.5])
        assert model_core.one_shot_steady_state(SourceModel(a=1.0, sigma_v2=1.0), ChannelSet(sigma_w2=[1.0])) is None


class TestModels:
    def test_channels_must_be_positive(self):
        with pytest.raises(ValueError):
            ChannelSet(sigma_w2=[1.0, 0.0])

    def test_source_must_be_finite(self):
        with pytest.raises(ValueError):
            SourceModel(a=math.nan, sigma_v2=1.0)
