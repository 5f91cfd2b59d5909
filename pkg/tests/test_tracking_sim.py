"""
テストチャネル方式シミュレータのテスト
"""
import math

import numpy as np
import pytest

from app.causal_ceo import model_core, rdf, tracking_sim
from app.causal_ceo.errors import InfeasibleError, ModelError
from app.causal_ceo.models import ChannelSet, SchemeConfig, SourceModel


def _scheme(a, sigma_w2, d, **kwargs):
    q = rdf.make_query(a, 1.0, sigma_w2, d)
    _, alloc = rdf.ceo_rdf(q)
    return SchemeConfig(model=q.model, channels=q.channels, allocation=alloc, **kwargs)


class TestTestChannel:
    def test_sigma_z_for_symmetric_point(self, memoryless_model, two_unit_channels):
        ss = model_core.steady_state(memoryless_model, two_unit_channels)
        assert tracking_sim.sigma_z_from_dk(ss, 0, 2.0 / 3.0) == pytest.approx(0.25)

    def test_sigma_z_is_infinite_at_source_variance(self, memoryless_model, two_unit_channels):
        ss = model_core.steady_state(memoryless_model, two_unit_channels)
        assert math.isinf(tracking_sim.sigma_z_from_dk(ss, 1, 1.0))

    def test_sigma_z_below_causal_mmse(self, memoryless_model, two_unit_channels):
        ss = model_core.steady_state(memoryless_model, two_unit_channels)
        with pytest.raises(InfeasibleError):
            tracking_sim.sigma_z_from_dk(ss, 0, 0.4)

    def test_channel_marginal_check(self, memoryless_model, two_unit_channels):
        ss = model_core.steady_state(memoryless_model, two_unit_channels)
        check = tracking_sim.channel_marginal_check(ss, 0, 0.25)
        assert check.d_k == pytest.approx(2.0 / 3.0, abs=1e-10)
        assert check.rho_k == pytest.approx(0.125, abs=1e-10)

    @pytest.mark.parametrize("a,d_k", [(0.5, 0.9), (-0.8, 1.5), (1.2, 3.0)])
    def test_marginal_check_reproduces_target(self, a, d_k):
        ss = model_core.steady_state(SourceModel(a=a, sigma_v2=1.0), ChannelSet(sigma_w2=[1.0]))
        z = tracking_sim.sigma_z_from_dk(ss, 0, d_k)
        check = tracking_sim.channel_marginal_check(ss, 0, z)
        assert check.d_k == pytest.approx(d_k, rel=1e-9)
        s = ss.s[0]
        assert check.rho_k == pytest.approx(s * (1.0 - s / d_k), rel=1e-8)

    def test_marginal_check_without_test_channel(self):
        ss = model_core.steady_state(SourceModel(a=0.5, sigma_v2=1.0), ChannelSet(sigma_w2=[1.0]))
        check = tracking_sim.channel_marginal_check(ss, 0, math.inf)
        assert check.d_k == pytest.approx(4.0 / 3.0)
        s = ss.s[0]
        assert check.rho_k == pytest.approx(s * (1.0 - s * 0.75), rel=1e-12)


class TestAugmentedSystem:
    def test_exact_decoder_at_symmetric_point(self, memoryless_model, two_unit_channels):
        ss = model_core.steady_state(memoryless_model, two_unit_channels)
        sys = tracking_sim.build_augmented(ss, [0.25, 0.25])
        assert sys.dim == 3
        assert tracking_sim.exact_decoder_mmse(sys) == pytest.approx(0.5, abs=1e-10)

    def test_wrong_number_of_test_channels(self, memoryless_model, two_unit_channels):
        ss = model_core.steady_state(memoryless_model, two_unit_channels)
        with pytest.raises(ModelError):
            tracking_sim.build_augmented(ss, [0.25])

    def test_stationary_covariance(self):
        ss = model_core.steady_state(SourceModel(a=0.5, sigma_v2=1.0), ChannelSet(sigma_w2=[1.0]))
        cov = tracking_sim.stationary_covariance(tracking_sim.build_augmented(ss, [1.0]))
        assert cov[0, 0] == pytest.approx(4.0 / 3.0)
        # X̄ の分散は σ_X² − s
        assert cov[1, 1] == pytest.approx(4.0 / 3.0 - ss.s[0], rel=1e-9)

    def test_stationary_covariance_requires_stable_source(self):
        ss = model_core.steady_state(SourceModel(a=1.2, sigma_v2=1.0), ChannelSet(sigma_w2=[1.0]))
        with pytest.raises(ModelError):
            tracking_sim.stationary_covariance(tracking_sim.build_augmented(ss, [1.0]))

    @pytest.mark.parametrize("a", [0.0, 0.5, -0.9, 1.3])
    def test_noiseless_test_channel_recovers_observer_marginals(self, a):
        rng = np.random.default_rng(11)
        for _ in range(5):
            m = SourceModel(a=a, sigma_v2=float(rng.uniform(0.2, 2.0)))
            ss = model_core.steady_state(m, ChannelSet(sigma_w2=[float(rng.uniform(0.3, 3.0))]))
            decoder = tracking_sim.steady_decoder(tracking_sim.build_augmented(ss, [1e-13]))
            assert decoder.filtered[0, 0] == pytest.approx(ss.s[0], abs=1e-10)
            assert decoder.predicted[0, 0] == pytest.approx(ss.q[0], abs=1e-10)


class TestSchemeRate:
    def test_symmetric(self, symmetric_query):
        ss = model_core.steady_state(symmetric_query.model, symmetric_query.channels)
        _, alloc = rdf.ceo_rdf(symmetric_query)
        terms, total = tracking_sim.scheme_rate(alloc, ss)
        assert terms == pytest.approx([0.5 * math.log(2.0)] * 2, abs=1e-8)
        assert total == pytest.approx(1.5 * math.log(2.0), abs=1e-8)

    def test_matches_ceo_rate_with_memory(self):
        q = rdf.make_query(0.5, 1.0, [1.0, 2.0], 0.6)
        ss = model_core.steady_state(q.model, q.channels)
        rate, alloc = rdf.ceo_rdf(q)
        _, total = tracking_sim.scheme_rate(alloc, ss)
        assert total == pytest.approx(rate, abs=1e-8)


class TestFusionReport:
    def test_gap_with_memory(self):
        report = tracking_sim.fusion_discrepancy_report(SourceModel(a=0.5, sigma_v2=1.0), ChannelSet(sigma_w2=[1.0, 1.0]))
        assert report.absolute_gap == pytest.approx(0.342330 - 0.331612, abs=2e-5)
        assert report.remote_gap > 0.0
        assert report.relative_gap == pytest.approx(report.absolute_gap / report.s_joint_riccati)

    def test_no_gap_without_memory(self):
        report = tracking_sim.fusion_discrepancy_report(SourceModel(a=0.0, sigma_v2=1.0), ChannelSet(sigma_w2=[1.0, 3.0]))
        assert report.absolute_gap <= 1e-12
        assert abs(report.ceo_gap) <= 1e-8


class TestSimulation:
    def test_symmetric_report(self):
        report = tracking_sim.simulate(_scheme(0.0, [1.0, 1.0], 0.5, horizon=2000, trials=2, seed=1))
        assert report.achieved_mse_exact == pytest.approx(0.5, abs=1e-9)
        assert report.target_d == 0.5
        assert report.sigma_z2 == pytest.approx([0.25, 0.25], abs=1e-9)
        assert report.d_k_check == pytest.approx(report.d_k_target, abs=1e-9)
        assert report.rho_k_check == pytest.approx(report.rho_k_target, abs=1e-9)
        assert report.burn_in >= tracking_sim.MIN_BURN_IN
        assert report.samples == 4000
        assert report.standard_error > 0.0
        assert len(report.xbar_variance_empirical) == 2

    def test_workers_do_not_change_results(self):
        one = tracking_sim.simulate(_scheme(0.6, [0.5, 1.5], 0.7, horizon=500, trials=4, seed=9, workers=1))
        many = tracking_sim.simulate(_scheme(0.6, [0.5, 1.5], 0.7, horizon=500, trials=4, seed=9, workers=3))
        assert one.model_dump() == many.model_dump()

    def test_unstable_source_runs_in_error_coordinates(self):
        ss = model_core.steady_state(SourceModel(a=1.2, sigma_v2=1.0), ChannelSet(sigma_w2=[1.0, 1.0]))
        report = tracking_sim.simulate(_scheme(1.2, [1.0, 1.0], 2.0 * ss.s_joint_riccati, horizon=500, trials=2))
        assert math.isfinite(report.achieved_mse_empirical)
        assert report.xbar_variance_empirical == []
        assert any("error coordinates" in w for w in report.warnings)

    def test_exact_only(self):
        report = tracking_sim.simulate(_scheme(0.5, [1.0, 1.0], 0.6, monte_carlo=False))
        assert report.achieved_mse_empirical is None
        assert report.burn_in == 0
        assert report.achieved_mse_exact is not None

    @pytest.mark.parametrize("a,sigma_w2,d", [(0.7, [1.0, 2.0], 0.9), (-0.5, [0.5, 1.0, 1.5], 0.5), (1.2, [1.0, 1.0], 2.0)])
    def test_channel_checks_match_targets_with_memory(self, a, sigma_w2, d):
        ss = model_core.steady_state(SourceModel(a=a, sigma_v2=1.0), ChannelSet(sigma_w2=sigma_w2))
        d = max(d, 1.5 * ss.s_joint_riccati)
        report = tracking_sim.simulate(_scheme(a, sigma_w2, d, monte_carlo=False))
        assert report.d_k_check == pytest.approx(report.d_k_target, rel=1e-9)
        assert report.rho_k_check == pytest.approx(report.rho_k_target, rel=1e-8)

    def test_no_interval_check_without_exact_covariance(self):
        report = tracking_sim.simulate(_scheme(0.5, [1.0, 1.0], 0.6, horizon=500, trials=2, exact_covariance=False))
        assert report.achieved_mse_exact is None
        assert report.achieved_mse_empirical is not None
        assert report.within_ci is None

    def test_trace_rows(self):
        report, trace = tracking_sim.run_simulation(_scheme(0.0, [1.0, 1.0], 0.5, horizon=50, trials=1, trace=True))
        assert len(trace) == 50
        assert trace[0]["step"] == 1
        assert set(trace[0]) == {"step", "x", "xhat", "sq_err", "xbar_1", "b_1", "xbar_2", "b_2"}
        assert report.samples == 50

    def test_allocation_must_match_channels(self):
        cfg = _scheme(0.0, [1.0, 1.0], 0.5)
        with pytest.raises(ModelError):
            tracking_sim.simulate(cfg.model_copy(update={"channels": ChannelSet(sigma_w2=[1.0, 1.0, 1.0])}))


@pytest.mark.slow
class TestMonteCarloClosure:
    @pytest.mark.parametrize("a,sigma_w2,d", [(0.0, [1.0, 1.0], 0.5), (0.5, [1.0, 2.0], 0.6)])
    def test_empirical_within_four_standard_errors(self, a, sigma_w2, d):
        report = tracking_sim.simulate(_scheme(a, sigma_w2, d, horizon=20_000, trials=4, seed=3))
        assert report.within_ci is True
