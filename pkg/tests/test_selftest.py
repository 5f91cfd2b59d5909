"""
検証スイートのテスト（標本数を減らして実行）
"""
import inspect

import pytest

from app.causal_ceo import selftest
from app.causal_ceo.errors import CeoError
from app.causal_ceo.models import JointMmseMode


def _assert_ok(result):
    assert result.ok, result.failures
    assert result.passed > 0


def test_random_query_is_feasible(rng):
    for _ in range(20):
        q = selftest.random_query(rng, max_K=3, mode=JointMmseMode.FUSION)
        assert 1 <= q.channels.K <= 3
        assert q.mode is JointMmseMode.FUSION


@pytest.mark.parametrize("name,kwargs", [
    ("riccati", {"count": 10}),
    ("fusion-gap", {"count": 10}),
    ("rdf-ordering", {"count": 20}),
    ("rdf-symmetric", {}),
    ("remote-forms", {"count": 10}),
    ("solver-oracle", {"count": 3, "points": 200}),
    ("directed-information", {"count": 10}),
    ("bt-bound", {"count": 5, "mc_samples": 50_000}),
    ("regions", {"samples": 50}),
])
def test_suite_passes(rng, name, kwargs):
    _assert_ok(selftest.SUITES[name](rng, **kwargs))


def test_memoryless_instances_are_checked_against_one_shot(rng):
    result = selftest.suite_fusion_gap(rng, count=10)
    _assert_ok(result)
    # 固定例2件 + 問題例毎に融合差と一回推定の2件
    assert result.passed == 2 + 2 * 10


def test_regions_suite_checks_sum_rate_vertex(rng):
    result = selftest.suite_regions(rng, samples=20)
    _assert_ok(result)
    assert result.passed == 4


def test_solver_oracle_default_grid():
    assert inspect.signature(selftest.suite_solver_oracle).parameters["points"].default == 2000


@pytest.mark.slow
def test_simulator_suite(rng):
    _assert_ok(selftest.suite_simulator(rng))


def test_run_single_suite():
    results = selftest.run_selftest(seed=1, suite="rdf-symmetric")
    assert [r.name for r in results] == ["rdf-symmetric"]
    assert results[0].ok


def test_runs_are_reproducible():
    first = selftest.run_selftest(seed=2, suite="fusion-gap")
    assert first == selftest.run_selftest(seed=2, suite="fusion-gap")


def test_unknown_suite():
    with pytest.raises(CeoError):
        selftest.run_selftest(suite="nope")
