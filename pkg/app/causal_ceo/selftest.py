"""
組み込みの検証スイート

各スイートは乱数で作った問題例に対して恒等式・不等式を確かめる。
シードを変えると問題例は変わるが、結果（全て合格）は変わらない。
"""
import logging
import math
from typing import Callable, Dict, List, Optional

import numpy as np

from . import model_core, rdf, tracking_sim
from .errors import CeoError
from .finite_bt import bound, information, regions
from .finite_bt.pmf import FinitePmf, Process, deterministic_copy_toy, product_axes, random_toy
from .models import (
    ChannelSet, CodeParams, JointMmseMode, RdfQuery, SchemeConfig, SourceModel, SuiteResult,
)

logger = logging.getLogger(__name__)

MAX_REPORTED_FAILURES = 5


class _Checks:
    """合否の集計"""

    def __init__(self, name: str):
        self.result = SuiteResult(name=name)

    def check(self, condition: bool, message: str) -> None:
        if condition:
            self.result.passed += 1
            return
        self.result.failed += 1
        if len(self.result.failures) < MAX_REPORTED_FAILURES:
            self.result.failures.append(message)
        logger.error(f"[{self.result.name}] {message}")


def random_model(rng: np.random.Generator, unstable_fraction: float = 0.1) -> SourceModel:
    if rng.random() < unstable_fraction:
        a = 1.1 if rng.random() < 0.5 else -1.1
    else:
        a = rng.uniform(-0.95, 0.95)
    return SourceModel(a=a, sigma_v2=rng.uniform(0.2, 2.0))


def random_query(
    rng: np.random.Generator,
    max_K: int = 4,
    symmetric: bool = False,
    mode: JointMmseMode = JointMmseMode.RICCATI,
    unstable_fraction: float = 0.1,
) -> RdfQuery:
    """実行可能域の内側に d を取ったランダムな問い合わせ"""
    m = random_model(rng, unstable_fraction)
    K = int(rng.integers(1, max_K + 1))
    if symmetric:
        sigma_w2 = [rng.uniform(0.1, 3.0)] * K
    else:
        sigma_w2 = list(rng.uniform(0.1, 3.0, size=K))
    ch = ChannelSet(sigma_w2=sigma_w2)
    ss = model_core.steady_state(m, ch)
    s_joint = model_core.joint_mmse(ss, mode)
    upper = ss.sigma_x2.variance if not ss.sigma_x2.is_infinite else 5.0 * s_joint
    d = s_joint + rng.uniform(0.05, 0.95) * (upper - s_joint)
    return RdfQuery(model=m, channels=ch, d=d, mode=mode)


def suite_riccati(rng: np.random.Generator, count: int = 100) -> SuiteResult:
    checks = _Checks("riccati")
    p, _ = model_core.steady_state_mmse(SourceModel(a=0.5, sigma_v2=1.0), 1.0)
    checks.check(abs(p - (-7.0 + math.sqrt(65.0)) / 2.0) <= 1e-12, f"worked fixed point {p}")
    for _ in range(count):
        m = random_model(rng)
        c = rng.uniform(0.3, 10.0)
        closed, _ = model_core.steady_state_mmse(m, c)
        iterated, _, _ = model_core.riccati_iterate(m, c, max_iter=10_000, tol=0.0)
        checks.check(abs(closed - iterated) <= 1e-10 * closed,
                     f"a={m.a}, sigma_v2={m.sigma_v2}, c={c}: closed {closed} vs iterated {iterated}")
    return checks.result


def suite_fusion_gap(rng: np.random.Generator, count: int = 100) -> SuiteResult:
    checks = _Checks("fusion-gap")
    ss = model_core.steady_state(SourceModel(a=0.5, sigma_v2=1.0), ChannelSet(sigma_w2=[1.0, 1.0]))
    checks.check(abs(ss.s_joint_riccati - 0.342330) <= 1e-5, f"riccati joint MMSE {ss.s_joint_riccati}")
    checks.check(abs(ss.s_joint_fusion - 0.331612) <= 1e-5, f"fusion joint MMSE {ss.s_joint_fusion}")
    for _ in range(count):
        K = int(rng.integers(1, 5))
        m = SourceModel(a=0.0, sigma_v2=rng.uniform(0.2, 2.0))
        ss = model_core.steady_state(m, ChannelSet(sigma_w2=list(rng.uniform(0.1, 3.0, size=K))))
        gap = abs(ss.s_joint_riccati - ss.s_joint_fusion)
        checks.check(gap <= 1e-12, f"memoryless fusion gap {gap}")
        one_shot, _ = model_core.one_shot_joint_mmse(ss.sigma_x2, ss.channels)
        checks.check(abs(ss.s_joint_riccati - one_shot) <= 1e-12, f"memoryless joint MMSE {ss.s_joint_riccati} vs one-shot {one_shot}")
    return checks.result


def suite_rdf_ordering(rng: np.random.Generator, count: int = 200) -> SuiteResult:
    checks = _Checks("rdf-ordering")
    for j in range(count):
        q = random_query(rng, symmetric=(j % 4 == 0))
        r_dir = rdf.direct_rdf(q)
        r_rm = rdf.remote_rdf(q)
        r_ceo, _ = rdf.ceo_rdf(q)
        r_wf, _ = rdf.waterfilling(q)
        label = f"a={q.model.a:.4g}, K={q.channels.K}, d={q.d:.6g}"
        checks.check(r_dir <= r_rm + 1e-9, f"{label}: direct {r_dir} > remote {r_rm}")
        checks.check(r_rm <= r_ceo + 1e-9, f"{label}: remote {r_rm} > ceo {r_ceo}")
        checks.check(r_ceo <= r_wf + 1e-9, f"{label}: ceo {r_ceo} > waterfilling {r_wf}")
        if j % 4 == 0:
            checks.check(abs(r_ceo - r_wf) <= 1e-6, f"{label}: symmetric ceo {r_ceo} != waterfilling {r_wf}")
    return checks.result


def suite_rdf_symmetric(rng: np.random.Generator) -> SuiteResult:
    checks = _Checks("rdf-symmetric")
    q = rdf.make_query(0.0, 1.0, [1.0, 1.0], 0.5)
    rate, alloc = rdf.ceo_rdf(q)
    checks.check(abs(rate - 1.5 * math.log(2.0)) <= 1e-8, f"symmetric CEO rate {rate}")
    checks.check(all(abs(dk - 2.0 / 3.0) <= 1e-8 for dk in alloc.d_k), f"symmetric d_k {alloc.d_k}")
    closed, _ = rdf.ceo_rdf_symmetric(q)
    checks.check(abs(closed - rate) <= 1e-9, f"closed form {closed} vs solver {rate}")

    loss = rdf.loss_bound(q)
    checks.check(loss.condition_holds, "loss-bound condition should hold")
    checks.check(abs(loss.lhs - 0.5 * math.log(2.0)) <= 1e-9 and abs(loss.rhs - 0.5 * math.log(2.0)) <= 1e-9,
                 f"loss bound sides {loss.lhs}, {loss.rhs}")

    limit = rdf.large_k_limit(q.model_copy(update={"mode": JointMmseMode.FUSION}))
    checks.check(abs(limit - 0.846574) <= 1e-6, f"large-K limit {limit}")
    rows, constant = rdf.large_k_sequence(q)
    gaps = [abs(gap) for _, _, gap in rows]
    checks.check(all(b <= a + 1e-15 for a, b in zip(gaps, gaps[1:])), f"large-K gaps not decreasing {gaps}")
    checks.check(math.isfinite(constant), f"large-K constant {constant}")
    return checks.result


def suite_remote_forms(rng: np.random.Generator, count: int = 100) -> SuiteResult:
    checks = _Checks("remote-forms")
    for _ in range(count):
        q = random_query(rng)
        r1, r2 = rdf.remote_rdf(q), rdf.remote_rdf_alt(q)
        checks.check(abs(r1 - r2) <= 1e-12 * max(1.0, abs(r1)), f"remote forms {r1} vs {r2}")
    return checks.result


def suite_solver_oracle(rng: np.random.Generator, count: int = 50, points: int = 2000) -> SuiteResult:
    checks = _Checks("solver-oracle")
    for _ in range(count):
        q = random_query(rng, max_K=3)
        rate, _ = rdf.ceo_rdf(q)
        oracle = rdf.grid_oracle(q, points=points)
        checks.check(abs(rate - oracle) <= 1e-4, f"a={q.model.a:.4g}, K={q.channels.K}: solver {rate} vs oracle {oracle}")
    return checks.result


def suite_directed_information(rng: np.random.Generator, count: int = 200) -> SuiteResult:
    checks = _Checks("directed-information")
    X, Y, Z = Process(name="X"), Process(name="Y"), Process(name="Z")
    for _ in range(count):
        t = int(rng.integers(1, 4))
        size = int(rng.integers(2, 4))
        joint = FinitePmf.random(rng, product_axes(["X", "Y", "Z"], t, 1, size if t < 3 else 2))
        lhs = information.directed_information(joint, [X, Y], Z)
        rhs = information.directed_information(joint, X, Z) + information.causally_conditioned_di(joint, Y, Z, X)
        checks.check(abs(lhs - rhs) <= 1e-10, f"chain rule over sources: {lhs} vs {rhs}")
        lhs2 = information.directed_information(joint, X, [Y, Z])
        rhs2 = information.directed_information(joint, X, Y, delayed=Z) + \
            information.causally_conditioned_di(joint, X, Z, Y)
        checks.check(abs(lhs2 - rhs2) <= 1e-10, f"chain rule over targets: {lhs2} vs {rhs2}")
        upper = t * math.log(joint.axes[0].size)
        checks.check(-1e-12 <= lhs2 <= upper + 1e-12, f"directed information {lhs2} outside [0, {upper}]")

    for _ in range(max(1, count // 5)):
        toy = random_toy(rng, t=int(rng.integers(1, 3)), K=2, reconstruction=False)
        rates_a = bound.achievable_rates(toy, [1, 2])
        rates_b = bound.achievable_rates(toy, [2, 1])
        for r in (rates_a, rates_b):
            checks.check(abs(r.sum_rate - r.directed_information) <= 1e-10,
                         f"sum of rates {r.sum_rate} vs directed information {r.directed_information}")
    return checks.result


def suite_bt_bound(rng: np.random.Generator, count: int = 50, mc_samples: int = 1_000_000) -> SuiteResult:
    checks = _Checks("bt-bound")
    gamma = bound.gamma_constant(CodeParams.uniform(t=1, K=1))
    checks.check(gamma == 0.75, f"gamma {gamma}")
    for _ in range(count):
        t = int(rng.integers(1, 3))
        K = int(rng.integers(1, 3))
        toy = random_toy(rng, t=t, K=K)
        L = int(rng.integers(1, 5))
        M = int(rng.integers(1, L + 1))
        params = CodeParams.uniform(
            t=t, K=K, L=L, M=M, alpha=float(rng.uniform(-1, 3)), beta=float(rng.uniform(-1, 3)),
            d=float(rng.choice([0.0, 1.0])),
        )
        report = bound.evaluate_bt_bound(toy, params)
        checks.check(report.sharp_success >= 1.0 - report.epsilon_bound - 1e-12,
                     f"sharp {report.sharp_success} below weak {1.0 - report.epsilon_bound}")

    copy = deterministic_copy_toy()
    sharp = bound.evaluate_bt_sharp(copy, CodeParams.uniform(t=1, K=1))
    checks.check(abs(sharp - 0.25) <= 1e-12, f"copy toy sharp bound {sharp}")

    if mc_samples:
        toy = random_toy(rng, t=1, K=2)
        params = CodeParams.uniform(t=1, K=2, L=2, M=1, alpha=0.5, beta=0.5, d=0.5)
        exact = bound.evaluate_bt_bound(toy, params).prob_E
        mc = bound.monte_carlo_event_probability(toy, params, samples=mc_samples, seed=int(rng.integers(0, 2 ** 31)))
        se = math.sqrt(exact * (1.0 - exact) / mc_samples)
        checks.check(abs(mc.prob_E - exact) <= 4.0 * se + 1e-12,
                     f"Monte Carlo Pr[E] {mc.prob_E} vs exact {exact} (SE {se:.3g})")
    return checks.result


def suite_regions(rng: np.random.Generator, samples: int = 1000) -> SuiteResult:
    checks = _Checks("regions")
    for K in (2, 3):
        toy = random_toy(rng, t=1, K=K, reconstruction=False)
        report = regions.region_equivalence(toy, samples=samples, seed=int(rng.integers(0, 2 ** 31)))
        checked = report.samples - report.boundary_excluded
        checks.check(report.agreements == checked, f"K={K}: {report.agreements}/{checked} region agreements")
        _, m_subset, m_hull = regions.sum_rate_vertex(toy, margin=1e-3)
        checks.check(min(m_subset, m_hull) >= 1e-3 / K - 1e-9, f"K={K}: sum-rate vertex margins {m_subset}, {m_hull}")
    return checks.result


def suite_simulator(rng: np.random.Generator) -> SuiteResult:
    checks = _Checks("simulator")
    q = rdf.make_query(0.0, 1.0, [1.0, 1.0], 0.5)
    _, alloc = rdf.ceo_rdf(q)
    report = tracking_sim.simulate(SchemeConfig(
        model=q.model, channels=q.channels, allocation=alloc, horizon=20_000, trials=2,
        seed=int(rng.integers(0, 2 ** 32)),
    ))
    checks.check(abs(report.achieved_mse_exact - 0.5) <= 1e-9, f"exact decoder MMSE {report.achieved_mse_exact}")
    checks.check(all(abs(z - 0.25) <= 1e-9 for z in report.sigma_z2), f"test channel variances {report.sigma_z2}")
    checks.check(bool(report.within_ci), f"empirical {report.achieved_mse_empirical} +/- {report.standard_error}")
    q = rdf.make_query(0.6, 1.0, [0.5, 1.5], 0.7)
    _, alloc = rdf.ceo_rdf(q)
    exact = tracking_sim.simulate(SchemeConfig(model=q.model, channels=q.channels, allocation=alloc, monte_carlo=False))
    for target, check in zip(exact.rho_k_target, exact.rho_k_check):
        checks.check(abs(target - check) <= 1e-8 * target, f"a=0.6: rho_k target {target} vs test channel {check}")
    return checks.result


SUITES: Dict[str, Callable[[np.random.Generator], SuiteResult]] = {
    "riccati": suite_riccati,
    "fusion-gap": suite_fusion_gap,
    "rdf-ordering": suite_rdf_ordering,
    "rdf-symmetric": suite_rdf_symmetric,
    "remote-forms": suite_remote_forms,
    "solver-oracle": suite_solver_oracle,
    "directed-information": suite_directed_information,
    "bt-bound": suite_bt_bound,
    "regions": suite_regions,
    "simulator": suite_simulator,
}


def run_selftest(seed: int = 0, suite: Optional[str] = None) -> List[SuiteResult]:
    """スイートを実行（suite 指定時はそれだけ）"""
    if suite is not None and suite not in SUITES:
        raise CeoError(f"unknown suite {suite!r}; available: {', '.join(SUITES)}")
    names = [suite] if suite else list(SUITES)
    results = []
    for name in names:
        # 単独実行でも全体実行と同じストリーム
        j = list(SUITES).index(name)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(j,))))
        try:
            result = SUITES[name](rng)
        except CeoError as e:
            result = SuiteResult(name=name, failed=1, failures=[f"raised {type(e).__name__}: {e}"])
            logger.error(f"suite {name} raised: {e}")
        logger.info(f"suite {name}: {result.passed} passed, {result.failed} failed")
        results.append(result)
    return results
