"""
因果ガウスCEO問題のレート歪み関数

閉形式（直接・遠隔・対称・大K極限）、K変数凸計画のラグランジュ解法、
注水配分、孤立観測者の損失界、記憶なし問題との比較。
レートは内部的にnatsで扱い、戻り値だけ要求単位に変換する。
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError
from scipy import optimize

from . import model_core
from .errors import ConvergenceError, InfeasibleError, ModelError
from .models import (
    Allocation, ChannelSet, ExtVariance, JointMmseMode, LossReport, RateUnit,
    RdfQuery, RdfRecord, SourceModel, SteadyState,
)

logger = logging.getLogger(__name__)

WINDOW_TOL = 1e-12
SYMMETRY_TOL = 1e-12
RATE_TERM_TOL = 1e-10
MULTIPLIER_XTOL = 1e-14
ROOT_RTOL = 1e-15
MAX_DOUBLINGS = 2000


def make_query(
    a: float,
    sigma_v2: float,
    sigma_w2: Sequence[float],
    d: float,
    mode: JointMmseMode = JointMmseMode.RICCATI,
    unit: RateUnit = RateUnit.NATS,
) -> RdfQuery:
    """生の数値から RdfQuery を作る（検証エラーは ModelError に変換）"""
    try:
        return RdfQuery(
            model=SourceModel(a=a, sigma_v2=sigma_v2),
            channels=ChannelSet(sigma_w2=list(sigma_w2)),
            d=d, mode=mode, unit=unit,
        )
    except ValidationError as e:
        raise ModelError(str(e)) from e


def unit_convert(value: float, unit: RateUnit) -> float:
    """natsから要求単位へ"""
    if RateUnit(unit) is RateUnit.BITS:
        return value / math.log(2.0)
    return value


def _above_window(d: float, sigma_x2: ExtVariance) -> bool:
    return (not sigma_x2.is_infinite) and d > sigma_x2.variance * (1.0 - WINDOW_TOL)


def _check_lower(d: float, s_joint: float, sigma_x2: ExtVariance) -> None:
    if d < s_joint * (1.0 + WINDOW_TOL):
        raise InfeasibleError(
            f"target distortion d={d} is not above the joint causal MMSE {s_joint}",
            d=d, lower=s_joint, upper=sigma_x2.variance,
        )


def _prev(m: SourceModel, d: float) -> float:
    return model_core.predicted(m, d)


# ---------------------------------------------------------------------------
# 閉形式

def direct_rdf(q: RdfQuery) -> float:
    """観測雑音なしの因果レート歪み関数 ½log(d̄/d)"""
    sigma_x2 = model_core.stationary_variance(q.model)
    if _above_window(q.d, sigma_x2):
        return 0.0
    return unit_convert(0.5 * math.log(_prev(q.model, q.d) / q.d), q.unit)


def _remote_window(q: RdfQuery) -> Tuple[SteadyState, float, ExtVariance]:
    ss = model_core.steady_state(q.model, q.channels)
    s_joint = model_core.joint_mmse(ss, q.mode)
    _check_lower(q.d, s_joint, ss.sigma_x2)
    return ss, s_joint, ss.sigma_x2


def remote_rdf(q: RdfQuery) -> float:
    """遠隔レート歪み関数 ½log[(d̄ − s_J)/(d − s_J)]"""
    _, s_joint, sigma_x2 = _remote_window(q)
    if _above_window(q.d, sigma_x2):
        return 0.0
    d_prev = _prev(q.model, q.d)
    return unit_convert(0.5 * math.log((d_prev - s_joint) / (q.d - s_joint)), q.unit)


def remote_rdf_alt(q: RdfQuery) -> float:
    """遠隔レート歪み関数の別形 ½log(a² + (s̄_J − s_J)/(d − s_J))"""
    _, s_joint, sigma_x2 = _remote_window(q)
    if _above_window(q.d, sigma_x2):
        return 0.0
    s_prev = _prev(q.model, s_joint)
    a2 = q.model.a * q.model.a
    return unit_convert(0.5 * math.log(a2 + (s_prev - s_joint) / (q.d - s_joint)), q.unit)


# ---------------------------------------------------------------------------
# チャネル毎のレート項

class _ChannelTerm:
    """
    チャネル k のレート項 g(x) = ½log(ρ̄/ρ)

    x = 1/s − 1/d_k ∈ [0, x_max]、ρ = s²x、u = 1 − s·x = s/d_k。
    ρ̄ = s(A + Bu)/(A + Cu)、A = a²s、B = σ_V² − s、C = σ_V²。
    """

    def __init__(self, s: float, m: SourceModel, sigma_x2: ExtVariance):
        self.s = s
        self.A = m.a * m.a * s
        self.B = m.sigma_v2 - s
        self.C = m.sigma_v2
        self.precision_x = sigma_x2.precision
        self.x_max = 1.0 / s - sigma_x2.precision
        self.sigma_x2 = sigma_x2

    def rho(self, x: float) -> float:
        return self.s * self.s * x

    def rho_bar(self, x: float) -> float:
        u = 1.0 - self.s * x
        return self.s * (self.A + self.B * u) / (self.A + self.C * u)

    def d_of(self, x: float) -> float:
        if x >= self.x_max:
            return self.sigma_x2.variance
        return self.s / (1.0 - self.s * x)

    def value(self, x: float) -> float:
        if x <= 0.0:
            return math.inf
        if x >= self.x_max:
            return 0.0
        return 0.5 * math.log(self.rho_bar(x) / self.rho(x))

    def slope(self, x: float) -> float:
        u = 1.0 - self.s * x
        bracket = self.B / (self.A + self.B * u) - self.C / (self.A + self.C * u)
        return -0.5 * self.s * bracket - 0.5 / x

    def best(self, mu: float) -> float:
        """min g(x) + μx の解（x_max に張り付けば不活性）"""
        if self.slope(self.x_max) + mu <= 0.0:
            return self.x_max
        lo = 0.5 * self.x_max
        for _ in range(2000):
            if self.slope(lo) + mu < 0.0:
                break
            lo *= 0.5
        else:
            raise ConvergenceError("could not bracket the per-channel minimizer", iterations=2000)
        return optimize.brentq(
            lambda x: self.slope(x) + mu, lo, self.x_max,
            xtol=ROOT_RTOL * self.x_max, rtol=ROOT_RTOL,
        )

    def values(self, x: np.ndarray) -> np.ndarray:
        """value のベクトル版（グリッド探索用）"""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, np.inf)
        inside = (x > 0.0) & (x <= self.x_max)
        xi = np.minimum(x[inside], self.x_max)
        u = 1.0 - self.s * xi
        rho_bar = self.s * (self.A + self.B * u) / (self.A + self.C * u)
        vals = 0.5 * np.log(rho_bar / (self.s * self.s * xi))
        # 上端では厳密に0
        vals = np.where(xi >= self.x_max, 0.0, np.maximum(vals, 0.0))
        out[inside] = vals
        return out


def _base_rate(m: SourceModel, d: float) -> float:
    return 0.5 * math.log(_prev(m, d) / d)


def _budget(s_joint: float, d: float) -> float:
    return 1.0 / s_joint - 1.0 / d


def _build_allocation(
    m: SourceModel,
    terms: List[_ChannelTerm],
    xs: Sequence[float],
    d: float,
    s_joint: float,
    mode: JointMmseMode,
    multiplier: Optional[float] = None,
    water_level: Optional[float] = None,
    warnings: Optional[List[str]] = None,
) -> Allocation:
    rate_terms = [term.value(x) for term, x in zip(terms, xs)]
    base = _base_rate(m, d)
    active = [x < term.x_max for term, x in zip(terms, xs)]
    return Allocation(
        d=d,
        mode=mode,
        d_k=[term.d_of(x) for term, x in zip(terms, xs)],
        rho_k=[term.rho(min(x, term.x_max)) for term, x in zip(terms, xs)],
        rho_bar_k=[term.rho_bar(min(x, term.x_max)) for term, x in zip(terms, xs)],
        rho_max_k=[term.s * (1.0 - term.s * term.precision_x) for term in terms],
        active=active,
        water_level=water_level,
        multiplier=multiplier,
        constraint_residual=float(sum(xs) - _budget(s_joint, d)),
        rate_terms=rate_terms,
        base_rate=base,
        total_rate=base + sum(rate_terms),
        warnings=list(warnings or []),
    )


def _zero_allocation(m: SourceModel, terms: List[_ChannelTerm], d: float,
                     s_joint: float, mode: JointMmseMode) -> Allocation:
    """d ≥ σ_X² のゼロレート配分"""
    xs = [term.x_max for term in terms]
    alloc = _build_allocation(m, terms, xs, d, s_joint, mode)
    return alloc.model_copy(update={
        "base_rate": 0.0, "total_rate": 0.0, "rate_terms": [0.0] * len(terms),
        "constraint_residual": 0.0,
        "warnings": [f"d={d} is at or above the source variance; zero rate"],
    })


def solve_allocation(
    m: SourceModel,
    s: Sequence[float],
    s_joint: float,
    sigma_x2: ExtVariance,
    d: float,
    mode: JointMmseMode = JointMmseMode.RICCATI,
) -> Allocation:
    """
    チャネル毎レート項の和の最小化

    制約 Σ x_k ≤ 1/s_J − 1/d の乗数 μ を外側で求め、
    内側ではチャネル毎に g_k(x) + μx を1次元で最小化する。
    """
    terms = [_ChannelTerm(sk, m, sigma_x2) for sk in s]
    if _above_window(d, sigma_x2):
        return _zero_allocation(m, terms, d, s_joint, mode)
    _check_lower(d, s_joint, sigma_x2)

    budget = _budget(s_joint, d)

    def excess(mu: float) -> float:
        return sum(term.best(mu) for term in terms) - budget

    if excess(0.0) <= 0.0:
        # 全チャネルが上限でも制約を満たす
        logger.info(f"all channels inactive at d={d} (budget {budget:.6g})")
        return _build_allocation(m, terms, [t.x_max for t in terms], d, s_joint, mode, multiplier=0.0)

    mu_hi = 1.0
    for _ in range(MAX_DOUBLINGS):
        if excess(mu_hi) < 0.0:
            break
        mu_hi *= 2.0
    else:
        raise ConvergenceError("multiplier bracket not found", iterations=MAX_DOUBLINGS, residual=excess(mu_hi))

    mu, info = optimize.brentq(excess, 0.0, mu_hi, xtol=MULTIPLIER_XTOL, rtol=ROOT_RTOL, full_output=True)
    if not info.converged:
        raise ConvergenceError("multiplier bisection failed", iterations=info.iterations, residual=excess(mu))
    xs = [term.best(mu) for term in terms]

    alloc = _build_allocation(m, terms, xs, d, s_joint, mode, multiplier=mu)
    inactive = [k + 1 for k, flag in enumerate(alloc.active) if not flag]
    if inactive:
        logger.info(f"inactive channels at d={d}: {inactive}")
    logger.debug(f"ceo solve d={d}: mu={mu:.6g}, residual={alloc.constraint_residual:.3e}")
    return alloc


def ceo_rdf(q: RdfQuery) -> Tuple[float, Allocation]:
    """因果ガウスCEOレート歪み関数"""
    ss = model_core.steady_state(q.model, q.channels)
    s_joint = model_core.joint_mmse(ss, q.mode)
    alloc = solve_allocation(q.model, ss.s, s_joint, ss.sigma_x2, q.d, q.mode)
    return unit_convert(alloc.total_rate, q.unit), alloc


def is_symmetric(ss: SteadyState) -> bool:
    s0 = ss.s[0]
    return all(abs(sk - s0) <= SYMMETRY_TOL * s0 for sk in ss.s)


def ceo_rdf_symmetric(q: RdfQuery) -> Tuple[float, Allocation]:
    """同一SNRチャネルの閉形式"""
    ss = model_core.steady_state(q.model, q.channels)
    if not is_symmetric(ss):
        raise ModelError("ceo_rdf_symmetric requires identical per-channel MMSEs")
    s_joint = model_core.joint_mmse(ss, q.mode)
    term = _ChannelTerm(ss.s[0], q.model, ss.sigma_x2)
    terms = [term] * ss.K
    if _above_window(q.d, ss.sigma_x2):
        alloc = _zero_allocation(q.model, terms, q.d, s_joint, q.mode)
        return 0.0, alloc
    _check_lower(q.d, s_joint, ss.sigma_x2)

    # 1/d_1 = (1/d − 1/s_J + K/s_1)/K
    x1 = min(_budget(s_joint, q.d) / ss.K, term.x_max)
    alloc = _build_allocation(q.model, terms, [x1] * ss.K, q.d, s_joint, q.mode)
    return unit_convert(alloc.total_rate, q.unit), alloc


def memoryless_ceo_rdf(q: RdfQuery) -> Tuple[float, Allocation]:
    """古典（記憶なし）ガウスCEO問題：d̄, d̄_k を σ_X² に置き換えた同じ解法"""
    sigma_x2 = model_core.stationary_variance(q.model)
    if sigma_x2.is_infinite:
        raise InfeasibleError(
            f"memoryless CEO problem is degenerate for |a|={abs(q.model.a)} >= 1 (infinite source variance)",
            d=q.d,
        )
    effective = SourceModel(a=0.0, sigma_v2=sigma_x2.variance)
    one_shot = model_core.steady_state(effective, q.channels)
    alloc = solve_allocation(effective, one_shot.s, one_shot.s_joint_riccati, one_shot.sigma_x2, q.d, q.mode)
    return unit_convert(alloc.total_rate, q.unit), alloc


def waterfilling(q: RdfQuery) -> Tuple[float, Allocation]:
    """注水配分による上界"""
    ss = model_core.steady_state(q.model, q.channels)
    s_joint = model_core.joint_mmse(ss, q.mode)
    terms = [_ChannelTerm(sk, q.model, ss.sigma_x2) for sk in ss.s]
    if _above_window(q.d, ss.sigma_x2):
        return 0.0, _zero_allocation(q.model, terms, q.d, s_joint, q.mode)
    _check_lower(q.d, s_joint, ss.sigma_x2)

    budget = _budget(s_joint, q.d)
    caps = [term.x_max for term in terms]
    warnings: List[str] = []
    if sum(caps) <= budget:
        level = max(caps)
        warnings.append("water level above every cap; the distortion constraint is slack")
    else:
        level = optimize.brentq(
            lambda theta: sum(min(theta, c) for c in caps) - budget,
            0.0, max(caps), xtol=MULTIPLIER_XTOL, rtol=ROOT_RTOL,
        )
    xs = [min(level, c) for c in caps]
    alloc = _build_allocation(
        q.model, terms, xs, q.d, s_joint, q.mode, water_level=1.0 / level, warnings=warnings
    )
    return unit_convert(alloc.total_rate, q.unit), alloc


def large_k_limit(q: RdfQuery) -> float:
    """同一チャネルを無限に増やした極限"""
    ss = model_core.steady_state(q.model, q.channels)
    if not is_symmetric(ss):
        raise ModelError("large_k_limit requires identical channels")
    sigma_x2 = ss.sigma_x2
    if _above_window(q.d, sigma_x2):
        return 0.0
    d_prev = _prev(q.model, q.d)
    value = 0.5 * math.log(d_prev / q.d) + 0.5 * (1.0 / q.d - 1.0 / d_prev) / (1.0 / ss.s[0] - sigma_x2.precision)
    return unit_convert(value, q.unit)


def large_k_sequence(q: RdfQuery, ks: Sequence[int] = tuple(2 ** j for j in range(1, 9))) -> Tuple[List[Tuple[int, float, float]], float]:
    """
    融合モードの対称CEOレートを K の列で評価

    Returns:
        ([(K, R_K, R_K − limit), ...], C): C = max_K K·|R_K − limit|
    """
    limit = large_k_limit(q)
    w = q.channels.sigma_w2[0]
    rows: List[Tuple[int, float, float]] = []
    for K in ks:
        qk = q.model_copy(update={"channels": ChannelSet(sigma_w2=[w] * K), "mode": JointMmseMode.FUSION})
        rate, _ = ceo_rdf_symmetric(qk)
        rows.append((K, rate, rate - limit))
    constant = max(K * abs(gap) for K, _, gap in rows)
    return rows, constant


# ---------------------------------------------------------------------------
# 損失界と変換

def loss_bound(q: RdfQuery) -> LossReport:
    """孤立観測者による損失"""
    ss = model_core.steady_state(q.model, q.channels)
    s_joint = model_core.joint_mmse(ss, q.mode)
    nats = q.model_copy(update={"unit": RateUnit.NATS})
    r_ceo, _ = ceo_rdf(nats)
    r_rm = remote_rdf(nats)
    r_dir = direct_rdf(nats)

    K = ss.K
    cond_rhs = 1.0 / s_joint + K * ss.sigma_x2.precision - min(K / sk for sk in ss.s)
    holds = 1.0 / q.d >= cond_rhs
    lhs = unit_convert(r_ceo - r_rm, q.unit)
    rhs = unit_convert((K - 1) * (r_rm - r_dir), q.unit)
    bound_ok = (not holds) or lhs <= rhs + 1e-9
    if not bound_ok:
        logger.warning(f"loss bound violated at d={q.d} (mode={q.mode.value}): lhs={lhs}, rhs={rhs}")
    return LossReport(
        lhs=lhs, rhs=rhs,
        condition_holds=holds,
        condition_lhs=1.0 / q.d,
        condition_rhs=cond_rhs,
        equality=is_symmetric(ss),
        bound_holds=bound_ok,
    )


def allocation_conversions(alloc: Allocation, ss: SteadyState) -> Allocation:
    """ρ_k, ρ̄_k, σ²_{X̄^k‖X} を付与し、レート項 = ½log(ρ̄_k/ρ_k) を検証"""
    sigma_x2 = ss.sigma_x2
    rho, rho_bar, rho_max = [], [], []
    warnings = list(alloc.warnings)
    for k, (sk, dk) in enumerate(zip(ss.s, alloc.d_k)):
        upper = sigma_x2.variance
        if dk < sk * (1.0 - WINDOW_TOL) or dk > upper * (1.0 + WINDOW_TOL):
            raise ModelError(f"d_{k + 1}={dk} outside [s_k, sigma_x2] = [{sk}, {upper}]")
        r = sk * (1.0 - sk / dk)
        r_bar = sk * (1.0 - sk / _prev(ss.model, dk))
        rho.append(max(r, 0.0))
        rho_bar.append(r_bar)
        rho_max.append(sk * (1.0 - sk * sigma_x2.precision))
        if r <= 0.0:
            warnings.append(f"channel {k + 1}: d_k = s_k, infinite per-channel rate")
            continue
        if k < len(alloc.rate_terms):
            expected = 0.5 * math.log(r_bar / r)
            if abs(expected - alloc.rate_terms[k]) > RATE_TERM_TOL * max(1.0, abs(expected)):
                warnings.append(
                    f"channel {k + 1}: rate term {alloc.rate_terms[k]} differs from log(rho_bar/rho)/2 = {expected}"
                )
    return alloc.model_copy(update={
        "rho_k": rho, "rho_bar_k": rho_bar, "rho_max_k": rho_max, "warnings": warnings,
    })


# ---------------------------------------------------------------------------
# 参照解法とフラットレコード

def grid_oracle(q: RdfQuery, points: int = 2000, rounds: int = 4) -> float:
    """
    総当たりの参照解（K ≤ 3）

    制約面 Σx_k = 1/s_J − 1/d 上で x_1..x_{K−1} をグリッド探索し、
    最良点の周りでグリッドを細かくして rounds 回絞り込む。
    """
    ss = model_core.steady_state(q.model, q.channels)
    if ss.K > 3:
        raise ModelError("grid oracle supports K <= 3")
    s_joint = model_core.joint_mmse(ss, q.mode)
    if _above_window(q.d, ss.sigma_x2):
        return 0.0
    _check_lower(q.d, s_joint, ss.sigma_x2)

    terms = [_ChannelTerm(sk, q.model, ss.sigma_x2) for sk in ss.s]
    base = _base_rate(q.model, q.d)
    budget = _budget(s_joint, q.d)
    caps = np.array([t.x_max for t in terms])
    if caps.sum() <= budget:
        return unit_convert(base, q.unit)
    if ss.K == 1:
        return unit_convert(base + terms[0].value(budget), q.unit)

    free = ss.K - 1
    lo = np.zeros(free)
    hi = np.minimum(caps[:free], budget)
    best_x = None
    best_val = math.inf
    for _ in range(rounds + 1):
        axes = [np.linspace(max(lo[j], 0.0), hi[j], points) for j in range(free)]
        mesh = np.meshgrid(*axes, indexing="ij")
        last = budget - sum(mesh)
        total = terms[-1].values(last)
        for j in range(free):
            total = total + terms[j].values(mesh[j])
        idx = np.unravel_index(np.argmin(total), total.shape)
        if total[idx] < best_val:
            best_val = float(total[idx])
            best_x = np.array([axes[j][idx[j]] for j in range(free)])
        spacing = np.array([(axes[j][-1] - axes[j][0]) / (points - 1) for j in range(free)])
        lo = np.maximum(best_x - 2.0 * spacing, 0.0)
        hi = np.minimum(best_x + 2.0 * spacing, np.minimum(caps[:free], budget))
    return unit_convert(base + best_val, q.unit)


def evaluate_point(q: RdfQuery) -> RdfRecord:
    """曲線1点分の全指標を評価してフラットレコードにする"""
    record = RdfRecord(
        a=q.model.a, sigma_v2=q.model.sigma_v2, K=q.channels.K,
        sigma_w2=list(q.channels.sigma_w2), d=q.d, mode=q.mode, unit=q.unit,
    )
    try:
        r_direct = direct_rdf(q)
        r_remote = remote_rdf(q)
        r_ceo, alloc = ceo_rdf(q)
        r_wf, wf_alloc = waterfilling(q)
        loss = loss_bound(q)
    except InfeasibleError as e:
        logger.warning(f"infeasible point d={q.d}: {e}")
        return record.model_copy(update={"status": "infeasible", "detail": str(e)})

    return record.model_copy(update={
        "R_direct": r_direct,
        "R_remote": r_remote,
        "R_ceo": r_ceo,
        "R_wf": r_wf,
        "d_k": alloc.d_k,
        "rho_k": alloc.rho_k,
        "water_level": wf_alloc.water_level,
        "condition_holds": loss.condition_holds,
        "loss_lhs": loss.lhs,
        "loss_rhs": loss.rhs,
    })
