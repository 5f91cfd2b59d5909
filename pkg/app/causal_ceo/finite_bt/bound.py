"""
非漸近Berger-Tung界の評価

同時分布 (X, Y^[K], U^[K], X̂) を厳密に列挙し、事象 𝓔 の確率、定数 γ、
鋭い形の成功確率下界を計算する。ブロック長 n > 1 は i.i.d. 成分の
統計量ベクトルを畳み込んで扱う。
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from decimal import ROUND_CEILING, Decimal
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from ..errors import AxisError, EnumerationLimitError, KernelError
from ..models import AchievableRates, BtBoundReport, CodeParams, CodeSizes
from .information import conditional_mutual_information, expectation, pointwise_cmi
from .pmf import (
    AUXILIARY, OBSERVATION, OBSERVER_RECONSTRUCTION, RECONSTRUCTION, SOURCE, FinitePmf, Process,
)

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 2 ** 26
MERGE_DECIMALS = 12
SEPARATE_ENCODING_TOL = 1e-12
MC_BLOCK = 1 << 16
CEIL_GUARD = 1.0 - 1e-12


class DensityTables(NamedTuple):
    """結果毎の情報密度（同時分布と同じ形状、[i−1][k−1] で引く）"""
    iota: List[List[np.ndarray]]
    jota: List[List[np.ndarray]]


class OutcomeStatistics(NamedTuple):
    """正の確率を持つ結果毎の統計量（n 成分の和）"""
    prob: np.ndarray
    iota: np.ndarray
    jota: np.ndarray
    distortion: np.ndarray


def _aux(joint: FinitePmf, time: int, observer: int) -> int:
    return joint.index_of(AUXILIARY, time, observer)


def _pi0(pi: Sequence[int]) -> List[int]:
    return [p - 1 for p in pi]


def info_density_tables(joint: FinitePmf, pi: Optional[Sequence[int]] = None) -> DensityTables:
    """
    ı(y_[i]^k; u_i^k | u_[i−1]^k) と ȷ^{π(k)} の表

    ȷ^{π(k)} は U_i^{π(k)} と (U_i^{π([k−1])}, 他の観測者の U_[i−1]) の
    U_[i−1]^{π(k)} を条件とする情報密度。
    """
    t, K = joint.t, joint.K
    order = _pi0(pi or range(1, K + 1))
    iota = [[None] * K for _ in range(t)]
    jota = [[None] * K for _ in range(t)]
    for i in range(1, t + 1):
        for k in range(1, K + 1):
            u = [_aux(joint, i, k)]
            y = joint.select([Process(name=OBSERVATION, observers=(k,))], upto=i)
            past = joint.select([Process(name=AUXILIARY, observers=(k,))], before=i)
            iota[i - 1][k - 1] = pointwise_cmi(joint, u, y, past)

        for pos, obs in enumerate(order):
            k = obs + 1
            u = [_aux(joint, i, k)]
            own_past = joint.select([Process(name=AUXILIARY, observers=(k,))], before=i)
            earlier = [_aux(joint, i, o + 1) for o in order[:pos]]
            others = [o for o in range(1, K + 1) if o != k]
            others_past = joint.select([Process(name=AUXILIARY, observers=tuple(others))], before=i, strict=False) \
                if others else []
            jota[i - 1][k - 1] = pointwise_cmi(joint, u, earlier + others_past, own_past)
    return DensityTables(iota=iota, jota=jota)


def _distortion_values(joint: FinitePmf, params: CodeParams) -> np.ndarray:
    """時刻毎（分散情報源符号化では観測者毎）の歪み sd を同時分布の形状で返す"""
    shape = joint.probs.shape
    ndim = len(shape)
    table = None if params.distortion is None else np.asarray(params.distortion, dtype=float)

    def sd(src_idx: int, rec_idx: int) -> np.ndarray:
        n_src, n_rec = shape[src_idx], shape[rec_idx]
        tab = table if table is not None else (np.arange(n_src)[:, None] != np.arange(n_rec)[None, :]).astype(float)
        if tab.shape != (n_src, n_rec):
            raise AxisError(f"distortion table has shape {tab.shape}, expected {(n_src, n_rec)}")
        bshape = [1] * ndim
        bshape[src_idx], bshape[rec_idx] = n_src, n_rec
        if src_idx > rec_idx:
            tab = tab.T
        return np.broadcast_to(tab.reshape(bshape), shape)

    if params.observer_thresholds is not None:
        out = np.empty((params.t, params.K) + shape)
        for i in range(1, params.t + 1):
            for k in range(1, params.K + 1):
                out[i - 1, k - 1] = sd(joint.index_of(OBSERVATION, i, k),
                                       joint.index_of(OBSERVER_RECONSTRUCTION, i, k))
        return out
    out = np.empty((params.t,) + shape)
    for i in range(1, params.t + 1):
        out[i - 1] = sd(joint.index_of(SOURCE, i), joint.index_of(RECONSTRUCTION, i))
    return out


def _check_dimensions(joint: FinitePmf, params: CodeParams) -> None:
    if joint.t != params.t or joint.K != params.K:
        raise AxisError(f"pmf has t={joint.t}, K={joint.K}; parameters have t={params.t}, K={params.K}")


def outcome_statistics(joint: FinitePmf, params: CodeParams) -> OutcomeStatistics:
    """正の確率を持つ単一成分の結果について (ı, ȷ, sd) を並べる"""
    _check_dimensions(joint, params)
    dens = info_density_tables(joint, params.pi)
    dist = _distortion_values(joint, params)
    nz = np.nonzero(joint.probs)
    iota = np.stack([np.stack([dens.iota[i][k][nz] for k in range(params.K)], axis=-1) for i in range(params.t)],
                    axis=1)
    jota = np.stack([np.stack([dens.jota[i][k][nz] for k in range(params.K)], axis=-1) for i in range(params.t)],
                    axis=1)
    distortion = np.moveaxis(dist[(Ellipsis,) + nz], -1, 0)
    return OutcomeStatistics(prob=joint.probs[nz], iota=iota, jota=jota, distortion=distortion)


def _merge(stats: OutcomeStatistics) -> OutcomeStatistics:
    """丸めて同じ統計量の行をまとめる"""
    n = len(stats.prob)
    flat = np.hstack([stats.iota.reshape(n, -1), stats.jota.reshape(n, -1), stats.distortion.reshape(n, -1)])
    rows, first, inverse = np.unique(
        np.round(flat, MERGE_DECIMALS), axis=0, return_index=True, return_inverse=True
    )
    prob = np.bincount(inverse.reshape(-1), weights=stats.prob, minlength=len(rows))
    # 代表値は各グループの最初の行（丸め前）
    return OutcomeStatistics(
        prob=prob,
        iota=stats.iota[first],
        jota=stats.jota[first],
        distortion=stats.distortion[first],
    )


def block_statistics(single: OutcomeStatistics, n: int) -> OutcomeStatistics:
    """n 個の i.i.d. 成分の統計量の和の分布（歪みは成分平均）"""
    size = len(single.prob) ** n
    if size > ENUMERATION_LIMIT:
        raise EnumerationLimitError(size, ENUMERATION_LIMIT)
    acc = _merge(single)
    base = acc
    for _ in range(n - 1):
        a, b = len(acc.prob), len(base.prob)
        combined = OutcomeStatistics(
            prob=np.outer(acc.prob, base.prob).reshape(-1),
            iota=(acc.iota[:, None] + base.iota[None, :]).reshape((a * b,) + acc.iota.shape[1:]),
            jota=(acc.jota[:, None] + base.jota[None, :]).reshape((a * b,) + acc.jota.shape[1:]),
            distortion=(acc.distortion[:, None] + base.distortion[None, :]).reshape((a * b,) + acc.distortion.shape[1:]),
        )
        acc = _merge(combined)
    return acc._replace(distortion=acc.distortion / n)


class _Thresholds:
    """事象 𝓔 の閾値（時刻 × 観測者）"""

    def __init__(self, params: CodeParams):
        self.params = params
        log_l = np.array([[math.log(v) for v in row] for row in params.L])
        log_m = np.array([[math.log(v) for v in row] for row in params.M])
        alpha = np.asarray(params.alpha, dtype=float)
        beta = np.asarray(params.beta, dtype=float)
        self.log_l = log_l
        self.inv_l = np.exp(-log_l)
        self.encoding = log_l - alpha
        self.decoding = log_l - log_m + beta
        self.beta = beta
        self.alpha = alpha
        if params.observer_thresholds is not None:
            self.distortion = np.asarray(params.observer_thresholds, dtype=float)
        else:
            self.distortion = np.asarray(params.d_thresholds, dtype=float)

    def events(self, iota: np.ndarray, jota: np.ndarray, distortion: np.ndarray) -> Dict[str, np.ndarray]:
        """各行が 𝓔 の各族に入るかどうか"""
        axes = tuple(range(1, distortion.ndim))
        dist = np.any(distortion > self.distortion, axis=axes)
        enc = np.any(iota > self.encoding, axis=(1, 2))
        dec = np.any(jota < self.decoding, axis=(1, 2))
        return {"distortion": dist, "encoding": enc, "decoding": dec, "union": dist | enc | dec}

    def success_weight(self, iota: np.ndarray, jota: np.ndarray, distortion: np.ndarray) -> np.ndarray:
        """鋭い形の期待値の中身"""
        # 1/(e^ı/L + 1 − 1/L) を対数で
        with np.errstate(divide="ignore"):
            rest = np.log1p(-self.inv_l)
        log_w = -np.sum(np.logaddexp(iota - self.log_l, rest), axis=(1, 2))
        log_w -= np.sum(np.logaddexp(0.0, -self.beta))
        decoded = np.all(jota >= self.decoding, axis=2)
        axes = tuple(range(2, distortion.ndim))
        close = distortion <= self.distortion
        if axes:
            close = np.all(close, axis=axes)
        ok = np.all(decoded & close, axis=1)
        return np.where(ok, np.exp(log_w), 0.0)


def gamma_constant(params: CodeParams) -> float:
    """γ = 1 − 1/∏_{i,k}(1 + e^{−α})(1 + e^{−β})"""
    alpha = np.asarray(params.alpha, dtype=float)
    beta = np.asarray(params.beta, dtype=float)
    log_prod = float(np.sum(np.logaddexp(0.0, -alpha)) + np.sum(np.logaddexp(0.0, -beta)))
    return float(-math.expm1(-log_prod))


def _statistics(joint: FinitePmf, params: CodeParams) -> OutcomeStatistics:
    single = outcome_statistics(joint, params)
    if params.n == 1:
        if len(single.prob) > ENUMERATION_LIMIT:
            raise EnumerationLimitError(len(single.prob), ENUMERATION_LIMIT)
        return single
    return block_statistics(single, params.n)


def evaluate_bt_bound(joint: FinitePmf, params: CodeParams) -> BtBoundReport:
    """ε ≤ Pr[𝓔] + γ を厳密列挙で評価（鋭い形も同時に計算）"""
    stats = _statistics(joint, params)
    thresholds = _Thresholds(params)
    events = thresholds.events(stats.iota, stats.jota, stats.distortion)
    breakdown = {name: float(np.sum(stats.prob[mask])) for name, mask in events.items()}
    prob_e = min(breakdown["union"], 1.0)
    gamma = gamma_constant(params)
    sharp = float(np.sum(stats.prob * thresholds.success_weight(stats.iota, stats.jota, stats.distortion)))

    warnings: List[str] = []
    epsilon = min(1.0, prob_e + gamma)
    if sharp < 1.0 - epsilon - 1e-12:
        warnings.append(f"sharp success bound {sharp} is below 1 - epsilon_bound {1.0 - epsilon}")
        logger.warning(warnings[-1])
    logger.info(f"bt bound: Pr[E]={prob_e:.6g}, gamma={gamma:.6g}, sharp={sharp:.6g} over {len(stats.prob)} outcomes")
    return BtBoundReport(
        prob_E=prob_e,
        gamma=gamma,
        epsilon_bound=epsilon,
        sharp_success=sharp,
        event_breakdown=breakdown,
        outcomes=len(stats.prob),
        n=params.n,
        warnings=warnings,
    )


def evaluate_bt_sharp(joint: FinitePmf, params: CodeParams) -> float:
    """成功確率 1 − ε の鋭い下界"""
    stats = _statistics(joint, params)
    thresholds = _Thresholds(params)
    return float(np.sum(stats.prob * thresholds.success_weight(stats.iota, stats.jota, stats.distortion)))


def monte_carlo_event_probability(
    joint: FinitePmf,
    params: CodeParams,
    samples: int,
    seed: int = 0,
    workers: int = 1,
) -> BtBoundReport:
    """
    Pr[𝓔] のモンテカルロ推定

    ブロック b ごとに Philox ストリーム (seed, b) を使うので、
    ワーカー数に依らず同じ結果になる。
    """
    single = outcome_statistics(joint, params)
    thresholds = _Thresholds(params)
    n = params.n
    cum = np.cumsum(single.prob)
    cum /= cum[-1]
    blocks = [(b, min(MC_BLOCK, samples - b * MC_BLOCK)) for b in range((samples + MC_BLOCK - 1) // MC_BLOCK)]

    def run_block(block) -> int:
        b, size = block
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(b,))))
        idx = np.searchsorted(cum, rng.random((size, n)), side="right")
        idx = np.minimum(idx, len(cum) - 1)
        events = thresholds.events(
            single.iota[idx].sum(axis=1),
            single.jota[idx].sum(axis=1),
            single.distortion[idx].sum(axis=1) / n,
        )
        return int(np.count_nonzero(events["union"]))

    with ThreadPoolExecutor(max_workers=workers) as executor:
        hits = sum(executor.map(run_block, blocks))

    p = hits / samples
    se = math.sqrt(p * (1.0 - p) / samples)
    gamma = gamma_constant(params)
    logger.info(f"Monte Carlo Pr[E]={p:.6g} +/- {se:.3g} from {samples} samples")
    return BtBoundReport(
        prob_E=p,
        gamma=gamma,
        epsilon_bound=min(1.0, p + gamma),
        n=n,
        prob_E_monte_carlo=p,
        monte_carlo_se=se,
        monte_carlo_samples=samples,
        warnings=["prob_E is a Monte Carlo estimate"],
    )


def check_separate_encoding(joint: FinitePmf, tol: float = SEPARATE_ENCODING_TOL) -> None:
    """
    U_i^k − (Y_[i]^k, U_[i−1]^k) − (他の全ての X, Y, U) を数値的に確認

    違反があれば KernelError。
    """
    names = {SOURCE, OBSERVATION, AUXILIARY}
    for i in range(1, joint.t + 1):
        for k in range(1, joint.K + 1):
            u = joint.index_of(AUXILIARY, i, k)
            own = joint.select([Process(name=OBSERVATION, observers=(k,))], upto=i) + \
                joint.select([Process(name=AUXILIARY, observers=(k,))], before=i, strict=False)
            rest = [
                j for j, a in enumerate(joint.axes)
                if a.name in names and a.time <= i and j != u and j not in own
            ]
            leak = conditional_mutual_information(joint, [u], rest, own)
            if leak > tol:
                raise KernelError(
                    f"U^{k}_{i} depends on other variables beyond its own observations (CMI {leak:.3e})"
                )


def achievable_rates(joint: FinitePmf, pi: Optional[Sequence[int]] = None,
                     check: bool = True) -> AchievableRates:
    """
    並べ替え π に対する観測者毎のレート

    R_{π(k)} = Σ_i I(Y_[i]^{π(k)}; U_i^{π(k)} | U_i^{π([k−1])}, U_[i−1]^[K])
    """
    if check:
        check_separate_encoding(joint)
    K, t = joint.K, joint.t
    pi = list(pi or range(1, K + 1))
    if sorted(pi) != list(range(1, K + 1)):
        raise AxisError(f"pi must be a permutation of 1..{K}: {pi}")

    rates = [0.0] * K
    for i in range(1, t + 1):
        all_past = joint.select([Process(name=AUXILIARY)], before=i, strict=False)
        for pos, k in enumerate(pi):
            y = joint.select([Process(name=OBSERVATION, observers=(k,))], upto=i)
            u = [joint.index_of(AUXILIARY, i, k)]
            earlier = [joint.index_of(AUXILIARY, i, o) for o in pi[:pos]]
            rates[k - 1] += conditional_mutual_information(joint, y, u, earlier + all_past)

    total_di = 0.0
    for i in range(1, t + 1):
        y = joint.select([Process(name=OBSERVATION)], upto=i)
        u = joint.select([Process(name=AUXILIARY)], at=i)
        past = joint.select([Process(name=AUXILIARY)], before=i, strict=False)
        total_di += conditional_mutual_information(joint, y, u, past)

    sum_rate = sum(rates)
    if abs(sum_rate - total_di) > 1e-10:
        logger.warning(f"sum of per-observer rates {sum_rate} differs from directed information {total_di}")
    return AchievableRates(pi=pi, rates=rates, sum_rate=sum_rate, directed_information=total_di)


def _ceil_exp(x: float) -> int:
    """ceil(e^x·(1 − 1e−12))、巨大な指数は Decimal で"""
    if x < 700.0:
        return max(1, math.ceil(math.exp(x) * CEIL_GUARD))
    value = Decimal(x).exp() * Decimal(CEIL_GUARD)
    return int(value.to_integral_value(rounding=ROUND_CEILING))


def divergence_table(joint: FinitePmf, pi: Optional[Sequence[int]] = None) -> List[List[float]]:
    """D_i^k = E[ȷ^k]（[i−1][k−1]）"""
    dens = info_density_tables(joint, pi)
    return [[expectation(joint, dens.jota[i][k]) for k in range(joint.K)] for i in range(joint.t)]


def information_table(joint: FinitePmf) -> List[List[float]]:
    """I(Y_[i]^k; U_i^k | U_[i−1]^k)（[i−1][k−1]）"""
    table = []
    for i in range(1, joint.t + 1):
        row = []
        for k in range(1, joint.K + 1):
            y = joint.select([Process(name=OBSERVATION, observers=(k,))], upto=i)
            past = joint.select([Process(name=AUXILIARY, observers=(k,))], before=i, strict=False)
            row.append(conditional_mutual_information(joint, y, [joint.index_of(AUXILIARY, i, k)], past))
        table.append(row)
    return table


def select_code_sizes(joint: FinitePmf, delta: float, n: int = 1,
                      pi: Optional[Sequence[int]] = None) -> CodeSizes:
    """
    情報量から符号サイズを選ぶ

    log L ≥ nI + 2nδ、log M ≥ log L − nD + 2nδ（切り上げ）、α = β = nδ。
    M > L となる場合は M = L に切り詰めて警告する。
    """
    if not delta > 0:
        raise AxisError(f"delta must be positive: {delta}")
    info = information_table(joint)
    div = divergence_table(joint, pi)
    warnings: List[str] = []
    L_tab, M_tab = [], []
    for i in range(joint.t):
        l_row, m_row = [], []
        for k in range(joint.K):
            L = _ceil_exp(n * info[i][k] + 2.0 * n * delta)
            M = _ceil_exp(math.log(L) - n * div[i][k] + 2.0 * n * delta)
            if M > L:
                warnings.append(f"M^{k + 1}_{i + 1}={M} exceeds L={L}; clamped to L")
                logger.warning(warnings[-1])
                M = L
            l_row.append(L)
            m_row.append(M)
        L_tab.append(l_row)
        M_tab.append(m_row)
    slack = [[n * delta] * joint.K for _ in range(joint.t)]
    return CodeSizes(
        n=n, delta=delta, L=L_tab, M=M_tab, alpha=slack, beta=[row[:] for row in slack],
        information=info, divergence=div, warnings=warnings,
    )


def code_params_from_sizes(sizes: CodeSizes, d_thresholds: Sequence[float],
                           pi: Optional[Sequence[int]] = None,
                           distortion: Optional[List[List[float]]] = None) -> CodeParams:
    """CodeSizes を CodeParams に変換"""
    t, K = len(sizes.L), len(sizes.L[0])
    return CodeParams(
        t=t, K=K, n=sizes.n, L=sizes.L, M=sizes.M, alpha=sizes.alpha, beta=sizes.beta,
        pi=list(pi or range(1, K + 1)), d_thresholds=list(d_thresholds), distortion=distortion,
    )
