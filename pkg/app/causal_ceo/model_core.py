"""
スカラー線形ガウス推定の代数

一回推定のMMSE補題、カルマン/Riccati再帰、定常不動点、
そして融合公式（別モードとして明示）をまとめる。
すべて不変な入力に対する純粋関数。
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

from .errors import ConvergenceError, ModelError
from .models import ChannelSet, ExtVariance, JointMmseMode, SourceModel, SteadyState

logger = logging.getLogger(__name__)

# 検証用反復の既定値
VERIFY_TOL = 1e-13
VERIFY_MAX_ITER = 100_000


def stationary_variance(m: SourceModel) -> ExtVariance:
    """定常分散 σ_V²/(1 − a²)。|a| ≥ 1 では無限大"""
    if m.is_stable:
        return ExtVariance.from_variance(m.sigma_v2 / (1.0 - m.a * m.a))
    return ExtVariance.infinite()


def one_shot_mmse(sigma_x2: ExtVariance, sigma_w2: float) -> float:
    """X ~ N(0, σ_X²) を Y = X + W から一回推定したときのMMSE"""
    return 1.0 / (sigma_x2.precision + 1.0 / sigma_w2)


def one_shot_joint_mmse(sigma_x2: ExtVariance, channels: ChannelSet) -> Tuple[float, List[float]]:
    """
    K個の観測からの一回推定

    Returns:
        (mmse, weights): 1/mmse = 1/σ_X² + Σ 1/σ_{W_k}²、重みは mmse/σ_{W_k}²
    """
    precision = sigma_x2.precision + sum(1.0 / w for w in channels.sigma_w2)
    mmse = 1.0 / precision
    return mmse, [mmse / w for w in channels.sigma_w2]


def lemma_back(sigma_x2: float, sigma_y2: float) -> float:
    """Y = X + W（W ⟂ X）のとき σ²_{X|Y} = σ_X²(1 − σ_X²/σ_Y²)"""
    if not sigma_x2 > 0:
        raise ModelError(f"sigma_x2 must be positive: {sigma_x2}")
    if sigma_x2 > sigma_y2:
        raise ModelError(
            f"sigma_x2={sigma_x2} exceeds sigma_y2={sigma_y2}; Y = X + W with W independent of X is impossible"
        )
    return sigma_x2 * (1.0 - sigma_x2 / sigma_y2)


def lemma_combo(sigma_x2: ExtVariance, err: Sequence[float]) -> Tuple[float, List[float]]:
    """
    誤差 err_k を持つK個の推定値の融合

    1/σ²_{W'} = Σ 1/err_k − (K−1)/σ_X²、重みは σ²_{W'}/err_k
    """
    if not err:
        raise ModelError("at least one estimate is required")
    for e in err:
        if not e > 0:
            raise ModelError(f"estimation errors must be positive: {e}")
    precision = sum(1.0 / e for e in err) - (len(err) - 1) * sigma_x2.precision
    if precision <= 0:
        raise ModelError(f"fused precision is not positive: {precision}")
    fused = 1.0 / precision
    return fused, [fused / e for e in err]


def riccati_step(p_prev: float, m: SourceModel, obs_precision: float) -> Tuple[float, float]:
    """1ステップのRiccati更新：q = a²p + σ_V²、1/p = 1/q + c"""
    if p_prev < 0 or obs_precision < 0:
        raise ModelError("p_prev and obs_precision must be nonnegative")
    q = m.a * m.a * p_prev + m.sigma_v2
    return q, q / (1.0 + obs_precision * q)


def steady_state_mmse(m: SourceModel, obs_precision: float) -> Tuple[float, float]:
    """
    Riccati再帰の正の不動点

    c·q² + q(1 − a² − σ_V²c) − σ_V² = 0 の正の根を取り、p = q/(1 + cq)。

    Returns:
        (p, q): 濾波MMSEと予測MMSE
    """
    c = obs_precision
    if c < 0:
        raise ModelError(f"obs_precision must be nonnegative: {c}")
    if c == 0 and not m.is_stable:
        raise ModelError(f"no steady state without observations for |a|={abs(m.a)} >= 1")

    b = 1.0 - m.a * m.a - m.sigma_v2 * c
    root = math.sqrt(b * b + 4.0 * c * m.sigma_v2)
    # 桁落ちを避けるため符号で分岐
    if b > 0:
        q = 2.0 * m.sigma_v2 / (b + root)
    else:
        q = (root - b) / (2.0 * c)
    p = q / (1.0 + c * q)
    return p, q


def riccati_iterate(
    m: SourceModel,
    obs_precision: float,
    p0: float = 0.0,
    max_iter: int = VERIFY_MAX_ITER,
    tol: float = VERIFY_TOL,
    strict: bool = False,
) -> Tuple[float, float, int]:
    """
    riccati_step を相対変化が tol 未満になるまで反復（検証用）

    strict=True のとき max_iter で収束しなければ ConvergenceError。
    """
    p = p0
    q = m.sigma_v2
    change = math.inf
    for iteration in range(1, max_iter + 1):
        q, p_next = riccati_step(p, m, obs_precision)
        change = abs(p_next - p)
        p = p_next
        if change <= tol * p:
            return p, q, iteration
    if strict:
        raise ConvergenceError("Riccati iteration did not converge", iterations=max_iter, residual=change)
    logger.warning(f"Riccati iteration stopped at max_iter={max_iter} (last change {change:.3e})")
    return p, q, max_iter


def steady_state(m: SourceModel, ch: ChannelSet) -> SteadyState:
    """チャネル毎・結合の定常MMSEを計算"""
    sigma_x2 = stationary_variance(m)
    s: List[float] = []
    q: List[float] = []
    for w in ch.sigma_w2:
        p_k, q_k = steady_state_mmse(m, 1.0 / w)
        s.append(p_k)
        q.append(q_k)

    s_joint, _ = steady_state_mmse(m, sum(1.0 / w for w in ch.sigma_w2))
    s_fusion, _ = lemma_combo(sigma_x2, s)

    logger.debug(f"steady state: a={m.a}, K={ch.K}, s={s}, s_J(riccati)={s_joint}, s_J(fusion)={s_fusion}")
    return SteadyState(
        model=m,
        channels=ch,
        sigma_x2=sigma_x2,
        s=s,
        q=q,
        s_joint_riccati=s_joint,
        s_joint_fusion=s_fusion,
        bar_v=[qk - sk for qk, sk in zip(q, s)],
    )


def joint_mmse(ss: SteadyState, mode: JointMmseMode = JointMmseMode.RICCATI) -> float:
    """下流の公式で使う σ²_{X‖Y^[K]} を選ぶ"""
    if JointMmseMode(mode) is JointMmseMode.FUSION:
        return ss.s_joint_fusion
    return ss.s_joint_riccati


def innovation_variance(ss: SteadyState, k: int) -> float:
    """推定過程 X̄^k の革新分散"""
    return ss.bar_v[k]


def predicted(m: SourceModel, p: float) -> float:
    """予測分散 a²p + σ_V²（p = ∞ はそのまま ∞）"""
    if math.isinf(p):
        return math.inf
    return m.a * m.a * p + m.sigma_v2


def one_shot_steady_state(m: SourceModel, ch: ChannelSet) -> Optional[SteadyState]:
    """
    記憶なし問題の等価な定常状態

    a = 0, σ_V² = σ_X² の情報源として扱う。|a| ≥ 1 では None。
    """
    sigma_x2 = stationary_variance(m)
    if sigma_x2.is_infinite:
        return None
    return steady_state(SourceModel(a=0.0, sigma_v2=sigma_x2.variance), ch)
