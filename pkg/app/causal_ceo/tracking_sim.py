"""
ガウステストチャネル方式のシミュレーション

K個の定常カルマン観測者、テストチャネル B^k = X̄^k + Z^k、
(K+1)次元拡大系の厳密な結合復号器。厳密共分散とモンテカルロの両方で
達成MSEを求め、理論上の目標歪み d と比較する。
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, signal

from . import model_core, rdf
from .errors import ConvergenceError, InfeasibleError, ModelError
from .models import (
    Allocation, AugmentedSystem, ChannelSet, FusionReport, JointMmseMode,
    RdfQuery, SchemeConfig, SimReport, SourceModel, SteadyState,
)

logger = logging.getLogger(__name__)

RICCATI_TOL = 1e-12
RICCATI_MAX_ITER = 1_000_000
MIN_BURN_IN = 100
BATCHES_PER_TRIAL = 10
CI_WIDTH = 4.0

# 乱数ストリームの識別子（spawn_key の3番目）
SOURCE_V = 0
SOURCE_W = 1
SOURCE_Z = 2
SOURCE_X0 = 3


class FilterSolution(NamedTuple):
    """行列Riccati再帰の不動点"""
    predicted: np.ndarray
    filtered: np.ndarray
    gain: np.ndarray
    iterations: int


class ChannelCheck(NamedTuple):
    """1チャネル分の (X, X̄^k) 2次元系で求めた厳密値"""
    d_k: float
    rho_k: float
    predicted: float


class TrialResult(NamedTuple):
    sq_err_sum: float
    count: int
    batch_means: List[float]
    xbar_sq_sum: List[float]
    trace: List[Dict[str, float]]


def sigma_z_from_dk(ss: SteadyState, k: int, d_k: float) -> float:
    """
    目標 d_k を与えるテストチャネル雑音分散 σ_{Z_k}²

    d_k = s_k + m_k と分解し、X̄^k を B^k から推定するスカラーRiccatiを逆に解く。
    上限 σ_X² では ∞ を返す。
    """
    s_k = ss.s[k]
    upper = ss.sigma_x2.variance
    if math.isinf(d_k) or (not ss.sigma_x2.is_infinite and d_k >= upper * (1.0 - rdf.WINDOW_TOL)):
        return math.inf
    if d_k <= s_k * (1.0 + rdf.WINDOW_TOL):
        raise InfeasibleError(f"d_{k + 1}={d_k} must exceed s_{k + 1}={s_k}", d=d_k, lower=s_k, upper=upper)

    m_k = d_k - s_k
    a2 = ss.model.a * ss.model.a
    inv = 1.0 / m_k - 1.0 / (a2 * m_k + model_core.innovation_variance(ss, k))
    if inv <= 0.0:
        raise InfeasibleError(
            f"d_{k + 1}={d_k} is not reachable by a Gaussian test channel", d=d_k, lower=s_k, upper=upper
        )
    return 1.0 / inv


def build_augmented(ss: SteadyState, sigma_z2: Sequence[float]) -> AugmentedSystem:
    """状態 (X, X̄^1..X̄^K) の拡大系を組み立てる"""
    if len(sigma_z2) != ss.K:
        raise ModelError(f"expected {ss.K} test-channel variances, got {len(sigma_z2)}")
    K = ss.K
    a = ss.model.a
    kappa = ss.kappa

    F = np.zeros((K + 1, K + 1))
    G = np.zeros((K + 1, K + 1))
    F[0, 0] = a
    G[0, 0] = 1.0
    for k in range(1, K + 1):
        F[k, 0] = kappa[k - 1] * a
        F[k, k] = a * (1.0 - kappa[k - 1])
        G[k, 0] = kappa[k - 1]
        G[k, k] = kappa[k - 1]

    Q = np.diag([ss.model.sigma_v2] + list(ss.channels.sigma_w2))
    H = np.hstack([np.zeros((K, 1)), np.eye(K)])
    return AugmentedSystem(
        transition=F,
        noise_gain=G,
        noise_cov=Q,
        process_cov=G @ Q @ G.T,
        observation=H,
        obs_noise_cov=np.diag(sigma_z2),
        kappa=kappa,
        sigma_z2=list(sigma_z2),
    )


def _observed_rows(sys: AugmentedSystem) -> List[int]:
    return [k for k, z in enumerate(sys.sigma_z2) if math.isfinite(z)]


def riccati_fixed_point(
    F: np.ndarray,
    process_cov: np.ndarray,
    H: np.ndarray,
    R: np.ndarray,
    tol: float = RICCATI_TOL,
    max_iter: int = RICCATI_MAX_ITER,
) -> FilterSolution:
    """Joseph形式の共分散更新で行列Riccati再帰を不動点まで回す"""
    n = F.shape[0]
    eye = np.eye(n)
    P = process_cov.copy()
    for iteration in range(1, max_iter + 1):
        if H.shape[0]:
            S = H @ P @ H.T + R
            gain = linalg.solve(S, H @ P, assume_a="pos").T
            I_KH = eye - gain @ H
            P_f = I_KH @ P @ I_KH.T + gain @ R @ gain.T
        else:
            gain = np.zeros((n, 0))
            P_f = P
        P_f = 0.5 * (P_f + P_f.T)
        P_next = F @ P_f @ F.T + process_cov
        change = np.max(np.abs(P_next - P))
        scale = np.max(np.abs(P_next))
        if not np.isfinite(scale):
            raise ConvergenceError("Riccati recursion diverged", iterations=iteration, residual=math.inf)
        P = P_next
        if change <= tol * scale:
            return FilterSolution(predicted=P, filtered=P_f, gain=gain, iterations=iteration)
    raise ConvergenceError("matrix Riccati recursion did not converge", iterations=max_iter, residual=change)


def steady_decoder(sys: AugmentedSystem) -> FilterSolution:
    """観測 B^[K] に対する定常カルマン復号器（σ_Z² = ∞ のチャネルは観測なし）"""
    rows = _observed_rows(sys)
    H = sys.observation[rows, :]
    R = sys.obs_noise_cov[np.ix_(rows, rows)]
    return riccati_fixed_point(sys.transition, sys.process_cov, H, R)


def exact_decoder_mmse(sys: AugmentedSystem) -> float:
    """復号器 E[X_i | B_[i]^[K]] の定常MMSE"""
    solution = steady_decoder(sys)
    logger.debug(f"decoder Riccati converged in {solution.iterations} steps")
    return float(solution.filtered[0, 0])


def stationary_covariance(sys: AugmentedSystem) -> np.ndarray:
    """拡大状態の定常共分散（離散Lyapunov方程式、|a| < 1）"""
    if abs(sys.transition[0, 0]) >= 1.0:
        raise ModelError("stationary covariance requires |a| < 1")
    return linalg.solve_discrete_lyapunov(sys.transition, sys.process_cov)


def channel_marginal_check(ss: SteadyState, k: int, sigma_z2: float) -> ChannelCheck:
    """
    チャネル k だけの2次元系 (X, X̄^k) で d_k と ρ_k を厳密に計算

    d_k: B^k からの X のMMSE。
    ρ_k: 観測者誤差 X − X̄^k の、復号器誤差 X − X̂^k が与えられた下での条件付き分散。
    二つの誤差と復号器の残りの誤差をまとめた3次元の安定な系の定常共分散から求める。
    """
    a = ss.model.a
    kappa = ss.kappa[k]
    s_k = ss.s[k]
    noise_var = [ss.model.sigma_v2, ss.channels.sigma_w2[k]]

    if not math.isfinite(sigma_z2):
        # 復号器は何も観測しないので X − X̂^k = X
        d_k = ss.sigma_x2.variance
        rho = s_k * (1.0 - s_k / d_k)
        return ChannelCheck(d_k=d_k, rho_k=rho, predicted=d_k)

    F = np.array([[a, 0.0], [kappa * a, a * (1.0 - kappa)]])
    G = np.array([[1.0, 0.0], [kappa, kappa]])
    process_cov = G @ np.diag(noise_var) @ G.T
    H = np.array([[0.0, 1.0]])
    decoder = riccati_fixed_point(F, process_cov, H, np.array([[sigma_z2]]))
    I_KH = np.eye(2) - decoder.gain @ H

    # 状態 (X − X̄^k, X − X̂^k, X̄^k − X̂̄^k)、雑音 (V, W^k, Z^k)
    transition = linalg.block_diag(a * (1.0 - kappa), I_KH @ F)
    noise_gain = np.zeros((3, 3))
    noise_gain[0, :2] = [1.0 - kappa, -kappa]
    noise_gain[1:, :2] = I_KH @ G
    noise_gain[1:, 2:] = -decoder.gain
    cov = linalg.solve_discrete_lyapunov(
        transition, noise_gain @ np.diag(noise_var + [sigma_z2]) @ noise_gain.T
    )
    rho = float(cov[0, 0] - cov[0, 1] ** 2 / cov[1, 1])
    return ChannelCheck(d_k=float(decoder.filtered[0, 0]), rho_k=rho, predicted=float(decoder.predicted[0, 0]))


def scheme_rate(alloc: Allocation, ss: SteadyState) -> Tuple[List[float], float]:
    """
    テストチャネル方式のレート（nats）

    ½log(d̄/d) + Σ_k ½log(ρ̄_k/ρ_k)。d_k から直接計算する。
    """
    m = ss.model
    terms: List[float] = []
    for k, (s_k, d_k) in enumerate(zip(ss.s, alloc.d_k)):
        rho = s_k * (1.0 - s_k / d_k)
        if rho <= 0.0:
            raise ModelError(f"channel {k + 1}: rho_k = 0, the description rate is unbounded")
        d_prev = model_core.predicted(m, d_k)
        rho_bar = s_k * (1.0 - s_k / d_prev)
        terms.append(max(0.5 * math.log(rho_bar / rho), 0.0))

    if not ss.sigma_x2.is_infinite and alloc.d >= ss.sigma_x2.variance * (1.0 - rdf.WINDOW_TOL):
        base = 0.0
    else:
        base = 0.5 * math.log(model_core.predicted(m, alloc.d) / alloc.d)
    return terms, base + sum(terms)


def fusion_discrepancy_report(m: SourceModel, ch: ChannelSet) -> FusionReport:
    """融合公式と結合Riccatiの σ²_{X‖Y^[K]} の差と、それが誘起するレートの差"""
    ss = model_core.steady_state(m, ch)
    s_ric, s_fus = ss.s_joint_riccati, ss.s_joint_fusion
    top = max(s_ric, s_fus)
    if ss.sigma_x2.is_infinite:
        d_ref = 2.0 * top
    else:
        d_ref = top + 0.5 * (ss.sigma_x2.variance - top)

    q_ric = RdfQuery(model=m, channels=ch, d=d_ref, mode=JointMmseMode.RICCATI)
    q_fus = q_ric.model_copy(update={"mode": JointMmseMode.FUSION})
    remote_ric, remote_fus = rdf.remote_rdf(q_ric), rdf.remote_rdf(q_fus)
    ceo_ric, _ = rdf.ceo_rdf(q_ric)
    ceo_fus, _ = rdf.ceo_rdf(q_fus)

    gap = abs(s_ric - s_fus)
    logger.info(f"fusion gap {gap:.6g} at a={m.a}, K={ch.K}")
    return FusionReport(
        s_joint_riccati=s_ric,
        s_joint_fusion=s_fus,
        absolute_gap=gap,
        relative_gap=gap / s_ric,
        d_reference=d_ref,
        remote_riccati=remote_ric,
        remote_fusion=remote_fus,
        ceo_riccati=ceo_ric,
        ceo_fusion=ceo_fus,
        remote_gap=remote_ric - remote_fus,
        ceo_gap=ceo_ric - ceo_fus,
    )


# ---------------------------------------------------------------------------
# モンテカルロ

def _stream(seed: int, trial: int, channel: int, source: int) -> np.random.Generator:
    sequence = np.random.SeedSequence(seed, spawn_key=(trial, channel, source))
    return np.random.Generator(np.random.Philox(sequence))


def burn_in_length(ss: SteadyState, closed_loop: np.ndarray) -> int:
    """誤差再帰の収縮率から決めるバーンイン長"""
    a = ss.model.a
    channel_rate = abs(a * (1.0 - min(ss.kappa)))
    decoder_rate = float(np.max(np.abs(np.linalg.eigvals(closed_loop)))) if closed_loop.size else 0.0
    rate = max(channel_rate, decoder_rate)
    if rate >= 1.0:
        raise ModelError(f"error dynamics are not contracting (rate {rate})")
    return max(MIN_BURN_IN, math.ceil(10.0 / (1.0 - rate)))


class _TrialRunner:
    """1試行分の軌道を誤差座標で生成する"""

    def __init__(self, cfg: SchemeConfig, ss: SteadyState, sys: AugmentedSystem,
                 decoder: FilterSolution, burn_in: int):
        self.cfg = cfg
        self.ss = ss
        self.sys = sys
        self.rows = _observed_rows(sys)
        self.burn_in = burn_in
        self.steps = burn_in + cfg.horizon
        eye = np.eye(sys.dim)
        H = sys.observation[self.rows, :]
        I_KH = eye - decoder.gain @ H
        self.closed_loop = I_KH @ sys.transition
        self.noise_map = I_KH @ sys.noise_gain
        self.z_map = -decoder.gain
        self.raw_state = ss.model.is_stable

    def __call__(self, trial: int) -> TrialResult:
        cfg, ss = self.cfg, self.ss
        K, N = ss.K, self.steps
        seed = cfg.seed

        v = _stream(seed, trial, 0, SOURCE_V).standard_normal(N) * math.sqrt(ss.model.sigma_v2)
        w = np.empty((K, N))
        z = np.zeros((K, N))
        for k in range(K):
            w[k] = _stream(seed, trial, k + 1, SOURCE_W).standard_normal(N) * math.sqrt(ss.channels.sigma_w2[k])
            if math.isfinite(self.sys.sigma_z2[k]):
                z[k] = _stream(seed, trial, k + 1, SOURCE_Z).standard_normal(N) * math.sqrt(self.sys.sigma_z2[k])

        # n_i = (V_i, W_{i+1}^1..K)、Z_{i+1}
        noise = np.vstack([v[np.newaxis, :], w])
        drive = self.noise_map @ noise
        if self.rows:
            drive = drive + self.z_map @ z[self.rows, :]

        err = np.zeros((self.sys.dim, N))
        e = np.zeros(self.sys.dim)
        for i in range(N):
            e = self.closed_loop @ e + drive[:, i]
            err[:, i] = e
        sq = err[0, self.burn_in:] ** 2

        batches = np.array_split(sq, min(BATCHES_PER_TRIAL, len(sq)))
        batch_means = [float(b.mean()) for b in batches]

        # 観測者の誤差 ε^k = X − X̄^k
        eps = np.empty((K, N))
        for k in range(K):
            kappa = ss.kappa[k]
            channel_drive = (1.0 - kappa) * v - kappa * w[k]
            eps[k] = signal.lfilter([1.0], [1.0, -ss.model.a * (1.0 - kappa)], channel_drive)

        xbar_sq_sum = [0.0] * K
        x = None
        if self.raw_state:
            x0 = _stream(seed, trial, 0, SOURCE_X0).standard_normal() * math.sqrt(ss.sigma_x2.variance)
            # X_{i+1} = aX_i + V_i、初期値 X_0
            zi = np.array([ss.model.a * x0])
            x, _ = signal.lfilter([1.0], [1.0, -ss.model.a], v, zi=zi)
            # eps と同じ時刻に合わせるため、x[i] は X_{i+1}
            xbar = x[np.newaxis, :] - eps
            xbar_sq_sum = [float(np.sum(xbar[k, self.burn_in:] ** 2)) for k in range(K)]

        trace: List[Dict[str, float]] = []
        if cfg.trace and trial == 0:
            trace = self._trace_rows(x, eps, err, z)

        return TrialResult(
            sq_err_sum=float(np.sum(sq)),
            count=len(sq),
            batch_means=batch_means,
            xbar_sq_sum=xbar_sq_sum,
            trace=trace,
        )

    def _trace_rows(self, x: Optional[np.ndarray], eps: np.ndarray, err: np.ndarray,
                    z: np.ndarray) -> List[Dict[str, float]]:
        K = self.ss.K
        rows: List[Dict[str, float]] = []
        for i in range(self.burn_in, self.steps):
            row: Dict[str, float] = {"step": i + 1 - self.burn_in}
            if x is not None:
                row["x"] = float(x[i])
                row["xhat"] = float(x[i] - err[0, i])
            else:
                row["x"] = math.nan
                row["xhat"] = math.nan
            row["sq_err"] = float(err[0, i] ** 2)
            for k in range(K):
                xbar = float(x[i] - eps[k, i]) if x is not None else math.nan
                row[f"xbar_{k + 1}"] = xbar
                row[f"b_{k + 1}"] = xbar + float(z[k, i]) if math.isfinite(self.sys.sigma_z2[k]) else math.nan
            rows.append(row)
        return rows


def run_simulation(cfg: SchemeConfig) -> Tuple[SimReport, List[Dict[str, float]]]:
    """シミュレーションを実行し、レポートと（要求時は）試行0のトレースを返す"""
    ss = model_core.steady_state(cfg.model, cfg.channels)
    alloc = cfg.allocation
    if alloc.K != ss.K:
        raise ModelError(f"allocation has {alloc.K} channels, model has {ss.K}")
    warnings: List[str] = []

    sigma_z2 = [sigma_z_from_dk(ss, k, d_k) for k, d_k in enumerate(alloc.d_k)]
    sys = build_augmented(ss, sigma_z2)
    decoder = steady_decoder(sys)
    exact = float(decoder.filtered[0, 0])

    checks = [channel_marginal_check(ss, k, z) for k, z in enumerate(sigma_z2)]
    rho_target = [s_k * (1.0 - s_k / d_k) for s_k, d_k in zip(ss.s, alloc.d_k)]

    xbar_theory: List[float] = []
    if ss.model.is_stable:
        xbar_theory = [ss.sigma_x2.variance - s_k for s_k in ss.s]
    else:
        warnings.append(f"|a|={abs(ss.model.a)} >= 1: simulated in error coordinates only")

    signed_gap = exact - alloc.d
    if ss.model.a != 0.0 and abs(signed_gap) > 1e-9:
        logger.info(f"exact decoder MMSE differs from target d by {signed_gap:.3e}")

    report = dict(
        achieved_mse_exact=exact if cfg.exact_covariance else None,
        target_d=alloc.d,
        signed_gap=signed_gap,
        d_k_target=list(alloc.d_k),
        d_k_check=[c.d_k for c in checks],
        rho_k_target=rho_target,
        rho_k_check=[c.rho_k for c in checks],
        sigma_z2=sigma_z2,
        s_joint_riccati=ss.s_joint_riccati,
        s_joint_fusion=ss.s_joint_fusion,
        fusion_gap=abs(ss.s_joint_riccati - ss.s_joint_fusion),
        xbar_variance_theory=xbar_theory,
        horizon=cfg.horizon,
        trials=cfg.trials,
        seed=cfg.seed,
        error_coordinates=True,
    )

    trace: List[Dict[str, float]] = []
    if not cfg.monte_carlo:
        return SimReport(burn_in=0, warnings=warnings, **report), trace

    runner = _TrialRunner(cfg, ss, sys, decoder, burn_in=0)
    burn_in = burn_in_length(ss, runner.closed_loop)
    runner = _TrialRunner(cfg, ss, sys, decoder, burn_in=burn_in)
    logger.info(f"simulating {cfg.trials} trials x {cfg.horizon} steps (burn-in {burn_in}, workers {cfg.workers})")

    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        results = list(executor.map(runner, range(cfg.trials)))

    # 試行順に集約
    total = sum(r.sq_err_sum for r in results)
    count = sum(r.count for r in results)
    batch_means = np.array([m for r in results for m in r.batch_means])
    empirical = total / count
    if len(batch_means) >= 2:
        se = float(np.std(batch_means, ddof=1) / math.sqrt(len(batch_means)))
    else:
        se = math.nan
        warnings.append("too few batches for a standard error")
    within: Optional[bool] = None
    if cfg.exact_covariance and math.isfinite(se):
        within = bool(abs(empirical - exact) <= CI_WIDTH * se)

    xbar_empirical: List[float] = []
    if ss.model.is_stable:
        xbar_empirical = [sum(r.xbar_sq_sum[k] for r in results) / count for k in range(ss.K)]

    if within is False:
        logger.warning(f"empirical MSE {empirical:.6g} is more than {CI_WIDTH} SE from exact {exact:.6g}")
    logger.info(f"simulation finished: empirical={empirical:.6g} +/- {se:.3g}, exact={exact:.6g}")
    if results and results[0].trace:
        trace = results[0].trace

    return SimReport(
        achieved_mse_empirical=empirical,
        standard_error=se,
        within_ci=within,
        xbar_variance_empirical=xbar_empirical,
        burn_in=burn_in,
        samples=count,
        warnings=warnings,
        **report,
    ), trace


def simulate(cfg: SchemeConfig) -> SimReport:
    """run_simulation のレポートだけを返す"""
    report, _ = run_simulation(cfg)
    return report
