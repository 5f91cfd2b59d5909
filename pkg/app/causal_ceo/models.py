"""
データモデル定義
"""
import math
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class JointMmseMode(str, Enum):
    """結合MMSEの計算モード"""
    RICCATI = "riccati"
    FUSION = "fusion"


class CurveMode(str, Enum):
    """曲線出力で使うモード（両方を並べる場合はboth）"""
    RICCATI = "riccati"
    FUSION = "fusion"
    BOTH = "both"


class RateUnit(str, Enum):
    """レートの単位"""
    NATS = "nats"
    BITS = "bits"


class OutputFormat(str, Enum):
    """出力形式"""
    CSV = "csv"
    JSON = "json"
    YAML = "yaml"
    MARKDOWN = "markdown"


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True)


class ExtVariance(_Frozen):
    """拡張実数の分散（精度=逆数で保持し、精度0で無限大）"""
    precision: float = Field(ge=0.0, description="精度 1/σ²")
    variance: float = Field(description="分散（無限大を許容）")

    @model_validator(mode="after")
    def _check_consistent(self) -> "ExtVariance":
        if self.precision == 0.0:
            if not math.isinf(self.variance):
                raise ValueError("precision 0 requires infinite variance")
        elif not (self.variance > 0 and math.isfinite(self.variance)):
            raise ValueError("finite precision requires finite positive variance")
        return self

    @classmethod
    def from_variance(cls, variance: float) -> "ExtVariance":
        if math.isinf(variance):
            return cls.infinite()
        if not variance > 0:
            raise ValueError(f"variance must be positive: {variance}")
        return cls(precision=1.0 / variance, variance=variance)

    @classmethod
    def from_precision(cls, precision: float) -> "ExtVariance":
        if precision == 0.0:
            return cls.infinite()
        return cls(precision=precision, variance=1.0 / precision)

    @classmethod
    def infinite(cls) -> "ExtVariance":
        return cls(precision=0.0, variance=math.inf)

    @property
    def is_infinite(self) -> bool:
        return self.precision == 0.0


class SourceModel(_Frozen):
    """スカラーGauss-Markov情報源 X_{i+1} = a X_i + V_i"""
    a: float = Field(description="遷移係数（|a| ≥ 1 も可）")
    sigma_v2: float = Field(gt=0.0, description="プロセス雑音の分散")

    @field_validator("a", "sigma_v2")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("parameters must be finite")
        return v

    @property
    def is_stable(self) -> bool:
        return abs(self.a) < 1.0


class ChannelSet(_Frozen):
    """観測チャネル群 Y_i^k = X_i + W_i^k"""
    sigma_w2: List[float] = Field(min_length=1, description="観測雑音の分散（K個）")

    @field_validator("sigma_w2")
    @classmethod
    def _positive(cls, values: List[float]) -> List[float]:
        for v in values:
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"observation noise variance must be finite and positive: {v}")
        return values

    @property
    def K(self) -> int:
        return len(self.sigma_w2)


class SteadyState(_Frozen):
    """定常状態の分散・MMSE一式"""
    model: SourceModel
    channels: ChannelSet
    sigma_x2: ExtVariance = Field(description="定常分散 σ_X²")
    s: List[float] = Field(description="チャネル毎の因果MMSE σ²_{X‖Y^k}")
    q: List[float] = Field(description="チャネル毎の予測MMSE a²s_k + σ_V²")
    s_joint_riccati: float = Field(description="結合Riccatiによる σ²_{X‖Y^[K]}")
    s_joint_fusion: float = Field(description="融合公式による σ²_{X‖Y^[K]}")
    bar_v: List[float] = Field(description="推定過程の革新分散 q_k − s_k")

    @property
    def K(self) -> int:
        return len(self.s)

    @property
    def kappa(self) -> List[float]:
        """定常カルマンゲイン q_k / (q_k + σ_{W_k}²)"""
        return [q / (q + w) for q, w in zip(self.q, self.channels.sigma_w2)]


class RdfQuery(_Frozen):
    """レート歪み関数の問い合わせ"""
    model: SourceModel
    channels: ChannelSet
    d: float = Field(gt=0.0, description="目標歪み")
    mode: JointMmseMode = Field(default=JointMmseMode.RICCATI)
    unit: RateUnit = Field(default=RateUnit.NATS)


class Allocation(BaseModel):
    """動作点（d_k, ρ_k などの配分）。レートは内部的にnats"""
    model_config = ConfigDict(populate_by_name=True)

    d: float = Field(description="目標歪み")
    mode: JointMmseMode = Field(default=JointMmseMode.RICCATI)
    d_k: List[float] = Field(description="チャネル毎の復号MMSE（無限大可）")
    rho_k: List[float] = Field(description="補助MMSE ρ_k")
    rho_bar_k: List[float] = Field(default_factory=list, description="予測側の補助MMSE ρ̄_k")
    rho_max_k: List[float] = Field(default_factory=list, description="ρ_k の上限 σ²_{X̄^k‖X}")
    sigma_z2: List[float] = Field(default_factory=list, description="テストチャネル雑音分散")
    active: List[bool] = Field(default_factory=list, description="d_k < σ_X² のチャネル")
    water_level: Optional[float] = Field(default=None, alias="lambda", description="注水レベル λ")
    multiplier: Optional[float] = Field(default=None, description="歪み制約のラグランジュ乗数")
    constraint_residual: float = Field(default=0.0, description="Σx_k − (1/s_J − 1/d)")
    rate_terms: List[float] = Field(description="チャネル毎のレート項")
    base_rate: float = Field(description="½log(d̄/d)")
    total_rate: float = Field(description="合計レート")
    warnings: List[str] = Field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.d_k)


class LossReport(_Frozen):
    """孤立観測者による損失の評価"""
    lhs: float = Field(description="R_CEO − R_rm")
    rhs: float = Field(description="(K−1)(R_rm − R)")
    condition_holds: bool = Field(description="d が十分小さい条件の成否")
    condition_lhs: float = Field(description="1/d")
    condition_rhs: float = Field(description="1/s_J + K/σ_X² − min_k K/s_k")
    equality: bool = Field(description="全ての s_k が等しい")
    bound_holds: bool = Field(default=True, description="条件成立時に lhs ≤ rhs を満たすか")


class RdfRecord(BaseModel):
    """曲線1点分のフラットな出力レコード"""
    model_config = ConfigDict(populate_by_name=True)

    a: float
    sigma_v2: float
    K: int
    sigma_w2: List[float]
    d: float
    mode: JointMmseMode
    unit: RateUnit
    status: str = Field(default="ok")
    R_direct: Optional[float] = None
    R_remote: Optional[float] = None
    R_ceo: Optional[float] = None
    R_wf: Optional[float] = None
    d_k: List[float] = Field(default_factory=list)
    rho_k: List[float] = Field(default_factory=list)
    water_level: Optional[float] = Field(default=None, alias="lambda")
    condition_holds: Optional[bool] = None
    loss_lhs: Optional[float] = None
    loss_rhs: Optional[float] = None
    detail: str = Field(default="", description="状態の補足")


class FusionReport(_Frozen):
    """融合公式と結合Riccatiの差異レポート"""
    s_joint_riccati: float
    s_joint_fusion: float
    absolute_gap: float
    relative_gap: float
    d_reference: float
    remote_riccati: float
    remote_fusion: float
    ceo_riccati: float
    ceo_fusion: float
    remote_gap: float
    ceo_gap: float


class CodeParams(BaseModel):
    """非漸近界の符号パラメータ（時刻 i × 観測者 k の表）"""
    t: int = Field(ge=1)
    K: int = Field(ge=1)
    n: int = Field(default=1, ge=1, description="ブロック長")
    L: List[List[int]] = Field(description="L_i^k（t×K）")
    M: List[List[int]] = Field(description="M_i^k（t×K）")
    alpha: List[List[float]] = Field(description="α_i^k（t×K）")
    beta: List[List[float]] = Field(description="β_i^k（t×K）")
    pi: List[int] = Field(description="観測者の並べ替え（1始まり）")
    d_thresholds: List[float] = Field(description="時刻毎の歪み閾値 d_i")
    distortion: Optional[List[List[float]]] = Field(default=None, description="歪み表 sd(x, x̂)。省略時はハミング")
    observer_thresholds: Optional[List[List[float]]] = Field(
        default=None, description="分散情報源符号化の場合の d_i^k（t×K）"
    )

    @model_validator(mode="after")
    def _check_shapes(self) -> "CodeParams":
        for name in ("L", "M", "alpha", "beta"):
            table = getattr(self, name)
            if len(table) != self.t or any(len(row) != self.K for row in table):
                raise ValueError(f"{name} must be a {self.t}x{self.K} table")
        for row_l, row_m in zip(self.L, self.M):
            for l_ik, m_ik in zip(row_l, row_m):
                if not (l_ik >= m_ik >= 1):
                    raise ValueError(f"need L >= M >= 1, got L={l_ik}, M={m_ik}")
        if sorted(self.pi) != list(range(1, self.K + 1)):
            raise ValueError(f"pi must be a permutation of 1..{self.K}: {self.pi}")
        if len(self.d_thresholds) != self.t:
            raise ValueError("d_thresholds must have one entry per time step")
        if self.observer_thresholds is not None:
            if len(self.observer_thresholds) != self.t or any(
                len(row) != self.K for row in self.observer_thresholds
            ):
                raise ValueError(f"observer_thresholds must be a {self.t}x{self.K} table")
        return self

    @classmethod
    def uniform(
        cls,
        t: int,
        K: int,
        L: int = 1,
        M: int = 1,
        alpha: float = 0.0,
        beta: float = 0.0,
        d: float = 0.0,
        n: int = 1,
        pi: Optional[List[int]] = None,
        distortion: Optional[List[List[float]]] = None,
    ) -> "CodeParams":
        """全ての (i, k) で同じ値を持つパラメータを作る"""
        return cls(
            t=t, K=K, n=n,
            L=[[L] * K for _ in range(t)],
            M=[[M] * K for _ in range(t)],
            alpha=[[alpha] * K for _ in range(t)],
            beta=[[beta] * K for _ in range(t)],
            pi=pi or list(range(1, K + 1)),
            d_thresholds=[d] * t,
            distortion=distortion,
        )


class BtBoundReport(BaseModel):
    """非漸近Berger-Tung界の評価結果"""
    prob_E: float = Field(description="Pr[𝓔]（厳密列挙）")
    gamma: float = Field(description="定数 γ")
    epsilon_bound: float = Field(description="min(1, Pr[𝓔] + γ)")
    sharp_success: Optional[float] = Field(default=None, description="鋭い形の 1−ε 下界")
    event_breakdown: Dict[str, float] = Field(default_factory=dict, description="事象族ごとの確率")
    outcomes: int = Field(default=0, description="列挙した結果数")
    n: int = Field(default=1)
    prob_E_monte_carlo: Optional[float] = None
    monte_carlo_se: Optional[float] = None
    monte_carlo_samples: Optional[int] = None
    warnings: List[str] = Field(default_factory=list)


class CodeSizes(BaseModel):
    """情報量からの符号サイズ選択"""
    n: int
    delta: float
    L: List[List[int]]
    M: List[List[int]]
    alpha: List[List[float]]
    beta: List[List[float]]
    information: List[List[float]] = Field(description="I(Y_[i]^k; U_i^k | U_[i−1]^k)")
    divergence: List[List[float]] = Field(description="D_i^k")
    warnings: List[str] = Field(default_factory=list)


class AchievableRates(BaseModel):
    """達成可能な観測者毎レート"""
    pi: List[int]
    rates: List[float] = Field(description="観測者 k=1..K のレート下限（nats）")
    sum_rate: float
    directed_information: float = Field(description="I(Y^[K] → U^[K])")


class RegionReport(BaseModel):
    """領域の同値性チェック結果"""
    K: int
    samples: int
    boundary_excluded: int
    agreements: int
    in_region: int
    corner_points: List[List[float]]
    sum_rate: float
    margin: float

    @property
    def agreement_fraction(self) -> float:
        checked = self.samples - self.boundary_excluded
        return 1.0 if checked == 0 else self.agreements / checked


class SchemeConfig(BaseModel):
    """ガウステストチャネル方式のシミュレーション設定"""
    model: SourceModel
    channels: ChannelSet
    allocation: Allocation
    horizon: int = Field(default=10_000, ge=1, description="バーンイン後のステップ数 T")
    seed: int = Field(default=0, ge=0, lt=2**64)
    trials: int = Field(default=10, ge=1)
    exact_covariance: bool = Field(default=True)
    monte_carlo: bool = Field(default=True)
    workers: int = Field(default=1, ge=1)
    trace: bool = Field(default=False, description="試行0のステップ毎トレースを残す")
    mode: JointMmseMode = Field(default=JointMmseMode.RICCATI)


class AugmentedSystem(BaseModel):
    """(K+1)次元拡大系：状態 (X, X̄^1..X̄^K)、観測 B^k = X̄^k + Z^k"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    transition: np.ndarray
    noise_gain: np.ndarray
    noise_cov: np.ndarray = Field(description="(V, W^1..W^K) の対角共分散")
    process_cov: np.ndarray = Field(description="G Q Gᵀ")
    observation: np.ndarray
    obs_noise_cov: np.ndarray
    kappa: List[float]
    sigma_z2: List[float]

    @property
    def dim(self) -> int:
        return self.transition.shape[0]


class SimReport(BaseModel):
    """シミュレーション結果"""
    achieved_mse_exact: Optional[float] = None
    achieved_mse_empirical: Optional[float] = None
    standard_error: Optional[float] = None
    within_ci: Optional[bool] = None
    target_d: float
    signed_gap: Optional[float] = Field(default=None, description="厳密MMSE − d")
    d_k_target: List[float] = Field(default_factory=list)
    d_k_check: List[float] = Field(default_factory=list)
    rho_k_target: List[float] = Field(default_factory=list)
    rho_k_check: List[float] = Field(default_factory=list)
    sigma_z2: List[float] = Field(default_factory=list)
    s_joint_riccati: float
    s_joint_fusion: float
    fusion_gap: float
    xbar_variance_theory: List[float] = Field(default_factory=list)
    xbar_variance_empirical: List[float] = Field(default_factory=list)
    horizon: int
    trials: int
    burn_in: int
    seed: int
    samples: int = 0
    error_coordinates: bool = False
    warnings: List[str] = Field(default_factory=list)


class GridConfig(BaseModel):
    """歪みグリッド設定"""
    min: float = Field(gt=0.0)
    max: float = Field(gt=0.0)
    count: int = Field(default=50, ge=2)
    log: bool = Field(default=False)

    @model_validator(mode="after")
    def _ordered(self) -> "GridConfig":
        if self.max < self.min:
            raise ValueError("grid max must not be below grid min")
        return self

    @classmethod
    def parse(cls, text: str) -> "GridConfig":
        """'min:max:count[:log]' 形式を解釈"""
        parts = text.split(":")
        if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "log"):
            raise ValueError(f"grid must be min:max:count[:log], got {text!r}")
        return cls(min=float(parts[0]), max=float(parts[1]), count=int(parts[2]), log=len(parts) == 4)


class BtConfig(BaseModel):
    """bt-eval 設定"""
    spec: Optional[str] = Field(default=None, description="pmfテーブルファイル")
    alpha: float = Field(default=0.0)
    beta: float = Field(default=0.0)
    perm: Optional[List[int]] = Field(default=None)
    n: int = Field(default=1, ge=1)
    L: int = Field(default=1, ge=1)
    M: int = Field(default=1, ge=1)
    d_threshold: float = Field(default=0.0, description="全時刻共通の歪み閾値")
    delta: Optional[float] = Field(default=None, gt=0.0, description="符号サイズ自動選択の余裕 δ")
    mc_samples: int = Field(default=0, ge=0)


class RunConfig(BaseModel):
    """CLI実行設定"""
    subcommand: Optional[str] = None
    a: float = Field(default=0.0)
    sigma_v2: float = Field(default=1.0, gt=0.0)
    sigma_w2: List[float] = Field(default_factory=lambda: [1.0, 1.0])
    d: Optional[float] = Field(default=0.5, gt=0.0)
    d_grid: Optional[GridConfig] = Field(default=None)
    mode: CurveMode = Field(default=CurveMode.RICCATI)
    unit: RateUnit = Field(default=RateUnit.NATS)
    seed: int = Field(default=0, ge=0)
    horizon: int = Field(default=10_000, ge=1)
    trials: int = Field(default=10, ge=1)
    workers: int = Field(default=1, ge=1)
    out: Optional[str] = Field(default=None, description="出力先（省略時は標準出力）")
    format: OutputFormat = Field(default=OutputFormat.CSV)
    language: str = Field(default="ja", description="出力言語")
    trace: Optional[str] = Field(default=None, description="トレースCSVの出力先")
    bt: BtConfig = Field(default_factory=BtConfig)
    suite: Optional[str] = Field(default=None, description="selftestのスイート名")


class SuiteResult(BaseModel):
    """selftest のスイート毎の結果"""
    name: str
    passed: int = 0
    failed: int = 0
    failures: List[str] = Field(default_factory=list, description="失敗したケースの説明（先頭のみ）")

    @property
    def ok(self) -> bool:
        return self.failed == 0


class Report(BaseModel):
    """サブコマンドの出力（表形式の行と構造化ドキュメント）"""
    kind: str = Field(description="curve | allocate | simulate | bt-eval | selftest")
    parameters: Dict[str, Any] = Field(default_factory=dict, description="実行パラメータ")
    rows: List[Dict[str, Any]] = Field(default_factory=list, description="CSV/Markdown用のフラットな行")
    document: Dict[str, Any] = Field(default_factory=dict, description="JSON/YAML用の構造化データ")
    warnings: List[str] = Field(default_factory=list)


class ErrorResponse(BaseModel):
    """エラーレスポンス"""
    error: str = Field(description="エラーメッセージ")
    detail: Optional[str] = Field(default=None, description="詳細情報")
