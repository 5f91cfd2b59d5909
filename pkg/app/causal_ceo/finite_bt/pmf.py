"""
有限アルファベットの同時分布と因果的条件付きカーネル
"""
import logging
from itertools import product
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import AxisError, KernelError

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-12

# 変数名
SOURCE = "X"
OBSERVATION = "Y"
AUXILIARY = "U"
RECONSTRUCTION = "Xhat"
OBSERVER_RECONSTRUCTION = "Yhat"


class Axis(BaseModel):
    """確率変数の軸（名前、時刻 i、観測者 k）。k=0 は観測者に属さない変数"""
    model_config = ConfigDict(frozen=True)

    name: str = Field(min_length=1)
    time: int = Field(ge=1)
    observer: int = Field(default=0, ge=0)
    size: int = Field(ge=1, description="アルファベットサイズ")

    @property
    def key(self) -> Tuple[str, int, int]:
        return (self.name, self.time, self.observer)

    @property
    def order(self) -> Tuple[int, int, str]:
        """正準順序：時刻優先、次に観測者"""
        return (self.time, self.observer, self.name)

    @property
    def label(self) -> str:
        if self.observer:
            return f"{self.name}^{self.observer}_{self.time}"
        return f"{self.name}_{self.time}"


class Process(BaseModel):
    """名前（と観測者の集合）で軸を選ぶセレクタ"""
    model_config = ConfigDict(frozen=True)

    name: str
    observers: Optional[Tuple[int, ...]] = None

    def matches(self, axis: Axis) -> bool:
        if axis.name != self.name:
            return False
        return self.observers is None or axis.observer in self.observers


class FinitePmf:
    """
    ラベル付き軸上の密な同時確率表

    probs の次元 j は axes[j] に対応し、総和は 1（許容誤差 1e-12）。
    """

    def __init__(self, axes: Sequence[Axis], probs: np.ndarray, tol: float = NORMALIZATION_TOL):
        axes = tuple(axes)
        probs = np.asarray(probs, dtype=float)
        if len({a.key for a in axes}) != len(axes):
            raise AxisError("duplicate axis labels")
        if probs.shape != tuple(a.size for a in axes):
            raise AxisError(f"table shape {probs.shape} does not match axes {[a.label for a in axes]}")
        if np.any(probs < 0.0) or not np.all(np.isfinite(probs)):
            raise KernelError("probabilities must be finite and nonnegative")
        total = float(probs.sum())
        if abs(total - 1.0) > tol:
            raise KernelError(f"probabilities sum to {total!r}, not 1")
        self._axes = axes
        self._probs = probs
        self._probs.setflags(write=False)

    @property
    def axes(self) -> Tuple[Axis, ...]:
        return self._axes

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def t(self) -> int:
        return max((a.time for a in self._axes), default=0)

    @property
    def K(self) -> int:
        return max((a.observer for a in self._axes), default=0)

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self._probs))

    def has(self, name: str) -> bool:
        return any(a.name == name for a in self._axes)

    def index_of(self, name: str, time: int, observer: int = 0) -> int:
        for j, a in enumerate(self._axes):
            if a.key == (name, time, observer):
                return j
        raise AxisError(f"no axis {name} at time {time}, observer {observer}")

    def select(
        self,
        selectors: Iterable[Process],
        upto: Optional[int] = None,
        at: Optional[int] = None,
        before: Optional[int] = None,
        strict: bool = True,
    ) -> List[int]:
        """
        セレクタに一致する軸の添字

        upto: 時刻 ≤ upto、at: 時刻 = at、before: 時刻 < before。
        strict のとき、どの軸にも一致しないセレクタは AxisError。
        """
        found: List[int] = []
        for sel in selectors:
            matched = [j for j, a in enumerate(self._axes) if sel.matches(a)]
            if strict and not matched:
                raise AxisError(f"selector {sel.name} (observers={sel.observers}) matches no axis")
            for j in matched:
                time = self._axes[j].time
                if upto is not None and time > upto:
                    continue
                if at is not None and time != at:
                    continue
                if before is not None and time >= before:
                    continue
                if j not in found:
                    found.append(j)
        return sorted(found)

    def marginal(self, idxs: Iterable[int], keepdims: bool = False) -> np.ndarray:
        """idxs 以外の軸を周辺化（軸順は元のまま）"""
        keep = set(idxs)
        drop = tuple(j for j in range(len(self._axes)) if j not in keep)
        return self._probs.sum(axis=drop, keepdims=keepdims)

    def canonical(self) -> "FinitePmf":
        """軸を（時刻, 観測者, 名前）順に並べ替える"""
        order = sorted(range(len(self._axes)), key=lambda j: self._axes[j].order)
        return FinitePmf([self._axes[j] for j in order], np.transpose(self._probs, order))

    def outcomes(self) -> Tuple[np.ndarray, np.ndarray]:
        """正の確率を持つ結果の (値の行列, 確率)"""
        nz = np.nonzero(self._probs)
        return np.stack(nz, axis=1), self._probs[nz]

    @classmethod
    def from_outcomes(cls, axes: Sequence[Axis], table: Dict[Tuple[int, ...], float],
                      tol: float = NORMALIZATION_TOL) -> "FinitePmf":
        probs = np.zeros(tuple(a.size for a in axes))
        for values, p in table.items():
            probs[tuple(values)] += p
        return cls(axes, probs, tol=tol)

    @classmethod
    def random(cls, rng: np.random.Generator, axes: Sequence[Axis], concentration: float = 1.0) -> "FinitePmf":
        """ディリクレ分布から全体を引いたランダムな同時分布"""
        shape = tuple(a.size for a in axes)
        flat = rng.dirichlet(np.full(int(np.prod(shape)), concentration))
        return cls(axes, flat.reshape(shape))

    def __repr__(self) -> str:
        return f"FinitePmf({', '.join(a.label for a in self._axes)})"


class KernelFactor(BaseModel):
    """P(target | parents) の条件付き確率表（形状は parents + target）"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    target: Axis
    parents: Tuple[Axis, ...] = ()
    table: np.ndarray


class CausalKernel:
    """
    因果的条件付きカーネル

    各因子の行和は1、親の時刻は対象の時刻以下でなければならない。
    """

    def __init__(self, factors: Sequence[KernelFactor], tol: float = NORMALIZATION_TOL):
        for f in factors:
            expected = tuple(p.size for p in f.parents) + (f.target.size,)
            if f.table.shape != expected:
                raise KernelError(f"factor for {f.target.label} has shape {f.table.shape}, expected {expected}")
            if np.any(f.table < 0.0):
                raise KernelError(f"factor for {f.target.label} has negative entries")
            rows = f.table.sum(axis=-1)
            if np.max(np.abs(rows - 1.0)) > tol:
                raise KernelError(f"rows of the factor for {f.target.label} do not sum to 1")
            late = [p.label for p in f.parents if p.time > f.target.time]
            if late:
                raise KernelError(f"factor for {f.target.label} conditions on future variables {late}")
        self.factors = list(factors)

    def targets(self) -> List[Axis]:
        return [f.target for f in self.factors]


def compose_joint(source: FinitePmf, *kernels: CausalKernel) -> FinitePmf:
    """情報源分布にカーネルの因子を順に掛けて同時分布を作る"""
    axes = list(source.axes)
    probs = np.array(source.probs)
    for kernel in kernels:
        for f in kernel.factors:
            keys = [a.key for a in axes]
            positions = []
            for p in f.parents:
                if p.key not in keys:
                    raise AxisError(f"parent {p.label} of {f.target.label} is not in the joint yet")
                positions.append(keys.index(p.key))
            if f.target.key in keys:
                raise AxisError(f"{f.target.label} is already in the joint")

            # 親を同時分布の軸順に並べ替えてブロードキャスト
            order = sorted(range(len(positions)), key=lambda j: positions[j])
            table = np.transpose(f.table, order + [len(positions)])
            shape = [1] * (len(axes) + 1)
            for j in order:
                shape[positions[j]] = f.parents[j].size
            shape[-1] = f.target.size
            probs = probs[..., np.newaxis] * table.reshape(shape)
            axes.append(f.target)
    return FinitePmf(axes, probs).canonical()


def _random_factor(rng: np.random.Generator, target: Axis, parents: Sequence[Axis],
                   concentration: float) -> KernelFactor:
    shape = tuple(p.size for p in parents)
    table = rng.dirichlet(np.full(target.size, concentration), size=shape or None)
    return KernelFactor(target=target, parents=tuple(parents), table=np.asarray(table).reshape(shape + (target.size,)))


def random_toy(
    rng: np.random.Generator,
    t: int = 1,
    K: int = 2,
    alphabet: int = 2,
    aux_alphabet: Optional[int] = None,
    reconstruction: bool = True,
    concentration: float = 1.0,
) -> FinitePmf:
    """
    分離符号化構造を持つランダムな (X, Y, U, X̂)

    X はマルコフ連鎖、Y_i^k は X_i から、U_i^k は (Y_i^k, U_{i−1}^k) から、
    X̂_i は U_i^[K] から生成する。
    """
    aux_alphabet = aux_alphabet or alphabet
    x_axes = [Axis(name=SOURCE, time=i, size=alphabet) for i in range(1, t + 1)]
    source_factors = [_random_factor(rng, x_axes[0], (), concentration)]
    source_factors += [_random_factor(rng, x_axes[i], (x_axes[i - 1],), concentration) for i in range(1, t)]
    chain = compose_joint(
        FinitePmf([], np.array(1.0)),
        CausalKernel(source_factors),
    )

    channel, encoders, decoder = [], [], []
    for i in range(1, t + 1):
        x_i = x_axes[i - 1]
        for k in range(1, K + 1):
            y = Axis(name=OBSERVATION, time=i, observer=k, size=alphabet)
            channel.append(_random_factor(rng, y, (x_i,), concentration))
            u = Axis(name=AUXILIARY, time=i, observer=k, size=aux_alphabet)
            parents = [y]
            if i > 1:
                parents.append(Axis(name=AUXILIARY, time=i - 1, observer=k, size=aux_alphabet))
            encoders.append(_random_factor(rng, u, parents, concentration))
        if reconstruction:
            us = [Axis(name=AUXILIARY, time=i, observer=k, size=aux_alphabet) for k in range(1, K + 1)]
            xhat = Axis(name=RECONSTRUCTION, time=i, size=alphabet)
            decoder.append(_random_factor(rng, xhat, us, concentration))

    kernels = [CausalKernel(channel), CausalKernel(encoders)]
    if decoder:
        kernels.append(CausalKernel(decoder))
    return compose_joint(chain, *kernels)


def deterministic_copy_toy(alphabet: int = 2) -> FinitePmf:
    """X 一様、Y = U = X̂ = X（t=1, K=1）"""
    axes = [
        Axis(name=SOURCE, time=1, size=alphabet),
        Axis(name=OBSERVATION, time=1, observer=1, size=alphabet),
        Axis(name=AUXILIARY, time=1, observer=1, size=alphabet),
        Axis(name=RECONSTRUCTION, time=1, size=alphabet),
    ]
    table = {(v, v, v, v): 1.0 / alphabet for v in range(alphabet)}
    return FinitePmf.from_outcomes(axes, table).canonical()


def product_axes(names: Sequence[str], t: int, K: int, size: int) -> List[Axis]:
    """名前 × 時刻 × 観測者 の軸一覧（ランダム同時分布の検証用）"""
    axes = []
    for i, name, k in product(range(1, t + 1), names, range(1, K + 1)):
        axes.append(Axis(name=name, time=i, observer=k, size=size))
    return axes
