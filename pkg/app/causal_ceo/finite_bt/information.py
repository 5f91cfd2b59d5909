"""
エントロピー・条件付き相互情報量・有向情報量・情報密度（nats）
"""
import logging
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from scipy.special import xlogy

from ..errors import AxisError
from .pmf import FinitePmf, Process

logger = logging.getLogger(__name__)

Selectors = Union[Process, Sequence[Process]]


def _as_list(selectors: Optional[Selectors]) -> List[Process]:
    if selectors is None:
        return []
    if isinstance(selectors, Process):
        return [selectors]
    return list(selectors)


def entropy(joint: FinitePmf, idxs: Iterable[int]) -> float:
    """H(idxs の軸)"""
    idxs = sorted(set(idxs))
    if not idxs:
        return 0.0
    p = joint.marginal(idxs)
    return float(-np.sum(xlogy(p, p)))


def conditional_mutual_information(
    joint: FinitePmf, a: Iterable[int], b: Iterable[int], c: Iterable[int] = ()
) -> float:
    """I(A; B | C) = H(AC) + H(BC) − H(ABC) − H(C)"""
    c = set(c)
    a = set(a) - c
    b = set(b) - c
    if not a or not b:
        return 0.0
    value = entropy(joint, a | c) + entropy(joint, b | c) - entropy(joint, a | b | c) - entropy(joint, c)
    # 丸め誤差による微小な負値
    return max(value, 0.0) if value > -1e-12 else value


def mutual_information(joint: FinitePmf, a: Iterable[int], b: Iterable[int]) -> float:
    return conditional_mutual_information(joint, a, b, ())


def directed_information(
    joint: FinitePmf,
    source: Selectors,
    target: Selectors,
    given: Optional[Selectors] = None,
    delayed: Optional[Selectors] = None,
) -> float:
    """
    有向情報量 Σ_i I(source_[i]; target_i | target_[i−1], given_[i], delayed_[i−1])

    given を指定すると因果的条件付き、delayed は1ステップ遅れの条件付け。
    """
    src = _as_list(source)
    tgt = _as_list(target)
    cond = _as_list(given)
    late = _as_list(delayed)
    if not src or not tgt:
        raise AxisError("source and target selectors are required")
    # 一致しないセレクタを先に検出
    for sels in (src, tgt, cond, late):
        joint.select(sels)

    times = sorted({joint.axes[j].time for j in joint.select(tgt)})
    total = 0.0
    for i in times:
        a = joint.select(src, upto=i)
        b = joint.select(tgt, at=i)
        c = joint.select(tgt, before=i) + joint.select(cond, upto=i) + joint.select(late, before=i)
        term = conditional_mutual_information(joint, a, b, c)
        logger.debug(f"directed information term i={i}: {term:.6g}")
        total += term
    return total


def causally_conditioned_di(joint: FinitePmf, source: Selectors, target: Selectors, given: Selectors) -> float:
    """I(source → target ‖ given)"""
    return directed_information(joint, source, target, given=given)


def pointwise_cmi(joint: FinitePmf, a: Iterable[int], b: Iterable[int], c: Iterable[int] = ()) -> np.ndarray:
    """
    条件付き情報密度 log p(abc) + log p(c) − log p(ac) − log p(bc)

    同時分布と同じ形状で返す。確率0の結果では 0。
    """
    c = set(c)
    a = set(a) - c
    b = set(b) - c
    probs = joint.probs
    if not a or not b:
        return np.zeros(probs.shape)

    def log_marginal(idxs):
        if not idxs:
            return np.zeros([1] * probs.ndim)
        m = joint.marginal(idxs, keepdims=True)
        with np.errstate(divide="ignore"):
            return np.log(m)

    with np.errstate(invalid="ignore"):
        density = log_marginal(a | b | c) + log_marginal(c) - log_marginal(a | c) - log_marginal(b | c)
    density = np.broadcast_to(density, probs.shape)
    return np.where(probs > 0.0, density, 0.0)


def expectation(joint: FinitePmf, values: np.ndarray) -> float:
    """確率0のセルを除いた期待値"""
    mask = joint.probs > 0.0
    return float(np.sum(joint.probs[mask] * values[mask]))
