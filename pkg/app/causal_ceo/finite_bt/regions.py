"""
レート領域の二つの表現の同値性チェック（t = 1）

部分集合の不等式による領域と、K! 個の連鎖則コーナー点の凸包を
上方に閉じた領域（時分割）を、標本点ごとに比較する。
"""
import logging
from itertools import combinations, permutations
from typing import Dict, FrozenSet, List, Sequence, Tuple

import numpy as np
from scipy import optimize

from ..errors import AxisError, ModelError
from ..models import RegionReport
from .information import conditional_mutual_information
from .pmf import AUXILIARY, OBSERVATION, FinitePmf

logger = logging.getLogger(__name__)

BOUNDARY_MARGIN = 1e-9
MAX_OBSERVERS = 4


def _indices(joint: FinitePmf, name: str, observers: Sequence[int]) -> List[int]:
    return [joint.index_of(name, 1, k) for k in observers]


def subset_function(joint: FinitePmf) -> Dict[FrozenSet[int], float]:
    """f(A) = I(Y^A; U^A | U^{Aᶜ})（空でない A ⊆ [K]）"""
    K = joint.K
    f: Dict[FrozenSet[int], float] = {}
    for size in range(1, K + 1):
        for subset in combinations(range(1, K + 1), size):
            rest = [k for k in range(1, K + 1) if k not in subset]
            f[frozenset(subset)] = conditional_mutual_information(
                joint,
                _indices(joint, OBSERVATION, subset),
                _indices(joint, AUXILIARY, subset),
                _indices(joint, AUXILIARY, rest),
            )
    return f


def corner_points(joint: FinitePmf) -> List[List[float]]:
    """各並べ替え π の連鎖則コーナー点 R_{π(k)} = I(Y^{π(k)}; U^{π(k)} | U^{π([k−1])})"""
    K = joint.K
    points = []
    for pi in permutations(range(1, K + 1)):
        point = [0.0] * K
        for pos, k in enumerate(pi):
            point[k - 1] = conditional_mutual_information(
                joint,
                _indices(joint, OBSERVATION, [k]),
                _indices(joint, AUXILIARY, [k]),
                _indices(joint, AUXILIARY, pi[:pos]),
            )
        points.append(point)
    return points


def subset_margin(rate: Sequence[float], f: Dict[FrozenSet[int], float]) -> float:
    """min_A (Σ_A R − f(A))/|A|。正なら部分集合領域の内部"""
    return min((sum(rate[k - 1] for k in A) - value) / len(A) for A, value in f.items())


def hull_margin(rate: Sequence[float], corners: Sequence[Sequence[float]]) -> float:
    """
    max s s.t. Σ λ_π v_π + s·1 ≤ R, Σ λ = 1, λ ≥ 0

    正ならコーナー点の凸包を上方に閉じた領域の内部。
    """
    V = np.asarray(corners, dtype=float)
    n_pts, K = V.shape
    # 変数 (λ_1..λ_P, s)、s を最大化
    c = np.zeros(n_pts + 1)
    c[-1] = -1.0
    A_ub = np.hstack([V.T, np.ones((K, 1))])
    b_ub = np.asarray(rate, dtype=float)
    A_eq = np.hstack([np.ones((1, n_pts)), np.zeros((1, 1))])
    bounds = [(0.0, None)] * n_pts + [(None, None)]
    result = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if not result.success:
        raise ModelError(f"region LP failed: {result.message}")
    return float(-result.fun)


def region_equivalence(joint: FinitePmf, samples: int = 1000, seed: int = 0) -> RegionReport:
    """
    標本点ごとに二つの領域の所属を比較

    境界から BOUNDARY_MARGIN 以内の点は除外する。
    """
    if joint.t != 1:
        raise AxisError(f"region equivalence needs t = 1, got t = {joint.t}")
    if not 1 <= joint.K <= MAX_OBSERVERS:
        raise ModelError(f"region equivalence supports 1 <= K <= {MAX_OBSERVERS}, got {joint.K}")

    f = subset_function(joint)
    corners = corner_points(joint)
    full = f[frozenset(range(1, joint.K + 1))]
    rng = np.random.Generator(np.random.Philox(seed))
    # 和レート付近に標本が集まる箱
    scale = 1.5 * max(full, max(max(p) for p in corners), 1e-3)

    excluded = agreements = inside = 0
    smallest = np.inf
    for _ in range(samples):
        rate = rng.uniform(0.0, scale, size=joint.K)
        m_subset = subset_margin(rate, f)
        m_hull = hull_margin(rate, corners)
        if min(abs(m_subset), abs(m_hull)) <= BOUNDARY_MARGIN:
            excluded += 1
            continue
        smallest = min(smallest, abs(m_subset))
        agree = (m_subset > 0.0) == (m_hull > 0.0)
        agreements += int(agree)
        inside += int(m_subset > 0.0)
        if not agree:
            logger.warning(f"region membership disagrees at R={rate.tolist()}: subset {m_subset}, hull {m_hull}")

    logger.info(f"region check K={joint.K}: {agreements}/{samples - excluded} agree, {excluded} near the boundary")
    return RegionReport(
        K=joint.K,
        samples=samples,
        boundary_excluded=excluded,
        agreements=agreements,
        in_region=inside,
        corner_points=corners,
        sum_rate=full,
        margin=float(smallest) if np.isfinite(smallest) else 0.0,
    )


def sum_rate_vertex(joint: FinitePmf, margin: float = 1e-6) -> Tuple[List[float], float, float]:
    """
    コーナー点を margin/K だけ上にずらした点の、両領域でのマージン

    Returns:
        (点, 部分集合マージン, 凸包マージン)
    """
    corner = corner_points(joint)[0]
    point = [r + margin / joint.K for r in corner]
    return point, subset_margin(point, subset_function(joint)), hull_margin(point, corner_points(joint))
