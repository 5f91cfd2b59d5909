"""
例外定義
"""
from typing import Optional


class CeoError(Exception):
    """ツール全体の基底例外"""


class ModelError(CeoError, ValueError):
    """パラメータが不正"""


class InfeasibleError(CeoError, ValueError):
    """目標歪みが実行可能範囲の外"""

    def __init__(self, message: str, d: Optional[float] = None,
                 lower: Optional[float] = None, upper: Optional[float] = None):
        super().__init__(message)
        self.d = d
        self.lower = lower
        self.upper = upper


class ConvergenceError(CeoError, RuntimeError):
    """反復計算が収束しない"""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class EnumerationLimitError(CeoError):
    """列挙サイズが上限を超えた"""

    def __init__(self, size: int, limit: int):
        super().__init__(
            f"state space has {size} outcomes, above the enumeration limit {limit}; "
            f"use the Monte Carlo estimate instead (--mc-samples)"
        )
        self.size = size
        self.limit = limit


class AxisError(CeoError, ValueError):
    """軸の指定が同時分布と一致しない"""


class KernelError(CeoError, ValueError):
    """条件付きカーネルが不正（正規化・因果性・分離符号化）"""


class SpecParseError(CeoError, ValueError):
    """pmfテーブルファイルの構文エラー"""

    def __init__(self, message: str, filename: str = "<string>", line: int = 0):
        super().__init__(f"{filename}:{line}: {message}")
        self.filename = filename
        self.line = line
