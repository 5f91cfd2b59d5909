"""
因果的（ブロック間メモリ付き）ガウスCEO問題のレート歪み計算パッケージ
"""
from .errors import (
    AxisError, CeoError, ConvergenceError, EnumerationLimitError, InfeasibleError, KernelError,
    ModelError, SpecParseError,
)
from .models import (
    Allocation, ChannelSet, JointMmseMode, RateUnit, RdfQuery, SchemeConfig, SourceModel, SteadyState,
)

__version__ = "1.0.0"

__all__ = [
    "Allocation", "AxisError", "CeoError", "ChannelSet", "ConvergenceError", "EnumerationLimitError",
    "InfeasibleError", "JointMmseMode", "KernelError", "ModelError", "RateUnit", "RdfQuery",
    "SchemeConfig", "SourceModel", "SpecParseError", "SteadyState",
]
