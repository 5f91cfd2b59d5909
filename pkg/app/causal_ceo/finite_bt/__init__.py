"""
有限アルファベットの有向情報量と非漸近Berger-Tung界
"""
from .bound import (
    achievable_rates, check_separate_encoding, code_params_from_sizes, evaluate_bt_bound,
    evaluate_bt_sharp, gamma_constant, info_density_tables, monte_carlo_event_probability,
    select_code_sizes,
)
from .information import (
    causally_conditioned_di, conditional_mutual_information, directed_information, entropy,
    mutual_information, pointwise_cmi,
)
from .pmf import Axis, CausalKernel, FinitePmf, KernelFactor, Process, compose_joint, random_toy
from .pmf_reader import PmfSpec, load_pmf, parse_pmf
from .regions import region_equivalence

__all__ = [
    "Axis", "CausalKernel", "FinitePmf", "KernelFactor", "PmfSpec", "Process",
    "achievable_rates", "causally_conditioned_di", "check_separate_encoding",
    "code_params_from_sizes", "compose_joint", "conditional_mutual_information",
    "directed_information", "entropy", "evaluate_bt_bound", "evaluate_bt_sharp",
    "gamma_constant", "info_density_tables", "load_pmf", "monte_carlo_event_probability",
    "mutual_information", "parse_pmf", "pointwise_cmi", "random_toy", "region_equivalence",
    "select_code_sizes",
]
