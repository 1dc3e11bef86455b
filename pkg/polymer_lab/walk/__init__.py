from .kernel import (
    SUPPORTED_DIMENSIONS,
    WalkKernel,
    check_dimension,
    contract,
    difference_kernel,
    kernel_power,
    propagate,
    simple_kernel,
    step_distribution,
)
from .return_probability import (
    GOLDEN_PI_D,
    Estimate,
    ReturnProbabilityTable,
    lclt_constant,
    lclt_density,
    pi_d,
    quadrature_return_probability,
    return_probabilities,
    return_tail_sum,
    set_table_cache_dir,
    table_cache,
    table_cache_dir,
    zeta_d,
    zeta_d_limit,
)

__all__ = [
    "SUPPORTED_DIMENSIONS",
    "WalkKernel",
    "check_dimension",
    "contract",
    "difference_kernel",
    "kernel_power",
    "propagate",
    "simple_kernel",
    "step_distribution",
    "GOLDEN_PI_D",
    "Estimate",
    "ReturnProbabilityTable",
    "lclt_constant",
    "lclt_density",
    "pi_d",
    "quadrature_return_probability",
    "return_probabilities",
    "return_tail_sum",
    "set_table_cache_dir",
    "table_cache",
    "table_cache_dir",
    "zeta_d",
    "zeta_d_limit",
]
