from .reversed import (
    LLTResidual,
    ReversedPartition,
    homogenized_inner_sum,
    lk_depth,
    llt_residual,
    residual_from_state,
    residual_window,
    reversed_partition,
    reversed_partition_slab,
    window_return_mass,
    window_sites,
)
from .snapshot import export_slab, load_slab
from .state import IncrementRecord, PolymerState, default_radius_cap, increment_bracket, partition_function, step

__all__ = [
    "LLTResidual",
    "ReversedPartition",
    "homogenized_inner_sum",
    "lk_depth",
    "llt_residual",
    "residual_from_state",
    "residual_window",
    "reversed_partition",
    "reversed_partition_slab",
    "window_return_mass",
    "window_sites",
    "export_slab",
    "load_slab",
    "IncrementRecord",
    "PolymerState",
    "default_radius_cap",
    "increment_bracket",
    "partition_function",
    "step",
]
