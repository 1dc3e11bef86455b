from .overlap import (
    Adjudication,
    BridgeValue,
    OverlapTrajectory,
    adjudicate_second_moment,
    bridge_expectation,
    cached_adjudication,
    default_overlap_cap,
    exact_increment_variance,
    exact_second_moment,
    load_verdict,
    overlap_trajectory,
    truncated_bracket_expectation,
)

__all__ = [
    "Adjudication",
    "BridgeValue",
    "OverlapTrajectory",
    "adjudicate_second_moment",
    "bridge_expectation",
    "cached_adjudication",
    "default_overlap_cap",
    "exact_increment_variance",
    "exact_second_moment",
    "load_verdict",
    "overlap_trajectory",
    "truncated_bracket_expectation",
]
