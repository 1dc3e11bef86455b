import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

from ..environment import TemperatureProfile, second_moment_winfty
from ..oracle import Adjudication, overlap_trajectory
from ..polymer import window_return_mass
from .config import ExperimentConfig


@dataclass(frozen=True)
class OracleReferences:
    """
    Exact reference values the Monte Carlo checks are compared with.

    Per n of the grid: ``truncated`` is E[s_n^2] for the truncated bracket, ``var_t_exact`` is
    n^{(d-2)/2} (E W_{Kn}^2 - E W_n^2) and ``c_prime`` the exact truncation factor
    truncated / (sigma2 E[W_inf^2]). ``c_k`` = 1 - K^{-(d-2)/2} is its asymptotic value.
    """

    winfty_second_moment: float
    winfty_variant: str
    adjudicated: bool
    sigma2: float
    c_k: float
    truncated: Tuple[float, ...]
    var_t_exact: Tuple[float, ...]
    c_prime: Tuple[float, ...]
    homog_expectation: Tuple[float, ...]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "OracleReferences":
        return cls(**{k: tuple(float(x) for x in v) if isinstance(v, list) else v for k, v in data.items()})


def truncation_factor(d: int, horizon_factor: int) -> float:
    return 1.0 - horizon_factor ** (-(d - 2) / 2.0)


def oracle_references(
    config: ExperimentConfig, profile: TemperatureProfile, adjudication: Optional[Adjudication] = None
) -> Optional[OracleReferences]:
    """Reference values for one run; ``None`` outside the L2 region where they are infinite."""
    if not profile.in_l2_region:
        return None
    d, K = config.d, config.horizon_factor
    variants = second_moment_winfty(profile)
    variant = adjudication.variant if adjudication is not None and adjudication.variant else "proof"
    winfty = getattr(variants, variant)
    sigma2 = profile.sigma2
    trajectory = overlap_trajectory(d, profile.lambda2, config.horizon)
    truncated, var_t = [], []
    for n in config.n_grid:
        scale = n ** ((d - 2) / 2.0)
        truncated.append(scale * profile.kappa2 * math.fsum(trajectory.pinned[n : K * n]))
        var_t.append(scale * (trajectory.second_moments[K * n] - trajectory.second_moments[n]))
    limit = sigma2 * winfty
    window = window_return_mass(d, config.horizon, config.alpha)
    homog = [trajectory.second_moments[config.l_k(k)] * window[k] for k in config.homog_k_grid]
    return OracleReferences(
        winfty_second_moment=winfty,
        winfty_variant=variant,
        adjudicated=adjudication is not None and adjudication.variant is not None,
        sigma2=sigma2,
        c_k=truncation_factor(d, K),
        truncated=tuple(truncated),
        var_t_exact=tuple(var_t),
        c_prime=tuple(t / limit if limit > 0 else 0.0 for t in truncated),
        homog_expectation=tuple(homog),
    )


def synthetic_references(config: ExperimentConfig, profile: TemperatureProfile) -> OracleReferences:
    """References matching :func:`synthetic_samples`, whose truncation factor is exactly c_K."""
    variants = second_moment_winfty(profile)
    c_k = truncation_factor(config.d, config.horizon_factor)
    limit = c_k * profile.sigma2 * variants.proof
    grid = len(config.n_grid)
    return OracleReferences(
        winfty_second_moment=variants.proof,
        winfty_variant="proof",
        adjudicated=False,
        sigma2=profile.sigma2,
        c_k=c_k,
        truncated=(limit,) * grid,
        var_t_exact=(limit,) * grid,
        c_prime=(c_k,) * grid,
        homog_expectation=(0.0,) * len(config.homog_k_grid),
    )
