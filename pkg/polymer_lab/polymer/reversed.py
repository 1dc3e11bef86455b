import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import torch

from ..environment import EnvironmentField, TemperatureProfile
from ..errors import DomainError
from ..utils.lattice import box_shape, coordinates, point_mass, resize, slab_radius, squared_norm
from ..walk import contract, propagate, simple_kernel, step_distribution
from .state import PolymerState


@dataclass(frozen=True)
class ReversedPartition:
    anchor: int
    depth: int
    sites: torch.Tensor
    values: torch.Tensor


@dataclass(frozen=True)
class LLTResidual:
    """
    delta_k^x = E[e_k | S_{k+1} = x] - W_{l_k} <-W^x_{k+1, l_k} over the window |x| <= alpha sqrt(k).

    Sites with P(S_{k+1} = x) = 0 are skipped and counted in ``skipped``.
    """

    k: int
    l_k: int
    alpha: float
    sites: torch.Tensor
    delta: torch.Tensor
    skipped: int


def lk_depth(k: int, exponent: float) -> int:
    return math.ceil(k**exponent)


def _multiplier(field: EnvironmentField, profile: TemperatureProfile, t: int, radius: int) -> torch.Tensor:
    return torch.exp(profile.beta * field.row(t, profile.d, radius) - profile.lambda_)


def reversed_partition_slab(
    field: EnvironmentField, profile: TemperatureProfile, anchor: int, l: int, radius: int
) -> torch.Tensor:
    """
    <-W^x_{anchor, l} for every x of the centred box, by one backward sweep.

    Reads environment rows anchor - 1, ..., anchor - l only.
    """
    if l < 0 or l >= anchor:
        raise DomainError(f"depth l={l} must satisfy 0 <= l < anchor={anchor}")
    if l == 0 or profile.beta == 0.0:
        return torch.ones(box_shape(profile.d, radius), dtype=torch.float64)
    kernel = simple_kernel(profile.d)
    h = _multiplier(field, profile, anchor - l, radius + l)
    for depth in range(l - 1, 0, -1):
        h = contract(h, kernel) * _multiplier(field, profile, anchor - depth, radius + depth)
    return contract(h, kernel)


def reversed_partition(
    field: EnvironmentField, profile: TemperatureProfile, anchor: int, l: int, sites: torch.Tensor
) -> ReversedPartition:
    sites = torch.as_tensor(sites, dtype=torch.int64).reshape(-1, profile.d)
    radius = int(sites.abs().max().item()) if sites.numel() else 0
    slab = reversed_partition_slab(field, profile, anchor, l, radius)
    values = slab[tuple((sites + radius).t())]
    return ReversedPartition(anchor=anchor, depth=l, sites=sites, values=values)


def residual_window(d: int, k: int, alpha: float) -> Tuple[int, torch.Tensor, torch.Tensor]:
    """Box radius, P(S_{k+1} = .) on that box and the window |x| <= alpha sqrt(k) of the LLT residual."""
    radius = min(math.floor(alpha * math.sqrt(k)), k + 1)
    p = step_distribution(d, k + 1, radius=radius)
    return radius, p, squared_norm(d, radius) <= alpha * alpha * k


def window_sites(d: int, k: int, alpha: float) -> torch.Tensor:
    """Sites of the window with P(S_{k+1} = x) > 0, in the order of ``LLTResidual.delta``."""
    radius, p, in_window = residual_window(d, k, alpha)
    return coordinates(d, radius)[in_window & (p > 0)]


def residual_from_state(
    state: PolymerState, w_l: float, l_k: int, alpha: float
) -> LLTResidual:
    """The LLT residual at the current time of a state, given W_{l_k} of the same environment."""
    k, d = state.k, state.d
    if k < 1 or 2 * l_k >= k:
        raise DomainError(f"l_k={l_k} must satisfy l_k < k/2 with k={k}")
    q, _ = state.pending()
    radius, p, in_window = residual_window(d, k, alpha)
    mask = in_window & (p > 0)
    reversed_values = reversed_partition_slab(state.field, state.profile, k + 1, l_k, radius)
    delta = resize(q, radius)[mask] / p[mask] - w_l * reversed_values[mask]
    return LLTResidual(
        k=k,
        l_k=l_k,
        alpha=alpha,
        sites=coordinates(d, radius)[mask],
        delta=delta,
        skipped=int((in_window & (p == 0)).sum().item()),
    )


def llt_residual(
    field: EnvironmentField,
    profile: TemperatureProfile,
    k: int,
    l_k: int,
    alpha: float,
    radius_cap: Optional[int] = None,
) -> LLTResidual:
    """Run one environment to time k and measure the polymer LLT residual there."""
    if k < 1 or 2 * l_k >= k:
        raise DomainError(f"l_k={l_k} must satisfy l_k < k/2 with k={k}")
    state = PolymerState(field, profile, radius_cap=radius_cap)
    w_l = state.W
    while state.k < k:
        state.step()
        if state.k == l_k:
            w_l = state.W
    return residual_from_state(state, w_l, l_k, alpha)


@lru_cache(maxsize=8)
def window_return_mass(d: int, horizon: int, alpha: float) -> Tuple[float, ...]:
    """
    sum over |x| <= alpha sqrt(k) of P(S_{k+1} = x)^2 for k = 0..horizon-1.

    The walk law is propagated on a box capped just beyond the widest window.
    """
    kernel = simple_kernel(d)
    cap = math.ceil(alpha * math.sqrt(horizon)) + 2
    law = point_mass(d)
    out = []
    for k in range(horizon):
        law = propagate(law, kernel)
        if slab_radius(law) > cap:
            law = resize(law, cap)
        sq = squared_norm(d, slab_radius(law))
        out.append(law.pow(2)[sq <= alpha * alpha * k].sum().item())
    return tuple(out)


def homogenized_inner_sum(
    field: EnvironmentField, profile: TemperatureProfile, k: int, l: int, alpha: float
) -> float:
    """sum over |x| <= alpha sqrt(k) of (<-W^x_{k+1, l})^2 P(S_{k+1} = x)^2 on one environment."""
    radius, p, in_window = residual_window(profile.d, k, alpha)
    reversed_values = reversed_partition_slab(field, profile, k + 1, l, radius)
    return (reversed_values.pow(2) * p.pow(2))[in_window].sum().item()
