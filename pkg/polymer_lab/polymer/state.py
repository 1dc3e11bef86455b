import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch

from ..environment import EnvironmentField, TemperatureProfile
from ..errors import DomainError
from ..utils.lattice import (
    MAX_BOX_CELLS,
    check_box_budget,
    count_subnormal,
    point_mass,
    resize,
    shell_mass,
    slab_radius,
    squared_norm,
)
from ..walk import check_dimension, propagate, simple_kernel


def default_radius_cap(d: int, horizon: int) -> int:
    """Box radius holding all but a negligible share of the polymer mass up to time ``horizon``."""
    return math.ceil(6.0 * math.sqrt(horizon / d)) + 4


@dataclass(frozen=True)
class IncrementRecord:
    """
    Martingale increment D_{k+1} = W_{k+1} - W_k with its conditional variance.

    ``bracket`` is E[D_{k+1}^2 | F_k] = kappa2 * sum_x q_k(x)^2 and ``window_mass`` the part of it
    carried by |x| > alpha sqrt(k); ``windows`` repeats the split for every alpha of a grid.
    """

    k: int
    D: float
    bracket: float
    window_mass: float
    windows: Tuple[float, ...] = ()


class PolymerState:
    """
    Normalised point-to-point weights w_k(x) = e^{-k lambda} E[e^{beta sum_{i<=k} omega(i, S_i)}; S_k = x]
    of one environment, on a dense centred box.

    The box grows by one site per step until ``radius_cap`` and is then clipped; the discarded
    mass is accumulated in ``clipped_mass``.

    Args:
        field (EnvironmentField): the environment.
        profile (TemperatureProfile): inverse temperature and the derived lambda, kappa2.
        radius_cap (int, optional): clip the box at this radius. Defaults to no clipping.
        max_cells (int): budget on the number of cells of one slab.
    """

    def __init__(
        self,
        field: EnvironmentField,
        profile: TemperatureProfile,
        radius_cap: Optional[int] = None,
        max_cells: int = MAX_BOX_CELLS,
    ):
        self.d = check_dimension(profile.d)
        self.field = field
        self.profile = profile
        self.radius_cap = radius_cap
        self.max_cells = max_cells
        self.k = 0
        self.slab = point_mass(self.d)
        self.clipped_mass = 0.0
        self.underflow_cells = 0
        self._kernel = simple_kernel(self.d)
        self._pending = None

    @property
    def radius(self) -> int:
        return slab_radius(self.slab)

    @property
    def W(self) -> float:
        return self.slab.sum().item()

    def certified(self, tolerance: float = 1e-6) -> bool:
        return self.clipped_mass < tolerance * self.W

    def pending(self) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        The pair (q_k, e^{beta omega(k+1, .) - lambda}) on the box of radius ``radius + 1``.

        q_k(x) = (1/2d) sum_{y ~ x} w_k(y) is the mass arriving at (k+1, x) before the
        time-(k+1) disorder is applied. Cached until the next step.
        """
        if self._pending is None:
            radius = self.radius + 1
            check_box_budget(self.d, radius, reached=self.k, max_cells=self.max_cells)
            q = propagate(self.slab, self._kernel)
            if self.profile.beta == 0.0:
                multiplier = torch.ones_like(q)
            else:
                omega = self.field.row(self.k + 1, self.d, radius)
                multiplier = torch.exp(self.profile.beta * omega - self.profile.lambda_)
            self._pending = (q, multiplier)
        return self._pending

    def step(self) -> "PolymerState":
        q, multiplier = self.pending()
        slab = q * multiplier
        if self.radius_cap is not None and slab_radius(slab) > self.radius_cap:
            self.clipped_mass += shell_mass(slab, self.radius_cap)
            slab = resize(slab, self.radius_cap)
        self.underflow_cells += count_subnormal(slab)
        self.slab = slab
        self.k += 1
        self._pending = None
        return self


def step(state: PolymerState) -> PolymerState:
    return state.step()


def increment_bracket(state: PolymerState, alpha: float, alphas: Sequence[float] = ()) -> IncrementRecord:
    q, multiplier = state.pending()
    kappa2 = state.profile.kappa2
    q2 = q.pow(2)
    sq = squared_norm(state.d, slab_radius(q))

    def outside(a: float) -> float:
        return kappa2 * q2[sq > a * a * state.k].sum().item()

    return IncrementRecord(
        k=state.k,
        D=(q * (multiplier - 1.0)).sum().item(),
        bracket=kappa2 * q2.sum().item(),
        window_mass=outside(alpha),
        windows=tuple(outside(a) for a in alphas),
    )


def partition_function(
    field: EnvironmentField, profile: TemperatureProfile, n: int, radius_cap: Optional[int] = None
) -> List[float]:
    """W_0, ..., W_n on one environment."""
    if n < 0:
        raise DomainError(f"n must be non-negative, got {n}")
    state = PolymerState(field, profile, radius_cap=radius_cap)
    trajectory = [state.W]
    for _ in range(n):
        trajectory.append(state.step().W)
    return trajectory
