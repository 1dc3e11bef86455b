import math
import os
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import torch

from ..environment import DisorderFamily, EnvironmentField, TemperatureProfile, temperature_profile
from ..errors import ResourceError
from ..oracle import overlap_trajectory
from ..polymer import (
    PolymerState,
    export_slab,
    homogenized_inner_sum,
    increment_bracket,
    residual_from_state,
    window_return_mass,
)
from ..utils.logging import get_logger
from .config import ExperimentConfig

SAMPLE_COLUMNS = (
    "replicate",
    "n",
    "N",
    "W_n",
    "W_N",
    "T_n",
    "U_n",
    "L_n",
    "s2_truncated",
    "a_bar",
    "window_mass",
    "clipped_mass",
)


@dataclass(frozen=True)
class ReplicateContext:
    """
    Deterministic inputs shared by every replicate of a run, computed once in the parent process.

    ``window_sums[k]`` is sum_{|x| <= alpha sqrt(k)} P(S_{k+1} = x)^2 and ``second_moments[l]`` the
    exact E[W_l^2] for every depth l the homogenized bracket needs.
    """

    family: DisorderFamily
    profile: TemperatureProfile
    radius_cap: int
    window_sums: Tuple[float, ...]
    second_moments: Tuple[float, ...]


def prepare_context(config: ExperimentConfig, profile: Optional[TemperatureProfile] = None) -> ReplicateContext:
    family = config.create_family()
    if profile is None:
        profile = temperature_profile(family, config.beta, config.d)
    depth = config.l_k(config.horizon - 1)
    if math.isfinite(profile.lambda2):
        second = overlap_trajectory(config.d, profile.lambda2, depth).second_moments[: depth + 1]
    else:
        second = (math.inf,) * (depth + 1)
    return ReplicateContext(
        family=family,
        profile=profile,
        radius_cap=config.effective_radius_cap,
        window_sums=window_return_mass(config.d, config.horizon, config.alpha),
        second_moments=tuple(second),
    )


@dataclass(eq=False)
class FluctuationSample:
    """
    Finite-n statistics of one environment. Lists indexed by n follow ``n_grid``.

    ``trajectory`` holds W_0, ..., W_N and ``increments[k]`` is D_{k+1}. ``window[j][a]`` is the
    scaled bracket mass outside |x| <= alpha_grid[a] sqrt(k) for n_grid[j]; ``homog[i]`` is the
    inner sum of the homogenized bracket at homog_k_grid[i] and ``llt_delta[i]`` the LLT residual
    over the window at llt_k_grid[i].
    """

    replicate: int
    n_grid: Tuple[int, ...]
    horizon_factor: int
    trajectory: List[float]
    increments: List[float]
    w_n: List[float] = field(default_factory=list)
    w_N: List[float] = field(default_factory=list)
    t: List[float] = field(default_factory=list)
    u: List[float] = field(default_factory=list)
    l: List[float] = field(default_factory=list)
    s2: List[float] = field(default_factory=list)
    a_bar: List[float] = field(default_factory=list)
    window_mass: List[float] = field(default_factory=list)
    window: List[List[float]] = field(default_factory=list)
    homog: List[float] = field(default_factory=list)
    llt_delta: List[torch.Tensor] = field(default_factory=list)
    clipped_mass: float = 0.0
    underflow_cells: int = 0

    def to_state_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_state_dict(cls, state: Dict[str, Any]) -> "FluctuationSample":
        state = dict(state)
        state["n_grid"] = tuple(state["n_grid"])
        return cls(**state)

    def csv_rows(self) -> List[Tuple]:
        return [
            (
                self.replicate,
                n,
                self.horizon_factor * n,
                self.w_n[j],
                self.w_N[j],
                self.t[j],
                self.u[j],
                self.l[j],
                self.s2[j],
                self.a_bar[j],
                self.window_mass[j],
                self.clipped_mass,
            )
            for j, n in enumerate(self.n_grid)
        ]


def _fill_statistics(
    sample: FluctuationSample,
    config: ExperimentConfig,
    brackets: List[float],
    outside: List[float],
    windows: List[Tuple[float, ...]],
    homogenized: List[float],
) -> FluctuationSample:
    d, K = config.d, config.horizon_factor
    w = sample.trajectory
    for n in config.n_grid:
        last = K * n
        half, full = n ** ((d - 2) / 4.0), n ** ((d - 2) / 2.0)
        sample.w_n.append(w[n])
        sample.w_N.append(w[last])
        sample.t.append(half * (w[last] - w[n]))
        sample.u.append(half * (w[last] - w[n]) / w[n])
        sample.l.append(half * (math.log(w[last]) - math.log(w[n])))
        sample.s2.append(full * math.fsum(brackets[n:last]))
        sample.window_mass.append(full * math.fsum(outside[n:last]))
        sample.window.append([full * math.fsum(row[a] for row in windows[n:last]) for a in range(len(config.alpha_grid))])
        sample.a_bar.append(full * math.fsum(homogenized[n:last]))
    return sample


def run_replicate(
    config: ExperimentConfig,
    r: int,
    context: Optional[ReplicateContext] = None,
    snapshot_dir: Optional[str] = None,
) -> FluctuationSample:
    """
    One environment, one forward pass to N = K max(n_grid).

    Replicate r reads the environment seeded by ``config.seed + r``; the result is a pure
    function of (config, r). Slab snapshots are written at every n of the grid when
    ``snapshot_dir`` is given.
    """
    context = context or prepare_context(config)
    profile = context.profile
    env = EnvironmentField(config.seed + r, context.family)
    state = PolymerState(env, profile, radius_cap=context.radius_cap)
    trajectory, increments = [state.W], []
    brackets, outside, windows, homogenized = [], [], [], []
    homog, llt_delta = {}, {}
    try:
        for k in range(config.horizon):
            record = increment_bracket(state, config.alpha, config.alpha_grid)
            increments.append(record.D)
            brackets.append(record.bracket)
            outside.append(record.window_mass)
            windows.append(record.windows)
            l_k = config.l_k(k)
            homogenized.append(
                profile.kappa2 * trajectory[l_k] ** 2 * context.second_moments[l_k] * context.window_sums[k]
                if profile.kappa2 > 0
                else 0.0
            )
            if k in config.llt_k_grid:
                residual = residual_from_state(state, trajectory[l_k], l_k, config.llt_alpha)
                llt_delta[k] = residual.delta
            if k in config.homog_k_grid:
                homog[k] = homogenized_inner_sum(env, profile, k, l_k, config.alpha)
            state.step()
            trajectory.append(state.W)
            if snapshot_dir is not None and state.k in config.n_grid:
                export_slab(state, os.path.join(snapshot_dir, f"r{r:06d}_k{state.k:05d}.bin"))
    except ResourceError as e:
        error = ResourceError(f"replicate {r}: {e}")
        error.reached = e.reached
        raise error from e
    if not state.certified(config.clip_tolerance):
        get_logger().warning(
            f"replicate {r}: clipped mass {state.clipped_mass:.3e} exceeds {config.clip_tolerance:g} of W_N"
        )
    sample = FluctuationSample(
        replicate=r,
        n_grid=tuple(config.n_grid),
        horizon_factor=config.horizon_factor,
        trajectory=trajectory,
        increments=increments,
        homog=[homog[k] for k in config.homog_k_grid],
        llt_delta=[llt_delta[k] for k in config.llt_k_grid],
        clipped_mass=state.clipped_mass,
        underflow_cells=state.underflow_cells,
    )
    return _fill_statistics(sample, config, brackets, outside, windows, homogenized)


def synthetic_samples(
    profile: TemperatureProfile, config: ExperimentConfig, seed: int, replicates: Optional[int] = None
) -> List[FluctuationSample]:
    """
    Samples drawn from the Gaussian limit law instead of a polymer.

    W_n is lognormal with the exact E[W_inf^2], U_n = sigma_adj G independently of W_n and
    s_n^2 = c_K sigma2 W_N^2 up to a small mean-one noise. Every acceptance check must pass on
    these at its nominal level; the checks' false-alarm rate is calibrated with them.
    """
    rng = np.random.default_rng(seed)
    d, K = config.d, config.horizon_factor
    c_k = 1.0 - K ** (-(d - 2) / 2.0)
    sigma2 = profile.sigma2 or 0.0
    winfty = (1.0 - profile.pi_d) / (1.0 - profile.pi_d * math.exp(profile.lambda2))
    log_var = math.log(winfty)
    sigma_adj = math.sqrt(c_k * sigma2)
    count = replicates or config.replicates
    out = []
    for r in range(count):
        w = math.exp(math.sqrt(log_var) * rng.standard_normal() - 0.5 * log_var)
        trajectory = [w] * (config.horizon + 1)
        sample = FluctuationSample(
            replicate=r,
            n_grid=tuple(config.n_grid),
            horizon_factor=K,
            trajectory=trajectory,
            increments=[0.0] * config.horizon,
            homog=[0.0] * len(config.homog_k_grid),
            llt_delta=[torch.zeros(0, dtype=torch.float64) for _ in config.llt_k_grid],
        )
        for n in config.n_grid:
            half = n ** ((d - 2) / 4.0)
            u = sigma_adj * rng.standard_normal()
            w_last = w * (1.0 + u / half)
            sample.w_n.append(w)
            sample.w_N.append(w_last)
            sample.t.append(u * w)
            sample.u.append(u)
            sample.l.append(half * math.log(max(w_last, 1e-300) / w))
            spread = 0.2 / half
            s2 = c_k * sigma2 * w_last**2 * math.exp(spread * rng.standard_normal() - 0.5 * spread**2)
            sample.s2.append(s2)
            sample.a_bar.append(s2)
            sample.window_mass.append(0.0)
            sample.window.append([0.0] * len(config.alpha_grid))
        out.append(sample)
    return out
