import json
import math
import os
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Optional, Tuple

from tqdm import tqdm

from ..errors import DomainError, UndefinedMomentError
from ..utils.io import write_json
from ..utils.lattice import check_box_budget, point_mass, resize, shell_mass, slab_radius
from ..utils.logging import get_logger
from ..walk import check_dimension, difference_kernel, pi_d, propagate, return_probabilities

HORIZON_BUCKET = 64


@dataclass(frozen=True)
class OverlapTrajectory:
    """
    Output of the overlap dynamic programme f_{k+1}(z) = e^{lambda2 1{z=0}} (q * f_k)(z).

    ``second_moments[k]`` is E[W_k^2] = sum_z f_k(z) and ``pinned[k]`` is
    E[e^{lambda2 N_k}; S_{k+1} = S~_{k+1}] = (q * f_k)(0).
    """

    d: int
    lambda2: float
    horizon: int
    radius_cap: int
    second_moments: Tuple[float, ...]
    pinned: Tuple[float, ...]
    clipped_mass: float


@dataclass(frozen=True)
class BridgeValue:
    n: int
    value: float
    bounded: bool


@dataclass(frozen=True)
class Adjudication:
    d: int
    lambda2: float
    n: int
    raw: float
    limit: float
    stated: float
    proof: float
    distance_stated: float
    distance_proof: float
    tolerance: float
    variant: Optional[str]


def default_overlap_cap(d: int, horizon: int) -> int:
    # the difference walk has variance 2k/d per coordinate
    return math.ceil(6.0 * math.sqrt(2.0 * horizon / d)) + 4


@lru_cache(maxsize=8)
def _overlap_dp(d: int, lambda2: float, horizon: int, radius_cap: int) -> OverlapTrajectory:
    kernel = difference_kernel(d)
    growth = math.exp(lambda2)
    f = point_mass(d)
    second, pinned, clipped = [1.0], [], 0.0
    for k in tqdm(range(horizon + 1), desc=f"overlap DP d={d}", disable=None, leave=False):
        check_box_budget(d, min(slab_radius(f) + kernel.radius, radius_cap + kernel.radius), reached=k)
        g = propagate(f, kernel)
        centre = (slab_radius(g),) * d
        pinned.append(g[centre].item())
        if k == horizon:
            break
        g[centre] *= growth
        if slab_radius(g) > radius_cap:
            clipped += shell_mass(g, radius_cap)
            g = resize(g, radius_cap)
        f = g
        second.append(f.sum().item())
    get_logger().info(
        f"overlap DP d={d} lambda2={lambda2} horizon={horizon} radius_cap={radius_cap} clipped={clipped:.3e}"
    )
    return OverlapTrajectory(d, lambda2, horizon, radius_cap, tuple(second), tuple(pinned), clipped)


def overlap_trajectory(d: int, lambda2: float, n: int, radius_cap: Optional[int] = None) -> OverlapTrajectory:
    """
    Exact second-moment trajectory up to time n (at least), without Monte Carlo.

    The horizon is rounded up to a multiple of 64 so that every n of a bucket reads the same
    deterministic computation.
    """
    check_dimension(d)
    if n < 0:
        raise DomainError(f"n must be non-negative, got {n}")
    if not (lambda2 >= 0.0 and math.isfinite(lambda2)):
        raise DomainError(f"lambda2 must be finite and non-negative, got {lambda2}")
    horizon = HORIZON_BUCKET * max(1, -(-n // HORIZON_BUCKET))
    cap = radius_cap if radius_cap is not None else default_overlap_cap(d, horizon)
    return _overlap_dp(d, float(lambda2), horizon, cap)


def exact_second_moment(d: int, lambda2: float, n: int) -> float:
    """E[W_n^2] = E^{(2)}[exp(lambda2 N_n)]."""
    return overlap_trajectory(d, lambda2, n).second_moments[n]


def exact_increment_variance(d: int, lambda2: float, k: int) -> float:
    """E[D_{k+1}^2] = kappa2 E^{(2)}[exp(lambda2 N_k); S_{k+1} = S~_{k+1}]."""
    return math.expm1(lambda2) * overlap_trajectory(d, lambda2, k).pinned[k]


def bridge_expectation(d: int, lambda2: float, n: int) -> BridgeValue:
    """E[exp(lambda2 sum_{i<=n} 1{S_2i = 0}) | S_2(n+1) = 0] from the pinned DP."""
    pinned = overlap_trajectory(d, lambda2, n).pinned[n]
    table = return_probabilities(d, n + 1)
    bounded = lambda2 < -math.log(pi_d(d).value)
    if not bounded:
        get_logger().warning(f"lambda2={lambda2} is outside the L2 region in d={d}; bridge values grow with n")
    return BridgeValue(n=n, value=pinned / table[n + 1], bounded=bounded)


def truncated_bracket_expectation(
    d: int, lambda2: float, n: int, K: float, horizon: Optional[int] = None
) -> float:
    """
    Exact expectation of the truncated bracket n^{(d-2)/2} sum_{k=n}^{Kn-1} E[D_{k+1}^2].

    With ``K = math.inf`` the sum is computed exactly up to ``horizon`` (default 4n) and the rest
    is closed by kappa2 B_horizon sum_{m > horizon} P(S_2m = 0), B being the bridge value.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if K < 2:
        raise DomainError(f"K must be >= 2, got {K}")
    kappa2 = math.expm1(lambda2)
    scale = n ** ((d - 2) / 2.0)
    if math.isfinite(K):
        last = int(K) * n - 1
        pinned = overlap_trajectory(d, lambda2, last).pinned
        return scale * kappa2 * math.fsum(pinned[n : last + 1])
    horizon = horizon or 4 * n
    pinned = overlap_trajectory(d, lambda2, horizon).pinned
    table = return_probabilities(d, max(1024, 4 * horizon))
    bridge = pinned[horizon] / table[horizon + 1]
    exact = math.fsum(pinned[n:horizon])
    return scale * kappa2 * (exact + bridge * table.tail(horizon + 1).value)


def adjudicate_second_moment(d: int, lambda2: float, n: int = 400, tolerance: float = 1e-3) -> Adjudication:
    """
    Decide which closed form of E[W_inf^2] the model obeys.

    The DP value at n is completed by its tail, kappa2 B_n sum_{m > n} P(S_2m = 0), and compared
    with both closed forms; the variant within ``tolerance`` (and the other outside it) wins.
    """
    pi = pi_d(d).value
    growth = math.exp(lambda2)
    if pi * growth >= 1.0:
        raise UndefinedMomentError(f"E[W_inf^2] is infinite for lambda2={lambda2} in d={d}")
    trajectory = overlap_trajectory(d, lambda2, n)
    table = return_probabilities(d, max(1024, 4 * n))
    raw = trajectory.second_moments[n]
    bridge = trajectory.pinned[n] / table[n + 1]
    limit = raw + math.expm1(lambda2) * bridge * table.tail(n + 1).value
    proof = (1.0 - pi) / (1.0 - pi * growth)
    stated = proof * growth
    distance_stated, distance_proof = abs(limit - stated), abs(limit - proof)
    variant = None
    if distance_proof <= tolerance < distance_stated:
        variant = "proof"
    elif distance_stated <= tolerance < distance_proof:
        variant = "stated"
    get_logger().info(
        f"E[W_inf^2] adjudication d={d} lambda2={lambda2}: DP limit {limit:.6f}, "
        f"stated {stated:.6f}, proof {proof:.6f} -> {variant}"
    )
    return Adjudication(
        d, lambda2, n, raw, limit, stated, proof, distance_stated, distance_proof, tolerance, variant
    )


def _verdict_path(cache_dir: str, d: int, lambda2: float, n: int) -> str:
    return os.path.join(cache_dir, f"verdict_d{d}_l{lambda2!r}_n{n}.json")


def load_verdict(cache_dir: str, d: int, lambda2: float, n: int = 400) -> Optional[Adjudication]:
    path = _verdict_path(cache_dir, d, lambda2, n)
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as f:
        return Adjudication(**json.load(f))


def cached_adjudication(cache_dir: str, d: int, lambda2: float, n: int = 400) -> Adjudication:
    verdict = load_verdict(cache_dir, d, lambda2, n)
    if verdict is None:
        verdict = adjudicate_second_moment(d, lambda2, n)
        write_json(_verdict_path(cache_dir, d, lambda2, n), asdict(verdict))
    return verdict
