import math
import os
import pickle
from contextlib import contextmanager
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch

from ..errors import DomainError, PrecisionError, ResourceError
from ..utils.io import atomic_torch_save
from ..utils.lattice import MAX_BOX_CELLS
from ..utils.logging import get_logger
from .kernel import check_dimension

MAX_TABLE_K = 1 << 16
DEFAULT_TABLE_K = 1024

# recurrence constants pi_d = 1 - 1/G_d, used to flag stale runs
GOLDEN_PI_D = {3: 0.340537, 4: 0.193206, 5: 0.135178}


# where return_probabilities persists built tables when no cache_dir is given
_TABLE_CACHE_DIR: Optional[str] = None


def set_table_cache_dir(path: Optional[str]) -> None:
    global _TABLE_CACHE_DIR
    _TABLE_CACHE_DIR = path


def table_cache_dir() -> Optional[str]:
    return _TABLE_CACHE_DIR


@contextmanager
def table_cache(path: Optional[str]) -> Iterator[Optional[str]]:
    """Persist tables under ``path`` for the duration of the block."""
    previous = _TABLE_CACHE_DIR
    set_table_cache_dir(path)
    try:
        yield path
    finally:
        set_table_cache_dir(previous)


class Estimate(NamedTuple):
    value: float
    error: float
    k_max: int


def lclt_constant(d: int) -> float:
    """A_d = 2 (d / 4 pi)^(d/2), the limit of k^(d/2) P(S_2k = 0)."""
    return 2.0 * (d / (4.0 * math.pi)) ** (d / 2.0)


def zeta_d_limit(d: int) -> float:
    check_dimension(d)
    return 4.0 / (d - 2) * (d / (4.0 * math.pi)) ** (d / 2.0)


def _hurwitz(s: float, q: float) -> float:
    return torch.special.zeta(
        torch.tensor(s, dtype=torch.float64), torch.tensor(q, dtype=torch.float64)
    ).item()


@dataclass(frozen=True, eq=False)
class ReturnProbabilityTable:
    """
    Exact return probabilities p[k] = P(S_2k = 0) for k = 0..k_max.

    Beyond the table the law is continued by the corrected local CLT expansion
    A_d k^(-d/2) (1 + c/k + c2/k^2), with c and c2 fitted on the last entries.
    """

    d: int
    p: torch.Tensor
    k_max: int

    def __getitem__(self, k: int) -> float:
        return self.p[k].item()

    @property
    def constant(self) -> float:
        return lclt_constant(self.d)

    def lclt_ratio(self) -> torch.Tensor:
        """k^(d/2) p[k] / A_d for k = 1..k_max."""
        k = torch.arange(1, self.k_max + 1, dtype=torch.float64)
        return self.p[1:] * k.pow(self.d / 2.0) / self.constant

    def _fit(self, k1: int, k2: int) -> Tuple[float, float]:
        ratio = self.lclt_ratio()
        r1 = (ratio[k1 - 1].item() - 1.0) * k1
        r2 = (ratio[k2 - 1].item() - 1.0) * k2
        c2 = (r1 - r2) / (1.0 / k1 - 1.0 / k2)
        return r1 - c2 / k1, c2

    def tail_coefficients(self) -> Tuple[float, float]:
        return self._fit(self.k_max, self.k_max // 2)

    def _closed_tail(self, m: int, c: float, c2: float) -> float:
        s = self.d / 2.0
        return self.constant * (_hurwitz(s, m) + c * _hurwitz(s + 1, m) + c2 * _hurwitz(s + 2, m))

    def tail(self, m: int) -> Estimate:
        """
        Sum of P(S_2j = 0) over j >= m, exact inside the table and closed by the expansion beyond it.

        The error bound adds the size of the last expansion term to the spread between two fits.
        """
        if m < 0:
            raise DomainError(f"tail start must be non-negative, got {m}")
        start = max(m, self.k_max + 1)
        c, c2 = self.tail_coefficients()
        c_alt, c2_alt = self._fit(self.k_max // 2, self.k_max // 4)
        closed = self._closed_tail(start, c, c2)
        spread = abs(closed - self._closed_tail(start, c_alt, c2_alt))
        last_term = self.constant * abs(c2) * _hurwitz(self.d / 2.0 + 2, start)
        exact = math.fsum(self.p[m:].tolist()) if m <= self.k_max else 0.0
        total = exact + closed
        return Estimate(total, spread + last_term + 1e-12 * total, self.k_max)


def _log_convolve(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    n = a.shape[0]
    rev_b = b.flip(0)
    out = torch.empty(n, dtype=torch.float64)
    for m in range(n):
        out[m] = torch.logsumexp(a[: m + 1] + rev_b[n - 1 - m :], dim=0)
    return out


@lru_cache(maxsize=16)
def _build_table(d: int, k_max: int) -> torch.Tensor:
    # P(S_2k = 0) = (2k)! / (2d)^(2k) [x^k] (sum_j x^j / (j!)^2)^d, in log space
    j = torch.arange(k_max + 1, dtype=torch.float64)
    base = -2.0 * torch.lgamma(j + 1.0)
    series = base
    for _ in range(d - 1):
        series = _log_convolve(series, base)
    log_p = torch.lgamma(2.0 * j + 1.0) - 2.0 * j * math.log(2 * d) + series
    return torch.exp(log_p)


def _table_size(k_max: int) -> int:
    size = 256
    while size < k_max:
        size *= 2
    return size


def return_probabilities(d: int, k_max: int, cache_dir: Optional[str] = None) -> ReturnProbabilityTable:
    """
    Exact table of P(S_2k = 0), k = 0..k_max, for the simple random walk on Z^d.

    Args:
        d (int): the lattice dimension.
        k_max (int): the last table index.
        cache_dir (str, optional): directory holding ``torch.save`` copies of built tables.
            Defaults to the directory set by :func:`set_table_cache_dir`, if any.

    Returns:
        ReturnProbabilityTable: the table, immutable and shareable.
    """
    check_dimension(d)
    if k_max < 1:
        raise DomainError(f"k_max must be >= 1, got {k_max}")
    if k_max > MAX_TABLE_K:
        raise ResourceError(f"return probability table k_max={k_max} exceeds the budget {MAX_TABLE_K}")
    size = _table_size(k_max)
    cache_dir = cache_dir or _TABLE_CACHE_DIR
    p = None
    path = os.path.join(cache_dir, f"return_d{d}_k{size}.pt") if cache_dir else None
    if path is not None and os.path.exists(path):
        try:
            p = torch.load(path, map_location="cpu")
        except (OSError, RuntimeError, EOFError, pickle.UnpicklingError) as e:
            get_logger().warning(f"ignoring unreadable table cache {path}: {e}")
        if p is not None and (not isinstance(p, torch.Tensor) or p.shape != (size + 1,)):
            get_logger().warning(f"ignoring table cache {path} of unexpected shape")
            p = None
    if p is None:
        p = _build_table(d, size)
        get_logger().info(f"built return probability table d={d} k_max={size}")
        if path is not None:
            atomic_torch_save(p, path)
    return ReturnProbabilityTable(d=d, p=p[: k_max + 1].clone(), k_max=k_max)


def return_tail_sum(table: ReturnProbabilityTable, m: int) -> Estimate:
    return table.tail(m)


def pi_d(d: int, tol: float = 1e-4, k_max: Optional[int] = None, max_k: int = 1 << 14) -> Estimate:
    """
    Return probability pi_d = 1 - 1/G_d of the simple random walk, with an error bound.

    G_d sums the exact table and closes the tail with the corrected LCLT expansion; the table is
    doubled until the bound on pi_d is below ``tol``.
    """
    check_dimension(d)
    if not 0.0 < tol <= 1e-3:
        raise DomainError(f"tol must lie in (0, 1e-3], got {tol}")
    k = k_max or DEFAULT_TABLE_K
    while True:
        table = return_probabilities(d, k)
        tail = table.tail(k + 1)
        green = math.fsum(table.p.tolist()) + tail.value
        error = tail.error / green**2
        if error <= tol:
            return Estimate(1.0 - 1.0 / green, error, k)
        if 2 * k > max_k:
            raise PrecisionError(f"pi_{d} cannot reach tol={tol:.1e} with k_max <= {max_k}", achievable=error)
        k *= 2


def zeta_d(d: int, n: int, k_max: Optional[int] = None) -> float:
    """n^((d-2)/2) * sum over k >= n of P(S_2(k+1) = 0)."""
    check_dimension(d)
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    table = return_probabilities(d, k_max or max(DEFAULT_TABLE_K, 4 * (n + 1)))
    return n ** ((d - 2) / 2.0) * table.tail(n + 1).value


def lclt_density(d: int, k: int, x: Sequence[int]) -> float:
    """Local CLT approximation 2 (d / 2 pi k)^(d/2) exp(-d |x|^2 / 2k) of P(S_k = x)."""
    check_dimension(d)
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if len(x) != d:
        raise DomainError(f"site {tuple(x)} is not a point of Z^{d}")
    if sum(abs(c) for c in x) % 2 != k % 2:
        raise DomainError(f"site {tuple(x)} is not reachable at time {k}: parity mismatch")
    sq = sum(c * c for c in x)
    return 2.0 * (d / (2.0 * math.pi * k)) ** (d / 2.0) * math.exp(-d * sq / (2.0 * k))


def _tensor_quadrature(d: int, k: int, panels: int, order: int) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    h = math.pi / panels
    left = np.arange(panels)[:, None] * h
    theta = torch.from_numpy((left + (nodes[None, :] + 1.0) * h / 2.0).reshape(-1))
    w = torch.from_numpy(np.tile(weights * h / 2.0, panels))
    cos = torch.cos(theta)
    m = theta.shape[0]
    phi = torch.zeros((m,) * d, dtype=torch.float64)
    weight = torch.ones((m,) * d, dtype=torch.float64)
    for axis in range(d):
        shape = [1] * d
        shape[axis] = m
        phi = phi + cos.view(shape) / d
        weight = weight * w.view(shape)
    return (phi.pow(2 * k) * weight).sum().item() / math.pi**d


def quadrature_return_probability(d: int, k: int, order: int = 16, rtol: float = 1e-10) -> float:
    """
    P(S_2k = 0) as the integral of phi(theta)^(2k) over the torus, phi = mean of cos(theta_j).

    Composite Gauss-Legendre panels are doubled until two successive values agree to ``rtol``.
    This is independent of the convolution identity behind :func:`return_probabilities` and is
    used to cross-check it.
    """
    check_dimension(d)
    if k < 0:
        raise DomainError(f"k must be non-negative, got {k}")
    panels = 1
    gap = math.inf
    previous = _tensor_quadrature(d, k, panels, order)
    while True:
        panels *= 2
        if (panels * order) ** d > MAX_BOX_CELLS:
            raise PrecisionError(f"quadrature of P(S_{2 * k}=0) in d={d} did not settle", achievable=gap)
        current = _tensor_quadrature(d, k, panels, order)
        gap = abs(current - previous) / abs(current)
        if gap <= rtol:
            return current
        previous = current
