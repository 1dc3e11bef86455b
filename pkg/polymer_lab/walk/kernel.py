from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import torch
import torch.nn.functional as F

from ..errors import DomainError
from ..utils.lattice import box_shape, check_box_budget, point_mass, resize, slab_radius

SUPPORTED_DIMENSIONS = (3, 4, 5)


def check_dimension(d: int) -> int:
    if d not in SUPPORTED_DIMENSIONS:
        raise DomainError(f"dimension d={d} is not supported, expected one of {SUPPORTED_DIMENSIONS}")
    return d


@dataclass(frozen=True)
class WalkKernel:
    """
    One-step transition law of a translation invariant walk on Z^d.

    Args:
        d (int): the lattice dimension.
        offsets (Tuple[Tuple[int, ...], ...]): the lattice offsets carrying mass.
        weights (Tuple[float, ...]): the probability of each offset.
        name (str): a label for logs.
    """

    d: int
    offsets: Tuple[Tuple[int, ...], ...]
    weights: Tuple[float, ...]
    name: str = "kernel"

    @property
    def radius(self) -> int:
        """Largest coordinate displacement of a single step."""
        return max(abs(c) for offset in self.offsets for c in offset)

    def total_mass(self) -> float:
        return sum(self.weights)

    def mass_at(self, offset: Tuple[int, ...]) -> float:
        offset = tuple(offset)
        for o, w in zip(self.offsets, self.weights):
            if o == offset:
                return w
        return 0.0

    def is_symmetric(self) -> bool:
        table = dict(zip(self.offsets, self.weights))
        return all(table.get(tuple(-c for c in o)) == w for o, w in table.items())


@lru_cache(maxsize=None)
def simple_kernel(d: int) -> WalkKernel:
    check_dimension(d)
    offsets = []
    for axis in range(d):
        for sign in (1, -1):
            offset = [0] * d
            offset[axis] = sign
            offsets.append(tuple(offset))
    return WalkKernel(d=d, offsets=tuple(offsets), weights=(1.0 / (2 * d),) * (2 * d), name="simple")


@lru_cache(maxsize=None)
def difference_kernel(d: int) -> WalkKernel:
    """
    Step law of S - S~ for two independent simple walks, by exact self-convolution.

    The offset 0 carries mass 1/(2d); the walk lives on the even sublattice.
    """
    simple = simple_kernel(d)
    table = defaultdict(float)
    for a, wa in zip(simple.offsets, simple.weights):
        for b, wb in zip(simple.offsets, simple.weights):
            table[tuple(x - y for x, y in zip(a, b))] += wa * wb
    offsets = tuple(sorted(table))
    return WalkKernel(d=d, offsets=offsets, weights=tuple(table[o] for o in offsets), name="difference")


def propagate(slab: torch.Tensor, kernel: WalkKernel) -> torch.Tensor:
    """
    Push a slab of weights through one step of the kernel.

    The result lives on a box larger by ``kernel.radius``: out(x) = sum_o w_o * slab(x - o).
    Offsets are summed in kernel order so results are bitwise reproducible.
    """
    d = slab.dim()
    r = kernel.radius
    radius = slab_radius(slab) + r
    size = 2 * radius + 1
    padded = F.pad(slab, [2 * r] * (2 * d))
    out = torch.zeros(box_shape(d, radius), dtype=slab.dtype)
    for offset, weight in zip(kernel.offsets, kernel.weights):
        out.add_(padded[tuple(slice(r - o, r - o + size) for o in offset)], alpha=weight)
    return out


def contract(slab: torch.Tensor, kernel: WalkKernel) -> torch.Tensor:
    """
    Average a slab over one step of the kernel: out(y) = sum_o w_o * slab(y + o).

    This is the backward counterpart of :func:`propagate`; the result lives on a box smaller by
    ``kernel.radius``.
    """
    d = slab.dim()
    r = kernel.radius
    radius = slab_radius(slab) - r
    if radius < 0:
        raise DomainError(f"slab of radius {slab_radius(slab)} is too small to contract by {r}")
    size = 2 * radius + 1
    out = torch.zeros(box_shape(d, radius), dtype=slab.dtype)
    for offset, weight in zip(kernel.offsets, kernel.weights):
        out.add_(slab[tuple(slice(r + o, r + o + size) for o in offset)], alpha=weight)
    return out


@lru_cache(maxsize=8)
def _step_distribution(d: int, k: int) -> torch.Tensor:
    check_box_budget(d, k, reached=0)
    kernel = simple_kernel(d)
    slab = point_mass(d)
    for _ in range(k):
        slab = propagate(slab, kernel)
    return slab


def step_distribution(d: int, k: int, radius: Optional[int] = None) -> torch.Tensor:
    """
    Exact law of the simple walk S_k started at 0, on the centred box of radius k.

    Args:
        d (int): the lattice dimension.
        k (int): the number of steps.
        radius (int, optional): crop or pad the result to this box radius.

    Returns:
        A float64 tensor of shape ``(2 * radius + 1,) * d``.
    """
    check_dimension(d)
    if k < 0:
        raise DomainError(f"k must be non-negative, got {k}")
    slab = _step_distribution(d, k)
    if radius is not None:
        return resize(slab, radius).clone()
    return slab.clone()


def kernel_power(kernel: WalkKernel, k: int) -> torch.Tensor:
    """Law after k steps of an arbitrary kernel, on the box of radius ``k * kernel.radius``."""
    check_box_budget(kernel.d, k * kernel.radius, reached=0)
    slab = point_mass(kernel.d)
    for _ in range(k):
        slab = propagate(slab, kernel)
    return slab
