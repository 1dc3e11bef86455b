from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from ..errors import DomainError, ResourceError
from ..utils.lattice import axis, box_shape
from .disorder import DisorderFamily

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB
# 16-bit two's complement per coordinate, four coordinates per 64-bit word
COORD_LIMIT = 1 << 15
COORDS_PER_WORD = 4


def splitmix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_2) & MASK64
    return z ^ (z >> 31)


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX_1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX_2)
        return z ^ (z >> np.uint64(31))


def pack_sites(sites: np.ndarray) -> np.ndarray:
    """
    Pack integer sites of shape (m, d) into collision-free 64-bit words of shape (m, ceil(d / 4)).

    Raises:
        ResourceError: a coordinate does not fit 16-bit two's complement.
    """
    sites = np.asarray(sites, dtype=np.int64)
    if sites.size and np.abs(sites).max() >= COORD_LIMIT:
        raise ResourceError(f"site coordinates must satisfy |x_j| < {COORD_LIMIT}")
    m, d = sites.shape
    u16 = (sites & 0xFFFF).astype(np.uint64)
    words = np.zeros((m, -(-d // COORDS_PER_WORD)), dtype=np.uint64)
    for j in range(d):
        words[:, j // COORDS_PER_WORD] |= u16[:, j] << np.uint64(16 * (j % COORDS_PER_WORD))
    return words


def _packed_box(d: int, radius: int) -> np.ndarray:
    # same words as pack_sites over the box in row-major order, assembled from one packed axis
    if radius >= COORD_LIMIT:
        raise ResourceError(f"site coordinates must satisfy |x_j| < {COORD_LIMIT}")
    u16 = (axis(radius).numpy() & 0xFFFF).astype(np.uint64)
    words = np.zeros(box_shape(d, radius) + (-(-d // COORDS_PER_WORD),), dtype=np.uint64)
    for j in range(d):
        view = [1] * d
        view[j] = -1
        words[..., j // COORDS_PER_WORD] |= u16.reshape(view) << np.uint64(16 * (j % COORDS_PER_WORD))
    return words.reshape(-1, words.shape[-1])


@dataclass(frozen=True, eq=False)
class EnvironmentField:
    """
    Random environment omega(i, x) on N x Z^d defined lazily by a keyed counter-based hash.

    The value at (i, x) is a pure function of (seed, i, x): the splitmix64 finaliser is chained
    over the seed, the time and the packed site, the top 53 bits become a uniform in (0, 1) and
    the family maps it to a draw. Any access order gives bitwise identical values.
    """

    seed: int
    family: DisorderFamily

    def _prefix(self, i: int) -> int:
        if i < 1:
            raise DomainError(f"environment time must be >= 1, got {i}")
        key = splitmix64((self.seed & MASK64) + GOLDEN_GAMMA)
        return splitmix64(key + i * GOLDEN_GAMMA)

    def uniforms(self, i: int, words: np.ndarray) -> np.ndarray:
        h = np.full(words.shape[0], self._prefix(i), dtype=np.uint64)
        for j in range(words.shape[1]):
            h = _mix(h ^ words[:, j])
        return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def values(self, i: int, sites: torch.Tensor) -> torch.Tensor:
        """omega(i, x) for every site in an integer tensor of shape (..., d)."""
        sites = torch.as_tensor(sites, dtype=torch.int64)
        flat = sites.reshape(-1, sites.shape[-1]).numpy()
        u = torch.from_numpy(self.uniforms(i, pack_sites(flat)))
        return self.family.from_uniform(u).reshape(sites.shape[:-1])

    def row(self, i: int, d: int, radius: int) -> torch.Tensor:
        """The whole time-i row over the centred box of the given radius."""
        u = torch.from_numpy(self.uniforms(i, _packed_box(d, radius)))
        return self.family.from_uniform(u).reshape(box_shape(d, radius))

    def draws(self, count: int, d: int = 3, radius: int = 16) -> torch.Tensor:
        """``count`` distinct draws read row by row, for distribution checks."""
        per_row = (2 * radius + 1) ** d
        rows = [self.row(i, d, radius).reshape(-1) for i in range(1, -(-count // per_row) + 1)]
        return torch.cat(rows)[:count]


def omega(field: EnvironmentField, i: int, x: Sequence[int]) -> float:
    return field.values(i, torch.tensor([list(x)], dtype=torch.int64)).item()
