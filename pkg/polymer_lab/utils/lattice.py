from typing import Optional, Tuple

import torch
import torch.nn.functional as F

from ..errors import ResourceError

# 2**27 float64 cells is 1 GiB per slab
MAX_BOX_CELLS = 1 << 27


def box_shape(d: int, radius: int) -> Tuple[int, ...]:
    return (2 * radius + 1,) * d


def slab_radius(slab: torch.Tensor) -> int:
    return (slab.shape[0] - 1) // 2


def check_box_budget(d: int, radius: int, reached: Optional[int] = None, max_cells: int = MAX_BOX_CELLS) -> None:
    cells = (2 * radius + 1) ** d
    if cells > max_cells:
        raise ResourceError(
            f"box of radius {radius} in d={d} needs {cells} cells, budget is {max_cells}",
            reached=reached,
        )


def point_mass(d: int, radius: int = 0, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    slab = torch.zeros(box_shape(d, radius), dtype=dtype)
    slab[(radius,) * d] = 1.0
    return slab


def axis(radius: int) -> torch.Tensor:
    return torch.arange(-radius, radius + 1, dtype=torch.int64)


def _broadcast_sum(d: int, values: torch.Tensor) -> torch.Tensor:
    # sum_j values[x_j] over the box, from 1-D views; no (..., d) grid is formed
    out = torch.zeros((values.numel(),) * d, dtype=values.dtype)
    for j in range(d):
        view = [1] * d
        view[j] = -1
        out += values.view(view)
    return out


def coordinates(d: int, radius: int) -> torch.Tensor:
    """
    Integer coordinates of every site of the centred box, shape ``box_shape(d, radius) + (d,)``.

    Built on every call; callers that only need a norm should use ``squared_norm`` or ``l1_norm``.
    """
    grids = torch.meshgrid(*([axis(radius)] * d), indexing="ij")
    return torch.stack(grids, dim=-1)


def squared_norm(d: int, radius: int) -> torch.Tensor:
    return _broadcast_sum(d, axis(radius).pow(2).to(torch.float64))


def l1_norm(d: int, radius: int) -> torch.Tensor:
    return _broadcast_sum(d, axis(radius).abs())


def parity_mask(d: int, radius: int, k: int) -> torch.Tensor:
    """Sites reachable by a nearest-neighbour walk at time k: |x|_1 <= k and |x|_1 = k mod 2."""
    norm = l1_norm(d, radius)
    return (norm <= k) & (norm % 2 == k % 2)


def _inner(d: int, outer: int, radius: int) -> Tuple[slice, ...]:
    start = outer - radius
    return tuple(slice(start, start + 2 * radius + 1) for _ in range(d))


def resize(slab: torch.Tensor, radius: int) -> torch.Tensor:
    """Embed the slab into a larger centred box, or crop it to a smaller one."""
    current = slab_radius(slab)
    if radius == current:
        return slab
    if radius > current:
        return F.pad(slab, [radius - current] * (2 * slab.dim()))
    return slab[_inner(slab.dim(), current, radius)].contiguous()


def shell_mass(slab: torch.Tensor, radius: int) -> float:
    """Total weight of the slab outside the centred box of the given radius."""
    current = slab_radius(slab)
    if radius >= current:
        return 0.0
    shell = slab.clone()
    shell[_inner(slab.dim(), current, radius)] = 0.0
    return shell.sum().item()


def count_subnormal(slab: torch.Tensor) -> int:
    tiny = torch.finfo(slab.dtype).tiny
    return int(((slab > 0) & (slab < tiny)).sum().item())
