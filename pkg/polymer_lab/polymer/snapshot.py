import struct
from typing import Dict, Tuple, Union

import numpy as np
import torch

from ..utils.io import atomic_write_bytes
from ..utils.lattice import box_shape, slab_radius
from .state import PolymerState

# little-endian int64 d, k, box radius, parity; row-major little-endian float64 cells follow
HEADER = struct.Struct("<4q")


def export_slab(state: Union[PolymerState, Tuple[torch.Tensor, int]], path: str) -> None:
    """
    Write a slab snapshot as flat binary.

    Args:
        state: a PolymerState, or a ``(slab, k)`` pair.
        path (str): the destination file, written atomically.
    """
    if isinstance(state, PolymerState):
        slab, k = state.slab, state.k
    else:
        slab, k = state
    header = HEADER.pack(slab.dim(), k, slab_radius(slab), k % 2)
    cells = slab.detach().cpu().contiguous().numpy().astype("<f8", copy=False)
    atomic_write_bytes(path, header + cells.tobytes(order="C"))


def load_slab(path: str) -> Tuple[Dict[str, int], torch.Tensor]:
    with open(path, "rb") as f:
        data = f.read()
    d, k, radius, parity = HEADER.unpack_from(data)
    cells = np.frombuffer(data, dtype="<f8", offset=HEADER.size)
    shape = box_shape(d, radius)
    if cells.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {int(np.prod(shape))} cells, found {cells.size}")
    slab = torch.from_numpy(cells.astype(np.float64).reshape(shape))
    return {"d": d, "k": k, "radius": radius, "parity": parity}, slab
