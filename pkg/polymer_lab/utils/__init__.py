from .io import atomic_torch_save, atomic_write_bytes, atomic_write_text, read_csv, read_json, write_csv, write_json
from .lattice import box_shape, coordinates, point_mass, resize, slab_radius
from .logging import get_logger

__all__ = [
    "atomic_torch_save",
    "atomic_write_bytes",
    "atomic_write_text",
    "read_csv",
    "read_json",
    "write_csv",
    "write_json",
    "box_shape",
    "coordinates",
    "point_mass",
    "resize",
    "slab_radius",
    "get_logger",
]
