"""Cell configuration (JSON) and raw voxel files (CELLVOX1).

Voxel file layout, all little-endian::

    b"CELLVOX1"  u32 dim  u32 grid[dim]  u16 index[prod(grid)]

with the index array in row-major order (last lattice index fastest).
"""

import json
import os
import struct

import numpy as np

from .cell import Box, Cylinder, HalfSpace, Lattice, Material, UnitCell, rasterize
from .errors import (
    BadMagicError,
    CellFormatError,
    DimensionMismatchError,
    IndexOutOfRangeError,
    MalformedHeaderError,
    TruncatedPayloadError,
)
from .tensor import (
    ElasticityTensor,
    cubic,
    in_plane_fluid_tensor,
    iso_tensor,
    transverse_iso,
)

MAGIC = b"CELLVOX1"


def _param(spec, *names):
    for n in names:
        if n in spec:
            return float(spec[n])
    raise CellFormatError(f"material {spec.get('name', '?')!r} is missing parameter {names[0]!r}")


def material_from_spec(spec, dim=3, name=None):
    """Build a Material from a config entry such as
    ``{"name": "fiber", "model": "isotropic", "lambda": 1, "mu": 2}``."""
    name = spec.get("name", name)
    if name is None:
        raise CellFormatError("material entry without a name")
    model = spec.get("model", "isotropic")
    if model == "isotropic":
        t = iso_tensor(_param(spec, "lambda", "lam"), _param(spec, "mu"), dim)
    elif model == "cubic":
        t = cubic(_param(spec, "c11"), _param(spec, "c12"), _param(spec, "c44"))
    elif model == "transverse_isotropic":
        t = transverse_iso(
            _param(spec, "c11"), _param(spec, "c33"), _param(spec, "c12"),
            _param(spec, "c13"), _param(spec, "c44"), spec.get("axis", (0.0, 0.0, 1.0)),
        )
    elif model == "in_plane_fluid":
        t = in_plane_fluid_tensor(_param(spec, "a"), _param(spec, "b"))
    elif model == "mandel":
        if "mandel" not in spec:
            raise CellFormatError(f"material {name!r}: model 'mandel' needs a 'mandel' matrix")
        t = ElasticityTensor(np.array(spec["mandel"], dtype=float))
    else:
        raise CellFormatError(f"material {name!r}: unknown model {model!r}")
    if t.dim != dim:
        raise DimensionMismatchError(f"material {name!r} has dim {t.dim}, cell has dim {dim}")
    return Material(name, t, spec.get("mobility"))


def material_to_spec(mat):
    out = {"name": mat.name, "model": "mandel", "mandel": mat.tensor.mandel.tolist()}
    if mat.mobility is not None:
        out["mobility"] = mat.mobility.tolist()
    return out


def primitive_from_spec(spec):
    kind = spec.get("kind")
    frame = spec.get("frame", "lattice" if kind in ("box", "halfspace") else "cartesian")
    if frame not in ("lattice", "cartesian"):
        raise CellFormatError(f"unknown frame {frame!r}")
    try:
        if kind == "box":
            return Box(spec["material"], tuple(spec["lo"]), tuple(spec["hi"]), frame)
        if kind == "cylinder":
            axis = spec.get("axis")
            return Cylinder(spec["material"], tuple(spec["point"]), float(spec["radius"]),
                            None if axis is None else tuple(axis), frame, bool(spec.get("closed", True)))
        if kind == "halfspace":
            return HalfSpace(spec["material"], tuple(spec["normal"]), float(spec["offset"]),
                             frame, bool(spec.get("closed", False)))
    except KeyError as exc:
        raise CellFormatError(f"{kind} primitive is missing {exc.args[0]!r}") from None
    raise CellFormatError(f"unknown geometry kind {kind!r}")


# ----------------------------------------------------------------- voxel file


def encode_voxels(index):
    index = np.asarray(index)
    if index.max(initial=0) > 0xFFFF:
        raise IndexOutOfRangeError("material index does not fit in u16")
    header = MAGIC + struct.pack(f"<I{index.ndim}I", index.ndim, *index.shape)
    return header + np.ascontiguousarray(index, dtype="<u2").tobytes()


def decode_voxels(data):
    """Parse CELLVOX1 bytes into an integer array shaped like the grid."""
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise BadMagicError("not a CELLVOX1 file")
    pos = len(MAGIC)
    if len(data) < pos + 4:
        raise MalformedHeaderError("malformed header: missing dimension")
    (dim,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if dim not in (2, 3):
        raise MalformedHeaderError(f"malformed header: dimension {dim} is not 2 or 3")
    if len(data) < pos + 4 * dim:
        raise MalformedHeaderError("malformed header: truncated grid")
    grid = struct.unpack_from(f"<{dim}I", data, pos)
    pos += 4 * dim
    if any(n == 0 for n in grid):
        raise MalformedHeaderError(f"malformed header: grid {grid} has a zero extent")
    count = int(np.prod(grid))
    payload = data[pos:]
    if len(payload) < 2 * count:
        raise TruncatedPayloadError("unexpected end of voxel payload")
    if len(payload) > 2 * count:
        raise CellFormatError(f"trailing bytes after voxel payload ({len(payload) - 2 * count})")
    return np.frombuffer(payload, dtype="<u2").astype(np.int64).reshape(grid)


def write_voxels(path, index):
    with open(path, "wb") as fh:
        fh.write(encode_voxels(index))


def read_voxels(path):
    with open(path, "rb") as fh:
        return decode_voxels(fh.read())


# --------------------------------------------------------------------- config


def cell_to_config(cell, voxel_file=None):
    cfg = {
        "dim": cell.dim,
        "lattice": cell.lattice.basis.T.tolist(),  # list of column vectors
        "origin": cell.origin.tolist(),
        "grid": list(cell.grid),
        "materials": [material_to_spec(m) for m in cell.materials],
        "geometry": [],
        "background": cell.materials[0].name,
    }
    if voxel_file is not None:
        cfg["voxel_file"] = voxel_file
    return cfg


def cell_from_config(cfg, base_dir=".", index=None):
    """Build a cell from a parsed config.

    The voxel index comes from ``index`` if given, else from the config's
    ``voxel_file`` (relative to ``base_dir``), else by rasterizing its
    ``geometry`` over ``background``.
    """
    try:
        dim = int(cfg["dim"])
        columns = np.array(cfg["lattice"], dtype=float)
        grid = tuple(int(n) for n in cfg["grid"])
        mats = cfg["materials"]
    except KeyError as exc:
        raise CellFormatError(f"cell config is missing {exc.args[0]!r}") from None
    if columns.shape != (dim, dim):
        raise DimensionMismatchError(f"lattice must list {dim} column vectors of length {dim}")
    if len(grid) != dim:
        raise DimensionMismatchError(f"grid {grid} does not match dim {dim}")
    lattice = Lattice(columns.T)
    materials = [material_from_spec(m, dim) for m in mats]
    origin = cfg.get("origin")
    if index is None and cfg.get("voxel_file"):
        index = read_voxels(os.path.join(base_dir, cfg["voxel_file"]))
    if index is not None:
        index = np.asarray(index)
        if index.ndim != dim:
            raise DimensionMismatchError(f"voxel file has dimension {index.ndim}, config has {dim}")
        if tuple(index.shape) != grid:
            raise DimensionMismatchError(f"voxel grid {index.shape} does not match config grid {grid}")
        if index.size and index.max() >= len(materials):
            raise IndexOutOfRangeError(
                f"material index {int(index.max())} out of range for {len(materials)} materials"
            )
        return UnitCell(lattice, grid, materials, index, origin)
    prims = [primitive_from_spec(p) for p in cfg.get("geometry", [])]
    background = cfg.get("background", materials[0].name)
    return rasterize(lattice, grid, materials, prims, background, origin)


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def save_cell(cell, prefix):
    """Write ``prefix.json`` and ``prefix.vox``; returns both paths."""
    cfg_path, vox_path = prefix + ".json", prefix + ".vox"
    write_voxels(vox_path, cell.index)
    with open(cfg_path, "w") as fh:
        fh.write(dumps(cell_to_config(cell, os.path.basename(vox_path))))
    return cfg_path, vox_path


def load_cell(path):
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CellFormatError(f"{path}: invalid JSON ({exc})") from None
    return cell_from_config(cfg, os.path.dirname(os.path.abspath(path)))
