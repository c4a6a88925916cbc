"""Periodic elastic structures on voxel grids.

A unit cell is the parallelepiped ``origin + B [0,1)^dim`` where the columns
of B are the lattice vectors. It is divided into ``N_1 x ... x N_dim``
voxels in lattice coordinates; voxel ``(i_1, ..., i_dim)`` covers the
half-open box ``prod [i_j/N_j, (i_j+1)/N_j)`` and carries one material.
"""

from dataclasses import dataclass, field
import itertools

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidCellError,
    SingularLatticeError,
    UnknownMaterialError,
)
from .tensor import ElasticityTensor

# lattice coordinates this close to an integer are treated as that integer
SNAP_TOL = 1e-12
# relative tolerance deciding ties in geometry tests (voxel centres that sit
# exactly on a primitive's boundary must resolve identically under symmetry)
TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Lattice:
    """Lattice with basis vectors as the columns of ``basis``."""

    basis: np.ndarray
    _inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        b = np.array(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape[0] not in (2, 3):
            raise DimensionMismatchError(f"lattice basis must be 2x2 or 3x3, got shape {b.shape}")
        det = np.linalg.det(b)
        if abs(det) <= 1e-12 * np.prod(np.linalg.norm(b, axis=0)):
            raise SingularLatticeError(f"lattice basis is singular (det {det:.3e})")
        b.setflags(write=False)
        inv = np.linalg.inv(b)
        inv.setflags(write=False)
        object.__setattr__(self, "basis", b)
        object.__setattr__(self, "_inv", inv)

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def volume(self):
        return float(abs(np.linalg.det(self.basis)))

    def to_lattice(self, vectors):
        """Lattice coordinates of Cartesian vectors, shape (..., dim)."""
        return np.asarray(vectors, dtype=float) @ self._inv.T

    def to_cartesian(self, coords):
        return np.asarray(coords, dtype=float) @ self.basis.T


@dataclass(frozen=True)
class Material:
    name: str
    tensor: ElasticityTensor
    mobility: np.ndarray = None

    def __post_init__(self):
        if self.mobility is not None:
            m = np.array(self.mobility, dtype=float)
            if m.ndim == 0:
                m = float(m) * np.eye(self.tensor.dim)
            if m.shape != (self.tensor.dim, self.tensor.dim):
                raise DimensionMismatchError(
                    f"mobility of {self.name!r} must be {self.tensor.dim}x{self.tensor.dim}, got {m.shape}"
                )
            m.setflags(write=False)
            object.__setattr__(self, "mobility", m)


@dataclass(frozen=True, eq=False)
class UnitCell:
    """Voxelized periodic elastic structure ``(Y, C)``.

    Attributes
    ----------
    lattice : Lattice
    grid : tuple of int
        Voxel counts along each lattice direction.
    materials : tuple of Material
    index : numpy.ndarray of int, shape ``grid``
        Material index per voxel; ``index.ravel()`` is the row-major order
        (last lattice index fastest).
    origin : numpy.ndarray
        Cartesian coordinates of the cell corner.
    """

    lattice: Lattice
    grid: tuple
    materials: tuple
    index: np.ndarray
    origin: np.ndarray = None

    def __post_init__(self):
        dim = self.lattice.dim
        grid = tuple(int(n) for n in self.grid)
        if len(grid) != dim or any(n < 1 for n in grid):
            raise InvalidCellError(f"grid {self.grid} is not a positive {dim}-tuple")
        materials = tuple(self.materials)
        if not materials:
            raise InvalidCellError("a cell needs at least one material")
        names = [m.name for m in materials]
        if len(set(names)) != len(names):
            raise InvalidCellError(f"duplicate material names in {names}")
        for m in materials:
            if m.tensor.dim != dim:
                raise DimensionMismatchError(f"material {m.name!r} has dim {m.tensor.dim}, cell has dim {dim}")
        index = np.array(self.index)
        if index.size != int(np.prod(grid)):
            raise InvalidCellError(f"index has {index.size} entries, grid {grid} needs {int(np.prod(grid))}")
        if not np.issubdtype(index.dtype, np.integer):
            raise InvalidCellError("material indices must be integers")
        index = index.reshape(grid).astype(np.int64)
        if index.min() < 0 or index.max() >= len(materials):
            raise InvalidCellError(
                f"material index out of range: [{index.min()}, {index.max()}] with {len(materials)} materials"
            )
        index.setflags(write=False)
        origin = np.zeros(dim) if self.origin is None else np.array(self.origin, dtype=float)
        if origin.shape != (dim,):
            raise DimensionMismatchError(f"origin must have shape ({dim},), got {origin.shape}")
        origin.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "materials", materials)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "origin", origin)

    @property
    def dim(self):
        return self.lattice.dim

    @property
    def n_voxels(self):
        return int(np.prod(self.grid))

    @property
    def tensors(self):
        return [m.tensor for m in self.materials]

    def material_names(self):
        return [m.name for m in self.materials]

    def material_index(self, name):
        for i, m in enumerate(self.materials):
            if m.name == name:
                return i
        raise UnknownMaterialError(f"unknown material {name!r}")

    def voxel_centers_lattice(self):
        """Lattice coordinates of all voxel centres, shape (n_voxels, dim), row-major."""
        axes = [(np.arange(n) + 0.5) / n for n in self.grid]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def voxel_centers(self):
        return self.origin + self.lattice.to_cartesian(self.voxel_centers_lattice())

    def volume_fractions(self):
        counts = np.bincount(self.index.ravel(), minlength=len(self.materials))
        return counts / self.n_voxels

    def replace(self, **changes):
        kw = dict(lattice=self.lattice, grid=self.grid, materials=self.materials,
                  index=self.index, origin=self.origin)
        kw.update(changes)
        return UnitCell(**kw)


def _snap_floor(x):
    """floor(x), except values within SNAP_TOL below an integer round up to it."""
    r = np.rint(x)
    return np.where(np.abs(x - r) <= SNAP_TOL * np.maximum(1.0, np.abs(x)), r, np.floor(x))


def wrap(z, lattice, origin=None):
    """Periodic representative ``{z}_Y`` of a point.

    Parameters
    ----------
    z : array_like, shape (..., dim)
    lattice : Lattice
    origin : array_like, optional
        Cell corner; defaults to 0.

    Returns
    -------
    point : numpy.ndarray
        ``z - B k`` whose lattice coordinates relative to ``origin`` lie in
        ``[0, 1)``.
    k : numpy.ndarray of int
        The integer lattice coefficients.
    """
    z = np.asarray(z, dtype=float)
    origin = np.zeros(lattice.dim) if origin is None else np.asarray(origin, dtype=float)
    xi = lattice.to_lattice(z - origin)
    k = _snap_floor(xi)
    point = z - lattice.to_cartesian(k)
    return point, k.astype(np.int64)


def lattice_fraction(cell, z):
    """Lattice coordinates in [0, 1) of the wrapped points z."""
    xi = cell.lattice.to_lattice(np.asarray(z, dtype=float) - cell.origin)
    frac = xi - _snap_floor(xi)
    return np.clip(frac, 0.0, None)


def voxel_of(cell, z):
    """Multi-index of the voxel containing each (wrapped) point, shape (..., dim)."""
    frac = lattice_fraction(cell, z)
    n = np.asarray(cell.grid)
    idx = _snap_floor(frac * n).astype(np.int64)
    return np.mod(idx, n)


def sample_index(cell, z):
    """Material index of the periodic extension at points z."""
    v = voxel_of(cell, z)
    return cell.index[tuple(np.moveaxis(v, -1, 0))]


def sample(cell, z):
    """Elasticity tensor of the periodic extension at a single point."""
    z = np.asarray(z, dtype=float)
    if z.shape != (cell.dim,):
        raise DimensionMismatchError(f"point must have shape ({cell.dim},), got {z.shape}")
    return cell.materials[int(sample_index(cell, z))].tensor


# ------------------------------------------------------------------- geometry


def _images(dim):
    return np.array(list(itertools.product((-1, 0, 1), repeat=dim)), dtype=float)


@dataclass(frozen=True)
class Box:
    """Half-open box ``lo <= p < hi``; tested with periodic images."""

    material: str
    lo: tuple
    hi: tuple
    frame: str = "lattice"

    def contains(self, pts, lattice):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        tol = TIE_TOL * max(1.0, float(np.max(np.abs(hi - lo))))
        shifts = _images(lattice.dim)
        if self.frame == "cartesian":
            shifts = lattice.to_cartesian(shifts)
        hit = np.zeros(len(pts), dtype=bool)
        for s in shifts:
            p = pts + s
            hit |= np.all((p > lo - tol) & (p < hi - tol), axis=1)
        return hit


@dataclass(frozen=True)
class Cylinder:
    """Points within ``radius`` of the line through ``point`` along ``axis``.

    In 2D the axis is ignored and the primitive is a disc. ``closed``
    selects ``<=`` (True) or ``<`` (False). Periodic images are included.
    """

    material: str
    point: tuple
    radius: float
    axis: tuple = None
    frame: str = "cartesian"
    closed: bool = True

    def contains(self, pts, lattice):
        dim = lattice.dim
        c = np.asarray(self.point, dtype=float)
        r2 = float(self.radius) ** 2
        bound = r2 * (1.0 + TIE_TOL) if self.closed else r2 * (1.0 - TIE_TOL)
        shifts = _images(dim)
        if self.frame == "cartesian":
            shifts = lattice.to_cartesian(shifts)
        if dim == 3:
            a = np.asarray(self.axis, dtype=float)
            a = a / np.linalg.norm(a)
        hit = np.zeros(len(pts), dtype=bool)
        for s in shifts:
            d = pts + s - c
            d2 = np.einsum("ij,ij->i", d, d)
            if dim == 3:
                d2 = d2 - (d @ a) ** 2
            hit |= d2 <= bound if self.closed else d2 < bound
        return hit


@dataclass(frozen=True)
class HalfSpace:
    """``normal . p < offset`` (or ``<=`` when closed); no periodic images."""

    material: str
    normal: tuple
    offset: float
    frame: str = "lattice"
    closed: bool = False

    def contains(self, pts, lattice):
        n = np.asarray(self.normal, dtype=float)
        v = pts @ n
        tol = TIE_TOL * max(1.0, abs(float(self.offset)))
        if self.closed:
            return v <= self.offset + tol
        return v < self.offset - tol


PRIMITIVES = {"box": Box, "cylinder": Cylinder, "halfspace": HalfSpace}


def rasterize(lattice, grid, materials, primitives, background, origin=None):
    """Assign each voxel from its centre: the last primitive containing it wins.

    Parameters
    ----------
    lattice : Lattice
    grid : sequence of int
    materials : sequence of Material
    primitives : sequence of Box, Cylinder or HalfSpace
        Each primitive declares whether its parameters are lattice or
        Cartesian coordinates (``frame``).
    background : str
        Material of voxels not covered by any primitive.
    origin : array_like, optional

    Returns
    -------
    UnitCell
    """
    materials = tuple(materials)
    names = {m.name: i for i, m in enumerate(materials)}
    for name in [background] + [p.material for p in primitives]:
        if name not in names:
            raise UnknownMaterialError(f"unknown material {name!r}")
    grid = tuple(int(n) for n in grid)
    if len(grid) != lattice.dim or any(n < 1 for n in grid):
        raise InvalidCellError(f"grid {grid} is not a positive {lattice.dim}-tuple")
    origin = np.zeros(lattice.dim) if origin is None else np.asarray(origin, dtype=float)
    axes = [(np.arange(n) + 0.5) / n for n in grid]
    xi = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    cart = origin + lattice.to_cartesian(xi)
    index = np.full(len(xi), names[background], dtype=np.int64)
    for prim in primitives:
        pts = xi if prim.frame == "lattice" else cart
        index[prim.contains(pts, lattice)] = names[prim.material]
    return UnitCell(lattice, grid, materials, index.reshape(grid), origin)
