"""Ready-made periodic structures.

Each builder takes a grid ``resolution`` plus optional material entries in
the config format accepted by :func:`cellhom.cellio.material_from_spec`.
"""

import math

import numpy as np

from .cell import Box, Cylinder, HalfSpace, Lattice, Material, UnitCell, rasterize
from .cellio import material_from_spec
from .errors import IncompatibleResolutionError, UnknownExampleError
from .tensor import ElasticityTensor, conjugate, reflection, unit

MATRIX = {"model": "isotropic", "lambda": 1.0, "mu": 1.0, "mobility": 1.0}
FIBER = {"model": "isotropic", "lambda": 4.0, "mu": 10.0, "mobility": 10.0}
PHASE1 = {"model": "isotropic", "lambda": 0.0, "mu": 1.0, "mobility": 1.0}
PHASE2 = {"model": "isotropic", "lambda": 0.0, "mu": 3.0, "mobility": 3.0}
CHECKER1 = {"model": "isotropic", "lambda": 1.0, "mu": 1.0, "mobility": 1.0}
CHECKER2 = {"model": "isotropic", "lambda": 2.0, "mu": 4.0, "mobility": 4.0}

ANISOTROPIC_SEED = 1729


def default_anisotropic():
    """Fixed triclinic coercive tensor used by the octant example."""
    rng = np.random.default_rng(ANISOTROPIC_SEED)
    g = rng.normal(scale=0.6, size=(6, 6))
    a = g @ g.T + np.diag([3.0, 2.5, 2.0, 1.5, 1.2, 1.0])
    return ElasticityTensor(a)


def _mat(name, spec, default, dim=3):
    return material_from_spec(dict(default if spec is None else spec), dim, name)


def _require_even(name, grid):
    if any(n % 2 for n in grid):
        raise IncompatibleResolutionError(f"{name} needs an even grid, got {tuple(grid)}")


def _resolution(resolution, dim=3):
    n = int(resolution)
    if n < 1:
        raise IncompatibleResolutionError(f"resolution must be positive, got {resolution}")
    return (n,) * dim


def laminate(resolution=8, f=0.5, in_plane=None, phase1=None, phase2=None):
    """Bilayer in Y = (0,1)^3 with layers normal to e3.

    Phase 1 fills lattice coordinate 3 in ``[0, f)``; ``f`` is rounded to
    the nearest multiple of ``1/resolution``. ``in_plane`` sets the two
    in-plane voxel counts (default: ``resolution``).
    """
    n3 = int(resolution)
    n = n3 if in_plane is None else int(in_plane)
    if n3 < 1 or n < 1:
        raise IncompatibleResolutionError("laminate needs positive voxel counts")
    k1 = int(round(f * n3))
    mats = [_mat("phase1", phase1, PHASE1), _mat("phase2", phase2, PHASE2)]
    prims = [HalfSpace("phase1", (0.0, 0.0, 1.0), k1 / n3)] if k1 > 0 else []
    return rasterize(Lattice(np.eye(3)), (n, n, n3), mats, prims, "phase2")


def orthotropic_octants(resolution=16, anisotropic=None):
    """Y = (-1,1)^3 filled with reflected copies of one anisotropic tensor.

    The positive octant carries ``C_an``; the octant with sign pattern s
    carries ``C_an`` conjugated by ``diag(s)``, so each coordinate reflection
    about the centre is a symmetry. The cell is stored with corner 0 and
    edge 2, which is the same periodic structure.
    """
    grid = _resolution(resolution)
    _require_even("orthotropic_octants", grid)
    c_an = default_anisotropic() if anisotropic is None else ElasticityTensor(np.asarray(anisotropic, float))
    signs = [(s1, s2, s3) for s1 in (1, -1) for s2 in (1, -1) for s3 in (1, -1)]
    mats = []
    for s in signs:
        c = c_an
        for i, si in enumerate(s):
            if si < 0:
                c = conjugate(c, reflection(unit(i)))
        label = "".join("+" if si > 0 else "-" for si in s)
        mats.append(Material(f"an{label}", c))
    half = [np.arange(n) >= n // 2 for n in grid]  # True on the negative side
    neg = np.meshgrid(*half, indexing="ij")
    index = 4 * neg[0] + 2 * neg[1] + neg[2]
    return UnitCell(Lattice(2.0 * np.eye(3)), grid, mats, index.astype(np.int64))


def _fiber_cell(name, grid, cylinders, fiber, matrix):
    _require_even(name, grid)
    mats = [_mat("matrix", matrix, MATRIX), _mat("fiber", fiber, FIBER)]
    prims = [Cylinder("fiber", p, r, ax) for p, r, ax in cylinders]
    return rasterize(Lattice(2.0 * np.eye(3)), grid, mats, prims, "matrix", origin=(-1.0, -1.0, -1.0))


def tetragonal_single_fiber(resolution=16, radius=0.5, fiber=None, matrix=None):
    """One fiber along e3 through the centre of Y = (-1,1)^3."""
    return _fiber_cell("tetragonal_single_fiber", _resolution(resolution),
                       [((0.0, 0.0, 0.0), radius, (0, 0, 1))], fiber, matrix)


def tetragonal_four_fibers(resolution=32, radius=0.25, fiber=None, matrix=None):
    """Four fibers along e3 through (+-1/2, +-1/2) in Y = (-1,1)^3.

    This is the single-fiber structure with half the period, seen on the
    doubled cell.
    """
    cyl = [((sx * 0.5, sy * 0.5, 0.0), radius, (0, 0, 1)) for sx in (1, -1) for sy in (1, -1)]
    return _fiber_cell("tetragonal_four_fibers", _resolution(resolution), cyl, fiber, matrix)


def tetragonal_orthogonal_fibers(resolution=32, radius=0.2, fiber=None, matrix=None):
    """Fibers ``(y1-1/2)^2 + y3^2 <= r^2`` (along e2) and
    ``(y1+1/2)^2 + y2^2 <= r^2`` (along e3) in Y = (-1,1)^3."""
    cyl = [((0.5, 0.0, 0.0), radius, (0, 1, 0)), ((-0.5, 0.0, 0.0), radius, (0, 0, 1))]
    return _fiber_cell("tetragonal_orthogonal_fibers", _resolution(resolution), cyl, fiber, matrix)


HEX_BASIS = np.array([[2.0, 1.0, 0.0], [0.0, math.sqrt(3.0), 0.0], [0.0, 0.0, 2.0]])


def hexagonal_bundle(resolution=64, n_axial=1, fiber=None, matrix=None):
    """Unit-radius fibers along e3 on a triangular lattice of spacing 2.

    The cross-section is the rhombus spanned by (2,0) and (1,sqrt 3) and
    the fibers are the points at distance < 1 from its corners. The grid is
    ``resolution x resolution x n_axial``; the structure does not vary
    along e3, so one axial layer is exact. The cell is shifted by half a
    voxel so that the fiber axes pass through voxel centres, which makes
    the rotations about a fiber axis map the grid onto itself.
    """
    n = int(resolution)
    if n < 1 or int(n_axial) < 1:
        raise IncompatibleResolutionError("hexagonal_bundle needs positive voxel counts")
    grid = (n, n, int(n_axial))
    mats = [_mat("matrix", matrix, MATRIX), _mat("fiber", fiber, FIBER)]
    origin = -HEX_BASIS @ np.array([0.5 / n, 0.5 / n, 0.0]) + np.array([0.0, 0.0, -1.0])
    prims = [Cylinder("fiber", (0.0, 0.0, 0.0), 1.0, (0, 0, 1), closed=False)]
    return rasterize(Lattice(HEX_BASIS), grid, mats, prims, "matrix", origin=origin)


HEX_FIBER_FRACTION = math.pi / (2.0 * math.sqrt(3.0))


def checkerboard2d(resolution=64, phase1=None, phase2=None):
    """2D checkerboard on (0,1)^2: phase 2 on the lower-left and upper-right
    quadrants."""
    grid = _resolution(resolution, 2)
    _require_even("checkerboard2d", grid)
    mats = [_mat("phase1", phase1, CHECKER1, 2), _mat("phase2", phase2, CHECKER2, 2)]
    prims = [Box("phase2", (0.0, 0.0), (0.5, 0.5)), Box("phase2", (0.5, 0.5), (1.0, 1.0))]
    return rasterize(Lattice(np.eye(2)), grid, mats, prims, "phase1")


EXAMPLES = {
    "laminate": laminate,
    "orthotropic_octants": orthotropic_octants,
    "tetragonal_single_fiber": tetragonal_single_fiber,
    "tetragonal_four_fibers": tetragonal_four_fibers,
    "tetragonal_orthogonal_fibers": tetragonal_orthogonal_fibers,
    "hexagonal_bundle": hexagonal_bundle,
    "checkerboard2d": checkerboard2d,
}


def build_example(name, resolution=None, **params):
    """Build a named example cell; ``params`` go to the builder."""
    try:
        builder = EXAMPLES[name]
    except KeyError:
        raise UnknownExampleError(
            f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}"
        ) from None
    if resolution is not None:
        params["resolution"] = resolution
    try:
        return builder(**params)
    except TypeError as exc:
        raise UnknownExampleError(f"bad parameters for {name}: {exc}") from None
