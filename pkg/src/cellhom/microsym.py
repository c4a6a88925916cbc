"""Affine symmetries of voxelized periodic structures.

A candidate symmetry is ``h(z) = z0 + a + H (z - z0)`` with H unimodular.
It is a symmetry of ``(Y, C)`` when ``C(z) = C_H(h^{-1}(z))`` for every z.
On a voxel grid this is checked exactly, voxel centre by voxel centre,
which requires h to map voxel centres onto voxel centres (mod the lattice).
"""

from dataclasses import dataclass
import itertools
import math

import numpy as np

from .cell import Lattice, Material, UnitCell, lattice_fraction
from .errors import DimensionMismatchError, GridIncompatibleError
from .tensor import (
    UnimodularMap,
    as_unimodular,
    conjugate,
    reflection,
    rotation_about_axis,
    rotation2d,
    unit,
)

GRID_TOL = 1e-9
DEDUP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class AffineSymmetry:
    """Volume-preserving affine map ``h(z) = z0 + a + H (z - z0)``."""

    z0: np.ndarray
    a: np.ndarray
    H: UnimodularMap

    def __post_init__(self):
        H = as_unimodular(self.H)
        z0 = np.array(self.z0, dtype=float)
        a = np.array(self.a, dtype=float)
        if z0.shape != (H.dim,) or a.shape != (H.dim,):
            raise DimensionMismatchError(
                f"z0 {z0.shape} and a {a.shape} must both have shape ({H.dim},)"
            )
        z0.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "z0", z0)
        object.__setattr__(self, "a", a)

    @property
    def dim(self):
        return self.H.dim

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.zeros(dim), UnimodularMap(np.eye(dim)))

    @classmethod
    def translation(cls, a):
        a = np.asarray(a, dtype=float)
        return cls(np.zeros(len(a)), a, UnimodularMap(np.eye(len(a))))

    @classmethod
    def linear(cls, H, z0=None, a=None):
        H = as_unimodular(H)
        z0 = np.zeros(H.dim) if z0 is None else z0
        a = np.zeros(H.dim) if a is None else a
        return cls(z0, a, H)

    @property
    def offset(self):
        """Translation part t of ``h(z) = t + H z``."""
        return self.z0 + self.a - self.H.matrix @ self.z0

    def evaluate(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise DimensionMismatchError(f"point dim {z.shape[-1]} does not match map dim {self.dim}")
        return self.z0 + self.a + (z - self.z0) @ self.H.matrix.T

    __call__ = evaluate

    def inverse(self):
        hinv = self.H.inverse()
        return AffineSymmetry(self.z0, -(hinv.matrix @ self.a), hinv)

    def compose(self, other):
        """The map ``self o other`` (apply ``other`` first)."""
        if other.dim != self.dim:
            raise DimensionMismatchError("cannot compose maps of different dimension")
        H = self.H @ other.H
        t = self.H.matrix @ other.offset + self.offset
        return AffineSymmetry(self.z0, t - self.z0 + H.matrix @ self.z0, H)

    def to_dict(self):
        return {"z0": self.z0.tolist(), "a": self.a.tolist(), "H": self.H.matrix.tolist()}

    @classmethod
    def from_dict(cls, obj):
        try:
            return cls(obj["z0"], obj["a"], UnimodularMap(np.array(obj["H"], dtype=float)))
        except KeyError as exc:
            raise ValueError(f"affine symmetry is missing {exc.args[0]!r}") from None

    def __repr__(self):
        return f"AffineSymmetry(z0={self.z0.tolist()}, a={self.a.tolist()}, H={self.H.matrix.tolist()})"


def compose(h1, h2):
    return h1.compose(h2)


def inverse(h):
    return h.inverse()


def evaluate(h, z):
    return h.evaluate(z)


# ----------------------------------------------------------- voxel matching


def preimage_voxels(cell, h, tol=GRID_TOL):
    """Flat index of the voxel containing ``h^{-1}(z)`` for every voxel centre z.

    Raises
    ------
    GridIncompatibleError
        If some ``h^{-1}(z)`` is farther than ``tol`` (in lattice
        coordinates) from every voxel centre.
    """
    if h.dim != cell.dim:
        raise DimensionMismatchError(f"map dim {h.dim} does not match cell dim {cell.dim}")
    n = np.asarray(cell.grid)
    src = h.inverse().evaluate(cell.voxel_centers())
    u = lattice_fraction(cell, src) * n - 0.5
    r = np.rint(u)
    mismatch = np.max(np.abs(u - r) / n, axis=1)
    worst = int(np.argmax(mismatch))
    if mismatch[worst] > tol:
        vox = tuple(int(i) for i in np.unravel_index(worst, cell.grid))
        raise GridIncompatibleError(
            f"grid-incompatible transformation: voxel {vox} maps {mismatch[worst]:.3e} "
            f"(lattice coordinates) away from the nearest voxel centre",
            voxel=vox,
            mismatch=float(mismatch[worst]),
        )
    k = np.mod(r.astype(np.int64), n)
    return np.ravel_multi_index(tuple(k.T), cell.grid)


def _pair_distances(materials, H, mobility=False):
    """D[i, j] = |X_i - (X_j)_H|, X the elasticity (or mobility) of each material."""
    if mobility:
        x = [_require_mobility(m) for m in materials]
        xh = [H.matrix @ m @ H.matrix.T for m in x]
    else:
        x = [m.tensor.mandel for m in materials]
        xh = [conjugate(m.tensor, H).mandel for m in materials]
    d = np.array([[np.linalg.norm(xi - xj) for xj in xh] for xi in x])
    scale = max(np.linalg.norm(xi) for xi in x)
    return d, scale


def _require_mobility(m):
    if m.mobility is None:
        raise ValueError(f"material {m.name!r} has no mobility")
    return m.mobility


@dataclass(frozen=True)
class MicroReport:
    residual: float
    passed: bool
    worst_voxel: int
    worst_value: float
    tol: float

    def to_dict(self):
        return {
            "residual": self.residual,
            "pass": self.passed,
            "per_voxel_worst": {"index": self.worst_voxel, "value": self.worst_value},
        }


def check_micro_symmetry(cell, h, tol=1e-12, mobility=False):
    """Check the pointwise identity ``C(z) = C_H(h^{-1}(z))`` on all voxels.

    The residual is the largest ``|C(z) - C_H(h^{-1}(z))|_F`` over voxel
    centres, divided by the largest material norm. With ``mobility=True``
    the second-order law ``M(z) = H M(h^{-1}(z)) H^T`` is checked instead.

    Returns
    -------
    MicroReport
    """
    src = preimage_voxels(cell, h)
    d, scale = _pair_distances(cell.materials, h.H, mobility)
    flat = cell.index.ravel()
    per_voxel = d[flat, flat[src]] / scale
    worst = int(np.argmax(per_voxel))
    res = float(per_voxel[worst])
    return MicroReport(res, res <= tol, worst, res, tol)


def induced_periodicity_check(cell, h, tol=1e-12):
    """Check that the structure is periodic along every ``H b_i``.

    Returns a list of ``(residual, passed)`` per lattice direction.
    """
    out = []
    hb = h.H.matrix @ cell.lattice.basis
    for i in range(cell.dim):
        rep = check_micro_symmetry(cell, AffineSymmetry.translation(hb[:, i]), tol)
        out.append((rep.residual, rep.passed))
    return out


def _conjugated_material(m, H):
    mob = None if m.mobility is None else H.matrix @ m.mobility @ H.matrix.T
    return Material(m.name, conjugate(m.tensor, H), mob)


def _same(m1, m2):
    scale = max(m1.tensor.norm(), m2.tensor.norm(), 1e-300)
    if np.linalg.norm(m1.tensor.mandel - m2.tensor.mandel) > DEDUP_TOL * scale:
        return False
    if (m1.mobility is None) != (m2.mobility is None):
        return False
    if m1.mobility is None:
        return True
    mscale = max(np.linalg.norm(m1.mobility), np.linalg.norm(m2.mobility), 1e-300)
    return np.linalg.norm(m1.mobility - m2.mobility) <= DEDUP_TOL * mscale


def transform_cell(cell, h):
    """Equivalent structure on the cell ``h(Y)``.

    The new lattice is ``H B`` with corner ``h(origin)`` and the same grid,
    so the centre of voxel j of the new cell is the image under h of the
    centre of voxel j of the old one; it carries the conjugated material.
    """
    if h.dim != cell.dim:
        raise DimensionMismatchError(f"map dim {h.dim} does not match cell dim {cell.dim}")
    H = h.H
    table, remap = [], []
    for m in cell.materials:
        cm = _conjugated_material(m, H)
        for j, t in enumerate(table):
            if _same(cm, t):
                remap.append(j)
                break
        else:
            remap.append(len(table))
            table.append(cm)
    index = np.asarray(remap, dtype=np.int64)[cell.index]
    lattice = Lattice(H.matrix @ cell.lattice.basis)
    return UnitCell(lattice, cell.grid, table, index, h.evaluate(cell.origin))


# ---------------------------------------------------------------- detection


def _lattice_preserving(H, lattice, tol=1e-9):
    m = lattice._inv @ H.matrix @ lattice.basis
    return bool(np.all(np.abs(m - np.rint(m)) <= tol))


def candidate_maps(cell):
    """Linear parts tried by :func:`detect_symmetries`."""
    d = cell.dim
    maps = {"I": UnimodularMap(np.eye(d)), "-I": UnimodularMap(-np.eye(d))}
    if d == 3:
        for i in range(3):
            maps[f"-R(pi,e{i + 1})"] = reflection(unit(i))
            maps[f"R(pi,e{i + 1})"] = rotation_about_axis(unit(i), math.pi)
        for i in range(3):
            maps[f"R(pi/2,e{i + 1})"] = rotation_about_axis(unit(i), math.pi / 2)
        r6 = rotation_about_axis(unit(2), math.pi / 3)
        if _lattice_preserving(r6, cell.lattice):
            maps["R(pi/3,e3)"] = r6
    else:
        maps["-R(pi,e1)"] = reflection(unit(0, 2))
        maps["-R(pi,e2)"] = reflection(unit(1, 2))
        maps["R(pi/2)"] = rotation2d(math.pi / 2)
        r6 = rotation2d(math.pi / 3)
        if _lattice_preserving(r6, cell.lattice):
            maps["R(pi/3)"] = r6
    return maps


def candidate_centers(cell):
    """Corner, face/edge midpoints and centre of Y, plus the same points
    shifted by half a voxel."""
    d = cell.dim
    half = 0.5 / np.asarray(cell.grid)
    pts = []
    for shift in (np.zeros(d), half):
        for s in itertools.product((0.0, 0.5), repeat=d):
            pts.append(cell.origin + cell.lattice.to_cartesian(np.asarray(s) + shift))
    return pts


def candidate_translations(cell):
    b = cell.lattice.basis
    d = cell.dim
    out = [np.zeros(d)]
    out += [b[:, i] / 2 for i in range(d)]
    out += [(b[:, i] + b[:, j]) / 2 for i, j in itertools.combinations(range(d), 2)]
    return out


def _key(h, lattice):
    # maps differing by a lattice translation act identically on the structure
    t = lattice.to_lattice(h.offset)
    t = np.round(t - np.floor(t + 1e-9), 9) % 1.0
    return (tuple(np.round(h.H.matrix, 12).ravel()), tuple(t))


@dataclass(frozen=True)
class Candidate:
    name: str
    h: AffineSymmetry
    status: str  # "pass", "fail" or "incompatible"
    residual: float = float("nan")
    note: str = ""


def scan_symmetries(cell, tol=1e-12):
    """Evaluate every catalog candidate once (up to lattice translations)."""
    seen = set()
    out = []
    for name, H in candidate_maps(cell).items():
        for z0 in candidate_centers(cell):
            for a in candidate_translations(cell):
                h = AffineSymmetry(z0, a, H)
                key = _key(h, cell.lattice)
                if key in seen:
                    continue
                seen.add(key)
                try:
                    rep = check_micro_symmetry(cell, h, tol)
                except GridIncompatibleError as exc:
                    out.append(Candidate(name, h, "incompatible", note=str(exc)))
                    continue
                out.append(Candidate(name, h, "pass" if rep.passed else "fail", rep.residual))
    return out


def detect_symmetries(cell, tol=1e-12, closure=False):
    """Catalog candidates that are symmetries of ``cell``.

    Linear parts: +-I, reflections and half turns about the coordinate
    axes, quarter turns about them, and the sixfold turn about e3 when it
    maps the lattice onto itself. Centres and translations are listed in
    :func:`candidate_centers` and :func:`candidate_translations`.
    Grid-incompatible candidates are skipped; use :func:`scan_symmetries`
    to see them.

    With ``closure=True`` the passing candidates are extended by repeated
    composition to the group they generate, one representative per class
    modulo lattice translations. Every added element is checked too, and
    only passing ones are kept.
    """
    found = [c.h for c in scan_symmetries(cell, tol) if c.status == "pass"]
    if not closure:
        return found
    members = {_key(h, cell.lattice): h for h in found}
    frontier = list(found)
    while frontier:
        fresh = []
        for s in frontier:
            for g in found:
                p = g.compose(s)
                k = _key(p, cell.lattice)
                if k in members:
                    continue
                members[k] = None
                if check_micro_symmetry(cell, p, tol).passed:
                    members[k] = p
                    fresh.append(p)
        frontier = fresh
    return [h for h in members.values() if h is not None]
