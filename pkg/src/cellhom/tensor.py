"""Symmetric second-order and elasticity tensors in Mandel coordinates.

Mandel ordering is fixed:

* 3D: (11, 22, 33, 23, 13, 12)
* 2D: (11, 22, 12)

Shear entries carry a factor sqrt(2), so the Mandel basis is orthonormal for
the Frobenius inner product. With that choice an elasticity tensor is a
symmetric m x m matrix, its eigenvalues are the eigenvalues of the tensor
acting on Sym, and the conjugation ``E -> H[C(H^T E H)]H^T`` becomes a
matrix congruence.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import (
    DimensionMismatchError,
    NonUnitAxisError,
    NotSymmetricError,
    NotUnimodularError,
    ZeroTensorError,
)

SQRT2 = math.sqrt(2.0)

MANDEL_PAIRS = {
    2: ((0, 0), (1, 1), (0, 1)),
    3: ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)),
}

SYMMETRY_TOL = 1e-12
UNIMODULAR_TOL = 1e-12


def mandel_size(dim):
    if dim not in MANDEL_PAIRS:
        raise DimensionMismatchError(f"dimension must be 2 or 3, got {dim}")
    return dim * (dim + 1) // 2


def _mandel_basis(dim):
    """Orthonormal basis of Sym, shape (m, dim, dim)."""
    m = mandel_size(dim)
    basis = np.zeros((m, dim, dim))
    for k, (i, j) in enumerate(MANDEL_PAIRS[dim]):
        if i == j:
            basis[k, i, i] = 1.0
        else:
            basis[k, i, j] = basis[k, j, i] = 1.0 / SQRT2
    return basis


_BASIS = {d: _mandel_basis(d) for d in (2, 3)}


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def to_mandel(full, tol=SYMMETRY_TOL):
    """Mandel vector of a symmetric ``dim x dim`` matrix.

    Raises
    ------
    NotSymmetricError
        If ``full`` deviates from symmetry by more than ``tol`` (absolute).
    """
    full = np.asarray(full, dtype=float)
    if full.ndim != 2 or full.shape[0] != full.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {full.shape}")
    dim = full.shape[0]
    mandel_size(dim)
    asym = float(np.max(np.abs(full - full.T))) if full.size else 0.0
    if asym > tol:
        raise NotSymmetricError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    out = np.empty(mandel_size(dim))
    for k, (i, j) in enumerate(MANDEL_PAIRS[dim]):
        out[k] = full[i, i] if i == j else SQRT2 * full[i, j]
    return out


def from_mandel(vec):
    """Symmetric matrix from a Mandel vector of length 3 or 6."""
    vec = np.asarray(vec, dtype=float)
    dim = {3: 2, 6: 3}.get(vec.shape[-1])
    if dim is None or vec.ndim != 1:
        raise DimensionMismatchError(f"Mandel vector must have length 3 or 6, got shape {vec.shape}")
    full = np.empty((dim, dim))
    for k, (i, j) in enumerate(MANDEL_PAIRS[dim]):
        if i == j:
            full[i, i] = vec[k]
        else:
            full[i, j] = full[j, i] = vec[k] / SQRT2
    return full


@dataclass(frozen=True, eq=False)
class SymTensor2:
    """Symmetric second-order tensor stored as its Mandel vector."""

    mandel: np.ndarray

    def __post_init__(self):
        v = _frozen(self.mandel)
        if v.ndim != 1 or v.shape[0] not in (3, 6):
            raise DimensionMismatchError(f"Mandel vector must have length 3 or 6, got shape {v.shape}")
        object.__setattr__(self, "mandel", v)

    @classmethod
    def from_matrix(cls, full, tol=SYMMETRY_TOL):
        return cls(to_mandel(full, tol))

    @classmethod
    def basis(cls, dim, k):
        """The k-th Mandel basis strain."""
        e = np.zeros(mandel_size(dim))
        e[k] = 1.0
        return cls(e)

    @property
    def dim(self):
        return 2 if self.mandel.shape[0] == 3 else 3

    @property
    def matrix(self):
        return from_mandel(self.mandel)

    def norm(self):
        return float(np.linalg.norm(self.mandel))

    def __repr__(self):
        return f"SymTensor2({self.mandel.tolist()})"


@dataclass(frozen=True, eq=False)
class ElasticityTensor:
    """Fourth-order elasticity tensor with minor and major symmetries.

    Minor symmetries are implied by the Mandel representation. The major
    symmetry is checked: the Mandel matrix must be symmetric to within
    ``1e-12`` of its Frobenius norm.
    """

    mandel: np.ndarray

    def __post_init__(self):
        a = _frozen(self.mandel)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] not in (3, 6):
            raise DimensionMismatchError(f"Mandel matrix must be 3x3 or 6x6, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("Mandel matrix contains non-finite entries")
        scale = np.linalg.norm(a)
        asym = float(np.linalg.norm(a - a.T))
        if asym > SYMMETRY_TOL * max(scale, np.finfo(float).tiny):
            raise NotSymmetricError(
                f"elasticity tensor lacks major symmetry "
                f"(max asymmetry {np.max(np.abs(a - a.T)):.3e}, relative {asym / scale:.3e})"
            )
        object.__setattr__(self, "mandel", a)

    @property
    def dim(self):
        return 2 if self.mandel.shape[0] == 3 else 3

    def norm(self):
        return float(np.linalg.norm(self.mandel))

    def full(self):
        """Component array C_ijkl, shape (dim, dim, dim, dim)."""
        b = _BASIS[self.dim]
        return np.einsum("IJ,Iij,Jkl->ijkl", self.mandel, b, b)

    @classmethod
    def from_full(cls, c4):
        c4 = np.asarray(c4, dtype=float)
        dim = c4.shape[0]
        b = _BASIS[dim]
        return cls(np.einsum("ijkl,Iij,Jkl->IJ", c4, b, b))

    def to_dict(self):
        return {"dim": self.dim, "mandel": self.mandel.tolist()}

    @classmethod
    def from_dict(cls, obj):
        t = cls(np.array(obj["mandel"], dtype=float))
        if "dim" in obj and int(obj["dim"]) != t.dim:
            raise DimensionMismatchError(f"declared dim {obj['dim']} does not match Mandel size {t.mandel.shape}")
        return t

    def __repr__(self):
        return f"ElasticityTensor(dim={self.dim}, mandel={self.mandel.tolist()})"


@dataclass(frozen=True, eq=False)
class UnimodularMap:
    """Linear map H with ``| |det H| - 1 | <= 1e-12``."""

    matrix: np.ndarray
    _inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h = _frozen(self.matrix)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] not in (2, 3):
            raise DimensionMismatchError(f"H must be 2x2 or 3x3, got shape {h.shape}")
        det = float(np.linalg.det(h))
        if abs(abs(det) - 1.0) > UNIMODULAR_TOL:
            raise NotUnimodularError(f"|det H| = {abs(det):.16g} is not 1")
        object.__setattr__(self, "matrix", h)
        if is_signed_permutation(h):
            inv = h.T.copy()
        else:
            inv = np.linalg.inv(h)
        object.__setattr__(self, "_inverse", _frozen(inv))

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def det(self):
        return float(np.linalg.det(self.matrix))

    def inverse(self):
        return UnimodularMap(self._inverse)

    def inverse_matrix(self):
        return self._inverse

    def __matmul__(self, other):
        if isinstance(other, UnimodularMap):
            return UnimodularMap(self.matrix @ other.matrix)
        return self.matrix @ np.asarray(other)

    def is_orthogonal(self, tol=1e-12):
        return bool(np.allclose(self.matrix.T @ self.matrix, np.eye(self.dim), rtol=0, atol=tol))

    def __repr__(self):
        return f"UnimodularMap({self.matrix.tolist()})"


def is_signed_permutation(h):
    h = np.asarray(h)
    if not np.all(np.isin(h, (-1.0, 0.0, 1.0))):
        return False
    return bool(np.all(np.count_nonzero(h, axis=0) == 1) and np.all(np.count_nonzero(h, axis=1) == 1))


def as_unimodular(h):
    return h if isinstance(h, UnimodularMap) else UnimodularMap(np.asarray(h, dtype=float))


def _as_sym(e):
    return e if isinstance(e, SymTensor2) else SymTensor2.from_matrix(e)


# ---------------------------------------------------------------- constructors


def iso_tensor(lam, mu, dim=3):
    """Isotropic tensor, ``C E = 2 mu E + lam tr(E) I``."""
    m = mandel_size(dim)
    a = 2.0 * mu * np.eye(m)
    a[:dim, :dim] += lam
    return ElasticityTensor(a)


def anisotropic_tensor(mandel_matrix):
    return ElasticityTensor(np.asarray(mandel_matrix, dtype=float))


def cubic(c11, c12, c44):
    """Cubic tensor in the coordinate frame (Voigt constants)."""
    a = np.zeros((6, 6))
    a[:3, :3] = c12
    a[np.arange(3), np.arange(3)] = c11
    a[3:, 3:] = np.diag([2.0 * c44] * 3)
    return ElasticityTensor(a)


def transverse_iso(c11, c33, c12, c13, c44, axis=(0.0, 0.0, 1.0)):
    """Transversely isotropic tensor with symmetry axis ``axis``.

    Voigt-style constants refer to the frame whose third axis is the
    symmetry axis; ``c66 = (c11 - c12) / 2`` is implied.
    """
    a = np.zeros((6, 6))
    a[:2, :2] = [[c11, c12], [c12, c11]]
    a[:2, 2] = a[2, :2] = c13
    a[2, 2] = c33
    a[3, 3] = a[4, 4] = 2.0 * c44
    a[5, 5] = c11 - c12
    c = ElasticityTensor(a)
    axis = np.asarray(axis, dtype=float)
    _check_unit(axis)
    e3 = np.array([0.0, 0.0, 1.0])
    if np.allclose(np.abs(axis), e3, rtol=0, atol=1e-15):
        return c
    # rotation taking e3 onto axis
    k = np.cross(e3, axis)
    angle = math.atan2(np.linalg.norm(k), float(e3 @ axis))
    return conjugate(c, rotation_about_axis(k / np.linalg.norm(k), angle))


def in_plane_fluid_tensor(a, b):
    """Tensor whose quadratic form is ``a E33^2 + b det(E_p)``.

    ``E_p`` is the in-plane block (11, 22, 12). The symmetry group contains
    every unimodular H with ``H e3 = e3`` that keeps the plane orthogonal to
    e3 invariant. For ``b != 0`` it is not coercive.
    """
    m = np.zeros((6, 6))
    m[2, 2] = a
    m[0, 1] = m[1, 0] = 0.5 * b
    m[5, 5] = -0.5 * b  # E12^2 = x_12^2 / 2 in Mandel coordinates
    return ElasticityTensor(m)


# ------------------------------------------------------------------ operations


def apply(c, e):
    """Stress ``C E`` as a SymTensor2."""
    e = _as_sym(e)
    if e.dim != c.dim:
        raise DimensionMismatchError(f"tensor dim {c.dim} does not match strain dim {e.dim}")
    return SymTensor2(c.mandel @ e.mandel)


def inner(d, e):
    """Frobenius inner product of two symmetric tensors."""
    return float(_as_sym(d).mandel @ _as_sym(e).mandel)


def strain_congruence(h):
    """Mandel matrix Q of the linear map ``E -> H^T E H`` on Sym.

    For signed permutations Q is exactly a signed permutation as well; it is
    rounded so that conjugation reproduces permuted entries bit for bit.
    """
    h = as_unimodular(h)
    b = _BASIS[h.dim]
    hm = h.matrix
    moved = np.einsum("ki,Jkl,lj->Jij", hm, b, hm)
    q = np.einsum("Iij,Jij->IJ", b, moved)
    if is_signed_permutation(hm):
        q = np.rint(q)
    return q


def conjugate(c, h):
    """Return C_H with ``C_H(E) = H [C(H^T E H)] H^T``.

    Implemented as the congruence ``Q^T C Q`` where Q represents
    ``E -> H^T E H``; the result is symmetric for every H.
    """
    h = as_unimodular(h)
    if h.dim != c.dim:
        raise DimensionMismatchError(f"map dim {h.dim} does not match tensor dim {c.dim}")
    q = strain_congruence(h)
    return ElasticityTensor(q.T @ c.mandel @ q)


def sym_residual(c, h):
    """Relative distance ``|C - C_H|_F / |C|_F``; zero iff H is a material symmetry."""
    nrm = c.norm()
    if nrm == 0.0:
        raise ZeroTensorError("symmetry residual of the zero tensor is undefined")
    return float(np.linalg.norm(c.mandel - conjugate(c, h).mandel) / nrm)


def coercivity_margin(c):
    """Smallest eigenvalue of the Mandel matrix (the best coercivity constant)."""
    a = c.mandel
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])


def _check_unit(axis, tol=1e-12):
    n = float(np.linalg.norm(axis))
    if abs(n - 1.0) > tol:
        raise NonUnitAxisError(f"axis must be a unit vector, |a| = {n:.16g}")


def _snap(m):
    # exact zeros and ones where rounding noise obscures them
    r = np.rint(m)
    close = np.abs(m - r) <= 4.0 * np.finfo(float).eps
    return np.where(close, r, m)


def rotation_about_axis(axis, phi):
    """Right-handed rotation through ``phi`` about the unit vector ``axis`` (Rodrigues)."""
    a = np.asarray(axis, dtype=float)
    if a.shape != (3,):
        raise DimensionMismatchError(f"axis must be a 3-vector, got shape {a.shape}")
    _check_unit(a)
    k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    r = np.eye(3) + math.sin(phi) * k + (1.0 - math.cos(phi)) * (k @ k)
    return UnimodularMap(_snap(r))


def rotation2d(phi):
    c, s = math.cos(phi), math.sin(phi)
    return UnimodularMap(_snap(np.array([[c, -s], [s, c]])))


def reflection(axis):
    """Reflection across the plane (line in 2D) through 0 with normal ``axis``.

    In 3D this equals ``-R^pi_axis``.
    """
    a = np.asarray(axis, dtype=float)
    if a.shape not in ((2,), (3,)):
        raise DimensionMismatchError(f"axis must be a 2- or 3-vector, got shape {a.shape}")
    _check_unit(a)
    return UnimodularMap(_snap(np.eye(a.shape[0]) - 2.0 * np.outer(a, a)))


def unit(i, dim=3):
    e = np.zeros(dim)
    e[i] = 1.0
    return e


# -------------------------------------------------------------- classification

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
N_ANGLE_SAMPLES = 8


def generator_catalog(dim=3):
    """Named generators tested by :func:`classify`, in a fixed order."""
    cat = {}
    if dim == 3:
        cat["-I"] = UnimodularMap(-np.eye(3))
        for i in range(3):
            cat[f"-R(pi,e{i + 1})"] = reflection(unit(i))
        for i in range(3):
            cat[f"R(pi/2,e{i + 1})"] = rotation_about_axis(unit(i), math.pi / 2)
        cat["R(2pi/3,111)"] = rotation_about_axis(np.ones(3) / math.sqrt(3.0), 2 * math.pi / 3)
        cat["R(pi/3,e3)"] = rotation_about_axis(unit(2), math.pi / 3)
        for k in range(1, N_ANGLE_SAMPLES + 1):
            theta = (k * GOLDEN_ANGLE) % (2 * math.pi)
            cat[f"R(theta{k},e3)"] = rotation_about_axis(unit(2), theta)
    elif dim == 2:
        cat["-I"] = UnimodularMap(-np.eye(2))
        cat["-R(pi,e1)"] = reflection(unit(0, 2))
        cat["-R(pi,e2)"] = reflection(unit(1, 2))
        cat["R(pi/2)"] = rotation2d(math.pi / 2)
        cat["R(pi/3)"] = rotation2d(math.pi / 3)
        for k in range(1, N_ANGLE_SAMPLES + 1):
            cat[f"R(theta{k})"] = rotation2d((k * GOLDEN_ANGLE) % (2 * math.pi))
    else:
        mandel_size(dim)
    return cat


_REFL3 = ("-R(pi,e1)", "-R(pi,e2)", "-R(pi,e3)")
_QUARTER3 = ("R(pi/2,e1)", "R(pi/2,e2)", "R(pi/2,e3)")
_THETA3 = tuple(f"R(theta{k},e3)" for k in range(1, N_ANGLE_SAMPLES + 1))

# class -> alternatives; a class holds if every generator of one alternative passes
CLASS_RULES = {
    3: {
        "triclinic": [("-I",)],
        "monoclinic": [(r,) for r in _REFL3],
        "orthotropic": [_REFL3],
        "tetragonal": [_REFL3 + (q,) for q in _QUARTER3],
        "trigonal": [("R(2pi/3,111)",)],
        "cubic": [_REFL3 + _QUARTER3 + ("R(2pi/3,111)",)],
        "transversely_isotropic": [_REFL3 + ("R(pi/2,e3)", "R(pi/3,e3)") + _THETA3],
        "isotropic": [None],  # every generator
    },
    2: {
        "triclinic": [("-I",)],
        "orthotropic": [("-R(pi,e1)", "-R(pi,e2)")],
        "tetragonal": [("-R(pi,e1)", "-R(pi,e2)", "R(pi/2)")],
        "isotropic": [None],
    },
}

# immediate parents in the class lattice (more symmetric classes)
CLASS_PARENTS = {
    3: {
        "triclinic": ("monoclinic", "trigonal"),
        "monoclinic": ("orthotropic",),
        "orthotropic": ("tetragonal",),
        "tetragonal": ("cubic", "transversely_isotropic"),
        "trigonal": ("cubic",),
        "cubic": ("isotropic",),
        "transversely_isotropic": ("isotropic",),
        "isotropic": (),
    },
    2: {
        "triclinic": ("orthotropic",),
        "orthotropic": ("tetragonal",),
        "tetragonal": ("isotropic",),
        "isotropic": (),
    },
}


def _above(dim, name):
    seen, stack = set(), list(CLASS_PARENTS[dim][name])
    while stack:
        n = stack.pop()
        if n not in seen:
            seen.add(n)
            stack.extend(CLASS_PARENTS[dim][n])
    return seen


@dataclass(frozen=True)
class Classification:
    """Outcome of :func:`classify`.

    ``name`` is the most symmetric passing class; when several incomparable
    classes pass, ``ambiguous`` is set and ``name`` joins them with ``|``.
    """

    name: str
    ambiguous: bool
    passing: tuple
    residuals: dict
    tol: float

    def to_dict(self):
        return {
            "class": self.name,
            "ambiguous": self.ambiguous,
            "passing": list(self.passing),
            "tol": self.tol,
            "residuals": dict(self.residuals),
        }


def classify(c, tol=1e-8):
    """Classify ``c`` against the fixed generator catalog.

    Parameters
    ----------
    c : ElasticityTensor
    tol : float
        A generator passes when its symmetry residual is at most ``tol``.

    Returns
    -------
    Classification
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    cat = generator_catalog(c.dim)
    residuals = {name: sym_residual(c, h) for name, h in cat.items()}
    ok = {name for name, r in residuals.items() if r <= tol}
    passing = []
    for name, alternatives in CLASS_RULES[c.dim].items():
        for alt in alternatives:
            gens = cat.keys() if alt is None else alt
            if all(g in ok for g in gens):
                passing.append(name)
                break
    if not passing:
        # -I is always a symmetry; only reachable with pathological tolerances
        passing = ["triclinic"]
    maximal = [p for p in passing if not (_above(c.dim, p) & set(passing))]
    return Classification(
        name="|".join(maximal),
        ambiguous=len(maximal) > 1,
        passing=tuple(passing),
        residuals=residuals,
        tol=tol,
    )


def random_spd_tensor(rng, dim=3, shift=1.0):
    """Random coercive tensor, mostly for tests and diagnostics."""
    m = mandel_size(dim)
    a = rng.standard_normal((m, m))
    return ElasticityTensor(a @ a.T + shift * np.eye(m))
