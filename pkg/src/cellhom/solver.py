"""Periodic unit-cell problems on the voxel grid.

Find the periodic fluctuation w with zero mean such that

    int_Y C(y) [E + grad w] : grad v dy = 0      for all periodic v.

Discretization: trilinear (bilinear in 2D) elements, one per voxel, with
nodes at voxel corners identified periodically, so the node grid has the
same shape as the voxel grid. Every element is the image of the unit cube
under the constant Jacobian ``J = B diag(1/N)``; with per-voxel constant
coefficients all elements of one material share a single stiffness matrix.

The same machinery handles scalar transport problems
``div M (e + grad chi) = 0`` (one unknown per node).
"""

from dataclasses import dataclass, field
import itertools
import json
import math

import numpy as np

from .errors import (
    ConvergenceError,
    DimensionMismatchError,
    NonCoerciveError,
    NotPositiveDefiniteError,
)
from .tensor import MANDEL_PAIRS, SQRT2, SymTensor2, coercivity_margin, mandel_size

GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))

# the right-hand side is treated as zero when it is this small relative to
# the unassembled element loads (cancellation noise of a constant field)
ROUNDOFF_LOAD = 256 * np.finfo(float).eps


def default_max_iter(grid):
    """Iteration cap: 20 sweeps per grid diameter, per dimension, plus slack."""
    nbar = float(np.prod(grid)) ** (1.0 / len(grid))
    return int(20 * len(grid) * nbar) + 200


@dataclass(frozen=True)
class SolverOptions:
    cg_tol: float = 1e-10
    max_iter: int = None
    keep_grad: bool = True

    def __post_init__(self):
        if not 0.0 < self.cg_tol < 1.0:
            raise ValueError(f"cg_tol must lie in (0, 1), got {self.cg_tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError(f"max_iter must be positive, got {self.max_iter}")

    def iteration_cap(self, grid):
        return default_max_iter(grid) if self.max_iter is None else int(self.max_iter)


@dataclass(frozen=True)
class CellProblem:
    cell: object
    E: SymTensor2
    options: SolverOptions = field(default_factory=SolverOptions)


@dataclass(eq=False)
class CellSolution:
    """Solution of one cell problem.

    Attributes
    ----------
    w : numpy.ndarray, shape ``grid + (ncomp,)``
        Nodal fluctuation, node ``(i_1, ...)`` at the lower corner of voxel
        ``(i_1, ...)``; zero mean per component.
    grad : numpy.ndarray or None
        ``(n_voxels, n_qp, ncomp, dim)`` gradient at the Gauss points,
        voxels in row-major order, points ordered like
        ``itertools.product(GAUSS, repeat=dim)``.
    load : numpy.ndarray
        Mandel vector of E (elasticity) or the direction e (transport).
    """

    w: np.ndarray
    grad: np.ndarray
    iterations: int
    residual: float
    load: np.ndarray
    kind: str = "elastic"


# --------------------------------------------------------------- operators


def _shape_gradients(dim):
    """d N_a / d xi at each Gauss point: shape (n_qp, 2**dim, dim)."""
    corners = list(itertools.product((0, 1), repeat=dim))
    qps = list(itertools.product(GAUSS, repeat=dim))
    out = np.zeros((len(qps), len(corners), dim))
    for q, xi in enumerate(qps):
        for a, c in enumerate(corners):
            for k in range(dim):
                g = 1.0
                for j in range(dim):
                    if j == k:
                        g *= 1.0 if c[j] else -1.0
                    else:
                        g *= xi[j] if c[j] else 1.0 - xi[j]
                out[q, a, k] = g
    return corners, out


class GridOperator:
    """Matrix-free periodic Q1 operator for one cell.

    ``kind="elastic"`` uses displacement unknowns and Mandel strains;
    ``kind="scalar"`` uses a scalar unknown and its gradient (transport).
    """

    def __init__(self, cell, kind="elastic"):
        dim = cell.dim
        self.cell = cell
        self.kind = kind
        self.dim = dim
        self.grid = cell.grid
        self.nvox = cell.n_voxels
        self.ncomp = dim if kind == "elastic" else 1
        corners, dn = _shape_gradients(dim)
        self.nen = len(corners)
        self.nq = dn.shape[0]
        jac = cell.lattice.basis / np.asarray(self.grid, dtype=float)
        jinv = np.linalg.inv(jac)
        self.weight = abs(np.linalg.det(jac)) / self.nq
        dx = dn @ jinv  # physical shape gradients (q, a, k)
        self.dN = dx

        # G[q] maps element dofs (a, c) to the flattened gradient (c, k)
        nd = self.nen * self.ncomp
        G = np.zeros((self.nq, self.ncomp * dim, nd))
        for a in range(self.nen):
            for c in range(self.ncomp):
                for k in range(dim):
                    G[:, c * dim + k, a * self.ncomp + c] = dx[:, a, k]
        self.G = G
        if kind == "elastic":
            m = mandel_size(dim)
            P = np.zeros((m, dim * dim))
            for r, (i, j) in enumerate(MANDEL_PAIRS[dim]):
                if i == j:
                    P[r, i * dim + i] = 1.0
                else:
                    P[r, i * dim + j] = P[r, j * dim + i] = 1.0 / SQRT2
            self.S = np.einsum("rg,qgd->qrd", P, G)
            mats = [mt.tensor.mandel for mt in cell.materials]
        elif kind == "scalar":
            self.S = G
            mats = [_mobility(mt) for mt in cell.materials]
        else:
            raise ValueError(f"unknown operator kind {kind!r}")
        self.mats = mats
        self.Sbar = self.S.mean(axis=0)
        self.K = [self.weight * np.einsum("qrd,rs,qse->de", self.S, M, self.S) for M in mats]

        flat = cell.index.ravel()
        self.groups = [(m, np.flatnonzero(flat == m)) for m in range(len(mats))]
        self.groups = [(m, g) for m, g in self.groups if g.size]
        self.single = len(self.groups) == 1

        nodes = np.arange(self.nvox).reshape(self.grid)
        self.conn = np.stack(
            [np.roll(nodes, [-c for c in corner], axis=tuple(range(dim))).ravel() for corner in corners],
            axis=1,
        )

        diag = np.zeros((self.nvox, self.ncomp))
        for m, g in self.groups:
            kd = np.diag(self.K[m]).reshape(self.nen, self.ncomp)
            for a in range(self.nen):
                np.add.at(diag, self.conn[g, a], kd[a])
        self.diag = diag

    # element gather/scatter ------------------------------------------------

    def gather(self, u):
        """(nvox, ncomp) nodal array -> (nvox, nen*ncomp) element dofs."""
        return u[self.conn].reshape(self.nvox, -1)

    def scatter(self, fe):
        fe = fe.reshape(self.nvox, self.nen, self.ncomp)
        out = np.zeros((self.nvox, self.ncomp))
        for a in range(self.nen):
            out[self.conn[:, a]] += fe[:, a]  # conn[:, a] is a permutation
        return out

    def matvec(self, u):
        ue = self.gather(u)
        if self.single:
            fe = ue @ self.K[self.groups[0][0]]
        else:
            fe = np.empty_like(ue)
            for m, g in self.groups:
                fe[g] = ue[g] @ self.K[m]
        return self.scatter(fe)

    def load(self, e):
        """Right-hand side ``-int S^T M e`` and the norm of its element pieces."""
        fe = np.empty((self.nvox, self.nen * self.ncomp))
        scale2 = 0.0
        for m, g in self.groups:
            f = -self.weight * np.einsum("qrd,rs,s->d", self.S, self.mats[m], e)
            fe[g] = f
            scale2 += g.size * float(f @ f)
        return self.scatter(fe), math.sqrt(scale2)

    def gradient(self, u):
        """Gauss-point gradients, shape (nvox, nq, ncomp, dim)."""
        ue = self.gather(u)
        g = np.einsum("qgd,vd->vqg", self.G, ue)
        return g.reshape(self.nvox, self.nq, self.ncomp, self.dim)

    def mean_flux(self, u, e):
        """Volume average of ``M (e + S u)`` (stress in Mandel form, or flux)."""
        ue = self.gather(u)
        total = np.zeros(len(e))
        for m, g in self.groups:
            s = g.size * e + self.Sbar @ ue[g].sum(axis=0)
            total += self.mats[m] @ s
        return total / self.nvox

    def energy(self, u, v):
        return float(np.sum(self.matvec(u) * v))


def _mobility(mat):
    if mat.mobility is None:
        raise NotPositiveDefiniteError(f"material {mat.name!r} has no mobility")
    return mat.mobility


def _project(x):
    x -= x.mean(axis=0)
    return x


def pcg(op, b, cg_tol, max_iter, load_scale=None):
    """Jacobi-preconditioned CG on the zero-mean subspace.

    Returns ``(x, iterations, relative_residual)``.
    """
    b = _project(b.copy())
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if bnorm == 0.0 or (load_scale is not None and bnorm <= ROUNDOFF_LOAD * load_scale):
        return x, 0, 0.0
    dinv = 1.0 / op.diag
    r = b.copy()
    z = _project(dinv * r)
    p = z.copy()
    rz = float(np.sum(r * z))
    best = 1.0
    for it in range(1, max_iter + 1):
        q = op.matvec(p)
        alpha = rz / float(np.sum(p * q))
        x += alpha * p
        r -= alpha * q
        _project(r)
        rel = float(np.linalg.norm(r)) / bnorm
        best = min(best, rel)
        if rel <= cg_tol:
            return _project(x), it, rel
        z = _project(dinv * r)
        rz_new = float(np.sum(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"CG did not reach relative residual {cg_tol:g} in {max_iter} iterations (best {best:.3e})",
        residual=best,
        iterations=max_iter,
    )


# ------------------------------------------------------------- assumptions


@dataclass(frozen=True)
class AssumptionReport:
    """Bound M, coercivity constant alpha and per-material margins."""

    bound: float
    alpha: float
    margins: dict
    symmetric: bool
    passed: bool

    def to_dict(self):
        return {
            "M": self.bound,
            "alpha": self.alpha,
            "margins": dict(self.margins),
            "major_symmetry": self.symmetric,
            "pass": self.passed,
        }


def validate_assumptions(cell):
    """Report the bound, coercivity margin and symmetry of the material table.

    Boundedness and measurability hold for any finite voxel table and minor
    symmetry is built into the Mandel storage; what remains to check is
    coercivity (alpha > 0) and major symmetry.
    """
    margins = {m.name: coercivity_margin(m.tensor) for m in cell.materials}
    bound = max(m.tensor.norm() for m in cell.materials)
    alpha = min(margins.values())
    sym = all(np.array_equal(m.tensor.mandel, m.tensor.mandel.T) for m in cell.materials)
    return AssumptionReport(bound, alpha, margins, sym, bool(alpha > 0 and sym))


def require_coercive(cell):
    rep = validate_assumptions(cell)
    if not rep.passed:
        name = min(rep.margins, key=rep.margins.get)
        raise NonCoerciveError(
            f"material {name!r} is not coercive (margin {rep.margins[name]:.6g})",
            material=name,
            margin=rep.margins[name],
        )
    return rep


def require_spd_mobility(cell):
    for m in cell.materials:
        mob = _mobility(m)
        if not np.allclose(mob, mob.T, rtol=0, atol=1e-12 * max(1.0, np.abs(mob).max())):
            raise NotPositiveDefiniteError(f"mobility of {m.name!r} is not symmetric")
        lo = float(np.linalg.eigvalsh(mob)[0])
        if lo <= 0:
            raise NotPositiveDefiniteError(f"mobility of {m.name!r} is not positive definite (min eigenvalue {lo:.6g})")


# ------------------------------------------------------------------ solves


def _solve(op, load, options):
    b, scale = op.load(load)
    x, its, res = pcg(op, b, options.cg_tol, options.iteration_cap(op.grid), scale)
    grad = op.gradient(x) if options.keep_grad else None
    w = x.reshape(op.grid + (op.ncomp,))
    return CellSolution(w, grad, its, res, np.array(load, dtype=float), op.kind)


def solve_cell_problem(problem, operator=None):
    """Solve the elastic cell problem for the macroscopic strain ``problem.E``.

    Parameters
    ----------
    problem : CellProblem
    operator : GridOperator, optional
        Reuse an operator built for the same cell.

    Returns
    -------
    CellSolution
    """
    cell = problem.cell
    E = problem.E if isinstance(problem.E, SymTensor2) else SymTensor2.from_matrix(problem.E)
    if E.dim != cell.dim:
        raise DimensionMismatchError(f"load dim {E.dim} does not match cell dim {cell.dim}")
    if operator is None:
        require_coercive(cell)
        operator = GridOperator(cell, "elastic")
    return _solve(operator, E.mandel, problem.options)


def solve_transport_problem(cell, direction, options=None, operator=None):
    """Solve ``div M (e + grad chi) = 0`` for the macroscopic gradient ``e``."""
    options = SolverOptions() if options is None else options
    e = np.asarray(direction, dtype=float)
    if e.shape != (cell.dim,):
        raise DimensionMismatchError(f"direction must have shape ({cell.dim},)")
    if operator is None:
        require_spd_mobility(cell)
        operator = GridOperator(cell, "scalar")
    return _solve(operator, e, options)


def export_solution(solution, prefix):
    """Write the nodal field as little-endian f64 plus a JSON sidecar."""
    data_path, meta_path = prefix + ".f64", prefix + ".json"
    np.ascontiguousarray(solution.w, dtype="<f8").tofile(data_path)
    meta = {
        "grid": list(solution.w.shape[:-1]),
        "components": solution.w.shape[-1],
        "order": "row-major over nodes (last lattice index fastest), components innermost",
        "dtype": "float64 little-endian",
        "kind": solution.kind,
        "load": solution.load.tolist(),
        "iterations": solution.iterations,
        "residual": solution.residual,
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2)
    return data_path, meta_path
