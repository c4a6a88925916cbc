"""Effective tensors from cell solutions, classical bounds and symmetry checks."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import os

import numpy as np

from .errors import ConvergenceError
from .microsym import transform_cell
from .solver import (
    GridOperator,
    SolverOptions,
    require_coercive,
    require_spd_mobility,
    _solve,
)
from .tensor import (
    ElasticityTensor,
    SymTensor2,
    as_unimodular,
    classify,
    coercivity_margin,
    mandel_size,
    strain_congruence,
    sym_residual,
)


def thread_count(threads=None):
    """Worker threads for independent load cases (``CELLHOM_THREADS`` by default)."""
    if threads is None:
        threads = os.environ.get("CELLHOM_THREADS", "1")
    try:
        n = int(threads)
    except ValueError:
        raise ValueError(f"thread count must be an integer, got {threads!r}") from None
    return max(1, n)


@dataclass(frozen=True)
class SolveStats:
    case: int
    iterations: int
    residual: float

    def to_dict(self):
        return {"case": self.case, "iterations": self.iterations, "residual": self.residual}


@dataclass(eq=False)
class EffectiveTensorReport:
    """Effective tensor of a cell with its bounds and solver statistics.

    ``C0`` is the symmetric part of the assembled matrix ``raw``; the
    relative size of the discarded antisymmetric part is ``asymmetry``.
    ``reuss`` is None when some material is too close to singular to invert.
    """

    C0: ElasticityTensor
    voigt: ElasticityTensor
    reuss: ElasticityTensor
    solves: list
    raw: np.ndarray
    asymmetry: float
    options: SolverOptions
    solutions: list = field(default=None, repr=False)
    symmetry: dict = None

    def to_dict(self):
        out = {
            "C0": self.C0.to_dict(),
            "voigt": self.voigt.to_dict(),
            "reuss": None if self.reuss is None else self.reuss.to_dict(),
            "solves": [s.to_dict() for s in self.solves],
            "asymmetry": self.asymmetry,
        }
        if self.symmetry is not None:
            out["symmetry"] = self.symmetry
        return out


def voigt_bound(cell):
    f = cell.volume_fractions()
    return ElasticityTensor(sum(fi * m.tensor.mandel for fi, m in zip(f, cell.materials)))


def reuss_bound(cell, margin=1e-12):
    f = cell.volume_fractions()
    used = [(fi, m) for fi, m in zip(f, cell.materials) if fi > 0]
    if any(coercivity_margin(m.tensor) < margin for _, m in used):
        return None
    s = sum(fi * np.linalg.inv(m.tensor.mandel) for fi, m in used)
    a = np.linalg.inv(s)
    return ElasticityTensor(0.5 * (a + a.T))


def _run_cases(op, loads, options, threads):
    def one(case):
        try:
            return _solve(op, loads[case], options)
        except ConvergenceError as exc:
            raise ConvergenceError(f"load case {case}: {exc}", exc.residual, exc.iterations) from None

    n = thread_count(threads)
    if n == 1 or len(loads) == 1:
        return [one(k) for k in range(len(loads))]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(one, range(len(loads))))


def _assemble(op, sols):
    cols = [op.mean_flux(s.w.reshape(op.nvox, op.ncomp), s.load) for s in sols]
    return np.stack(cols, axis=1)


def _relative_asymmetry(a):
    nrm = np.linalg.norm(a)
    return float(np.linalg.norm(a - a.T) / nrm) if nrm else 0.0


def effective_tensor(cell, options=None, threads=None, keep_solutions=False):
    """Effective elasticity tensor by solving one cell problem per Mandel
    basis strain.

    Column k of the Mandel matrix of C0 is the cell average of
    ``C [E_k + grad w^{E_k}]``, computed with the solver's own quadrature.

    Parameters
    ----------
    cell : UnitCell
    options : SolverOptions, optional
    threads : int, optional
        Load cases solved concurrently; defaults to ``CELLHOM_THREADS``
        or 1. Each case is solved serially, so results do not depend on it.
    keep_solutions : bool
        Keep the CellSolution objects (with Gauss-point gradients).

    Returns
    -------
    EffectiveTensorReport
    """
    options = SolverOptions(keep_grad=keep_solutions) if options is None else options
    require_coercive(cell)
    op = GridOperator(cell, "elastic")
    m = mandel_size(cell.dim)
    loads = [np.eye(m)[k] for k in range(m)]
    sols = _run_cases(op, loads, options, threads)
    raw = _assemble(op, sols)
    return EffectiveTensorReport(
        C0=ElasticityTensor(0.5 * (raw + raw.T)),
        voigt=voigt_bound(cell),
        reuss=reuss_bound(cell),
        solves=[SolveStats(k, s.iterations, s.residual) for k, s in enumerate(sols)],
        raw=raw,
        asymmetry=_relative_asymmetry(raw),
        options=options,
        solutions=sols if keep_solutions else None,
    )


def sandwich_margins(report):
    """Smallest eigenvalues of ``voigt - C0`` and ``C0 - reuss`` (Mandel)."""
    c0 = report.C0.mandel
    lo_v = float(np.linalg.eigvalsh(report.voigt.mandel - c0)[0])
    lo_r = float("nan") if report.reuss is None else float(np.linalg.eigvalsh(c0 - report.reuss.mandel)[0])
    return lo_v, lo_r


def _tensor_of(obj):
    if isinstance(obj, EffectiveTensorReport):
        return obj.C0
    return obj


def check_macro_symmetry(report, H, tol=1e-8):
    """Return ``(residual, passed)`` for the material symmetry H of C0."""
    r = sym_residual(_tensor_of(report), as_unimodular(H))
    return r, r <= tol


def classify_macro(report, tol=1e-8):
    return classify(_tensor_of(report), tol)


def average_stress(cell, grad, E, symmetrize=True):
    """Cell-average stress (Mandel) from Gauss-point displacement gradients.

    With ``symmetrize=False`` the full gradient is contracted with the
    fourth-order tensor; minor symmetry makes both routes agree.
    """
    E = E if isinstance(E, SymTensor2) else SymTensor2.from_matrix(E)
    flat = cell.index.ravel()
    total = np.zeros((cell.dim, cell.dim))
    for k, mat in enumerate(cell.materials):
        g = grad[flat == k]
        if not g.size:
            continue
        gsum = g.sum(axis=(0, 1))
        count = g.shape[0] * g.shape[1]
        if symmetrize:
            gsum = 0.5 * (gsum + gsum.T)
        strain = count * E.matrix + gsum
        total += np.einsum("ijkl,kl->ij", mat.tensor.full(), strain)
    avg = total / (grad.shape[0] * grad.shape[1])
    return SymTensor2.from_matrix(0.5 * (avg + avg.T)).mandel


def gradient_identity_error(cell, h, options=None):
    """Largest mismatch in the gradient relation between a cell and its image.

    For each Mandel basis strain E, solve on ``transform_cell(cell, h)``
    with load E and on ``cell`` with load ``H^T E H``; at matching
    Gauss points ``grad w = H^T grad w_hat H`` must hold.
    Returns the maximum absolute error over all loads and points, and the
    largest gradient magnitude for scale.
    """
    options = SolverOptions(cg_tol=1e-12) if options is None else options
    require_coercive(cell)
    hat = transform_cell(cell, h)
    op, op_hat = GridOperator(cell), GridOperator(hat)
    H = h.H.matrix
    q = strain_congruence(h.H)
    m = mandel_size(cell.dim)
    worst, scale = 0.0, 0.0
    for k in range(m):
        e = np.eye(m)[k]
        s_hat = _solve(op_hat, e, options)
        s = _solve(op, q @ e, options)  # Mandel coordinates of H^T E H
        pulled = np.einsum("ki,vqkl,lj->vqij", H, s_hat.grad, H)
        worst = max(worst, float(np.max(np.abs(s.grad - pulled))))
        scale = max(scale, float(np.max(np.abs(s.grad))))
    return worst, scale


# ---------------------------------------------------------------- transport


@dataclass(eq=False)
class TransportReport:
    M0: np.ndarray
    solves: list
    asymmetry: float
    raw: np.ndarray

    def to_dict(self):
        return {
            "M0": self.M0.tolist(),
            "solves": [s.to_dict() for s in self.solves],
            "asymmetry": self.asymmetry,
        }


def effective_transport(cell, options=None, threads=None):
    """Effective mobility ``M0_ij = avg (M (grad chi^j + e_j)) . e_i``.

    Every material must carry a symmetric positive-definite mobility.
    """
    options = SolverOptions(keep_grad=False) if options is None else options
    require_spd_mobility(cell)
    op = GridOperator(cell, "scalar")
    loads = [np.eye(cell.dim)[j] for j in range(cell.dim)]
    sols = _run_cases(op, loads, options, threads)
    raw = _assemble(op, sols)
    return TransportReport(
        M0=0.5 * (raw + raw.T),
        solves=[SolveStats(j, s.iterations, s.residual) for j, s in enumerate(sols)],
        asymmetry=_relative_asymmetry(raw),
        raw=raw,
    )


def transport_symmetry_residual(M, H):
    """``|M - H M H^T| / |M|`` for a second-order mobility tensor."""
    H = as_unimodular(H).matrix
    M = np.asarray(M, dtype=float)
    return float(np.linalg.norm(M - H @ M @ H.T) / np.linalg.norm(M))
