import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from cellhom.builders import build_example
from cellhom.cell import Lattice, Material, UnitCell
from cellhom.errors import ConvergenceError, NonCoerciveError
from cellhom.homog import (
    average_stress,
    check_macro_symmetry,
    classify_macro,
    effective_tensor,
    effective_transport,
    gradient_identity_error,
    reuss_bound,
    sandwich_margins,
    thread_count,
    transport_symmetry_residual,
    voigt_bound,
)
from cellhom.microsym import AffineSymmetry
from cellhom.solver import SolverOptions
from cellhom.tensor import (
    ElasticityTensor,
    SymTensor2,
    in_plane_fluid_tensor,
    iso_tensor,
    reflection,
    rotation_about_axis,
    unit,
)

from oracles import laminate_tensor, layered_mobility


def constant_cell(c, grid=(4, 4, 4), mobility=1.0):
    return UnitCell(Lattice(np.eye(len(grid))), grid, [Material("c", c, mobility)], np.zeros(int(np.prod(grid)), int))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_constant_cell_returns_the_material(seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((6, 6))
    c = ElasticityTensor(g @ g.T + 0.5 * np.eye(6))
    rep = effective_tensor(constant_cell(c))
    assert np.linalg.norm(rep.C0.mandel - c.mandel) <= 1e-12 * np.linalg.norm(c.mandel)
    assert all(s.iterations == 0 for s in rep.solves)


def test_laminate_matches_oracle():
    cell = build_example("laminate", 8)
    rep = effective_tensor(cell, SolverOptions(cg_tol=1e-12))
    ref = laminate_tensor([m.tensor.mandel for m in cell.materials], [0.5, 0.5])
    assert_allclose(rep.C0.mandel, ref, atol=1e-9)
    # 2 mu_eff in Mandel shear entries
    assert rep.C0.mandel[4, 4] == pytest.approx(3.0, abs=1e-9)
    assert rep.C0.mandel[5, 5] == pytest.approx(4.0, abs=1e-9)


def test_laminate_uneven_fractions_anisotropic_phases():
    rng = np.random.default_rng(11)
    specs = []
    for _ in range(2):
        g = rng.standard_normal((6, 6))
        specs.append({"model": "mandel", "mandel": (g @ g.T + np.eye(6)).tolist()})
    cell = build_example("laminate", 8, f=0.25, phase1=specs[0], phase2=specs[1])
    rep = effective_tensor(cell, SolverOptions(cg_tol=1e-12))
    ref = laminate_tensor([m.tensor.mandel for m in cell.materials], cell.volume_fractions())
    assert_allclose(rep.C0.mandel, ref, atol=1e-8 * np.abs(ref).max())


def test_report_fields():
    rep = effective_tensor(build_example("tetragonal_single_fiber", 8))
    assert rep.asymmetry <= 10 * rep.options.cg_tol
    assert np.array_equal(rep.C0.mandel, rep.C0.mandel.T)
    d = rep.to_dict()
    assert set(d) == {"C0", "voigt", "reuss", "solves", "asymmetry"}
    assert len(d["solves"]) == 6


def test_bounds_for_two_isotropic_phases():
    cell = build_example("laminate", 4)
    assert_allclose(voigt_bound(cell).mandel, iso_tensor(0, 2).mandel)
    assert_allclose(reuss_bound(cell).mandel, iso_tensor(0, 1.5).mandel, atol=1e-14)


@pytest.mark.parametrize("name,n", [("tetragonal_orthogonal_fibers", 8), ("orthotropic_octants", 8), ("checkerboard2d", 16)])
def test_sandwich(name, n):
    rep = effective_tensor(build_example(name, n))
    lo_v, lo_r = sandwich_margins(rep)
    scale = np.linalg.norm(rep.C0.mandel)
    assert lo_v >= -1e-9 * scale
    assert lo_r >= -1e-9 * scale


def test_reuss_skipped_for_singular_phase():
    cell = build_example("laminate", 4, phase1={"model": "isotropic", "lambda": 0, "mu": 1},
                         phase2={"model": "mandel", "mandel": np.diag([1, 1, 1, 1, 1, 1e-14]).tolist()})
    assert reuss_bound(cell) is None


def test_refuses_non_coercive():
    with pytest.raises(NonCoerciveError):
        effective_tensor(constant_cell(in_plane_fluid_tensor(1.0, 2.0)))


def test_convergence_error_names_load_case():
    with pytest.raises(ConvergenceError, match="load case 0"):
        effective_tensor(build_example("tetragonal_four_fibers", 8), SolverOptions(max_iter=1))


def test_threads_do_not_change_result(monkeypatch):
    cell = build_example("tetragonal_orthogonal_fibers", 8)
    a = effective_tensor(cell, threads=1).C0.mandel
    b = effective_tensor(cell, threads=3).C0.mandel
    assert np.array_equal(a, b)
    monkeypatch.setenv("CELLHOM_THREADS", "4")
    assert thread_count() == 4
    monkeypatch.setenv("CELLHOM_THREADS", "lots")
    with pytest.raises(ValueError):
        thread_count()


def test_average_stress_symmetrize_agrees():
    cell = build_example("tetragonal_orthogonal_fibers", 8)
    rep = effective_tensor(cell, SolverOptions(cg_tol=1e-12), keep_solutions=True)
    for k in (0, 3, 5):
        sol = rep.solutions[k]
        E = SymTensor2.basis(3, k)
        a = average_stress(cell, sol.grad, E, symmetrize=True)
        b = average_stress(cell, sol.grad, E, symmetrize=False)
        assert_allclose(a, b, atol=1e-13)
        # and both reproduce the column assembled by the solver
        assert_allclose(a, rep.raw[:, k], atol=1e-12)


# --- macro symmetry ------------------------------------------------------------------


def test_four_fibers_tetragonal():
    rep = effective_tensor(build_example("tetragonal_four_fibers", 16))
    assert check_macro_symmetry(rep, rotation_about_axis(unit(0), math.pi))[1]
    assert check_macro_symmetry(rep, rotation_about_axis(unit(2), math.pi / 2))[1]
    r, ok = check_macro_symmetry(rep, rotation_about_axis(unit(0), math.pi / 2))
    assert not ok and r > 1e-3
    assert classify_macro(rep).name == "tetragonal"


def test_octants_orthotropic():
    rep = effective_tensor(build_example("orthotropic_octants", 8))
    for i in range(3):
        r, ok = check_macro_symmetry(rep, reflection(unit(i)))
        assert ok, r
    assert classify_macro(rep).name == "orthotropic"


def test_gradient_identity_laminate():
    h = AffineSymmetry.linear(rotation_about_axis(unit(2), math.pi / 2), z0=[0.5, 0.5, 0.5])
    worst, scale = gradient_identity_error(build_example("laminate", 8), h)
    assert scale > 0.1
    assert worst <= 1e-10


def test_gradient_identity_octant_reflection():
    h = AffineSymmetry.linear(reflection(unit(1)), z0=[1.0, 1.0, 1.0])
    worst, _ = gradient_identity_error(build_example("orthotropic_octants", 4), h)
    assert worst <= 1e-10


# --- transport ------------------------------------------------------------------------


def test_transport_constant():
    m = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])
    rep = effective_transport(constant_cell(iso_tensor(1, 1), mobility=m))
    assert_allclose(rep.M0, m, atol=1e-14)


def test_transport_bilayer():
    rep = effective_transport(build_example("laminate", 8), SolverOptions(cg_tol=1e-12))
    series, parallel = layered_mobility([1.0, 3.0], [0.5, 0.5])
    assert_allclose(np.diag(rep.M0), [parallel, parallel, series], atol=1e-9)
    assert_allclose(rep.M0 - np.diag(np.diag(rep.M0)), 0, atol=1e-9)


def test_transport_checkerboard_coarse():
    rep = effective_transport(build_example("checkerboard2d", 32))
    # Keller-Dykhne: sqrt(1 * 4); discretization error at 32^2 is a few percent
    assert abs(rep.M0[0, 0] - 2.0) < 0.1
    assert transport_symmetry_residual(rep.M0, np.array([[0.0, -1.0], [1.0, 0.0]])) < 1e-8


def test_transport_symmetry_residual():
    M = np.diag([1.0, 2.0])
    assert transport_symmetry_residual(M, np.eye(2)) == 0.0
    assert transport_symmetry_residual(M, np.array([[0.0, 1.0], [1.0, 0.0]])) > 0.5
