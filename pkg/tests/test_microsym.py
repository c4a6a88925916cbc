import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cellhom.builders import build_example
from cellhom.cell import Lattice, Material, UnitCell, sample_index
from cellhom.errors import DimensionMismatchError, GridIncompatibleError
from cellhom.microsym import (
    AffineSymmetry,
    _key,
    check_micro_symmetry,
    detect_symmetries,
    induced_periodicity_check,
    scan_symmetries,
    transform_cell,
)
from cellhom.tensor import (
    UnimodularMap,
    conjugate,
    iso_tensor,
    random_spd_tensor,
    reflection,
    rotation_about_axis,
    unit,
)

CENTRE = np.array([0.5, 0.5, 0.5])
QUARTER_E3 = AffineSymmetry.linear(rotation_about_axis(unit(2), math.pi / 2), z0=CENTRE)
QUARTER_E1 = AffineSymmetry.linear(rotation_about_axis(unit(0), math.pi / 2), z0=CENTRE)


def square_cell(index, mats=None):
    index = np.asarray(index)
    mats = mats or [Material("a", iso_tensor(1, 1, 2)), Material("b", iso_tensor(2, 5, 2))]
    return UnitCell(Lattice(np.eye(2)), index.shape, mats, index)


def diagonal_cell(n=8):
    """Square split along its diagonal into two triangles."""
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return square_cell((i > j).astype(int))


def glide_cell(n=8):
    """A triangle in the lower-left quadrant plus its image under the glide
    (x, y) -> (-x, y + 1/2)."""
    idx = np.zeros((n, n), int)
    h = n // 2
    for i in range(h):
        for j in range(i + 1):
            idx[i, j] = 1
            idx[n - 1 - i, j + h] = 1
    return square_cell(idx)


GLIDE = AffineSymmetry([0.0, 0.0], [0.0, 0.5], UnimodularMap(np.diag([-1.0, 1.0])))
MIRROR = AffineSymmetry.linear(np.diag([-1.0, 1.0]))


# --- affine algebra -------------------------------------------------------------


def test_translation_moves_by_b1():
    h = AffineSymmetry.translation([2.0, 0.0, 0.0])
    assert_allclose(h.evaluate([0.1, 0.2, 0.3]), [2.1, 0.2, 0.3])


def test_half_turn_composed_twice_is_identity():
    h = AffineSymmetry.linear(rotation_about_axis(unit(2), math.pi), z0=[0.3, -1.0, 2.0])
    hh = h.compose(h)
    assert_allclose(hh.H.matrix, np.eye(3), atol=1e-12)
    assert_allclose(hh.offset, 0, atol=1e-12)


def test_compose_order():
    t = AffineSymmetry.translation([1.0, 2.0])
    r = AffineSymmetry.linear(np.diag([-1.0, 1.0]))
    z = np.array([0.3, 0.7])
    # translate after reflecting vs reflecting after translating: offsets a vs H a
    assert_allclose(t.compose(r).evaluate(z), r.evaluate(z) + [1.0, 2.0])
    assert_allclose(r.compose(t).evaluate(z), r.evaluate(z) + [-1.0, 2.0])
    assert_allclose(t.compose(r).offset, [1.0, 2.0])
    assert_allclose(r.compose(t).offset, [-1.0, 2.0])


def test_inverse_and_compose_random():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a = rng.standard_normal((3, 3))
        H = UnimodularMap(a / abs(np.linalg.det(a)) ** (1 / 3))
        h = AffineSymmetry(rng.standard_normal(3), rng.standard_normal(3), H)
        g = AffineSymmetry(rng.standard_normal(3), rng.standard_normal(3), H.inverse())
        z = rng.standard_normal((4, 3))
        assert_allclose(h.inverse().evaluate(h.evaluate(z)), z, atol=1e-12)
        assert_allclose(h.compose(g).evaluate(z), h.evaluate(g.evaluate(z)), atol=1e-12)


def test_dim_mismatch():
    with pytest.raises(DimensionMismatchError):
        AffineSymmetry([0.0, 0.0], [0.0, 0.0, 0.0], np.eye(2))
    with pytest.raises(DimensionMismatchError):
        AffineSymmetry.translation([1.0, 0.0]).compose(AffineSymmetry.translation([1.0, 0.0, 0.0]))


def test_json_round_trip():
    h = AffineSymmetry([0.5, 0.5], [0.0, 0.5], np.array([[0.0, -1.0], [1.0, 0.0]]))
    back = AffineSymmetry.from_dict(h.to_dict())
    assert back.to_dict() == h.to_dict()


# --- micro checks ---------------------------------------------------------------


@pytest.mark.parametrize("name", ["laminate", "orthotropic_octants", "tetragonal_orthogonal_fibers", "checkerboard2d"])
def test_identity_and_lattice_translation_exact(name):
    cell = build_example(name, 8)
    assert check_micro_symmetry(cell, AffineSymmetry.identity(cell.dim)).residual == 0.0
    for i in range(cell.dim):
        rep = check_micro_symmetry(cell, AffineSymmetry.translation(cell.lattice.basis[:, i]))
        assert rep.residual == 0.0


def test_octant_reflections_about_centre():
    cell = build_example("orthotropic_octants", 8)
    for i in range(3):
        h = AffineSymmetry.linear(reflection(unit(i)), z0=[1.0, 1.0, 1.0])
        assert check_micro_symmetry(cell, h).residual == 0.0


def test_octant_wrong_centre_fails():
    cell = build_example("orthotropic_octants", 8)
    h = AffineSymmetry.linear(reflection(unit(0)), z0=[0.5, 1.0, 1.0])
    assert not check_micro_symmetry(cell, h).passed


def test_laminate_quarter_turns():
    cell = build_example("laminate", 8)
    assert check_micro_symmetry(cell, QUARTER_E3).residual == 0.0
    rep = check_micro_symmetry(cell, QUARTER_E1)
    assert rep.residual > 0.1
    assert not rep.passed


def test_grid_incompatible_is_loud():
    cell = build_example("laminate", 8)
    h = AffineSymmetry.translation([0.01, 0.0, 0.0])
    with pytest.raises(GridIncompatibleError, match="grid-incompatible transformation") as info:
        check_micro_symmetry(cell, h)
    assert info.value.mismatch == pytest.approx(0.01)
    assert len(info.value.voxel) == 3


def test_glide_passes_mirror_fails():
    cell = glide_cell()
    assert check_micro_symmetry(cell, GLIDE).residual == 0.0
    assert check_micro_symmetry(cell, MIRROR).residual > 0


def test_report_dict():
    rep = check_micro_symmetry(glide_cell(), MIRROR).to_dict()
    assert set(rep) == {"residual", "pass", "per_voxel_worst"}
    assert rep["pass"] is False
    assert rep["per_voxel_worst"]["value"] == rep["residual"]


def test_mobility_law():
    mats = [Material("a", iso_tensor(1, 1, 2), np.diag([1.0, 2.0])),
            Material("b", iso_tensor(1, 1, 2), np.diag([2.0, 1.0]))]
    cell = square_cell(np.eye(4, dtype=int), mats)
    swap = AffineSymmetry.linear(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert check_micro_symmetry(cell, swap).passed
    assert not check_micro_symmetry(cell, swap, mobility=True).passed


# --- induced periodicity ----------------------------------------------------------


def test_induced_periodicity_identity():
    cell = build_example("tetragonal_four_fibers", 8)
    assert all(ok for _, ok in induced_periodicity_check(cell, AffineSymmetry.identity(3)))


def test_induced_periodicity_diagonal_cell():
    cell = diagonal_cell()
    h = AffineSymmetry.linear(np.array([[0.0, -1.0], [-1.0, 0.0]]), z0=[0.5, 0.5])
    assert check_micro_symmetry(cell, h).residual == 0.0
    assert induced_periodicity_check(cell, h) == [(0.0, True), (0.0, True)]


def test_induced_periodicity_laminate():
    res = induced_periodicity_check(build_example("laminate", 8), QUARTER_E3)
    assert [ok for _, ok in res] == [True, True, True]


# --- transform_cell ----------------------------------------------------------------


def _same_extension(c1, c2, pts):
    t1 = np.array([c1.materials[i].tensor.mandel for i in sample_index(c1, pts)])
    t2 = np.array([c2.materials[i].tensor.mandel for i in sample_index(c2, pts)])
    return float(np.max(np.abs(t1 - t2)))


def test_transform_identity():
    cell = build_example("tetragonal_four_fibers", 8)
    out = transform_cell(cell, AffineSymmetry.identity(3))
    assert np.array_equal(out.index, cell.index)
    assert np.array_equal(out.lattice.basis, cell.lattice.basis)
    assert np.array_equal(out.origin, cell.origin)
    assert [m.name for m in out.materials] == [m.name for m in cell.materials]


def test_transform_laminate_same_extension():
    cell = build_example("laminate", 8)
    out = transform_cell(cell, QUARTER_E3)
    assert_allclose(out.lattice.basis, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)
    pts = np.random.default_rng(0).uniform(-2, 2, (1000, 3))
    assert _same_extension(cell, out, pts) <= 1e-12


def test_transform_checkerboard_point_reflection():
    cell = build_example("checkerboard2d", 8)
    h = AffineSymmetry.linear(-np.eye(2), z0=[0.5, 0.5])
    out = transform_cell(cell, h)
    pts = np.random.default_rng(1).uniform(-3, 3, (100, 2))
    assert _same_extension(cell, out, pts) == 0.0


def test_transform_general_map_conjugates():
    # h is not a symmetry: the new field is C_H(h^{-1}(y))
    rng = np.random.default_rng(2)
    mats = [Material("p", random_spd_tensor(rng)), Material("q", random_spd_tensor(rng))]
    idx = rng.integers(0, 2, (4, 4, 4))
    cell = UnitCell(Lattice(np.eye(3)), (4, 4, 4), mats, idx)
    H = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    h = AffineSymmetry([0.1, 0.2, 0.3], [0.5, 0.0, 0.0], H)
    out = transform_cell(cell, h)
    z = cell.voxel_centers()
    new = sample_index(out, h.evaluate(z))
    for k in range(len(z)):
        expect = conjugate(cell.materials[cell.index.ravel()[k]].tensor, H).mandel
        assert_allclose(out.materials[new[k]].tensor.mandel, expect, rtol=1e-14)


def test_transform_dedups_materials():
    cell = build_example("orthotropic_octants", 4)
    out = transform_cell(cell, AffineSymmetry.linear(reflection(unit(0)), z0=[1.0, 1.0, 1.0]))
    # diag(s) and -diag(s) conjugate alike, so only four distinct tensors exist
    assert len(out.materials) == 4
    iso = build_example("laminate", 4)
    out = transform_cell(iso, QUARTER_E1)
    assert len(out.materials) == 2


# --- detection --------------------------------------------------------------------


def test_constant_cell_everything_passes():
    mats = [Material("a", iso_tensor(1, 2))]
    cell = UnitCell(Lattice(np.eye(3)), (4, 4, 4), mats, np.zeros((4, 4, 4), int))
    scan = scan_symmetries(cell)
    assert all(c.status == "pass" for c in scan if c.status != "incompatible")
    assert len(detect_symmetries(cell)) == sum(c.status == "pass" for c in scan)


def test_glide_detected_mirror_not():
    cell = glide_cell()
    keys = {_key(h, cell.lattice) for h in detect_symmetries(cell)}
    assert _key(GLIDE, cell.lattice) in keys
    assert _key(MIRROR, cell.lattice) not in keys


def test_octant_detection():
    cell = build_example("orthotropic_octants", 8)
    keys = {_key(h, cell.lattice) for h in detect_symmetries(cell)}
    for i in range(3):
        h = AffineSymmetry.linear(reflection(unit(i)), z0=[1.0, 1.0, 1.0])
        assert _key(h, cell.lattice) in keys


def test_hexagonal_sixfold_detected():
    cell = build_example("hexagonal_bundle", 16)
    names = {c.name for c in scan_symmetries(cell) if c.status == "pass"}
    assert "R(pi/3,e3)" in names
    assert "R(pi/2,e3)" not in names


def test_detected_set_closed_small():
    cell = build_example("orthotropic_octants", 8)
    found = detect_symmetries(cell)
    for h1, h2 in itertools.product(found, found):
        assert check_micro_symmetry(cell, h1.compose(h2)).residual == 0.0


def test_detect_closure_is_closed():
    cell = build_example("tetragonal_four_fibers", 8)
    catalog = detect_symmetries(cell)
    group = detect_symmetries(cell, closure=True)
    keys = {_key(g, cell.lattice) for g in group}
    assert {_key(g, cell.lattice) for g in catalog} <= keys
    assert len(group) > len(catalog)
    for g in catalog:
        for s in group:
            assert _key(g.compose(s), cell.lattice) in keys
