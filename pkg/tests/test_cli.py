import json
import math

import numpy as np
import pytest

from cellhom.cli import main
from cellhom.microsym import AffineSymmetry
from cellhom.tensor import rotation_about_axis, unit


@pytest.fixture
def laminate(tmp_path, capsys):
    prefix = str(tmp_path / "lam")
    assert main(["build-example", "laminate", "--n", "4", "--out", prefix]) == 0
    paths = json.loads(capsys.readouterr().out)
    return paths["config"]


def test_build_example_writes_stable_files(tmp_path, capsys):
    outs = []
    for tag in ("a", "b"):
        prefix = str(tmp_path / tag)
        assert main(["build-example", "tetragonal_orthogonal_fibers", "--n", "8", "--out", prefix]) == 0
        paths = json.loads(capsys.readouterr().out)
        outs.append((open(paths["config"]).read().replace(f"{tag}.vox", ""), open(paths["voxels"], "rb").read()))
    assert outs[0] == outs[1]


def test_build_example_params(tmp_path, capsys):
    prefix = str(tmp_path / "lam")
    assert main(["build-example", "laminate", "--n", "8", "--param", "f=0.25", "--out", prefix]) == 0
    cfg = json.load(open(json.loads(capsys.readouterr().out)["config"]))
    assert cfg["grid"] == [8, 8, 8]


def test_build_example_bad_param(tmp_path, capsys):
    assert main(["build-example", "laminate", "--param", "colour=3", "--out", str(tmp_path / "x")]) == 1
    assert capsys.readouterr().err.startswith("error[")


def test_homogenize_json(laminate, capsys):
    assert main(["homogenize", laminate, "--deterministic"]) == 0
    captured = capsys.readouterr()
    rep = json.loads(captured.out)
    assert rep["C0"]["mandel"][5][5] == pytest.approx(4.0, abs=1e-8)
    # layers of one isotropic phase each: isotropic in the plane of the layers
    assert rep["symmetry"]["class"] == "transversely_isotropic"
    assert any(c["pass"] for c in rep["symmetry"]["candidates"])
    assert "case 0" in captured.err


def test_homogenize_csv(laminate, capsys, tmp_path):
    out = tmp_path / "c0.csv"
    assert main(["homogenize", laminate, "--format", "csv", "--out", str(out)]) == 0
    rows = [list(map(float, line.split(","))) for line in out.read_text().splitlines()]
    assert len(rows) == 6 and all(len(r) == 6 for r in rows)
    assert rows[4][4] == pytest.approx(3.0, abs=1e-8)


def test_check_micro_pass_fail_and_error(laminate, tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(json.dumps(AffineSymmetry.linear(rotation_about_axis(unit(2), math.pi / 2),
                                                     z0=[0.5, 0.5, 0.5]).to_dict()))
    assert main(["check-micro", laminate, "--h", str(good)]) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is True

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(AffineSymmetry.linear(rotation_about_axis(unit(0), math.pi / 2),
                                                    z0=[0.5, 0.5, 0.5]).to_dict()))
    assert main(["check-micro", laminate, "--h", str(bad)]) == 2
    capsys.readouterr()

    off = tmp_path / "off.json"
    off.write_text(json.dumps(AffineSymmetry.translation([0.1, 0.0, 0.0]).to_dict()))
    assert main(["check-micro", laminate, "--h", str(off)]) == 1
    assert "grid-incompatible transformation" in capsys.readouterr().err


def test_check_micro_catalog(laminate, capsys):
    assert main(["check-micro", laminate, "--catalog"]) == 0
    cands = json.loads(capsys.readouterr().out)["candidates"]
    assert any(c["status"] == "pass" for c in cands)


def test_check_macro_from_report(laminate, tmp_path, capsys):
    rep = tmp_path / "rep.json"
    assert main(["homogenize", laminate, "--out", str(rep)]) == 0
    H = tmp_path / "H.json"
    H.write_text(json.dumps(rotation_about_axis(unit(2), math.pi / 2).matrix.tolist()))
    assert main(["check-macro", str(rep), "--H", str(H)]) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is True
    H.write_text(json.dumps({"H": rotation_about_axis(unit(0), math.pi / 2).matrix.tolist()}))
    assert main(["check-macro", str(rep), "--H", str(H)]) == 2


def test_classify(laminate, tmp_path, capsys):
    assert main(["classify", laminate]) == 0
    assert json.loads(capsys.readouterr().out)["class"] == "transversely_isotropic"


def test_transport(laminate, capsys):
    assert main(["transport", laminate, "--cg-tol", "1e-12"]) == 0
    M = np.array(json.loads(capsys.readouterr().out)["M0"])
    np.testing.assert_allclose(np.diag(M), [2.0, 2.0, 1.5], atol=1e-8)


def test_bad_magic_reported(laminate, capsys):
    vox = laminate[:-len(".json")] + ".vox"
    data = open(vox, "rb").read()
    open(vox, "wb").write(b"XXXXXXXX" + data[8:])
    assert main(["homogenize", laminate]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error[") and "not a CELLVOX1 file" in err


def test_missing_file(capsys):
    assert main(["homogenize", "/nonexistent/cell.json"]) == 1
    assert "error[" in capsys.readouterr().err


def test_non_convergence_exit(tmp_path, capsys):
    prefix = str(tmp_path / "fib")
    main(["build-example", "tetragonal_four_fibers", "--n", "8", "--out", prefix])
    capsys.readouterr()
    assert main(["homogenize", prefix + ".json", "--max-iter", "1"]) == 1
    assert "error[no-convergence]" in capsys.readouterr().err
