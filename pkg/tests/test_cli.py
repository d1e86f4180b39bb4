import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from coadaptive import __version__, cli
from coadaptive.data import GroupStructure, standardize
from coadaptive.exceptions import NonConvergenceError
from coadaptive.re_diagnostics import check_lemma_chain
from coadaptive.simulation import generate_instance, benchmark_scenario


def _write(tmp_path, x, y, groups=None, beta=None):
    np.savetxt(tmp_path / "x.csv", x, delimiter=",")
    np.savetxt(tmp_path / "y.csv", y, delimiter=",")
    if groups is not None:
        (tmp_path / "g.json").write_text(json.dumps({"groups": groups}))
    if beta is not None:
        np.savetxt(tmp_path / "b.csv", beta, delimiter=",")
    return str(tmp_path / "x.csv"), str(tmp_path / "y.csv"), str(tmp_path / "g.json")


@pytest.fixture
def toy(tmp_path, rng):
    x = rng.standard_normal((50, 6))
    beta = np.array([1.5, -1.0, 0, 0, 0, 0])
    y = x @ beta + 0.3 * rng.standard_normal(50)
    return _write(tmp_path, x, y, [[1, 2], [3, 4], [5, 6]], beta), tmp_path


def _run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_lambda_zero_is_ols(toy, capsys):
    (x, y, _), _ = toy
    code, out, _ = _run(["fit", "--x", x, "--y", y, "--method", "lasso", "--lambda", "0"], capsys)
    assert code == 0
    doc = json.loads(out)
    xm, ym = np.loadtxt(x, delimiter=","), np.loadtxt(y, delimiter=",")
    design = np.column_stack([np.ones(50), xm])
    ols = np.linalg.lstsq(design, ym, rcond=None)[0]
    np.testing.assert_allclose(doc["coef"], ols[1:], atol=1e-8)
    assert doc["intercept"] == pytest.approx(ols[0], abs=1e-8)


def test_coadaptive_fit_on_scenario_one(tmp_path, capsys):
    inst = generate_instance(benchmark_scenario("1"), 0)
    groups = [(g + 1).tolist() for g in inst.groups]
    x, y, g = _write(tmp_path, inst.x, inst.y, groups)
    out = tmp_path / "fit.json"
    code, _, _ = _run(
        ["fit", "--x", x, "--y", y, "--groups", g, "--method", "coadaptive",
         "--scheme", "coadaptive_nonoverlap", "--output", str(out)],
        capsys,
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert set(doc["active_set"]) <= set(doc["weights"]["finite_set"])
    assert doc["scheme"] == "coadaptive_nonoverlap"
    assert all(isinstance(v, float) for v in doc["coef"])


def test_missing_group_file_exit_2(toy, capsys):
    (x, y, _), tmp = toy
    missing = str(tmp / "nope.json")
    code, _, err = _run(["fit", "--x", x, "--y", y, "--groups", missing, "--method", "grouplasso"], capsys)
    assert code == 2
    doc = json.loads(err)
    assert doc["error"]["path"] == missing


def test_malformed_inputs_exit_2(toy, capsys):
    (x, y, _), tmp = toy
    bad = tmp / "bad.csv"
    bad.write_text("a,b\n1,oops\n")
    code, _, err = _run(["fit", "--x", str(bad), "--y", y], capsys)
    assert code == 2 and "bad.csv" in json.loads(err)["error"]["path"]
    (tmp / "g0.json").write_text(json.dumps({"groups": [[0, 1]]}))
    code, _, _ = _run(["fit", "--x", x, "--y", y, "--groups", str(tmp / "g0.json"), "--method", "grouplasso"], capsys)
    assert code == 2
    short = tmp / "short.csv"
    np.savetxt(short, np.ones(10), delimiter=",")
    code, _, _ = _run(["fit", "--x", x, "--y", str(short)], capsys)
    assert code == 2


def test_nonconvergence_exit_3(toy, capsys, monkeypatch):
    (x, y, _), _ = toy

    def boom(*args, **kwargs):
        raise NonConvergenceError("synthetic")

    monkeypatch.setattr(cli, "cross_validate", boom)
    code, _, err = _run(["cv", "--x", x, "--y", y], capsys)
    assert code == 3
    assert json.loads(err)["error"]["type"] == "non_convergence"


def test_cv_grouplasso_grid_length(toy, capsys):
    (x, y, g), _ = toy
    code, out, _ = _run(
        ["cv", "--x", x, "--y", y, "--groups", g, "--method", "grouplasso", "--grid-size", "17", "--cv-folds", "5"],
        capsys,
    )
    assert code == 0
    doc = json.loads(out)
    assert len(doc["cv"]["cv_curve"]) == len(doc["cv"]["grid"]) == 17
    assert doc["active_groups"][:1] == [1]


def test_cv_two_stage_curves(toy, capsys):
    (x, y, g), _ = toy
    code, out, _ = _run(["cv", "--x", x, "--y", y, "--groups", g, "--method", "coadaptive", "--grid-size", "12"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert len(doc["stage1_cv"]["cv_curve"]) == 12
    assert doc["mu"] == doc["stage2_cv"]["best_lambda"]


def test_diagnose_chain_values(tmp_path, rng, capsys):
    x = rng.standard_normal((30, 6))
    groups = [[1, 2], [3, 4], [5, 6]]
    xp, _, gp = _write(tmp_path, x, np.zeros(30), groups)
    code, out, _ = _run(["diagnose", "--x", xp, "--groups", gp, "--support", "1,3", "--l", "3"], capsys)
    assert code == 0
    doc = json.loads(out)
    ref = check_lemma_chain(
        standardize(x, np.zeros(30)), GroupStructure([[0, 1], [2, 3], [4, 5]], 6), [0, 2], 3.0
    )
    np.testing.assert_allclose(doc["lemma_chain"]["values"], ref.values, rtol=1e-12)
    assert doc["lemma_chain"]["names"][0] == "cover_times_phi2"
    assert doc["support"] == [1, 3]


def test_diagnose_bad_support(tmp_path, rng, capsys):
    xp, _, gp = _write(tmp_path, rng.standard_normal((10, 4)), np.zeros(10), [[1, 2], [3, 4]])
    code, _, _ = _run(["diagnose", "--x", xp, "--groups", gp, "--support", "0"], capsys)
    assert code == 2


def test_simulate_json_and_table(tmp_path, capsys):
    out = tmp_path / "sim.json"
    code, _, _ = _run(
        ["simulate", "--scenario", "1", "--reps", "1", "--cv-folds", "3", "--grid-size", "8",
         "--methods", "lasso,grouplasso", "--output", str(out)],
        capsys,
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["scenario"]["name"] == "1-const" and len(doc["records"]) == 1
    table = (tmp_path / "sim.csv").read_text().splitlines()
    assert table[0].startswith("method,scenario,median")
    assert [row.split(",")[0] for row in table[1:]] == ["Lasso", "Group Lasso", "SGL"]
    assert "absent" in table[-1]


def test_outputs_byte_identical_and_inputs_untouched(toy, capsys):
    (x, y, g), tmp = toy
    before = {p: hashlib.sha256(open(p, "rb").read()).hexdigest() for p in (x, y, g)}
    runs = []
    for i in range(2):
        out = tmp / f"r{i}.json"
        assert cli.main(["cv", "--x", x, "--y", y, "--groups", g, "--method", "coadaptive",
                         "--seed", "4", "--output", str(out)]) == 0
        runs.append(out.read_bytes())
    assert runs[0] == runs[1]
    after = {p: hashlib.sha256(open(p, "rb").read()).hexdigest() for p in (x, y, g)}
    assert before == after


def test_console_entry_point(toy):
    (x, y, _), _ = toy
    proc = subprocess.run(
        [sys.executable, "-m", "coadaptive", "fit", "--x", x, "--y", y, "--lambda", "0.1"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["lambda"] == 0.1
