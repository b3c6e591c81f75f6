import json
import math

import numpy as np
import pytest

from r2d import cli, documents, fixtures
from r2d.documents import DocumentError, RunConfig, SystemDocument
from r2d.model import (
    BoundaryConditions,
    ModeMatrices,
    SwitchedRoesserSystem,
    UncertaintyRealization,
    eval_uncertainty,
)


def sec4_doc():
    return SystemDocument(fixtures.sec4_system(), fixtures.sec4_boundary(), fixtures.sec4_uncertainty())


def random_doc(rng):
    n1, n2 = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    q, r, p = (int(rng.integers(1, 3)) for _ in range(3))
    n = n1 + n2
    d_h, d_v = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    modes = tuple(
        ModeMatrices(
            rng.standard_normal((n, n)), rng.standard_normal((n, n)), rng.standard_normal((n, q)),
            rng.standard_normal((n, r)), rng.standard_normal((p, n)), rng.standard_normal((p, n)),
            rng.standard_normal((p, q)),
        )
        for _ in range(int(rng.integers(1, 4)))
    )
    sys = SwitchedRoesserSystem(n1, n2, d_h, d_v, modes)
    z1, z2 = int(rng.integers(0, 4)), int(rng.integers(0, 4))
    h = {(i, j): rng.standard_normal(n1) for i in range(-d_h, 1) for j in range(z1 + 1) if rng.random() < 0.5}
    v = {(i, j): rng.standard_normal(n2) for i in range(z2 + 1) for j in range(-d_v, 1) if rng.random() < 0.5}
    kinds = []
    for _ in modes:
        pick = int(rng.integers(0, 4))
        if pick == 0:
            kinds.append(UncertaintyRealization("zero", (r, p)))
        elif pick == 1:
            kinds.append(UncertaintyRealization("scalar-sinusoid", (r, p), rng.uniform(0, 1), rng.uniform(0, 3), rng.uniform(0, 3)))
        elif pick == 2:
            g = rng.standard_normal((r, p))
            kinds.append(UncertaintyRealization("constant", (r, p), matrix=g / (np.linalg.norm(g, 2) + 0.1)))
        else:
            g = rng.standard_normal((r, p))
            kinds.append(UncertaintyRealization("custom-table", (r, p), table={(1, 2): g / (np.linalg.norm(g, 2) + 1)}))
    return SystemDocument(sys, BoundaryConditions(z1, z2, h, v), tuple(kinds))


def assert_same_doc(a, b):
    assert (a.system.n1, a.system.n2, a.system.d_h, a.system.d_v) == (b.system.n1, b.system.n2, b.system.d_h, b.system.d_v)
    for ma, mb in zip(a.system.modes, b.system.modes, strict=True):
        for name in documents.MATRIX_FIELDS:
            assert np.array_equal(getattr(ma, name), getattr(mb, name))
    assert (a.boundary.z1, a.boundary.z2) == (b.boundary.z1, b.boundary.z2)
    for key in ("h_values", "v_values"):
        da, db = getattr(a.boundary, key), getattr(b.boundary, key)
        assert set(da) == set(db)
        for k in da:
            assert np.array_equal(da[k], db[k])
    for ua, ub in zip(a.uncertainty, b.uncertainty, strict=True):
        assert ua.kind == ub.kind
        for i, j in ((0, 0), (1, 2), (3, 5)):
            assert np.array_equal(eval_uncertainty(ua, i, j), eval_uncertainty(ub, i, j))


# documents


def test_sec4_roundtrip_bit_identical():
    text = documents.dump_system(sec4_doc())
    back = documents.system_from_dict(json.loads(text))
    assert_same_doc(sec4_doc(), back)
    assert documents.dump_system(back) == text


def test_random_documents_roundtrip():
    rng = np.random.default_rng(123)
    for _ in range(100):
        doc = random_doc(rng)
        text = documents.dump_system(doc)
        back = documents.system_from_dict(documents.parse_json(text))
        assert_same_doc(doc, back)
        assert documents.dump_system(back) == text


def test_parse_error_has_line_and_column():
    with pytest.raises(DocumentError) as err:
        documents.parse_json('{\n  "dims": {\n    "n1": 1,,\n}', "sys.json")
    assert err.value.where.startswith("sys.json:3:")


def test_field_errors_name_the_field():
    d = json.loads(documents.dump_system(sec4_doc()))
    del d["delays"]["d_v"]
    with pytest.raises(DocumentError) as err:
        documents.system_from_dict(d)
    assert err.value.where == "delays.d_v"
    d = json.loads(documents.dump_system(sec4_doc()))
    d["modes"][1]["B"] = [[1.0, 2.0, 3.0]] * 2
    with pytest.raises(DocumentError) as err:
        documents.system_from_dict(d)
    assert "mode 2" in str(err.value)
    d = json.loads(documents.dump_system(sec4_doc()))
    d["modes"][0]["A"] = "oops"
    with pytest.raises(DocumentError):
        documents.system_from_dict(d)


def test_run_config_checks():
    RunConfig().check()
    for bad in ({"alpha": 1.2}, {"beta": 0.9}, {"horizon": 0}, {"ratio": None}, {"lambda_star": 0.3}, {"tau_a": 0.0}):
        with pytest.raises(DocumentError):
            RunConfig(**bad).check()
    with pytest.raises(DocumentError):
        RunConfig.from_dict({"colour": 1})
    assert RunConfig.from_dict(RunConfig().to_dict()) == RunConfig()


def test_certificate_roundtrip():
    cert = fixtures.sec4_reference_certificate()
    text = documents.dumps(documents.certificate_to_dict(cert))
    back = documents.certificate_from_dict(json.loads(text))
    assert documents.dumps(documents.certificate_to_dict(back)) == text
    for a, b in zip(cert.matched, back.matched):
        assert np.array_equal(a.K, b.K)


def test_nonfinite_floats_serialize():
    assert json.loads(documents.dumps({"a": math.inf, "b": -math.inf, "c": math.nan})) == {"a": "inf", "b": "-inf", "c": None}


# command line


def run(argv, capsys=None):
    rc = cli.main([str(a) for a in argv])
    out = capsys.readouterr() if capsys else None
    return rc, out


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--example", "sec4", "--out", str(out)]) == cli.EXIT_OK
    return out


def test_example_writes_fixture(tmp_path, capsys):
    rc, _ = run(["example", "sec4", "--out", tmp_path], capsys)
    assert rc == 0
    doc = documents.load_system(tmp_path / "system.json")
    assert_same_doc(sec4_doc(), doc)
    assert np.array_equal(doc.system.modes[0].A, [[1.0, 1.5], [1.0, 0.5]])
    assert (doc.system.d_h, doc.system.d_v) == (2, 3)
    cfg = RunConfig.from_dict(json.loads((tmp_path / "run.json").read_text()))
    assert (cfg.alpha, cfg.beta, cfg.tau_a, cfg.lag, cfg.horizon) == (0.6, 1.2, 6.5, 2, 60)


def test_example_unknown_lists_fixtures(tmp_path, capsys):
    rc, out = run(["example", "nope", "--out", tmp_path], capsys)
    assert rc == cli.EXIT_INPUT
    assert "sec4" in out.err


def test_bad_flags_exit_input(capsys):
    assert run(["synth", "--example", "sec4", "--alpha", "1.2"], capsys)[0] == cli.EXIT_INPUT
    assert run(["synth", "--bogus"], capsys)[0] == cli.EXIT_INPUT
    assert run(["synth"], capsys)[0] == cli.EXIT_INPUT
    assert run(["synth", "--system", "/nonexistent/sys.json"], capsys)[0] == cli.EXIT_INPUT


def test_synth_writes_certificate(synth_dir):
    cert = documents.load_certificate(synth_dir / "certificate.json")
    assert len(cert.gains) == 2
    assert cert.tau_a_star > 0
    assert "tau_a*" in (synth_dir / "report.txt").read_text()


def test_synth_deterministic(synth_dir, tmp_path):
    assert cli.main(["synth", "--example", "sec4", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "certificate.json").read_bytes() == (synth_dir / "certificate.json").read_bytes()


def test_synth_from_system_file(tmp_path, synth_dir):
    assert cli.main(["example", "sec4", "--out", str(tmp_path)]) == 0
    argv = ["synth", "--system", tmp_path / "system.json", "--run", tmp_path / "run.json", "--out", tmp_path / "o"]
    assert run(argv)[0] == 0
    assert (tmp_path / "o" / "certificate.json").read_bytes() == (synth_dir / "certificate.json").read_bytes()


def test_synth_infeasible_names_mode(tmp_path, capsys):
    z = np.zeros((2, 2))
    mode = ModeMatrices(0.9 * np.eye(2), z, z[:, :1], z[:, :1], z[:1], z[:1], z[:1, :1])
    doc = SystemDocument(SwitchedRoesserSystem(1, 1, 1, 1, (mode,)), BoundaryConditions(0, 0),
                         (UncertaintyRealization("zero", (1, 1)),))
    (tmp_path / "sys.json").write_text(documents.dump_system(doc))
    rc, out = run(["synth", "--system", tmp_path / "sys.json", "--out", tmp_path], capsys)
    assert rc == cli.EXIT_INFEASIBLE
    assert "mode 1" in out.err


def test_check_reference(capsys):
    rc, out = run(["check", "--example", "sec4", "--reference"], capsys)
    assert rc == 0
    assert out.out.count(" ok") == 4


def test_check_synthesized(synth_dir, capsys):
    rc, out = run(["check", "--example", "sec4", "--certificate", synth_dir / "certificate.json"], capsys)
    assert rc == 0 and "FAIL" not in out.out


def test_check_negative_eps_reports_pd_violation(tmp_path, capsys):
    (tmp_path / "a.json").write_text(json.dumps({"matched": [{"eps": -1.0}, {}]}))
    rc, out = run(["check", "--example", "sec4", "--reference", "--assignment", tmp_path / "a.json"], capsys)
    assert rc == cli.EXIT_INFEASIBLE
    assert "eps" in out.out and "not positive definite" in out.out


def test_simulate_closed_loop(synth_dir, tmp_path, capsys):
    rc, _ = run(["simulate", "--example", "sec4", "--certificate", synth_dir / "certificate.json", "--out", tmp_path], capsys)
    assert rc == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["c"] > 0 and not summary["diverged"]
    assert summary["final_energy"] <= 1e-4 * summary["c_norm"]
    assert summary["bound"]["status"] in ("pass", "not-applicable")
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "i,j,D,x_h1,x_v1,mode_sys,mode_ctrl,V"
    assert len(lines) == 1 + sum(D + 1 for D in range(61))
    rows = [r.split(",") for r in lines[1:]]
    by_diag = {int(r[2]): (int(r[5]), int(r[6])) for r in rows}
    for m_k in summary["switch_instants"]:
        if m_k + 2 <= 60:
            assert by_diag[m_k + 2][1] == by_diag[m_k][0]
    assert all(r[7] != "" for r in rows)
    diag = (tmp_path / "diagonals.csv").read_text().splitlines()
    assert diag[0] == "D,energy,V_sum,T_plus_cum,T_minus_cum" and len(diag) == 62
    assert (tmp_path / "plot.gp").exists()
    assert b"\r" not in (tmp_path / "trajectory.csv").read_bytes()


def test_simulate_deterministic(synth_dir, tmp_path):
    argv = ["simulate", "--example", "sec4", "--certificate", str(synth_dir / "certificate.json")]
    assert cli.main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(argv + ["--out", str(tmp_path / "b")]) == 0
    for name in ("trajectory.csv", "diagonals.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_open_loop_diverges(tmp_path, capsys):
    rc, out = run(["simulate", "--example", "sec4", "--out", tmp_path], capsys)
    assert rc == cli.EXIT_DIVERGED
    assert json.loads((tmp_path / "summary.json").read_text())["diverged"]
    assert "diverged" in out.err


def test_simulate_zero_boundary(tmp_path, capsys):
    doc = SystemDocument(fixtures.sec4_system(), BoundaryConditions(20, 20), fixtures.sec4_uncertainty())
    (tmp_path / "sys.json").write_text(documents.dump_system(doc))
    rc, _ = run(["simulate", "--system", tmp_path / "sys.json", "--horizon", 10, "--out", tmp_path], capsys)
    assert rc == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["c"] == "inf"
    rows = [r.split(",") for r in (tmp_path / "trajectory.csv").read_text().splitlines()[1:]]
    assert all(float(r[3]) == 0.0 and float(r[4]) == 0.0 and r[7] == "" for r in rows)


def test_simulate_explicit_plan(synth_dir, tmp_path, capsys):
    argv = ["simulate", "--example", "sec4", "--certificate", synth_dir / "certificate.json",
            "--instants", "10,25", "--modes", "2,1,2", "--lag", "0", "--out", tmp_path]
    assert run(argv, capsys)[0] == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["switch_instants"] == [10, 25] and summary["modes"] == [2, 1, 2]
    bad = argv[:-2] + ["--lag", "1,2,3", "--out", tmp_path]
    assert run(bad, capsys)[0] == cli.EXIT_INPUT
