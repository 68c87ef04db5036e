import numpy as np
import pytest

from ajd import io
from ajd.cli import main
from ajd.model import ModelSpec
from ajd.riccati import solve_transform
from ajd.simulate import simulate_paths, simulate_skeleton


@pytest.fixture
def spec_file(tmp_path, cir_jump):
    p = tmp_path / "spec.json"
    io.dump_spec(cir_jump, p)
    return p


def test_spec_roundtrip(tmp_path, two_d):
    p = tmp_path / "s.json"
    io.dump_spec(two_d, p)
    back = io.load_spec(p)
    assert io.spec_to_json(back) == io.spec_to_json(two_d)


def test_load_spec_errors(tmp_path):
    with pytest.raises(io.SchemaError):
        io.load_spec(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{\"d\": 1}")
    with pytest.raises(io.SchemaError):
        io.load_spec(bad)


def test_paths_csv_roundtrip(cir_jump):
    paths = simulate_paths(cir_jump, [1.0], 5.0, 2, dt=1e-2, seed=3, record_stride=10)
    text = io.paths_to_csv(paths)
    assert text.startswith("# ajd-paths schema_version=1")
    back = io.paths_from_csv(text)
    for p, q in zip(paths, back):
        np.testing.assert_array_equal(p.times, q.times)
        np.testing.assert_array_equal(p.states, q.states)
        np.testing.assert_array_equal(p.is_jump, q.is_jump)
        np.testing.assert_array_equal(p.pre_jump_states, q.pre_jump_states)


def test_skeleton_csv_roundtrip(cir_jump):
    sk = simulate_skeleton(cir_jump, [1.0], 0.5, 10, seed=2)
    back = io.skeleton_from_csv(io.skeleton_to_csv(sk))
    np.testing.assert_array_equal(back.states, sk.states)
    assert back.delta == sk.delta and back.seed == sk.seed


def test_transform_csv_roundtrip(two_d):
    sol = solve_transform(two_d, [0.5j, -1j], 1.0)
    meta, t, phi, psi = io.transform_from_csv(io.transform_to_csv(sol))
    np.testing.assert_array_equal(t, sol.grid)
    np.testing.assert_array_equal(phi, sol.phi)
    np.testing.assert_array_equal(psi, sol.psi)


def test_schema_violation():
    with pytest.raises(io.SchemaError):
        io.skeleton_from_csv("k,t,x_1\n0,0,1\n")
    with pytest.raises(io.SchemaError):
        io.parse_report("{\"kind\": \"check\"}")


def test_check_exit_codes(tmp_path, spec_file, capsys):
    assert main(["check", str(spec_file)]) == 0
    rep = io.parse_report(capsys.readouterr().out, "check")
    assert rep["stability"]["classification"] == "EXP_ERGODIC"
    bad = tmp_path / "feller.json"
    io.dump_spec(ModelSpec.cir(1.0, -1.0, 3.0), bad)
    assert main(["check", str(bad)]) == 2
    assert main(["check", str(tmp_path / "nope.json")]) == 2


def test_simulate_byte_identical(tmp_path, spec_file):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", str(spec_file), "--x0", "1", "--T", "2", "--paths", "3", "--stride", "10"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(io.paths_from_csv(a.read_text())) == 3


def test_transform_and_calibrate(tmp_path, spec_file):
    out = tmp_path / "tr.csv"
    assert main(["transform", str(spec_file), "--u", "1j", "--T", "1", "--out", str(out)]) == 0
    io.transform_from_csv(out.read_text())
    assert main(["transform", str(spec_file), "--u", "0.3", "--T", "1"]) == 2
    sk = tmp_path / "sk.csv"
    assert main(["simulate", str(spec_file), "--x0", "1", "--T", "50", "--delta", "0.5",
                 "--out", str(sk)]) == 0
    rep = tmp_path / "fit.json"
    assert main(["calibrate", str(sk), str(spec_file), "--free", "beta", "--restarts", "0",
                 "--out", str(rep)]) == 0
    obj = io.parse_report(rep.read_text(), "calibrate")
    assert "beta" in obj["params"]


def test_stationary_and_fclt(tmp_path, spec_file):
    out = tmp_path / "st.json"
    assert main(["stationary", str(spec_file), "--T", "200", "--dt", "0.01", "--out", str(out)]) == 0
    obj = io.parse_report(out.read_text(), "stationary")
    assert obj["corollary_mean"] == [pytest.approx(1.0)]
    out = tmp_path / "fc.json"
    assert main(["fclt", str(spec_file), "--replicates", "20", "--horizon", "40",
                 "--out", str(out)]) == 0
    assert 0 <= io.parse_report(out.read_text(), "fclt")["quantile_correlation"] <= 1


def test_transience_command(tmp_path, transient):
    spec = tmp_path / "tr.json"
    io.dump_spec(transient, spec)
    out = tmp_path / "t.json"
    assert main(["transience", str(spec), "--paths", "50", "--dt", "0.01", "--out", str(out)]) == 0
    obj = io.parse_report(out.read_text(), "transience")
    assert obj["h_positive_found"] and obj["h_epsilon"] > 0
    assert len(obj["escape_fraction"]) == len(obj["times"])
    assert main(["fclt", str(spec)]) == 2


def test_numeric_failure_exit_code(spec_file, monkeypatch):
    from ajd import cli
    from ajd.errors import TransformDomainError

    def boom(*args, **kwargs):
        raise TransformDomainError("diverged", time=0.5)

    monkeypatch.setattr(cli, "solve_transform", boom)
    assert main(["transform", str(spec_file), "--u", "1j", "--T", "1"]) == 3
