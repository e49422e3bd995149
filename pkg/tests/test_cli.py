import json

import numpy as np
import pytest

from paracalc import cli, harmonic as H
from paracalc.cli import canonical_json, run
from paracalc.droplet import DropletState
from paracalc.sphere import SphereFunction


def stderr_record(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


def test_canonical_json_format():
    s = canonical_json({"b": 1, "a": [0.1, True, None], "c": np.float64(1 / 3)})
    assert s == '{"b":1,"a":[0.10000000000000001,true,null],"c":0.33333333333333331}\n'
    assert json.loads(s)["c"] == 1 / 3


def test_unknown_flag_is_usage_error(capsys):
    assert run(["verify", "--suite", "fourier", "--bogus"]) == 1
    rec = stderr_record(capsys)
    assert rec["kind"] == "usage" and rec["exit"] == 1


def test_malformed_json_is_validation_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["transform", "--in", str(bad), "--out", str(tmp_path / "o.json")]) == 1
    assert stderr_record(capsys)["kind"] == "validation"
    assert run(["dn", "--state", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o.json")]) == 1


def test_transform_roundtrip(tmp_path, rng):
    c = H.SpectralCoeffs.random(2, rng)
    (tmp_path / "c.json").write_text(canonical_json(c.to_json()))
    assert run(["transform", "--in", str(tmp_path / "c.json"), "--out", str(tmp_path / "f.json"), "--inverse"]) == 0
    assert run(["transform", "--in", str(tmp_path / "f.json"), "--out", str(tmp_path / "c2.json")]) == 0
    back = H.SpectralCoeffs.from_json(json.load(open(tmp_path / "c2.json")))
    assert (back - c).max_abs() < 1e-13
    # a second cycle reproduces the first one exactly
    assert run(["transform", "--in", str(tmp_path / "c2.json"), "--out", str(tmp_path / "f2.json"), "--inverse"]) == 0
    assert run(["transform", "--in", str(tmp_path / "f2.json"), "--out", str(tmp_path / "c3.json")]) == 0
    a, b = json.load(open(tmp_path / "c2.json")), json.load(open(tmp_path / "c3.json"))
    for la, lb in zip(a["levels"], b["levels"]):
        assert np.abs(np.subtract(la["re"], lb["re"])).max() < 1e-14


def test_verify_fourier_report(tmp_path, capsys):
    rep = tmp_path / "r.json"
    assert run(["verify", "--suite", "fourier", "--L", "4", "--seed", "1", "--report", str(rep)]) == 0
    obj = json.load(open(rep))
    checks = {c["name"]: c for c in obj["checks"]}
    assert obj["passed"] and checks["plancherel"]["value"] < 1e-10
    assert "PASS fourier.plancherel" in capsys.readouterr().out
    # deterministic given the seed
    rep2 = tmp_path / "r2.json"
    run(["verify", "--suite", "fourier", "--L", "4", "--seed", "1", "--report", str(rep2)])
    assert rep.read_bytes() == rep2.read_bytes()


def test_verify_failure_exits_2(monkeypatch, capsys):
    monkeypatch.setitem(cli.SUITES, "wigner", lambda L, seed: [cli._check("forced", 1.0, 1e-3)])
    assert run(["verify", "--suite", "wigner"]) == 2
    rec = stderr_record(capsys)
    assert rec["kind"] == "acceptance" and "forced" in rec["message"]


def test_verify_rejects_half_integer_for_dn(capsys):
    assert run(["verify", "--suite", "dn", "--L", "2.5"]) == 1


def test_dn_command(tmp_path):
    st = DropletState(SphereFunction.zeros(4), SphereFunction.real_harmonic(4, 2, 1))
    (tmp_path / "s.json").write_text(canonical_json(st.to_json()))
    out = tmp_path / "dn.json"
    assert run(["dn", "--state", str(tmp_path / "s.json"), "--out", str(out), "--Lsolve", "12"]) == 0
    dn = SphereFunction.from_json(json.load(open(out)))
    assert np.abs(dn.c - 2 * st.phi.c).max() < 1e-10
    diag = json.load(open(tmp_path / "dn.diag.json"))
    assert diag["method"] == "oracle" and diag["L_solve"] == 12


def test_simulate_command(tmp_path):
    st = DropletState(SphereFunction.real_harmonic(4, 2, 0, 0.01), SphereFunction.zeros(4))
    (tmp_path / "s.json").write_text(canonical_json(st.to_json()))
    (tmp_path / "c.json").write_text(canonical_json({"L": 4, "L_solve": 12, "dt": 0.01, "t_end": 0.02}))
    assert run(["simulate", "--state", str(tmp_path / "s.json"), "--config", str(tmp_path / "c.json"),
                "--out", str(tmp_path / "traj"), "--csv", str(tmp_path / "d.csv")]) == 0
    assert len(json.load(open(tmp_path / "traj" / "trajectory.json"))["states"]) == 3
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 4
    (tmp_path / "c.json").write_text('{"dt": 0.01, "nope": 1}')
    assert run(["simulate", "--state", str(tmp_path / "s.json"), "--config", str(tmp_path / "c.json"),
                "--out", str(tmp_path / "traj")]) == 1


def test_probe_command(tmp_path):
    out = tmp_path / "f.json"
    assert run(["probe", "--n", "2", "--L", "4", "--dt", "0.005", "--out", str(out)]) == 0
    obj = json.load(open(out))
    assert obj["target"] == pytest.approx(np.sqrt(8))
    assert obj["measured"] == pytest.approx(np.sqrt(8), rel=0.01)
    assert run(["probe", "--n", "3", "--L", "4", "--out", str(out)]) == 1
