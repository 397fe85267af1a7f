import json

import numpy as np
import pytest

from bethesov import cli


def _run(tmp_path, name, **kw):
    cfg = cli.config_from_mapping(kw)
    code, records, summary, meta = cli.run(cfg)
    cli.write_outputs(str(tmp_path / name), records, summary, meta)
    return code, records, summary, meta


def test_single_site_example(tmp_path):
    code, records, summary, _ = _run(tmp_path, "a", experiment="bethe", two_lambda="1", z="0",
                                     kappa="2", ell="1")
    assert code == 0
    assert len(records) == 1 and abs(complex(*records[0]["t"][0]) - 1.5) < 1e-12
    assert summary[0]["found_orbits"] == summary[0]["expected_dim"] == 1


def test_sweep_two_spin_halves(tmp_path):
    code, _, summary, _ = _run(tmp_path, "b", experiment="sweep", two_lambda="1,1", seed=5)
    assert code == 0
    assert [r["found_orbits"] for r in summary] == [1, 2, 1]


def test_outputs_written(tmp_path):
    _run(tmp_path, "c", experiment="ortho", two_lambda="1,1", seed=1)
    lines = (tmp_path / "c.jsonl").read_text().splitlines()
    rec = json.loads(lines[0])
    assert set(rec) == set(cli.RECORD_FIELDS)
    header = (tmp_path / "c.summary.csv").read_text().splitlines()[0]
    assert header.split(",") == list(cli.SUMMARY_FIELDS)
    meta = json.loads((tmp_path / "c.meta.json").read_text())
    assert meta["spec"]["variant"] == "additive" and "timings" in meta


def test_summary_counts_equal_admissible_orbit_ids(tmp_path):
    _, records, summary, _ = _run(tmp_path, "d", experiment="sweep", two_lambda="1,2", seed=2,
                                  include_out_of_range="true")
    for row in summary:
        ids = {r["orbit_id"] for r in records if r["ell"] == row["ell"] and r["admissible"] and r["orbit_id"]}
        assert len(ids) == row["found_orbits"]
    keys = [(r["ell"], r["seed_nu"]) for r in records]
    assert keys == sorted(keys)


def test_malformed_config_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("experiment = nonsense\n")
    assert cli.main(["--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    bad.write_text("this is not key value\n")
    assert cli.main(["--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    bad.write_text("colour = blue\n")
    assert cli.main(["--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    assert cli.main(["--ell", "9", "--weights", "1", "--out", str(tmp_path / "x")]) == 1


def test_config_file_and_flag_override(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("experiment = bethe\ntwo_lambda = 1\nz = 0\nkappa = 3\nell = 1\n")
    out = tmp_path / "o"
    assert cli.main(["--config", str(f), "--kappa", "2", "--out", str(out)]) == 0
    rec = json.loads((tmp_path / "o.jsonl").read_text().splitlines()[0])
    assert abs(complex(*rec["t"][0]) - 1.5) < 1e-12


def test_json_config(tmp_path):
    f = tmp_path / "run.json"
    f.write_text(json.dumps({"experiment": "bethe", "two_lambda": [1], "z": [[0, 0]], "kappa": 2, "ell": [1]}))
    assert cli.main(["--config", str(f), "--out", str(tmp_path / "j")]) == 0


def test_generate_spec_well_separated():
    cfg = cli.config_from_mapping({"two_lambda": "1,2", "seed": 11})
    spec, draws = cli.generate_spec(cfg)
    assert spec.min_separation() >= 10 * spec.tol.margin_tol * spec.scale
    assert 0.3 <= abs(spec.kappa) <= 3 and abs(spec.kappa - 1) >= 0.05
    assert "z" in draws and "kappa" in draws


def test_generate_spec_policy_one():
    spec, _ = cli.generate_spec(cli.config_from_mapping({"two_lambda": "1,1", "kappa": "one"}))
    assert spec.kappa == 1


@pytest.mark.parametrize("seed", range(5))
def test_generate_spec_multiplicative_q(seed):
    cfg = cli.config_from_mapping({"variant": "multiplicative", "two_lambda": "1,2", "seed": seed})
    spec, draws = cli.generate_spec(cfg)
    assert 1.1 <= spec.q.real <= 1.5 and spec.q.imag == 0
    assert draws["kappa_per_ell"]
    for ell in range(spec.ell_max + 1):
        k = cli.kappa_for(spec, ell, True)
        assert cli._mult_exceptional(spec, k, ell) >= 0.05


def test_compare_reports(tmp_path):
    kw = dict(experiment="bethe", two_lambda="1,2", z="0.3+0.2j,3.1-0.4j", kappa="0.7+1.1j")
    _, a, _, _ = _run(tmp_path, "r1", **kw)
    _, b, _, _ = _run(tmp_path, "r2", workers=2, **kw)
    assert cli.compare_reports(a, b)["empty"]
    assert cli.compare_reports(str(tmp_path / "r1.jsonl"), str(tmp_path / "r2.jsonl"))["empty"]
    kw["z"] = "0.3001+0.2j,3.1-0.4j"
    _, c, _, _ = _run(tmp_path, "r3", **kw)
    diff = cli.compare_reports(a, c)
    assert not diff["empty"] and diff["unmatched_a"]


def test_path_failure_exit_code(monkeypatch, tmp_path):
    from bethesov.bethe_solve import PathStatus

    real = cli._track_task

    def broken(args):
        sol = real(args)
        sol.path_status = PathStatus.MAX_STEPS
        return sol

    monkeypatch.setattr(cli, "_track_task", broken)
    code, *_ = _run(tmp_path, "f", experiment="bethe", two_lambda="1,1", seed=0)
    assert code == 3


def test_symmetric_point_expects_singular_dims():
    cfg = cli.config_from_mapping({"experiment": "basis", "two_lambda": "1,1", "kappa": "one", "seed": 0})
    code, _, summary, _ = cli.run(cfg)
    assert code == 0
    assert [r["expected_dim"] for r in summary] == [1, 1, 0]


def test_verification_failure_exit_code(monkeypatch, tmp_path):
    monkeypatch.setattr(cli, "eigen_residual", lambda *a, **k: 1.0)
    code, _, _, meta = _run(tmp_path, "v", experiment="bethe", two_lambda="1,1", seed=0)
    assert code == 2
    assert any("eigenvector residual" in f for f in meta["failures"])
