"""SVG determinism and the command-line contract."""

import json
import os

import numpy as np
import pytest

from genbackward import cli, plots
from genbackward import verifier as vf


def test_svg_is_byte_stable_and_tagged():
    z = np.outer(np.linspace(-1, 1, 5), np.linspace(0, 1, 7))
    a = plots.heatmap(np.arange(5), np.arange(7), z, "gap", config_hash="abc123")
    b = plots.heatmap(np.arange(5), np.arange(7), z, "gap", config_hash="abc123")
    assert a == b
    assert "config_hash=abc123" in a and "<dc:date>" not in a


def test_loglog_and_cdf_surface_render():
    s = plots.render({"kind": "loglog", "h": [0.1, 0.05, 0.025], "err": [0.2, 0.1, 0.05]})
    assert "slope 1.00" in s or "slope" in s
    assert plots.render({"kind": "cdf_surface", "z": np.zeros((3, 3))}).startswith("<?xml")
    with pytest.raises(ValueError):
        plots.render({"kind": "pie"})


def run(tmp_path, *argv):
    return cli.main([*argv, "--output", str(tmp_path)])


def test_simulate_rejects_zero_paths(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--model", "drifted_bm", "--paths", "0") == 2
    assert "n_paths" in capsys.readouterr().err


def test_bad_model_parameter_is_reported(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--model", "bm", "--param", "volatility=2") == 2
    assert "model.params" in capsys.readouterr().err


def test_unknown_config_field(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_pathz": 3}))
    assert run(tmp_path, "simulate", "--config", str(cfg)) == 2
    assert "n_pathz: unknown field" in capsys.readouterr().err


def test_missing_artifact_names_file(tmp_path, capsys):
    assert run(tmp_path, "surface") == 2
    assert "ensemble.json" in capsys.readouterr().err


def test_simulate_surface_measure_pipeline(tmp_path):
    assert run(tmp_path, "simulate", "--model", "jump_diffusion", "--paths", "500", "--seed", "1",
               "--steps", "16") == 0
    assert run(tmp_path, "surface") == 0
    assert run(tmp_path, "measure") == 0
    ens_meta = json.loads((tmp_path / "ensemble.json").read_text())
    surf = json.loads((tmp_path / "surface.json").read_text())
    meas = json.loads((tmp_path / "measure.json").read_text())
    assert surf["config_hash"] == ens_meta["config_hash"]
    assert meas["ensemble_config_hash"] == ens_meta["config_hash"]
    assert [r["functional"] for r in meas["records"]] == ["mu_tilde", "mu_bilinear", "ito_drift"]


def test_closed_form_surface_only_for_bm(tmp_path, capsys):
    assert run(tmp_path, "surface", "--source", "closed_form", "--model", "drifted_bm") == 2
    assert run(tmp_path, "surface", "--source", "closed_form") == 0


def test_verify_is_byte_identical_and_report_aggregates(tmp_path):
    args = ["verify", "--suite", "occupation", "--model", "bm", "--paths", "2000", "--seed", "7"]
    assert run(tmp_path, *args) == 0
    first = (tmp_path / "reports" / "occupation.json").read_bytes()
    assert run(tmp_path, *args) == 0
    assert (tmp_path / "reports" / "occupation.json").read_bytes() == first
    assert run(tmp_path, "verify", "--suite", "backward") == 0
    assert (tmp_path / "reports" / "backward__refinement.svg").exists()
    assert run(tmp_path, "report", "--suite", "backward", "--suite", "occupation") == 0
    assert "PASS     occupation" in (tmp_path / "report.txt").read_text()
    # the full reference set is incomplete here
    assert run(tmp_path, "report") == 1
    assert "MISSING  symmetry" in (tmp_path / "report.txt").read_text()


def test_report_refuses_mismatched_hash(tmp_path, capsys):
    assert run(tmp_path, "verify", "--suite", "backward") == 0
    p = tmp_path / "reports" / "backward.json"
    d = json.loads(p.read_text())
    d["config"]["min_slope"] = 0.1
    p.write_text(json.dumps(d))
    assert run(tmp_path, "report", "--suite", "backward") == 2
    assert "does not match" in capsys.readouterr().err


def test_failing_check_sets_exit_status(tmp_path):
    assert run(tmp_path, "verify", "--suite", "backward", "--set", "min_slope=1.5", "--no-plots") == 1
    assert not (tmp_path / "reports" / "backward__refinement.svg").exists()


def test_flag_unusable_by_every_suite(tmp_path, capsys):
    assert run(tmp_path, "verify", "--suite", "backward", "--paths", "10") == 2
    assert "--paths" in capsys.readouterr().err


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main(["simulate", "--paths", "10", "--steps", "4"]) == 0
    assert (tmp_path / "env" / "ensemble.bin").exists()


def test_run_config_round_trip():
    cfg = cli.RunConfig.from_dict({"n_paths": 5, "suite_config": {"dirichlet": {"n_paths": 10}}})
    again = cli.RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.hash == cfg.hash
    with pytest.raises(cli.ConfigError) as exc:
        cli.RunConfig.from_dict({"suite_config": {"dirichlet": {"paths": 10}}})
    assert exc.value.problems[0][0] == "suite_config.dirichlet"
