import json
from pathlib import Path

import pytest

from conekit import cli
from conekit.cli import preset_path
from conekit.reporting import reports_equal

from conftest import load_preset


def _small_identities_config(tmp_path, **overrides):
    cfg = load_preset("identities")
    cfg.update(
        {"n_roundtrip": 5, "n_star": 3, "n_minlos": 2, "n_lp_exp": 2,
         "n_max": 6},
    )
    cfg["grid"] = dict(cfg["grid"], space_nodes=3)
    cfg.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_all_presets_ship_with_the_package():
    for name in [
        "identities", "contact_subcritical", "contact_supercritical",
        "bdlp_conditions", "bdlp_conditions_fail", "bdlp_run",
        "glauber_sample", "glauber_gnz_free", "glauber_gnz_repulsive",
        "glauber_bounds",
    ]:
        assert preset_path(name).exists()


def test_identities_passes_and_writes_artifacts(tmp_path):
    cfg = _small_identities_config(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["identities", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "report.json").exists()
    assert (out / "residuals.csv").exists()
    assert (out / "identity_residuals.png").exists()
    doc = json.loads((out / "report.json").read_text())
    assert all(v["passed"] for v in doc["verdicts"])


def test_failed_assertions_exit_one(tmp_path):
    out = tmp_path / "out"
    rc = cli.main([
        "bdlp-conditions", "--config", "bdlp_conditions_fail",
        "--out", str(out),
    ])
    assert rc == 1
    doc = json.loads((out / "report.json").read_text())
    failing = [v for v in doc["verdicts"] if not v["passed"]]
    assert failing
    assert any(v["observed"] < 0 for v in failing
               if v["name"].startswith("condition_"))


def test_config_errors_exit_two(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"grid": {}, "bogus_key": 1}))
    out = tmp_path / "out"
    assert cli.main(["identities", "--config", str(bad), "--out", str(out)]) == 2
    missing = tmp_path / "missing.json"
    assert cli.main(
        ["identities", "--config", str(missing), "--out", str(out)]
    ) == 2


def test_numerical_abort_exits_three(tmp_path):
    cfg = load_preset("bdlp_run")
    cfg.update({"initial_scale": 1e308, "t_final": 5.0, "steps": 2})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert cli.main(["bdlp-run", "--config", str(path), "--out", str(out)]) == 3


def test_seed_override_changes_report(tmp_path):
    cfg = _small_identities_config(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    cli.main(["identities", "--config", str(cfg), "--out", str(out1),
              "--seed", "1"])
    cli.main(["identities", "--config", str(cfg), "--out", str(out2),
              "--seed", "2"])
    a = json.loads((out1 / "report.json").read_text())
    b = json.loads((out2 / "report.json").read_text())
    assert a["metadata"]["seed"] == 1
    assert b["metadata"]["seed"] == 2


def test_same_seed_reports_are_byte_identical_modulo_timestamp(tmp_path):
    cfg = _small_identities_config(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["identities", "--config", str(cfg), "--out", str(out1)]) == 0
    assert cli.main(["identities", "--config", str(cfg), "--out", str(out2)]) == 0
    assert reports_equal(out1 / "report.json", out2 / "report.json")
    assert (out1 / "residuals.csv").read_bytes() == (
        out2 / "residuals.csv"
    ).read_bytes()


def test_thread_flag_does_not_change_results(tmp_path):
    cfg = load_preset("bdlp_run")
    cfg.update({"t_final": 0.2, "steps": 8, "n_times": 3})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["bdlp-run", "--config", str(path), "--out", str(out1),
                     "--threads", "1"]) == 0
    assert cli.main(["bdlp-run", "--config", str(path), "--out", str(out2),
                     "--threads", "2"]) == 0
    assert reports_equal(out1 / "report.json", out2 / "report.json")


def test_unknown_preset_name_exits_two(tmp_path):
    rc = cli.main(["identities", "--config", "no_such_preset",
                   "--out", str(tmp_path / "out")])
    assert rc == 2
