import json
from pathlib import Path

import pytest

from trishadow import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(tmp_path, name, *extra):
    out = tmp_path / name
    code = cli.main(["--config", str(CONFIGS / name), "--out", str(out), *extra])
    cert = json.loads((out / "certificate.json").read_text()) if (out / "certificate.json").exists() else None
    return code, cert


def test_shadow_certificate(tmp_path):
    code, cert = run(tmp_path, "shadow_diag.json")
    assert code == 0 and cert["passes"]
    assert cert["epsilon"] == pytest.approx(cert["K"] * cert["delta"], rel=1e-15)
    assert cert["correction_norm"] <= cert["epsilon"]
    assert (tmp_path / "shadow_diag.json" / "shadow.csv").exists()


def test_verify_exit_codes(tmp_path):
    assert run(tmp_path, "verify_tent.json")[0] == 0
    code, cert = run(tmp_path, "verify_broken.json")
    assert code == 2
    assert "1:partition" in cert["verification"]["violated_axioms"]


def test_green_norm_tent(tmp_path):
    code, cert = run(tmp_path, "green_norm_tent.json")
    assert code == 0 and cert["lower"] <= cert["upper"]


@pytest.mark.parametrize("name", ["shadow_diag_l2.json", "shadow_one_sided.json", "detect_tent.json",
                                  "detect_diag.json", "hyers_ulam.json", "flow_shadow.json",
                                  "conjugacy.json"])
def test_examples_pass(tmp_path, name):
    code, cert = run(tmp_path, name)
    assert code == 0, cert
    assert cert.get("passes", True)


def test_small_gain_failure_exit(tmp_path):
    cfg = json.loads((CONFIGS / "shadow_diag.json").read_text())
    cfg["perturbation"]["c"] = 0.6
    cfg["system_file"] = str(CONFIGS / "diag_system.json")
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    code = cli.main(["--config", str(p), "--out", str(tmp_path / "o")])
    cert = json.loads((tmp_path / "o" / "certificate.json").read_text())
    assert code == 2 and cert["failure"] == "SmallGainViolated"


@pytest.mark.parametrize("cfg", [
    {"version": 1, "command": "shadow", "bogus": 1},
    {"version": 2, "command": "shadow"},
    {"version": 1, "command": "launch"},
    {"version": 1, "command": "verify"},
])
def test_input_errors(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    assert cli.main(["--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_malformed_json(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text("{not json")
    assert cli.main(["--config", str(p)]) == 1


def test_config_wins_over_flags(tmp_path, caplog):
    code, cert = run(tmp_path, "shadow_diag.json", "--seed", "99")
    assert code == 0 and cert["seed"] == 7
    assert any("ignoring --seed" in r.message for r in caplog.records)


def test_flags_fill_missing_values(tmp_path):
    code, cert = run(tmp_path, "flow_shadow.json", "--seed", "4", "--tol", "1e-11")
    assert code == 0 and cert["seed"] == 4


def test_certificate_float_format():
    text = cli.dump_certificate({"a": 0.1, "b": [1, 2.5], "c": {"d": float("inf")}, "e": True})
    assert "0.10000000000000001" in text and '"inf"' in text and "true" in text
    json.loads(text)
