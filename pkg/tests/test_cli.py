import json

import pytest

from shearmix.cli import ConfigError, main, parse_config


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("nu = 1e-3\nt_end = 0.5\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--nu", "1e-4", "--out", str(out)]) == 0
    echo = (out / "config.ini").read_text()
    assert "nu = 0.0001" in echo and "t_end = 0.5" in echo
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] and summary["command"] == "simulate"
    assert (out / "trajectory.csv").exists() and (out / "final.bin").exists()


def test_missing_required_keys(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "nu" in err and "t_end" in err


def test_ell_outside_range_rejected(tmp_path, capsys):
    assert main(["sweep", "--ells", "0.9", "--out", str(tmp_path / "o")]) == 2
    assert "(1/3, 3/4)" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        parse_config("hypo", {"ell": "0.9"}, {}, tmp_path, 42, 1)


def test_unknown_and_mistyped_keys(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        parse_config("snapshots", {"colour": "red"}, {}, tmp_path, 42, 1)
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config("snapshots", {"n": "many"}, {}, tmp_path, 42, 1)
    with pytest.raises(ConfigError):
        parse_config("snapshots", {"n": "100"}, {}, tmp_path, 42, 1)


def test_unknown_subcommand():
    assert main(["frobnicate"]) == 2
    assert main([]) == 2


def test_missing_config_file(tmp_path):
    assert main(["check", "--config", str(tmp_path / "none.ini")]) == 2


def test_check_passes(tmp_path):
    out = tmp_path / "check"
    assert main(["check", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] and not summary["failures"]
    assert (out / "config.ini").exists()


def test_snapshots_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["snapshots", "--out", str(a)]) == 0
    assert main(["snapshots", "--config", str(a / "config.ini"), "--out", str(b)]) == 0
    for name in ("summary.json", "snapshot_3.bin", "snapshots_index.txt", "config.ini"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert len(list(a.glob("snapshot_*.bin"))) == 4


def test_hypo_subcommand(tmp_path):
    out = tmp_path / "hypo"
    assert main(["hypo", "--out", str(out), "--mu", "1e-3", "--residual-tau", "4"]) == 0
    header = (out / "ledger.csv").read_text().splitlines()[0]
    assert header == "tau,E0,E1,E2,E3,E4,E6,E7,Phi,envelope"
    assert (out / "audit.csv").exists()


def test_largec_failure_exit_code(tmp_path):
    out = tmp_path / "largec"
    code = main(["largec", "--out", str(out), "--cs", "5,10,20", "--tstar", "0.5"])
    summary = json.loads((out / "summary.json").read_text())
    assert code == (0 if summary["passed"] else 1)
    assert "slope_window" in summary["checks"]
