import json
import math

import pytest

from diraclab import cli
from diraclab.records import Check, ConfigError, ResultRecord, RunConfig, read_table


def run_cli(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_config_validation():
    RunConfig("spectrum").validate()
    with pytest.raises(ConfigError):
        RunConfig("bogus").validate()
    with pytest.raises(ConfigError):
        RunConfig("spectrum", n=3).validate()  # delta length mismatch
    with pytest.raises(ConfigError):
        RunConfig("spectrum", delta=(0.25, 0.0)).validate()
    with pytest.raises(ConfigError):
        RunConfig("sweep", eps=()).validate()
    with pytest.raises(ConfigError):
        RunConfig("sweep", eps=(0.01, 0.005, 0.001)).validate()
    with pytest.raises(ConfigError):
        RunConfig("sweep", eps=(0.04, 0.02, 0.01)).validate()
    with pytest.raises(ConfigError):
        RunConfig("spectrum", tolerances={"nonsense": 1.0}).validate()


def test_digest_ignores_output_path():
    a = RunConfig("spectrum", output="a")
    b = RunConfig("spectrum", output="b")
    assert a.digest() == b.digest()
    assert a.digest() != RunConfig("spectrum", cutoff=5).digest()


def test_record_round_trip():
    rec = ResultRecord("mass", {"n": 2, "delta": [0.5, 0.0]}, "abc", scalars={
        "x": 0.1 + 0.2, "tiny": 5e-324, "inf": math.inf, "list": [1.0, -2.5], "text": "a = b"})
    rec.table = [{"epsilon": 0.01, "J": 3.6}]
    rec.add(Check.below("norm", 1e-17, 1e-6))
    rec.add(Check.above("exponent", 1.3, 1.1))
    back = ResultRecord.loads(rec.dumps())
    assert back == rec
    assert back.dumps() == rec.dumps()
    assert back.scalars["x"] == 0.1 + 0.2


def test_record_rejects_unknown_keys():
    with pytest.raises(ValueError):
        ResultRecord.loads('mystery = 1\n')


def test_spectrum_command(tmp_path, capsys):
    prefix = tmp_path / "run"
    code, out, _ = run_cli(["spectrum", "-K", "4", "-o", str(prefix)], capsys)
    assert code == 0
    rec = ResultRecord.loads((tmp_path / "run.record.txt").read_text())
    assert rec.scalars["lambda_1_plus"] == pytest.approx(math.pi, rel=1e-15)
    assert rec.passed and rec.status == "ok"
    rows = read_table(tmp_path / "run.table.csv")
    assert rows and "PASS" in out


def test_kernel_exit_code(tmp_path, capsys):
    code, out, _ = run_cli(["spectrum", "--delta", "0,0", "-o", str(tmp_path / "k")], capsys)
    assert code == cli.EXIT_KERNEL
    assert "KERNEL" in out
    rec = ResultRecord.loads((tmp_path / "k.record.txt").read_text())
    assert rec.status == "kernel"
    code, _, _ = run_cli(["mass", "--delta", "0,0"], capsys)
    assert code == cli.EXIT_KERNEL


def test_determinism_apart_from_timestamp(tmp_path, capsys):
    for name in ("a", "b"):
        assert run_cli(["mass", "-o", str(tmp_path / name)], capsys)[0] == 0
    a = (tmp_path / "a.record.txt").read_text().splitlines()
    b = (tmp_path / "b.record.txt").read_text().splitlines()
    strip = lambda lines: [line for line in lines if not line.startswith("timestamp")]
    assert strip(a) == strip(b)
    assert (tmp_path / "a.table.csv").read_bytes() == (tmp_path / "b.table.csv").read_bytes()


@pytest.mark.parametrize("args", [
    ["sweep", "--eps", ""],
    ["sweep", "--eps", "0.01,0.005"],
    ["spectrum", "--delta", "1/3,0"],
    ["spectrum", "--tol", "bogus=1"],
    ["spectrum", "--tol", "eigensolver"],
    ["spectrum", "--n", "1"],
])
def test_config_errors(args, capsys):
    code, _, err = run_cli(args, capsys)
    assert code == cli.EXIT_CONFIG
    assert "configuration error" in err


def test_config_file_overrides_flags(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"cutoff": 3, "delta": ["1/2", "1/2"], "tolerances": {"eigensolver": 1e-9}}))
    prefix = tmp_path / "o"
    code, _, _ = run_cli(["spectrum", "-K", "6", "--config", str(cfg), "-o", str(prefix)], capsys)
    assert code == 0
    rec = ResultRecord.loads((tmp_path / "o.record.txt").read_text())
    assert rec.config["cutoff"] == 3
    assert rec.config["delta"] == [0.5, 0.5]
    assert rec.config["tolerances"]["eigensolver"] == 1e-9
    assert rec.scalars["lambda_1_plus"] == pytest.approx(math.pi * math.sqrt(2))
    cfg.write_text(json.dumps({"unknown_key": 1}))
    assert run_cli(["spectrum", "--config", str(cfg)], capsys)[0] == cli.EXIT_CONFIG


def test_failed_check_gives_nonzero_exit(capsys):
    # an impossible tolerance must fail loudly with a named defect
    code, out, _ = run_cli(["mass", "--tol", "mass=0"], capsys)
    assert code == cli.EXIT_FAILED
    assert "FAIL" in out


def test_sweep_command(tmp_path, capsys):
    code, out, _ = run_cli(["sweep", "--family", "three-zone", "--sign", "-1", "-o", str(tmp_path / "s")], capsys)
    assert code == 0
    rows = read_table(tmp_path / "s.table.csv")
    assert [float(r["epsilon"]) for r in rows] == [0.01, 0.005, 0.0025]
    rec = ResultRecord.loads((tmp_path / "s.record.txt").read_text())
    assert rec.scalars["exponent"] > 1.1


def test_selfcheck(capsys):
    code, out, _ = run_cli(["selfcheck"], capsys)
    assert code == 0 and "FAIL" not in out


def test_minimize_command(capsys, tmp_path):
    code, out, _ = run_cli(["minimize", "--budget", "6", "-m", "16", "-o", str(tmp_path / "mn")], capsys)
    assert code == 0
    rec = ResultRecord.loads((tmp_path / "mn.record.txt").read_text())
    assert rec.scalars["plus_budget_exhausted"] is True
    assert rec.scalars["plus_value"] <= math.pi + 1e-8
