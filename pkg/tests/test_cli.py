import json
import os
import subprocess
import sys

import pytest

from banditlab.cli import main, parse_config
from banditlab.errors import ConfigError

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestParseConfig:
    def test_defaults_filled(self, tmp_path):
        path = tmp_path / "s.cfg"
        path.write_text("arms = bernoulli:0.5,bernoulli:0.4\npolicies = uniform\nT = 100\n")
        cfg = parse_config("simulate", str(path), {})
        assert cfg["R"] == 1 and cfg["seed"] == 0 and cfg["estimator"] == "mean"

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "s.cfg"
        path.write_text("arms = bernoulli:0.5\npolicies = uniform\nT = 10\ngama = 1\n")
        with pytest.raises(ConfigError, match="gama"):
            parse_config("simulate", str(path), {})

    def test_unknown_override_key(self):
        with pytest.raises(ConfigError, match="nope"):
            parse_config("verify", None, {"nope": "1"})

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="arms"):
            parse_config("simulate", None, {"policies": "uniform", "T": "10"})

    def test_flag_overrides_file(self, tmp_path):
        path = tmp_path / "v.cfg"
        path.write_text("seed = 3\n")
        cfg = parse_config("verify", str(path), {"seed": "9"})
        assert cfg["seed"] == 9

    def test_dedicated_flag_conflicts_with_file(self, tmp_path):
        path = tmp_path / "s.cfg"
        path.write_text("arms = bernoulli:0.5\npolicies = uniform\nT = 10\n")
        with pytest.raises(ConfigError, match="arms"):
            parse_config("simulate", str(path), {}, dedicated={"arms": "bernoulli:0.9"})

    def test_bad_value_diagnosed(self, tmp_path):
        path = tmp_path / "s.cfg"
        path.write_text("arms = bernoulli:0.5\npolicies = uniform\nT = soon\n")
        with pytest.raises(ConfigError, match="T"):
            parse_config("simulate", str(path), {})

    def test_duplicate_key_rejected(self, tmp_path):
        path = tmp_path / "v.cfg"
        path.write_text("seed = 1\nseed = 2\n")
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("verify", str(path), {})


class TestKinfCommand:
    def test_bounded_value_printed(self, capsys):
        code, out, _ = run_cli(["kinf", "--family", "bounded", "--B", "1",
                                "--data", "0", "--mu", "0.5"], capsys)
        assert code == 0
        assert "kinf 0.693147" in out

    def test_hmoment_value(self, capsys):
        code, out, _ = run_cli(["kinf", "--family", "hmoment", "--h", "power:2",
                                "--B", "1", "--centered", "false",
                                "--data", "0", "--mu", "0.5"], capsys)
        assert code == 0
        assert "kinf 0.287682" in out
        assert "in_family true" in out

    def test_spef_value(self, capsys):
        code, out, _ = run_cli(["kinf", "--family", "bernoulli", "--mean", "0.4",
                                "--mu", "0.5"], capsys)
        assert code == 0
        assert "kinf 0.020136" in out

    def test_gaussian_empirical_kinf(self, capsys):
        code, out, _ = run_cli(["kinf", "--family", "gaussian",
                                "--data", "0.0,1.0,2.0,1.5,0.5", "--mu", "2.4"], capsys)
        assert code == 0
        assert "indicator true" in out

    def test_config_error_exit_code(self, capsys):
        code, _, err = run_cli(["kinf", "--family", "nonsense", "--mu", "0.5"], capsys)
        assert code == 2
        record = json.loads(err.strip().splitlines()[-1])
        assert record["error"] == "ConfigError"

    def test_numeric_error_exit_code(self, capsys):
        # observation above the bound is a domain failure, not a config one
        code, _, err = run_cli(["kinf", "--family", "bounded", "--B", "1",
                                "--data", "0,2", "--mu", "0.5"], capsys)
        assert code == 3
        assert json.loads(err.strip().splitlines()[-1])["error"] == "DomainError"


class TestSimulateCommand:
    def test_csv_schema_and_determinism(self, tmp_path, capsys):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        args = ["simulate", "--set", "arms=bernoulli:0.6,bernoulli:0.4",
                "--set", "policies=uniform,oracle", "--set", "T=200", "--set", "R=3",
                "--set", "seed=5", "--set", "workers=1"]
        assert run_cli(args + ["--out", str(out1)], capsys)[0] == 0
        assert run_cli(args + ["--out", str(out2)], capsys)[0] == 0
        b1, b2 = out1.read_bytes(), out2.read_bytes()
        assert b1 == b2
        lines = b1.decode().splitlines()
        assert lines[0].startswith("# banditlab ")
        assert lines[1].startswith("# config ")
        assert lines[2] == "policy,t,regret_mean,regret_stderr,lb_reference,n_arm0,n_arm1"
        assert any(row.startswith("uniform,200,") for row in lines)
        assert any(row.startswith("oracle,") for row in lines)

    def test_reference_config_runs(self, tmp_path, capsys):
        out = tmp_path / "ref.csv"
        code, _, _ = run_cli(["simulate", "--config",
                              os.path.join(CONFIG_DIR, "simulate_reference.cfg"),
                              "--out", str(out)], capsys)
        assert code == 0
        text = out.read_text()
        assert "med-bernoulli" in text and "ts-npts" in text

    def test_incompatible_policy_is_numeric_error(self, capsys):
        code, _, err = run_cli(["simulate", "--set", "arms=gaussian:0:1,gaussian:1:1",
                                "--set", "policies=ts-npts", "--set", "T=50"], capsys)
        assert code == 2
        assert json.loads(err.strip().splitlines()[-1])["error"] == "ConfigError"


class TestBcpCommand:
    def test_csv_schema(self, tmp_path, capsys):
        out = tmp_path / "bcp.csv"
        code, _, _ = run_cli(["bcp", "--set", "template=0.0", "--set", "mu_star=0.5",
                              "--set", "B=1.0", "--set", "gamma=0.05",
                              "--set", "n_list=20,40", "--set", "m=5000",
                              "--out", str(out)], capsys)
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[2] == "n,m,p_hat,ci,rate,bound_upper,bound_lower,lambda_star"
        assert len(lines) == 5

    def test_bad_mode(self, capsys):
        code, _, _ = run_cli(["bcp", "--set", "template=0.0", "--set", "mu_star=0.5",
                              "--set", "B=1.0", "--set", "mode=sideways"], capsys)
        assert code == 2


class TestMorePolicyRoutes:
    def test_hnpts_and_hmoment_med_via_cli(self, tmp_path, capsys):
        out = tmp_path / "h.csv"
        code, _, _ = run_cli([
            "simulate", "--set", "arms=heavytail:1.0:3.5:1.0,heavytail:0.5:3.5:1.0",
            "--set", "policies=hnpts", "--set", "T=400", "--set", "R=2",
            "--set", "h=power:1.5", "--set", "hB=0.6", "--set", "mu_minus=0",
            "--set", "estimator=truncated", "--set", "workers=1",
            "--out", str(out)], capsys)
        assert code == 0
        assert "hnpts" in out.read_text()

    def test_gaussian_routes_via_cli(self, tmp_path, capsys):
        out = tmp_path / "g.csv"
        code, _, _ = run_cli([
            "simulate", "--set", "arms=gaussian:1.0:1.0,gaussian:0.3:1.0",
            "--set", "policies=ts-gaussian-ig,med-gaussian", "--set", "T=300",
            "--set", "R=2", "--set", "lb=gaussian", "--set", "workers=1",
            "--out", str(out)], capsys)
        assert code == 0
        text = out.read_text()
        assert "ts-gaussian-ig" in text and "med-gaussian" in text

    def test_bcp_conditional_mode(self, tmp_path, capsys):
        out = tmp_path / "c.csv"
        code, _, _ = run_cli(["bcp", "--set", "template=0.0,0.3", "--set", "mu_star=0.5",
                              "--set", "B=1.0", "--set", "mode=conditional",
                              "--set", "n_list=10,20", "--set", "m=20000",
                              "--out", str(out)], capsys)
        assert code == 0
        assert len(out.read_text().splitlines()) == 5


class TestVerifyCommand:
    def test_single_suite_passes(self, capsys):
        code, out, _ = run_cli(["verify", "--suite", "med-invariance,reproducibility",
                                "--seed", "0"], capsys)
        assert code == 0
        assert "med-invariance" in out and "pass" in out

    def test_unknown_suite(self, capsys):
        code, _, err = run_cli(["verify", "--suite", "astrology"], capsys)
        assert code == 2
        assert "astrology" in json.loads(err.strip().splitlines()[-1])["message"]

    def test_output_deterministic(self, tmp_path, capsys):
        a, b = tmp_path / "v1.txt", tmp_path / "v2.txt"
        args = ["verify", "--suite", "med-invariance,truncation-dominance",
                "--seed", "3"]
        assert run_cli(args + ["--out", str(a)], capsys)[0] == 0
        assert run_cli(args + ["--out", str(b)], capsys)[0] == 0
        assert a.read_bytes() == b.read_bytes()


class TestEntryPoint:
    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "banditlab.cli", "kinf", "--family", "gaussian-known",
             "--mean", "0", "--mu", "1", "--var0", "1"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "kinf 0.500000" in proc.stdout
