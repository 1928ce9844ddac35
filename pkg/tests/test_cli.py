import json
import subprocess
import sys

import pytest

from fragrate.cli import main

REPORT_FILES = {
    "profile.csv",
    "profile_bounds.csv",
    "profile_density.csv",
    "trajectory.csv",
    "split_params.csv",
    "dissipativity_audit.csv",
    "hypothesis_audit.csv",
    "spectrum.csv",
    "spectral_report.csv",
    "summary.csv",
    "report.txt",
    "decay.svg",
    "spectrum.svg",
}


def _error(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads([line for line in err if line.startswith("{")][-1])


def _cfg(tmp_path, text):
    p = tmp_path / "run.toml"
    p.write_text(text)
    return str(p)


@pytest.fixture(scope="module")
def report_dirs(tmp_path_factory):
    dirs = [tmp_path_factory.mktemp(f"report{i}") for i in range(2)]
    codes = [main(["report", "--out", str(d)]) for d in dirs]
    return codes, dirs


def test_report_emits_everything(report_dirs):
    codes, dirs = report_dirs
    assert codes == [0, 0]
    assert {p.name for p in dirs[0].iterdir()} == REPORT_FILES


def test_report_is_byte_identical(report_dirs):
    _, (a, b) = report_dirs
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes(), p.name


def test_every_csv_has_provenance_header(report_dirs):
    _, (a, _) = report_dirs
    for p in a.glob("*.csv"):
        head = p.read_text().splitlines()[:6]
        assert head[0].startswith("# fragrate ")
        assert head[1].startswith("# config_sha256=")
        assert head[2] == "# grid x_min=0.0001 x_max=50.0 n=512"
        assert head[5].startswith("# provenance profile=computed split_m=selected split_M=selected")


def test_csv_schemas(report_dirs):
    _, (a, _) = report_dirs

    def columns(name):
        return next(line for line in (a / name).read_text().splitlines() if not line.startswith("#"))

    assert columns("profile.csv") == "x,G,Lambda,K"
    assert columns("profile_bounds.csv") == "a,a_prime,sup_upper,inf_lower,monotone_K"
    assert columns("trajectory.csv") == "t,mass,distX,distH,normX"
    assert columns("split_params.csv") == "m,M,delta,R0,R,a"
    assert columns("dissipativity_audit.csv") == "sample,functional,normX,slack"
    assert columns("spectrum.csv") == "re,im"
    assert columns("spectral_report.csv") == "gap,stationary_modulus,fitted_rate,beta_est,alpha_constructive"
    assert "overall=PASS" in (a / "report.txt").read_text()
    assert (a / "decay.svg").read_text().startswith("<svg")


def test_validate_gamma_25(tmp_path, capsys):
    code = main(["validate", "--config", _cfg(tmp_path, "[kernel]\ngamma = 2.5\n")])
    assert code == 1
    err = _error(capsys)
    assert err["exit_code"] == 1 and "Hypothesis 3" in err["message"]


def test_validate_default(capsys):
    assert main(["validate"]) == 0
    assert "PASS  Hypothesis 3" in capsys.readouterr().out


def test_evolve_large_cfl(tmp_path, capsys):
    code = main(["evolve", "--cfl", "10", "--t-end", "1", "--initial", "bump:1:0.2", "--out", str(tmp_path)])
    assert code == 0
    assert "warning:" in capsys.readouterr().err
    assert (tmp_path / "trajectory.csv").exists()


def test_numeric_failure_exit_2(tmp_path, capsys):
    cfg = _cfg(tmp_path, "[grid]\nn = 64\n[profile]\nt_max = 0.5\n")
    assert main(["profile", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert _error(capsys)["kind"] == "ConvergenceError"


def test_config_failure_exit_1(tmp_path, capsys):
    assert main(["split", "--config", _cfg(tmp_path, "[grid]\ncolour = 1\n")]) == 1
    assert _error(capsys)["kind"] == "ConfigError"


def test_split_table_and_user_M(tmp_path, capsys):
    assert main(["split", "--M", "1.02", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "delta" in out and "PASS  closing inequality" in out
    text = (tmp_path / "split_params.csv").read_text()
    assert "split_M=user" in text and "M=user" in text


def test_dump_operators(tmp_path):
    assert main(["audit", "--n-samples", "20", "--dump-operators", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "operator_A.csv").exists() and (tmp_path / "operator_B_op.csv").exists()


def test_thread_cap_and_console_entry(tmp_path):
    env = {"FRAGRATE_THREADS": "1", "PATH": ""}
    proc = subprocess.run([sys.executable, "-m", "fragrate.cli", "validate"], capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    env["FRAGRATE_THREADS"] = "many"
    proc = subprocess.run([sys.executable, "-m", "fragrate.cli", "validate"], capture_output=True, text=True, env=env)
    assert proc.returncode == 1 and "FRAGRATE_THREADS" in proc.stderr


def test_svg_chart_deterministic(tmp_path):
    import numpy as np

    from fragrate.svg import write_chart

    series = [("a", [0, 1, 2], [1.0, np.nan, 3.0]), ("b", [0, 2], [2.0, 2.0])]
    write_chart(tmp_path / "1.svg", series, "t<1>", "x", "y")
    write_chart(tmp_path / "2.svg", series, "t<1>", "x", "y")
    text = (tmp_path / "1.svg").read_text()
    assert text == (tmp_path / "2.svg").read_text()
    assert "t&lt;1&gt;" in text and text.count("<polyline") == 2
    write_chart(tmp_path / "3.svg", [("pts", [0.0], [0.0])], "s", "x", "y", kind="scatter")
    assert (tmp_path / "3.svg").read_text().count("<circle") == 1
