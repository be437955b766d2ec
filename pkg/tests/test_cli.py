import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from cli import cli, parse_number_list

FLAT = """\
eps = 0.1
gamma0 = 0
mode = trial_fb
"""


def _config(tmp_path, text=FLAT, name="flat.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _run(args):
    return CliRunner().invoke(cli, args, catch_exceptions=False)


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("flat")
    out = tmp / "out"
    result = _run(["-o", str(out), "solve", _config(tmp)])
    assert result.exit_code == 0, result.output
    return out


def test_parse_number_list():
    assert parse_number_list("1/64, 0.5") == [1.0 / 64, 0.5]
    assert parse_number_list(None) is None


def test_solve_writes_outputs_and_manifest(solved):
    for name in ("field.fbac", "gamma_minus.csv", "gamma_plus.csv", "convergence.csv", "manifest.json"):
        assert (solved / name).is_file(), name
    manifest = json.loads((solved / "manifest.json").read_text())
    assert manifest["subcommand"] == "solve"
    assert len(manifest["outputs"]) == 4
    assert "total" in manifest["timings"]
    assert (solved / "field.fbac").read_text().startswith("FBAC1\n")


def test_solve_honours_out(tmp_path):
    target = tmp_path / "dumps" / "flat.fbac"
    result = _run(["-o", str(tmp_path / "out"), "solve", _config(tmp_path), "--out", str(target)])
    assert result.exit_code == 0, result.output
    assert target.is_file()
    assert not (tmp_path / "out" / "field.fbac").exists()


def test_config_errors_exit_1_and_name_the_key(tmp_path):
    result = _run(["-o", str(tmp_path), "solve", _config(tmp_path, "eps = 0.1\n")])
    assert result.exit_code == 1
    assert "gamma0" in result.output


def test_usage_errors_exit_1(tmp_path):
    cfg = _config(tmp_path)
    assert _run(["-o", str(tmp_path), "--threads", "0", "solve", cfg]).exit_code == 1
    assert _run(["-o", str(tmp_path), "solve", cfg, "--no-such-option"]).exit_code == 1
    assert _run(["-o", str(tmp_path), "--h", "0.1,0.05", "solve", cfg]).exit_code == 1
    assert _run(["-o", str(tmp_path), "--h", "abc", "solve", cfg]).exit_code == 1


def test_capped_solve_exits_2_and_keeps_the_log(tmp_path):
    cfg = _config(tmp_path, "eps = 0.05\ngamma0 = 0.03*cos(pi*x)\nmax_iter = 1\n")
    result = _run(["-o", str(tmp_path / "out"), "solve", cfg])
    assert result.exit_code == 2
    assert (tmp_path / "out" / "convergence.csv").is_file()
    assert (tmp_path / "out" / "manifest.json").is_file()


def test_analyze_dumps_levels_and_trajectories(solved, tmp_path):
    out = tmp_path / "analysis"
    result = _run(["-o", str(out), "analyze", str(solved / "field.fbac"),
                   "--tau", "0.5", "--tau", "1", "--start", "0,0", "--span", "0.25"])
    assert result.exit_code == 0, result.output
    level = (out / "level_00.csv").read_text().splitlines()
    assert level[0] == "x1,gamma,sigma,H,h11"
    assert (out / "level_01.csv").is_file()
    traj = (out / "trajectory_00.csv").read_text().splitlines()
    assert traj[0] == "tau,x1,x2,sigma,H,lap_u,defect"
    assert len(traj) == 1 + 9


def test_analyze_rejects_a_bad_start(solved, tmp_path):
    result = _run(["-o", str(tmp_path), "analyze", str(solved / "field.fbac"), "--start", "0,0,0"])
    assert result.exit_code == 1


def test_verify_then_report(solved, tmp_path):
    out = tmp_path / "eps_0.1"
    result = _run(["-o", str(out), "verify", str(solved / "field.fbac"), "--alpha", "0.5",
                   "--gamma-minus", str(solved / "gamma_minus.csv"),
                   "--gamma-plus", str(solved / "gamma_plus.csv")])
    assert result.exit_code == 0, result.output
    report = json.loads((out / "report.json").read_text())
    assert report["instance"]["eps"] == 0.1
    assert report["ratios"]["applicable"] is False
    assert "timings" not in report
    assert "levels" in json.loads((out / "manifest.json").read_text())["timings"]

    result = _run(["-o", str(tmp_path / "sweep"), "report", str(tmp_path)])
    assert result.exit_code == 0, result.output
    lines = (tmp_path / "sweep" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "eps,alpha,eta,C_naive,C_interior,C_thm_h,C_thm_H"
    assert lines[1].startswith("0.10000000000000001,0.5,")


def test_report_rejects_mixed_seed_graphs(tmp_path):
    for name, gamma0 in (("a", "0"), ("b", "0.03*cos(pi*x1)")):
        d = tmp_path / name
        d.mkdir()
        (d / "report.json").write_text(json.dumps({
            "instance": {"eps": 0.1, "gamma0": gamma0},
            "ratios": {"C_naive": None, "C_interior": None},
            "grid": {"alphas": [0.5]},
        }))
    result = _run(["-o", str(tmp_path / "out"), "report", str(tmp_path / "a"), str(tmp_path / "b")])
    assert result.exit_code == 1
    assert "gamma0" in result.output


def test_report_without_reports_exits_1(tmp_path):
    (tmp_path / "empty").mkdir()
    assert _run(["-o", str(tmp_path / "out"), "report", str(tmp_path / "empty")]).exit_code == 1


@pytest.mark.slow
def test_oracle_suite_passes(tmp_path):
    result = _run(["-o", str(tmp_path), "oracle"])
    assert result.exit_code == 0, result.output
    header = (tmp_path / "oracle.csv").read_text().splitlines()[0]
    assert header == "check,oracle,identity,h,dtau,max_residual,order,threshold,limit,passed"


def test_module_headers_name_their_own_path():
    root = Path(__file__).resolve().parent.parent
    for path in [root / "cli.py", *sorted((root / "fbac_lab").glob("*.py"))]:
        first = path.read_text().splitlines()[0]
        if first.startswith("# ==="):
            assert first == f"# === {path.relative_to(root).as_posix()} ==="
