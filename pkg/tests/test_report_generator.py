import json

import numpy as np
import pytest

from fbac_lab.errors import FormatError
from fbac_lab.field import analytic_field, build_grid
from fbac_lab.models import ConvergenceLog, RunManifest
from fbac_lab.report_generator import (
    ORACLE_COLUMNS,
    SWEEP_COLUMNS,
    fmt_float,
    gamma0_identity,
    read_csv,
    read_gamma_csv,
    read_json,
    sweep_rows,
    write_convergence_log,
    write_gamma_csvs,
    write_json,
    write_manifest,
    write_oracle_csv,
    write_sweep_csv,
)
from fbac_lab.solver import solution_from_field


def _report(eps, gamma0="0.03*cos(pi*x1)", alphas=(0.5, 0.25), label=None):
    return {
        "instance": {"eps": eps, "gamma0": gamma0, "label": label},
        "eta": 0.12,
        "ratios": {
            "C_naive": 1.5 * eps,
            "C_interior": 2.5 * eps,
            "C_thm_h": {f"{a:g}": a for a in alphas},
            "C_thm_H": {f"{a:g}": 10 * a for a in alphas},
        },
        "grid": {"alphas": list(alphas)},
    }


def test_fmt_float():
    assert fmt_float(None) == ""
    assert fmt_float(True) == "true"
    assert fmt_float(np.bool_(False)) == "false"
    assert fmt_float(np.int64(3)) == "3"
    assert float(fmt_float(0.1)) == 0.1
    assert fmt_float("x") == "x"


def test_sweep_rows_sort_by_eps_then_alpha():
    reports = [("a.json", _report(0.05)), ("b.json", _report(0.1))]
    rows = sweep_rows(reports)
    assert [(r[0], r[1]) for r in rows] == [(0.1, 0.25), (0.1, 0.5), (0.05, 0.25), (0.05, 0.5)]
    assert rows[0][SWEEP_COLUMNS.index("C_thm_H")] == 2.5
    assert rows[0][SWEEP_COLUMNS.index("eta")] == 0.12


def test_sweep_rejects_mixed_seed_graphs():
    reports = [("a.json", _report(0.05)), ("b.json", _report(0.1, gamma0="0"))]
    with pytest.raises(FormatError) as info:
        sweep_rows(reports)
    assert "gamma0" in str(info.value)


def test_sweep_rejects_non_reports():
    with pytest.raises(FormatError):
        sweep_rows([("x.json", {"eta": 1.0})])


def test_gamma0_identity_falls_back_to_the_label():
    rep = _report(0.1, gamma0=None, label="solution eps=0.1 mode=trial_fb gamma0=0.03*cos(pi*x1)")
    assert gamma0_identity(rep) == "0.03*cos(pi*x1)"
    assert gamma0_identity(_report(0.1, gamma0=None, label="loaded")) is None


def test_sweep_csv_has_the_fixed_header(tmp_path):
    path = write_sweep_csv([("a.json", _report(0.1))], str(tmp_path / "sweep.csv"))
    header, rows = read_csv(path)
    assert tuple(header) == SWEEP_COLUMNS
    assert len(rows) == 2


def test_oracle_csv_columns_and_booleans(tmp_path):
    row = {"check": "flow", "oracle": "distance", "identity": "ode_H", "h": 0.015625, "dtau": None,
           "max_residual": 1e-4, "order": 2.0, "threshold": 1.0, "limit": None, "passed": True, "kind": "mixed"}
    path = write_oracle_csv([row], str(tmp_path / "oracle.csv"))
    header, rows = read_csv(path)
    assert tuple(header) == ORACLE_COLUMNS
    assert rows[0][ORACLE_COLUMNS.index("dtau")] == ""
    assert rows[0][-1] == "true"


def test_read_csv_names_a_ragged_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3\n")
    with pytest.raises(FormatError) as info:
        read_csv(str(path))
    assert info.value.line == 3


def test_gamma_csvs_round_trip(tmp_path):
    u = analytic_field("profile1d", {"eps": 0.1}, build_grid([(-1.0, 1.0), (-0.5, 0.5)], 1.0 / 64))
    sol = solution_from_field(u, delta=0.25)
    minus, plus = write_gamma_csvs(sol, str(tmp_path))
    assert minus.endswith("gamma_minus.csv") and plus.endswith("gamma_plus.csv")
    pts, heights = read_gamma_csv(plus)
    assert pts.shape == (129, 1)
    assert np.array_equal(heights, sol.gamma_plus.ravel())

    (tmp_path / "gamma_plus.csv").write_text("x1,height\n0,1\n")
    with pytest.raises(FormatError):
        read_gamma_csv(plus)


def test_convergence_log(tmp_path):
    log = ConvergenceLog(iterations=2, residuals=[1e-2, 1e-5], energies=[3.0, 2.9], stages=[0, 0])
    header, rows = read_csv(write_convergence_log(log, str(tmp_path / "convergence.csv")))
    assert header == ["iteration", "stage", "residual", "energy"]
    assert rows[1][:2] == ["2", "0"]


def test_json_is_sorted_and_numpy_aware(tmp_path):
    path = write_json({"b": np.float64(1.5), "a": np.arange(3)}, str(tmp_path / "r.json"))
    text = (tmp_path / "r.json").read_text()
    assert text.index('"a"') < text.index('"b"')
    assert read_json(path) == {"a": [0, 1, 2], "b": 1.5}

    (tmp_path / "broken.json").write_text('{\n  "a": 1,\n  oops\n}\n')
    with pytest.raises(FormatError) as info:
        read_json(str(tmp_path / "broken.json"))
    assert info.value.line == 3


def test_manifest(tmp_path):
    manifest = RunManifest(subcommand="oracle", config_path=None, inputs=[], outputs=["oracle.csv"],
                           overrides={"h": [0.1]}, version="0.3.0", timings={"total": 1.0})
    path = write_manifest(manifest, str(tmp_path))
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert path.endswith("manifest.json")
    assert data["subcommand"] == "oracle"
    assert data["timings"] == {"total": 1.0}
