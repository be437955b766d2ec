# === fbac_lab/report_generator.py ===

import csv
import json
import logging
import os
import re
from dataclasses import asdict
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from fbac_lab.errors import FormatError
from fbac_lab.flow import trajectory_rows
from fbac_lab.levelset import level_rows
from fbac_lab.models import ConvergenceLog, FlowTrajectory, GeometryReport, LevelSurface, RunManifest, Solution

logger = logging.getLogger(__name__)

ORACLE_COLUMNS = ("check", "oracle", "identity", "h", "dtau", "max_residual", "order", "threshold", "limit", "passed")
SWEEP_COLUMNS = ("eps", "alpha", "eta", "C_naive", "C_interior", "C_thm_h", "C_thm_H")
MANIFEST_NAME = "manifest.json"

_GAMMA0_IN_LABEL = re.compile(r"gamma0=(.*)$")


def fmt_float(v: Any) -> str:
    """17 significant digits, so every written float reads back bit-exactly."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _base_header(n: int) -> List[str]:
    return [f"x{k + 1}" for k in range(n)]


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_float(v) for v in row])
    logger.info(f"Wrote '{path}'")
    return path


def read_csv(path: str) -> Tuple[List[str], List[List[str]]]:
    """Header and rows of a CSV written by write_csv; FormatError names the file and line."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        logger.warning(f"Could not open '{path}': {e}")
        raise FormatError(f"cannot read CSV: {e}", path)
    if not rows:
        raise FormatError("empty file, expected a header", path, 1)
    header = rows[0]
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FormatError(f"expected {len(header)} columns, got {len(row)}", path, lineno)
    return header, rows[1:]


# ---------------------------------------------------------------------------
# Solver outputs
# ---------------------------------------------------------------------------

def write_gamma_csvs(sol: Solution, out_dir: str) -> List[str]:
    """gamma_minus.csv and gamma_plus.csv: base coordinates and height per base node."""
    n = sol.base_grid.dim
    pts = sol.base_grid.coordinates().reshape(-1, n)
    header = _base_header(n) + ["gamma"]
    paths = []
    for name, gamma in (("gamma_minus", sol.gamma_minus), ("gamma_plus", sol.gamma_plus)):
        rows = [list(p) + [g] for p, g in zip(pts, np.asarray(gamma).ravel())]
        paths.append(write_csv(os.path.join(out_dir, f"{name}.csv"), header, rows))
    return paths


def read_gamma_csv(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """(base points, heights) from a gamma CSV."""
    header, rows = read_csv(path)
    if not header or header[-1] != "gamma" or header[:-1] != _base_header(len(header) - 1):
        raise FormatError(f"expected header 'x1[,x2],gamma', got {','.join(header)!r}", path, 1)
    data = np.empty((len(rows), len(header)))
    for lineno, row in enumerate(rows, start=2):
        try:
            data[lineno - 2] = [float(t) for t in row]
        except ValueError:
            raise FormatError(f"bad number in {row!r}", path, lineno)
    return data[:, :-1], data[:, -1]


def write_convergence_log(log: ConvergenceLog, path: str) -> str:
    rows = [[k + 1, s, r, e] for k, (s, r, e) in enumerate(zip(log.stages, log.residuals, log.energies))]
    return write_csv(path, ["iteration", "stage", "residual", "energy"], rows)


# ---------------------------------------------------------------------------
# Geometry dumps
# ---------------------------------------------------------------------------

def write_level_csv(surface: LevelSurface, path: str) -> str:
    n = surface.base_grid.dim
    h_cols = [f"h{i + 1}{j + 1}" for i in range(n) for j in range(i, n)]
    return write_csv(path, _base_header(n) + ["gamma", "sigma", "H"] + h_cols, level_rows(surface))


def write_trajectory_csv(traj: FlowTrajectory, path: str) -> str:
    d = traj.points.shape[-1]
    header = ["tau"] + _base_header(d) + ["sigma", "H", "lap_u", "defect"]
    return write_csv(path, header, trajectory_rows(traj))


def write_oracle_csv(rows: List[Dict[str, Any]], path: str) -> str:
    return write_csv(path, ORACLE_COLUMNS, ([r.get(c) for c in ORACLE_COLUMNS] for r in rows))


# ---------------------------------------------------------------------------
# JSON reports and manifests
# ---------------------------------------------------------------------------

def _to_builtin(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(data: Dict[str, Any], path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2, sort_keys=True, default=_to_builtin)
        f.write("\n")
    logger.info(f"Wrote '{path}'")
    return path


def read_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        logger.warning(f"Could not open '{path}': {e}")
        raise FormatError(f"cannot read JSON: {e}", path)
    except json.JSONDecodeError as e:
        raise FormatError(e.msg, path, e.lineno)


def write_report_json(report: GeometryReport, path: str) -> str:
    return write_json(report.to_dict(), path)


def write_manifest(manifest: RunManifest, out_dir: str) -> str:
    return write_json(asdict(manifest), os.path.join(out_dir, MANIFEST_NAME))


# ---------------------------------------------------------------------------
# Sweep table
# ---------------------------------------------------------------------------

def gamma0_identity(report: Dict[str, Any]) -> Optional[str]:
    """The seed graph a report was produced from: instance.gamma0, else the tail of the field label."""
    instance = report.get("instance") or {}
    if instance.get("gamma0"):
        return str(instance["gamma0"])
    m = _GAMMA0_IN_LABEL.search(str(instance.get("label") or ""))
    return m.group(1).strip() if m else None


def sweep_rows(reports: Sequence[Tuple[str, Dict[str, Any]]]) -> List[List[Any]]:
    """
    One row per (eps, alpha) over reports of the same seed graph, sorted by eps
    descending then alpha ascending. Mismatched seed graphs raise FormatError.
    """
    # 1) every report must describe the same gamma0
    identities = {}
    for path, rep in reports:
        if "instance" not in rep or "ratios" not in rep:
            raise FormatError("not a geometry report (missing 'instance' or 'ratios')", path)
        identities[path] = gamma0_identity(rep)
    distinct = sorted({str(v) for v in identities.values()})
    if len(distinct) > 1:
        listing = ", ".join(f"{p}: {g}" for p, g in identities.items())
        raise FormatError(f"reports disagree on gamma0 ({listing})", reports[0][0])

    # 2) rows
    rows = []
    for path, rep in reports:
        eps = rep["instance"].get("eps")
        ratios = rep["ratios"]
        alphas = (rep.get("grid") or {}).get("alphas") or []
        for a in alphas:
            key = f"{a:g}"
            rows.append([
                eps, a, rep.get("eta"), ratios.get("C_naive"), ratios.get("C_interior"),
                (ratios.get("C_thm_h") or {}).get(key), (ratios.get("C_thm_H") or {}).get(key),
            ])
    rows.sort(key=lambda r: (-float(r[0]), float(r[1])))
    return rows


def write_sweep_csv(reports: Sequence[Tuple[str, Dict[str, Any]]], path: str) -> str:
    return write_csv(path, SWEEP_COLUMNS, sweep_rows(reports))
