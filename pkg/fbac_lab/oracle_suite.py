# === fbac_lab/oracle_suite.py ===
"""
Oracle identity suite.

Every module in oracle_checks/ exports
    weight             an integer; modules run in descending weight
    run(h_list, dtau_list) -> list of measurement dicts
and is discovered at runtime, so a new identity family is added by dropping a
module into the directory. A measurement dict carries check, oracle, identity,
h, dtau, max_residual, kind ("spatial", "mixed", "limit" or "exact") and optionally limit.
For "limit" rows max_residual is the distance to a known non-zero limit,
and limit is the measured value itself.
This module groups measurements by (check, oracle, identity), measures the
convergence order under refinement and decides pass/fail.
"""

import importlib.util
import logging
import math
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pytools.convergence import EOCRecorder

from fbac_lab.field import analytic_field, build_grid
from fbac_lab.models import ScalarField

logger = logging.getLogger(__name__)

CHECKS_DIR = os.path.join(os.path.dirname(__file__), "oracle_checks")
DEFAULT_H = (1.0 / 64.0, 1.0 / 128.0)
DEFAULT_DTAU = (1.0 / 32.0, 1.0 / 64.0)
EXACT_TOL = 1e-8
THRESHOLDS = {"spatial": 1.7, "mixed": 1.0, "limit": 1.0}

# name -> (box, params, height axis)
ORACLE_SETUPS: Dict[str, Tuple[List[Tuple[float, float]], Dict[str, Any], int]] = {
    "profile1d": ([(-1.0, 1.0), (-0.5, 0.5)], {"eps": 0.1}, -1),
    "tilted": ([(-1.0, 1.0), (-1.0, 1.0)], {"eps": 0.1, "e": (0.6, 0.8)}, -1),
    "distance": ([(-0.25, 0.25), (-0.25, 0.75)], {"c": (0.0, -0.5)}, -1),
    "harmonic_exp": ([(-1.0, 1.5), (-1.25, 1.25)], {}, 0),
}


def oracle_field(name: str, h: float) -> ScalarField:
    box, params, _ = ORACLE_SETUPS[name]
    return analytic_field(name, params, build_grid(box, h))


def oracle_axis(name: str) -> int:
    return ORACLE_SETUPS[name][2]


def measurement(check: str, oracle: str, identity: str, h: float, dtau: Optional[float], values,
                kind: str, limit: Optional[float] = None) -> Dict[str, Any]:
    v = np.abs(np.asarray(values, dtype=float)).ravel()
    v = v[np.isfinite(v)]
    return {
        "check": check,
        "oracle": oracle,
        "identity": identity,
        "h": float(h),
        "dtau": None if dtau is None else float(dtau),
        "max_residual": float(v.max()) if v.size else float("nan"),
        "kind": kind,
        "limit": limit,
    }


def refinement_pairs(h_list: Sequence[float], dtau_list: Sequence[float]) -> List[Tuple[float, float]]:
    """(h, dtau) pairs refined together; the lists must have equal length."""
    if len(h_list) != len(dtau_list):
        raise ValueError(f"need as many dtau values as h values, got {len(h_list)} and {len(dtau_list)}")
    return list(zip(h_list, dtau_list))


def discover_check_modules(checks_dir: str = CHECKS_DIR) -> List[Dict[str, Any]]:
    """
    Imports every check_*.py in checks_dir and returns
    {'weight', 'run', 'name'} records sorted by weight descending.
    """
    check_modules = []
    for fname in sorted(os.listdir(checks_dir)):
        if not fname.endswith(".py") or fname == "__init__.py":
            continue
        fullpath = os.path.join(checks_dir, fname)
        module_name = f"fbac_lab.oracle_checks.{fname[:-3]}"

        spec = importlib.util.spec_from_file_location(module_name, fullpath)
        mod = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(mod)

        if hasattr(mod, "weight") and hasattr(mod, "run"):
            check_modules.append({
                "weight": getattr(mod, "weight"),
                "run": getattr(mod, "run"),
                "name": module_name,
            })
        else:
            logger.warning(f"Module {module_name} missing `weight` or `run`. Skipping.")
    check_modules.sort(key=lambda x: x["weight"], reverse=True)
    return check_modules


def _order(points: List[Dict[str, Any]]) -> float:
    eoc = EOCRecorder()
    for p in sorted(points, key=lambda p: -p["h"]):
        eoc.add_data_point(p["h"], p["max_residual"])
    return float(eoc.order_estimate())


def assess(measurements: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Adds order, threshold and passed to every measurement, grouped by identity."""
    groups: Dict[Tuple[str, str, str], List[Dict[str, Any]]] = {}
    for m in measurements:
        groups.setdefault((m["check"], m["oracle"], m["identity"]), []).append(m)

    rows: List[Dict[str, Any]] = []
    for key, points in groups.items():
        residuals = [p["max_residual"] for p in points]
        kind = points[0]["kind"]
        finite = all(math.isfinite(r) for r in residuals)
        order: Optional[float] = None
        threshold: Optional[float] = None
        if kind == "exact" or (finite and max(residuals) <= EXACT_TOL):
            passed = finite and max(residuals) <= EXACT_TOL
        elif not finite or len(points) < 2 or min(residuals) <= 0.0:
            passed = False
        else:
            order = _order(points)
            threshold = THRESHOLDS[kind]
            passed = order >= threshold
        if not passed:
            logger.warning(f"oracle check {'/'.join(key)} failed: residuals {residuals}, order {order}")
        for p in points:
            rows.append({**p, "order": order, "threshold": threshold, "passed": bool(passed)})
    return rows


def run_oracle_suite(h_list: Sequence[float] = DEFAULT_H, dtau_list: Sequence[float] = DEFAULT_DTAU,
                     checks_dir: str = CHECKS_DIR) -> List[Dict[str, Any]]:
    """Runs every discovered check module and returns the assessed rows."""
    refinement_pairs(h_list, dtau_list)
    measurements: List[Dict[str, Any]] = []
    for chk in discover_check_modules(checks_dir):
        mod_name = chk["name"].split(".")[-1]
        logger.info(f"Running oracle check '{mod_name}' (weight {chk['weight']})")
        try:
            measurements.extend(chk["run"](list(h_list), list(dtau_list)))
        except Exception as e:
            logger.warning(f"check '{mod_name}' failed: {e}")
            measurements.append(measurement(mod_name, "-", "error", h_list[0], None, [float("nan")], "exact"))
    rows = assess(measurements)
    failed = sum(1 for r in rows if not r["passed"])
    logger.info(f"Oracle suite: {len(rows)} rows, {failed} failing")
    return rows
