"""
check_elliptic.py

Elliptic equation for sigma = 1/|grad u| on harmonic fields, as printed
(Lap sigma = sigma (2H^2 - |h|^2)) and with the tangential term
|grad_Gamma sigma|^2 / sigma. On e^x cos y the printed residual tends to
e^-x sin^2 y; the probe sits on the level through (0, pi/4).
"""

import math
from typing import Dict, List

import numpy as np

from fbac_lab.oracle_suite import measurement, oracle_axis, oracle_field
from fbac_lab.verify import check_sigma_elliptic

weight = 7

CHECK = "sigma_elliptic"
FLAT_TAUS = (-0.25, 0.0, 0.25)
HARMONIC_TAUS = (0.75, 1.0)
PROBE_Y = math.pi / 4.0


def run(h_list: List[float], dtau_list: List[float]) -> List[Dict]:
    rows: List[Dict] = []
    for h in h_list:
        for name in ("profile1d", "tilted"):
            res = check_sigma_elliptic(oracle_field(name, h), FLAT_TAUS)
            rows.append(measurement(CHECK, name, "elliptic_printed", h, None, res["printed"].values, "exact"))
            rows.append(measurement(CHECK, name, "elliptic_corrected", h, None, res["corrected"].values, "exact"))

        u = oracle_field("harmonic_exp", h)
        axis = oracle_axis("harmonic_exp")
        base_axis = u.grid.drop_axis(axis).axes()[0]
        base = base_axis[np.abs(base_axis) <= 0.5].reshape(-1, 1)
        res = check_sigma_elliptic(u, HARMONIC_TAUS, base, axis)
        rows.append(measurement(CHECK, "harmonic_exp", "elliptic_corrected", h, None, res["corrected"].values,
                                "spatial"))

        # printed residual at the probe against its analytic limit
        probe = base_axis[int(np.argmin(np.abs(base_axis - PROBE_Y)))]
        res = check_sigma_elliptic(u, (math.cos(PROBE_Y),), np.array([[probe]]), axis)
        x, y = res["points"][0]
        value = float(res["printed_values"][0])
        expected = math.exp(-x) * math.sin(y) ** 2
        rows.append(measurement(CHECK, "harmonic_exp", "elliptic_printed", h, None, [value - expected], "limit",
                                limit=value))
    return rows
