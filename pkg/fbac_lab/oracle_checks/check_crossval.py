"""
check_crossval.py

Graph-side curvature of extracted levels against the field-side curvature
of -(I - nu nu) Hess u (I - nu nu) / |grad u| at the same points.
"""

from typing import Dict, List

import numpy as np

from fbac_lab.levelset import extract_level, shape_from_field
from fbac_lab.oracle_suite import measurement, oracle_axis, oracle_field

weight = 6

CHECK = "crossval"
LEVELS = {
    "tilted": (-0.25, 0.0, 0.25),
    "distance": (0.5, 0.75),
    "harmonic_exp": (0.75, 1.0),
}


def run(h_list: List[float], dtau_list: List[float]) -> List[Dict]:
    rows: List[Dict] = []
    for h in h_list:
        for name, taus in LEVELS.items():
            u = oracle_field(name, h)
            axis = oracle_axis(name)
            dH, dh = [], []
            for tau in taus:
                S = extract_level(u, tau, axis)
                keep = S.base_grid.distance_to_boundary(S.base_points) >= 2 * h - 1e-12
                field = shape_from_field(u, S.ambient_points()[keep])
                dH.append(S.H[keep] - field.H)
                dh.append(S.h_spectral()[keep] - field.h_spectral)
            kind = "exact" if name == "tilted" else "spatial"
            rows.append(measurement(CHECK, name, "H", h, None, np.concatenate(dH), kind))
            rows.append(measurement(CHECK, name, "h_spectral", h, None, np.concatenate(dh), kind))
    return rows
