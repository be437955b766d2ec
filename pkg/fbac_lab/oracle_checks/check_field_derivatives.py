"""
check_field_derivatives.py

Nodal stencils and their interpolation against closed-form derivatives:
the Laplacian of e^x cos y vanishes, its gradient and Hessian are known, and
the profile gradient is exactly (0, 1/eps) inside the layer.
"""

from typing import Dict, List

import numpy as np

from fbac_lab.field import gradient_at, hessian_at, nodal_laplacian
from fbac_lab.oracle_suite import measurement, oracle_field

# Stencils underlie every other identity, so they run first.
weight = 10

CHECK = "field_derivatives"
PROBES = np.array([[0.0, 0.0], [0.1, 0.2], [-0.3, 0.55], [0.7, -0.4]])
PROFILE_PROBES = np.array([[0.3, 0.01], [-0.2, -0.03], [0.0, 0.0]])


def _harmonic_exp_derivatives(p: np.ndarray):
    ex, c, s = np.exp(p[:, 0]), np.cos(p[:, 1]), np.sin(p[:, 1])
    grad = np.stack([ex * c, -ex * s], axis=-1)
    hess = np.stack([np.stack([ex * c, -ex * s], axis=-1), np.stack([-ex * s, -ex * c], axis=-1)], axis=-2)
    return grad, hess


def run(h_list: List[float], dtau_list: List[float]) -> List[Dict]:
    rows: List[Dict] = []
    grad_exact, hess_exact = _harmonic_exp_derivatives(PROBES)
    for h in h_list:
        u = oracle_field("harmonic_exp", h)
        inner = u.grid.distance_to_boundary(u.grid.coordinates()) >= 2 * h - 1e-12
        rows.append(measurement(CHECK, "harmonic_exp", "laplacian", h, None, nodal_laplacian(u)[inner], "spatial"))
        rows.append(measurement(CHECK, "harmonic_exp", "gradient", h, None,
                                np.asarray(gradient_at(u, PROBES)) - grad_exact, "spatial"))
        rows.append(measurement(CHECK, "harmonic_exp", "hessian", h, None,
                                np.asarray(hessian_at(u, PROBES)) - hess_exact, "spatial"))

        profile = oracle_field("profile1d", h)
        rows.append(measurement(CHECK, "profile1d", "gradient", h, None,
                                np.asarray(gradient_at(profile, PROFILE_PROBES)) - np.array([0.0, 1.0 / profile.eps]),
                                "exact"))
    return rows
