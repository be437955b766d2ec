"""
check_flow.py

Flow-map identities along RK4 trajectories of dF/dtau = grad u / |grad u|^2:
level consistency u(F) = tau, both sign arrangements of the sigma transport
equation, and the mean-curvature structure equation. On the distance oracle
arrangement A tends to -2/tau, which pins the sign convention.
"""

from typing import Dict, List

import numpy as np

from fbac_lab.flow import integrate_flow, normal_flow_angles, ode_residual_H, ode_residual_sigma
from fbac_lab.oracle_suite import measurement, oracle_axis, oracle_field, refinement_pairs

weight = 8

CHECK = "flow"
# oracle -> (start point, tau span)
STARTS = {
    "profile1d": ((0.0, 0.0), (0.0, 0.5)),
    "tilted": ((0.0, 0.0), (0.0, 0.25)),
    "distance": ((0.0, -0.0625), (0.4375, 0.9375)),
    "harmonic_exp": ((0.0, 0.0), (1.0, 1.25)),
}
EXACT = ("profile1d", "tilted")
SIGN_PROBE_TAU = 0.5


def run(h_list: List[float], dtau_list: List[float]) -> List[Dict]:
    rows: List[Dict] = []
    for h, dtau in refinement_pairs(h_list, dtau_list):
        for name, (x0, span) in STARTS.items():
            u = oracle_field(name, h)
            traj = integrate_flow(u, x0, span, dtau)
            kind = "exact" if name in EXACT else "mixed"
            res = ode_residual_sigma(traj)
            rows.append(measurement(CHECK, name, "level_defect", h, dtau, traj.defect, kind))
            rows.append(measurement(CHECK, name, "normal_flow", h, dtau, normal_flow_angles(traj), "exact"))
            rows.append(measurement(CHECK, name, "ode_sigma_B", h, dtau, res["B"], kind))
            rows.append(measurement(CHECK, name, "ode_H", h, dtau, ode_residual_H(u, traj, oracle_axis(name)), kind))
            if name == "distance":
                k = int(np.argmin(np.abs(res["taus"] - SIGN_PROBE_TAU)))
                rows.append(measurement(CHECK, name, "ode_sigma_A", h, dtau, res["A"] + 2.0 / res["taus"], "limit",
                                        limit=float(abs(res["A"][k]))))
            else:
                rows.append(measurement(CHECK, name, "ode_sigma_A", h, dtau, res["A"], kind))
    return rows
