# === fbac_lab/flow.py ===

import logging
from typing import Dict, List, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from fbac_lab.errors import (
    DegenerateGradient,
    LeftDomain,
    NoCrossing,
    OutOfDomain,
    TooNearBoundary,
    TooShort,
)
from fbac_lab.field import DEGENERATE_GRADIENT, gradient_at, laplacian_at, sample
from fbac_lab.levelset import extract_level, laplace_beltrami, shape_from_field
from fbac_lab.models import FlowTrajectory, ScalarField, insert_height, split_height

logger = logging.getLogger(__name__)

LEVEL_TOL = 1e-8


def _velocity(u: ScalarField, p: np.ndarray) -> np.ndarray:
    try:
        g = np.asarray(gradient_at(u, p))
    except (OutOfDomain, TooNearBoundary) as e:
        raise LeftDomain(f"trajectory left the safe interior at {np.asarray(p).tolist()}: {e}", detail=p)
    speed2 = float(np.dot(g, g))
    if speed2 < DEGENERATE_GRADIENT ** 2:
        raise DegenerateGradient(f"|grad u| = {np.sqrt(speed2):.3g} at {np.asarray(p).tolist()}", detail=p)
    return g / speed2


def start_on_level(u: ScalarField, base_point: Sequence[float], tau: float, axis: int = -1) -> np.ndarray:
    """
    The point above `base_point` where the interpolated u equals tau. Along a
    column the multilinear interpolant is piecewise linear, so the root is exact.
    """
    grid = u.grid
    axis = axis % grid.dim
    heights = grid.axes()[axis]
    column = insert_height(np.broadcast_to(np.asarray(base_point, dtype=float), (len(heights), grid.dim - 1)),
                           heights, axis)
    values = np.asarray(sample(u, column))
    below = values <= tau
    cross = np.nonzero(below[:-1] & ~below[1:])[0]
    if cross.size != 1:
        raise NoCrossing(f"column above {list(base_point)} crosses tau={tau} {cross.size} times (need 1)",
                         detail=list(base_point))
    k = int(cross[0])
    r = (tau - values[k]) / (values[k + 1] - values[k])
    return column[k] + r * (column[k + 1] - column[k])


def integrate_flow(u: ScalarField, x0, tau_span: Sequence[float], dtau: float,
                   level_tol: float = LEVEL_TOL) -> FlowTrajectory:
    """
    Classical RK4 on dF/dtau = grad u / |grad u|^2 from x0 on the level
    tau_span[0] to tau_span[1], recording sigma, H, |h|^2 and Laplacian u per sample.
    """
    x0 = np.asarray(x0, dtype=float)
    t0, t1 = float(tau_span[0]), float(tau_span[1])
    if not dtau > 0:
        raise ValueError(f"dtau must be positive, got {dtau}")
    start_value = float(sample(u, x0))
    if abs(start_value - t0) > level_tol:
        raise NoCrossing(f"start point {x0.tolist()} has u = {start_value:.17g}, not on level {t0}", detail=x0)
    steps = int(round(abs(t1 - t0) / dtau))
    if steps < 1 or abs(steps * dtau - abs(t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
        raise ValueError(f"dtau={dtau} does not divide the span [{t0}, {t1}]")
    d = np.sign(t1 - t0) * dtau
    taus = t0 + d * np.arange(steps + 1)

    # 1) RK4 in tau
    points = np.empty((steps + 1, u.grid.dim))
    points[0] = x0
    x = x0
    for k in range(steps):
        k1 = _velocity(u, x)
        k2 = _velocity(u, x + 0.5 * d * k1)
        k3 = _velocity(u, x + 0.5 * d * k2)
        k4 = _velocity(u, x + d * k3)
        x = x + d * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        points[k + 1] = x

    # 2) field quantities along the curve
    try:
        shape = shape_from_field(u, points)
        lap = np.asarray(laplacian_at(u, points))
        values = np.asarray(sample(u, points))
    except (OutOfDomain, TooNearBoundary) as e:
        raise LeftDomain(f"trajectory left the safe interior: {e}", detail=points)
    velocity = np.stack([_velocity(u, p) for p in points])
    traj = FlowTrajectory(
        start=x0, taus=taus, points=points, sigma=np.asarray(shape.sigma), H=np.asarray(shape.H),
        lap_u=lap, defect=np.abs(values - taus), h_frobenius2=np.asarray(shape.h_frobenius2),
        nu=shape.nu, velocity=velocity, spacing=u.grid.spacing,
    )
    logger.debug(f"Integrated flow from {x0.tolist()} over [{t0}, {t1}] in {steps} steps; "
                 f"max defect {traj.defect.max():.3e}")
    return traj


def _centered(series: np.ndarray, taus: np.ndarray) -> np.ndarray:
    if len(series) < 3:
        raise TooShort(f"need at least 3 samples for centred differences, got {len(series)}", detail=len(series))
    return (series[2:] - series[:-2]) / (taus[2:] - taus[:-2])


def ode_residual_sigma(traj: FlowTrajectory) -> Dict[str, np.ndarray]:
    """
    Residuals of the sigma transport equation at interior samples, in both sign
    arrangements of the Laplacian term:
      A = dsigma/dtau + sigma^2 (H - sigma Lap u)
      B = dsigma/dtau + sigma^2 (H + sigma Lap u)
    """
    dsigma = _centered(traj.sigma, traj.taus)
    s = traj.sigma[1:-1]
    H = traj.H[1:-1]
    lap = traj.lap_u[1:-1]
    return {
        "A": dsigma + s * s * (H - s * lap),
        "B": dsigma + s * s * (H + s * lap),
        "taus": traj.taus[1:-1],
    }


def ode_residual_H(u: ScalarField, traj: FlowTrajectory, axis: int = -1) -> np.ndarray:
    """
    dH/dtau - LB(sigma) - sigma |h|^2 at interior samples; LB(sigma) is taken on
    the level extracted through each sample and interpolated to its base position.
    """
    dH = _centered(traj.H, traj.taus)
    surfaces: Dict[float, object] = {}
    lb_values: List[float] = []
    for tau, point in zip(traj.taus[1:-1], traj.points[1:-1]):
        key = float(tau)
        if key not in surfaces:
            S = extract_level(u, key, axis)
            lb = laplace_beltrami(S, S.sigma)
            surfaces[key] = RegularGridInterpolator(S.base_grid.axes(), lb, method="linear", bounds_error=True)
        base, _ = split_height(point, axis)
        lb_values.append(float(surfaces[key](base[None, :])[0]))
    lb_sigma = np.asarray(lb_values)
    return dH - lb_sigma - traj.sigma[1:-1] * traj.h_frobenius2[1:-1]


def check_timewise_derivative(traj: FlowTrajectory, phi: ScalarField) -> np.ndarray:
    """(1/sigma) d(phi o F)/dtau - d_nu phi at interior samples."""
    along = np.asarray(sample(phi, traj.points))
    dphi = _centered(along, traj.taus)
    normal = np.sum(np.asarray(gradient_at(phi, traj.points[1:-1])) * traj.nu[1:-1], axis=-1)
    return dphi / traj.sigma[1:-1] - normal


def normal_flow_angles(traj: FlowTrajectory) -> np.ndarray:
    """Angle between the velocity dF/dtau and nu at every sample."""
    along = np.sum(traj.velocity * traj.nu, axis=-1)
    across = np.linalg.norm(traj.velocity - along[:, None] * traj.nu, axis=-1)
    return np.arctan2(across, along)


def trajectory_rows(traj: FlowTrajectory) -> List[List[float]]:
    """Rows of the trajectory CSV: tau, point, sigma, H, lap_u, defect."""
    return [[float(t)] + list(map(float, p)) + [float(s), float(H), float(l), float(e)]
            for t, p, s, H, l, e in zip(traj.taus, traj.points, traj.sigma, traj.H, traj.lap_u, traj.defect)]


def integrate_many(u: ScalarField, starts: Sequence, dtau: float, executor=None) -> List[FlowTrajectory]:
    """Independent trajectories from (x0, tau_span) pairs; results in the order of `starts`."""
    if executor is None:
        return [integrate_flow(u, x0, span, dtau) for x0, span in starts]
    futures = [executor.submit(integrate_flow, u, x0, span, dtau) for x0, span in starts]
    return [f.result() for f in futures]

