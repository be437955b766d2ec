# === fbac_lab/verify.py ===

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from fbac_lab import __version__
from fbac_lab.errors import FbacError, NotHarmonic
from fbac_lab.field import (
    analytic_field,
    derivative_mask,
    gradient_at,
    laplacian_at,
    layer_mask,
    nodal_gradient,
    nodal_hessian,
    nodal_laplacian,
    restrict_to_graph,
    sigma_field,
)
from fbac_lab.flow import integrate_many, ode_residual_H, ode_residual_sigma, start_on_level
from fbac_lab.levelset import (
    base_node_indices,
    eta_from_surfaces,
    extract_level,
    free_boundary_sigma,
    holder_norm,
    laplace_beltrami,
    shape_from_field,
    solution_surface,
)
from fbac_lab.models import (
    BarrierCheck,
    BoundsCheck,
    GeometryReport,
    LevelSurface,
    Region,
    ResidualStats,
    ScalarField,
    Solution,
)
from fbac_lab.solver import fb_residual

logger = logging.getLogger(__name__)

# levels curved less than this (radius over 1000, base width 2) count as flat
ETA_FLOOR = 1e-3
ETA_HYPOTHESIS = 0.5
HARMONIC_GATE = 100.0
BARRIER_SLACK = 50.0
INTERIOR = Region(0.5)
DEFAULT_TAUS = tuple(np.round(np.linspace(-1.0, 1.0, 21), 12))


# ---------------------------------------------------------------------------
# Sample sets
# ---------------------------------------------------------------------------

def _surfaces(u: ScalarField, taus: Sequence[float], axis: int) -> List[LevelSurface]:
    return [extract_level(u, float(tau), axis) for tau in taus]


def _on_level(surface: LevelSurface, base_points) -> np.ndarray:
    """Flat base-node indices of the sample set on this level."""
    if base_points is None:
        return np.arange(surface.base_grid.size)
    return base_node_indices(surface.base_grid, base_points)


def _rows(a: np.ndarray, base_shape) -> np.ndarray:
    """Per-base-node data (*base, ...) flattened to (n_base, ...)."""
    k = len(base_shape)
    return a.reshape((int(np.prod(base_shape)),) + a.shape[k:])


# ---------------------------------------------------------------------------
# Identity checks
# ---------------------------------------------------------------------------

def check_decomposition(u: ScalarField, phi: ScalarField, taus: Sequence[float], base_points=None,
                        axis: int = -1) -> Dict[str, ResidualStats]:
    """
    Laplacian phi against LB(phi|level) + d_nu nu phi - H d_nu phi on each level.
    `flipped` is the arrangement with +H d_nu phi, kept as a sign diagnostic.
    """
    if phi.grid != u.grid:
        raise ValueError("phi and u must live on the same grid")
    grid = u.grid
    valid = layer_mask(phi, axis)
    dvalid = derivative_mask(phi)
    conv: List[np.ndarray] = []
    flip: List[np.ndarray] = []
    for S in _surfaces(u, taus, axis):
        idx = _on_level(S, base_points)
        base_shape = S.base_grid.shape
        f = restrict_to_graph(phi.values, grid, S.heights, axis, valid)
        lb = _rows(laplace_beltrami(S, f), base_shape)[idx]
        grad = _rows(restrict_to_graph(nodal_gradient(phi), grid, S.heights, axis, dvalid, True), base_shape)[idx]
        hess = _rows(restrict_to_graph(nodal_hessian(phi), grid, S.heights, axis, dvalid, True), base_shape)[idx]
        nu = _rows(S.nu, base_shape)[idx]
        H = _rows(S.H, base_shape)[idx]
        lap = np.trace(hess, axis1=-2, axis2=-1)
        d_nn = np.einsum("ki,kij,kj->k", nu, hess, nu)
        d_n = np.sum(grad * nu, axis=-1)
        conv.append(lap - (lb + d_nn - H * d_n))
        flip.append(lap - (lb + d_nn + H * d_n))
    h = grid.spacing
    return {
        "convention": ResidualStats.from_values("lemma21", np.concatenate(conv), h),
        "flipped": ResidualStats.from_values("lemma21_flipped", np.concatenate(flip), h),
    }


def _level_points(u: ScalarField, taus: Sequence[float], base_points, axis: int) -> np.ndarray:
    pts = []
    for S in _surfaces(u, taus, axis):
        idx = _on_level(S, base_points)
        pts.append(_rows(S.ambient_points(), S.base_grid.shape)[idx])
    return np.concatenate(pts)


def check_sigma_elliptic(u: ScalarField, taus: Sequence[float], base_points=None,
                         axis: int = -1) -> Dict[str, Any]:
    """
    printed   = Lap sigma - sigma (2H^2 - |h|^2)
    corrected = printed - |grad_Gamma sigma|^2 / sigma
    with sigma = 1/|grad u| as an ambient field. u must be harmonic at the samples.
    Without base_points the samples sit above base nodes at least 2h inside.
    """
    h = u.grid.spacing
    if base_points is None:
        base = u.grid.drop_axis(axis)
        nodes = base.coordinates().reshape(-1, base.dim)
        base_points = nodes[base.distance_to_boundary(nodes) >= 2 * h - 1e-12]
    points = _level_points(u, taus, base_points, axis)
    lap_u = np.asarray(laplacian_at(u, points))
    worst = float(np.max(np.abs(lap_u), initial=0.0))
    if worst >= HARMONIC_GATE * h * h:
        raise NotHarmonic(f"|Lap u| = {worst:.3e} >= {HARMONIC_GATE:g} h^2 at the samples", detail=worst)

    sig = sigma_field(u)
    shape = shape_from_field(u, points)
    lap_sigma = np.asarray(laplacian_at(sig, points))
    grad_sigma = np.asarray(gradient_at(sig, points))
    s = np.asarray(shape.sigma)
    H = np.asarray(shape.H)
    printed = lap_sigma - s * (2.0 * H * H - shape.h_frobenius2)
    normal = np.sum(grad_sigma * shape.nu, axis=-1)
    tangential = grad_sigma - normal[:, None] * shape.nu
    corrected = printed - np.sum(tangential * tangential, axis=-1) / s
    return {
        "printed": ResidualStats.from_values("elliptic_printed", printed, h),
        "corrected": ResidualStats.from_values("elliptic_corrected", corrected, h),
        "points": points,
        "printed_values": printed,
    }


# ---------------------------------------------------------------------------
# Solved instances: bounds and barrier
# ---------------------------------------------------------------------------

def level_surfaces(sol: Solution, taus: Sequence[float] = DEFAULT_TAUS, threads: int = 1) -> List[LevelSurface]:
    """Levels of a solution, free boundaries at +-1; results in the order of `taus`."""
    if threads <= 1:
        return [solution_surface(sol, float(t)) for t in taus]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(solution_surface, sol, float(t)) for t in taus]
        return [f.result() for f in futures]


def _sigma_dev(S: LevelSurface, eps: float, region: Optional[Region] = None) -> float:
    dev = np.abs(S.sigma - eps)
    if region is not None:
        dev = dev[region.mask(S.base_points)]
    return float(np.nanmax(dev)) if np.any(np.isfinite(dev)) else float("nan")


def measured_eta(surfaces: Sequence[LevelSurface]) -> float:
    eta = eta_from_surfaces(surfaces)
    if eta >= ETA_HYPOTHESIS:
        logger.warning(f"measured eta = {eta:.4g} violates the small-curvature hypothesis eta < {ETA_HYPOTHESIS}")
    return eta


def check_bounds(sol: Solution, surfaces: Optional[Sequence[LevelSurface]] = None,
                 eta: Optional[float] = None) -> BoundsCheck:
    """
    C_naive = sup |sigma - eps| / (eps^2 eta) over all levels and base nodes,
    C_interior = sup over |x| <= 1/2 of |sigma - eps| / (eps^3 eta^2).
    """
    surfaces = level_surfaces(sol) if surfaces is None else surfaces
    eps = sol.eps
    eta = measured_eta(surfaces) if eta is None else eta
    dev = max(_sigma_dev(S, eps) for S in surfaces)
    dev_in = max(_sigma_dev(S, eps, INTERIOR) for S in surfaces)
    if eta < ETA_FLOOR:
        return BoundsCheck(eta, dev, dev_in, None, None, applicable=False)
    return BoundsCheck(eta, dev, dev_in, dev / (eps * eps * eta), dev_in / (eps ** 3 * eta * eta), applicable=True)


def _layer_nodes(sol: Solution, margin: float) -> np.ndarray:
    grid = sol.u.grid
    y = grid.axes()[-1]
    gm = sol.gamma_minus.reshape(-1, 1)
    gp = sol.gamma_plus.reshape(-1, 1)
    inside = (y[None, :] >= gm + margin - 1e-12) & (y[None, :] <= gp - margin + 1e-12)
    return inside.reshape(grid.shape)


def _barrier(sol: Solution, eta: float):
    n = sol.base_grid.dim
    eps = sol.eps
    C_tau = 6.0 * n * eps * eta * eta
    C_x = 4.0 * eps * eta * eta
    x2 = np.sum(sol.u.grid.coordinates()[..., :-1] ** 2, axis=-1)
    phi = C_tau * eps * eps * (1.0 - sol.u.values ** 2) + C_x * x2
    return C_tau, C_x, phi


def check_comparison(sol: Solution, eta: float) -> float:
    """min of Phi - |sigma - eps| over interior layer nodes (>= 0 when the barrier dominates)."""
    h = sol.u.grid.spacing
    _, _, phi = _barrier(sol, eta)
    nodes = _layer_nodes(sol, 3 * h)
    sig = sigma_field(sol.u).values
    return float(np.min((phi - np.abs(sig - sol.eps))[nodes], initial=np.inf))


def check_barrier(sol: Solution, eta: Optional[float] = None) -> BarrierCheck:
    """
    Supersolution test for Phi = C_tau eps^2 (1 - u^2) + C_x |x|^2 with
    C_tau = 6 n eps eta^2, C_x = 4 eps eta^2. Margins (all >= 0 or < 0 as noted):
      laplacian_phi   max(Lap Phi) + 2 n eps eta^2           (< 0)
      laplacian_sigma min(Lap sigma) + 2 n eps eta^2 + 50 h^2 (>= 0)
      free_boundary   min Phi on the free boundaries         (>= 0)
      lateral         min(C_x - (sigma - eps)) on lateral layer nodes (>= 0)
    """
    if eta is None:
        eta = check_bounds(sol).eta
    if eta < ETA_FLOOR:
        return BarrierCheck("not_applicable", False, 0.0, 0.0, {})
    u = sol.u
    grid = u.grid
    h = grid.spacing
    n = sol.base_grid.dim
    eps = sol.eps
    C_tau, C_x, _ = _barrier(sol, eta)
    floor = 2.0 * n * eps * eta * eta

    interior = _layer_nodes(sol, 3 * h) & (grid.distance_to_boundary(grid.coordinates()) >= 3 * h - 1e-12)
    sig = sigma_field(u).values
    safe = np.where(sig > 0, sig, np.nan)
    lap_phi = 2.0 * n * C_x - 2.0 * C_tau * eps * eps / safe ** 2
    lap_sigma = nodal_laplacian(sigma_field(u))
    margins: Dict[str, float] = {
        "laplacian_phi": float(np.nanmax(lap_phi[interior]) + floor) if np.any(interior) else float("nan"),
        "laplacian_sigma": float(np.min(lap_sigma[interior]) + floor + BARRIER_SLACK * h * h)
        if np.any(interior) else float("nan"),
    }
    x_base = sol.base_grid.coordinates()
    margins["free_boundary"] = float(np.min(C_x * np.sum(x_base ** 2, axis=-1)))

    lateral = np.zeros(grid.shape, dtype=bool)
    for k in range(n):
        idx = [slice(None)] * grid.dim
        idx[k] = 0
        lateral[tuple(idx)] = True
        idx[k] = -1
        lateral[tuple(idx)] = True
    lateral &= _layer_nodes(sol, 3 * h)
    margins["lateral"] = float(np.min((C_x - (sig - eps))[lateral], initial=np.inf))
    margins["comparison"] = check_comparison(sol, eta)
    margins["analytic_laplacian_phi"] = -4.0 * n * eps * eta * eta + floor

    ok = (margins["laplacian_phi"] < 0 and margins["laplacian_sigma"] >= 0
          and margins["free_boundary"] >= 0 and margins["lateral"] >= 0)
    status = "ok" if ok else "violated"
    logger.info(f"Barrier check: {status} (C_tau={C_tau:.4g}, C_x={C_x:.4g})")
    return BarrierCheck(status, ok, C_tau, C_x, margins)


def check_mean_curvature_bound(sol: Solution, surfaces: Optional[Sequence[LevelSurface]] = None) -> Dict[str, Any]:
    """|sigma - eps| against eps/(1 - eps sup|H|) - eps, the bound that only uses H."""
    surfaces = level_surfaces(sol) if surfaces is None else surfaces
    eps = sol.eps
    H_max = max(float(np.nanmax(np.abs(S.H))) for S in surfaces)
    dev = max(_sigma_dev(S, eps) for S in surfaces)
    out: Dict[str, Any] = {"H_max": H_max, "sup_sigma_dev": dev, "C_mean_curvature": None, "C_remark": None}
    if H_max < ETA_FLOOR:
        return out
    out["C_mean_curvature"] = dev / (eps * eps * H_max)
    if eps * H_max < 1.0:
        bound = eps / (1.0 - eps * H_max) - eps
        out["remark_bound"] = bound
        out["C_remark"] = dev / bound
    return out


def check_flux_identity(sol: Solution, region: Region = INTERIOR) -> Dict[str, Any]:
    """Graph mean curvature of each free boundary against -d_nu sigma / sigma."""
    h = sol.u.grid.spacing
    out: Dict[str, Any] = {"h": h}
    worst = 0.0
    for name, side in (("minus", -1), ("plus", 1)):
        S = solution_surface(sol, float(side))
        sigma, dsigma = free_boundary_sigma(sol, side)
        H_flux = -dsigma / sigma
        mask = region.mask(S.base_points) & np.isfinite(H_flux)
        diff = float(np.max(np.abs(H_flux - S.H)[mask], initial=0.0))
        out[name] = diff
        worst = max(worst, diff)
    out["max_diff"] = worst
    out["within_20h"] = bool(worst <= 20.0 * h)
    return out


def check_gradient_holder(sol: Solution, alpha: float, eta: float, region: Region = INTERIOR) -> Dict[str, Any]:
    """||d_nu sigma||_{C^alpha} on the free boundaries, as a ratio to eps^(2-alpha) eta^2."""
    eps = sol.eps
    norms = []
    for side in (-1, 1):
        S = solution_surface(sol, float(side))
        _, dsigma = free_boundary_sigma(sol, side)
        finite = np.isfinite(dsigma)
        keep = region.mask(S.base_points) & finite
        if not np.any(keep):
            continue
        norms.append(holder_norm(dsigma[keep], alpha, S.base_points[keep]).total)
    total = max(norms) if norms else float("nan")
    ratio = total / (eps ** (2.0 - alpha) * eta * eta) if eta >= ETA_FLOOR and norms else None
    return {"alpha": alpha, "norm": total, "C_grad_sigma": ratio}


def mode_agreement(sol_a: Solution, sol_b: Solution) -> float:
    """sup |u_a - u_b| over the nodes inside both layers."""
    if sol_a.u.grid != sol_b.u.grid:
        raise ValueError("solutions live on different grids")
    common = (np.abs(sol_a.u.values) < 1.0) & (np.abs(sol_b.u.values) < 1.0)
    return float(np.max(np.abs(sol_a.u.values - sol_b.u.values)[common], initial=0.0))


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

def _stats_dict(stats: ResidualStats) -> Dict[str, Any]:
    return stats.as_dict()


def _residual_suite(sol: Solution, dtau: float) -> Dict[str, Any]:
    """Identity residuals on interior levels of a solved instance, sampled over |x| <= 1/2."""
    u = sol.u
    h = u.grid.spacing
    base_grid = sol.base_grid
    pts = base_grid.coordinates().reshape(-1, base_grid.dim)
    inner = pts[INTERIOR.mask(pts)]
    taus = (-0.5, 0.0, 0.5)
    out: Dict[str, Any] = {}

    phi = analytic_field("radius_squared", {"c": 0.0}, u.grid)
    out["lemma21"] = _stats_dict(check_decomposition(u, phi, taus, inner)["convention"])

    starts = []
    for x in (np.zeros(base_grid.dim), np.full(base_grid.dim, -0.25), np.full(base_grid.dim, 0.25)):
        try:
            starts.append((start_on_level(u, x, -0.5), (-0.5, 0.5)))
        except FbacError as e:
            logger.warning(f"skipping flow start above {x.tolist()}: {e}")
    try:
        trajs = integrate_many(u, starts, dtau)
        sig_res = [ode_residual_sigma(t) for t in trajs]
        out["ode_sigma_A"] = _stats_dict(ResidualStats.from_values(
            "ode_sigma_A", np.concatenate([r["A"] for r in sig_res]) if sig_res else [], h, dtau))
        out["ode_sigma_B"] = _stats_dict(ResidualStats.from_values(
            "ode_sigma_B", np.concatenate([r["B"] for r in sig_res]) if sig_res else [], h, dtau))
        out["ode_H"] = _stats_dict(ResidualStats.from_values(
            "ode_H", np.concatenate([ode_residual_H(u, t) for t in trajs]) if trajs else [], h, dtau))
    except FbacError as e:
        logger.warning(f"flow residuals unavailable: {e}")
        for key in ("ode_sigma_A", "ode_sigma_B", "ode_H"):
            out[key] = {"status": "unavailable", "reason": str(e)}

    try:
        ell = check_sigma_elliptic(u, taus, inner)
        out["elliptic_printed"] = _stats_dict(ell["printed"])
        out["elliptic_corrected"] = _stats_dict(ell["corrected"])
    except NotHarmonic as e:
        logger.warning(f"elliptic residuals skipped: {e}")
        out["elliptic_printed"] = out["elliptic_corrected"] = {"status": "not_harmonic", "reason": str(e)}
    return out


def theorem_report(sol: Solution, alphas: Sequence[float] = (0.25, 0.5, 0.75),
                   taus: Sequence[float] = DEFAULT_TAUS, threads: int = 1,
                   dtau: float = 1.0 / 32.0) -> GeometryReport:
    """
    Hoelder norms of h and H on |x| <= 1/2 for every level and alpha, the bound
    and barrier checks, the free-boundary flux identity and the identity residuals.
    """
    timings: Dict[str, float] = {}
    t0 = time.perf_counter()
    eps = sol.eps
    h = sol.u.grid.spacing

    # 1) levels
    surfaces = level_surfaces(sol, taus, threads)
    timings["levels"] = time.perf_counter() - t0
    eta = measured_eta(surfaces)
    applicable = eta >= ETA_FLOOR

    # 2) per-level Hoelder table
    t1 = time.perf_counter()
    levels: List[Dict[str, Any]] = []
    C_thm_h = {f"{a:g}": 0.0 for a in alphas}
    C_thm_H = {f"{a:g}": 0.0 for a in alphas}
    for S in surfaces:
        row: Dict[str, Any] = {
            "tau": S.tau,
            "extrapolated": S.extrapolated,
            "sup_sigma_dev": _sigma_dev(S, eps),
            "sup_sigma_dev_interior": _sigma_dev(S, eps, INTERIOR),
            "holder": {},
        }
        for a in alphas:
            nh = holder_norm(S.shape_operator, a, S.base_points, INTERIOR)
            nH = holder_norm(S.H, a, S.base_points, INTERIOR)
            row["holder"][f"{a:g}"] = {"h": nh.total, "H": nH.total}
            if applicable:
                C_thm_h[f"{a:g}"] = max(C_thm_h[f"{a:g}"], nh.total / eta)
                C_thm_H[f"{a:g}"] = max(C_thm_H[f"{a:g}"], nH.total / (eps ** (1.0 - a) * eta * eta))
        levels.append(row)
    timings["holder"] = time.perf_counter() - t1

    # 3) bounds, barrier, free boundary
    t2 = time.perf_counter()
    bounds = check_bounds(sol, surfaces, eta)
    barrier = check_barrier(sol, eta)
    mean_curv = check_mean_curvature_bound(sol, surfaces)
    flux = check_flux_identity(sol)
    grad_holder = {f"{a:g}": check_gradient_holder(sol, a, eta)["C_grad_sigma"] for a in alphas}
    fb = fb_residual(sol)
    timings["bounds"] = time.perf_counter() - t2

    # 4) identity residuals
    t3 = time.perf_counter()
    residuals = _residual_suite(sol, dtau)
    timings["residuals"] = time.perf_counter() - t3

    ratios: Dict[str, Any] = {
        "applicable": applicable,
        "C_naive": bounds.C_naive,
        "C_interior": bounds.C_interior,
        "C_thm_h": C_thm_h if applicable else None,
        "C_thm_H": C_thm_H if applicable else None,
        "C_mean_curvature": mean_curv["C_mean_curvature"],
        "C_remark": mean_curv["C_remark"],
        "C_grad_sigma": grad_holder if applicable else None,
    }
    cfg = sol.config
    instance = {
        "eps": eps,
        "h": h,
        "gamma0": str(cfg.gamma0) if cfg is not None else None,
        "mode": sol.mode,
        "label": sol.u.label,
        "base_dim": sol.base_grid.dim,
    }
    report = GeometryReport(
        instance=instance,
        eta=eta,
        levels=levels,
        ratios=ratios,
        residuals=residuals,
        barrier={"status": barrier.status, "is_supersolution": barrier.is_supersolution,
                 "C_tau": barrier.C_tau, "C_x": barrier.C_x, "margins": barrier.margins,
                 "comparison_margin": barrier.margins.get("comparison")},
        grid={"h": h, "dtau": dtau, "shape": list(sol.u.grid.shape), "region": INTERIOR.describe(),
              "taus": [float(t) for t in taus], "alphas": [float(a) for a in alphas]},
        version=__version__,
        extras={
            "sup_sigma_dev": bounds.sup_sigma_dev,
            "sup_sigma_dev_interior": bounds.sup_sigma_dev_interior,
            "free_boundary_flux": flux,
            "mean_curvature_bound": mean_curv,
            "fb_residual": {"interior_harmonicity": fb.interior_harmonicity, "boundary_flux": fb.boundary_flux},
        },
        timings=timings,
    )
    logger.info(f"Geometry report: eta={eta:.4g}, C_naive={bounds.C_naive}, C_interior={bounds.C_interior}")
    return report
