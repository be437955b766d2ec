# === fbac_lab/solver.py ===

import logging
import math
import warnings
from typing import Optional, Tuple

import numpy as np
from scipy.fft import dstn, idstn
from scipy.sparse import coo_matrix, csr_matrix, diags
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from fbac_lab.config_loader import solver_box
from fbac_lab.errors import (
    BadDelta,
    Divergence,
    FbacError,
    MaxIterations,
    NonMonotoneColumn,
)
from fbac_lab.field import build_grid, gradient_at, nodal_laplacian
from fbac_lab.levelset import base_derivatives, extract_level, graph_normal
from fbac_lab.models import (
    ConvergenceLog,
    FbResidual,
    Grid,
    ScalarField,
    Solution,
    SolverConfig,
    insert_height,
)
from fbac_lab.slab_solver import default_layers, resample, solve_slab

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MAX_BACKTRACKS = 30
ROUNDOFF = 1e-14
DIVERGENCE_RUN = 20
# the minimiser works with W/2, whose minimisers satisfy eps |grad u| = 1
VARIATIONAL_POTENTIAL_SCALE = 0.5


def ambient_grid(cfg: SolverConfig) -> Grid:
    return build_grid(solver_box(cfg), cfg.spacing)


# ---------------------------------------------------------------------------
# Boundary data and energy
# ---------------------------------------------------------------------------

def profile_boundary_data(gamma0, eps: float, p) -> np.ndarray:
    """
    Tilted 1D profile matched to the seed graph:
    clamp((y - gamma0(x)) / (eps sqrt(1 + |D gamma0(x)|^2)), -1, 1). Vectorised over p (..., n+1).
    """
    pts = np.asarray(p, dtype=float)
    base, y = pts[..., :-1], pts[..., -1]
    slope = gamma0.gradient(base)
    W = np.sqrt(1.0 + np.sum(slope * slope, axis=-1))
    return np.clip((y - gamma0(base)) / (eps * W), -1.0, 1.0)


def smoothed_potential(t, delta: float) -> np.ndarray:
    """s_delta: 1 on |t| <= 1-delta, q^2 (3 - 2q) with q = (1-|t|)/delta up to |t| = 1, 0 beyond."""
    a = np.abs(np.asarray(t, dtype=float))
    q = np.clip((1.0 - a) / delta, 0.0, 1.0)
    return q * q * (3.0 - 2.0 * q)


def smoothed_potential_derivative(t, delta: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    q = np.clip((1.0 - np.abs(t)) / delta, 0.0, 1.0)
    return -np.sign(t) * 6.0 * q * (1.0 - q) / delta


def smoothed_potential_curvature(t, delta: float) -> np.ndarray:
    """s_delta'' with the inward one-sided value 6/delta^2 at |t| >= 1; 0 on the plateau."""
    a = np.abs(np.asarray(t, dtype=float))
    q = np.clip((1.0 - a) / delta, 0.0, 1.0)
    return np.where(a > 1.0 - delta, (6.0 - 12.0 * q) / (delta * delta), 0.0)


def _check_delta(delta: float):
    if not 0 < delta < 1:
        raise BadDelta(f"smoothing width delta must lie in (0, 1), got {delta}", detail=delta)


def trapezoid_weights(grid: Grid) -> np.ndarray:
    """Tensor-product trapezoid weights at the nodes."""
    w = np.ones(grid.shape)
    for k, n in enumerate(grid.shape):
        line = np.full(n, grid.spacing)
        line[0] = line[-1] = 0.5 * grid.spacing
        shape = [1] * grid.dim
        shape[k] = n
        w = w * line.reshape(shape)
    return w


def _edge_weights(grid: Grid, axis: int) -> np.ndarray:
    """Weights of the edges along `axis`: edge length times trapezoid weights across."""
    w = np.full(tuple(n - (1 if k == axis else 0) for k, n in enumerate(grid.shape)), 1.0)
    for k, n in enumerate(grid.shape):
        if k == axis:
            line = np.full(n - 1, grid.spacing)
        else:
            line = np.full(n, grid.spacing)
            line[0] = line[-1] = 0.5 * grid.spacing
        shape = [1] * grid.dim
        shape[k] = line.size
        w = w * line.reshape(shape)
    return w


def energy(u: ScalarField, eps: float, delta: float, potential_scale: float = 1.0,
           stencil: str = "central") -> float:
    """
    Trapezoidal value of  int eps |grad u|^2 / 2 + potential_scale * s_delta(u) / eps.
    `central` uses nodal central differences (one-sided at the boundary),
    `compact` the edge differences the minimiser descends on.
    """
    _check_delta(delta)
    grid = u.grid
    weights = trapezoid_weights(grid)
    potential = float(np.sum(weights * smoothed_potential(u.values, delta))) * potential_scale / eps
    if stencil == "central":
        parts = np.gradient(u.values, grid.spacing, edge_order=1)
        if grid.dim == 1:
            parts = [parts]
        sq = sum(p * p for p in parts)
        gradient = 0.5 * eps * float(np.sum(weights * sq))
    elif stencil == "compact":
        gradient = _compact_gradient_energy(u.values, grid, eps)
    else:
        raise ValueError(f"unknown stencil '{stencil}' (central, compact)")
    return gradient + potential


def _compact_gradient_energy(values: np.ndarray, grid: Grid, eps: float) -> float:
    total = 0.0
    for k in range(grid.dim):
        d = np.diff(values, axis=k) / grid.spacing
        total += float(np.sum(_edge_weights(grid, k) * d * d))
    return 0.5 * eps * total


class _CompactEnergy:
    """Compact-stencil energy and its gradient for one smoothing width."""

    def __init__(self, grid: Grid, eps: float, delta: float, potential_scale: float):
        self.grid = grid
        self.eps = eps
        self.delta = delta
        self.scale = potential_scale
        self.node_weights = trapezoid_weights(grid)
        self.edge_weights = [_edge_weights(grid, k) for k in range(grid.dim)]

    def value(self, values: np.ndarray) -> float:
        potential = float(np.sum(self.node_weights * smoothed_potential(values, self.delta)))
        return _compact_gradient_energy(values, self.grid, self.eps) + self.scale * potential / self.eps

    def gradient(self, values: np.ndarray) -> np.ndarray:
        h = self.grid.spacing
        g = self.scale * self.node_weights * smoothed_potential_derivative(values, self.delta) / self.eps
        for k, w in enumerate(self.edge_weights):
            flux = self.eps * w * np.diff(values, axis=k) / (h * h)
            lo = [slice(None)] * self.grid.dim
            hi = [slice(None)] * self.grid.dim
            lo[k], hi[k] = slice(0, -1), slice(1, None)
            g[tuple(lo)] -= flux
            g[tuple(hi)] += flux
        return g

    def curvature(self, values: np.ndarray) -> np.ndarray:
        """Diagonal of the potential Hessian."""
        return self.scale * self.node_weights * smoothed_potential_curvature(values, self.delta) / self.eps

    def stiffness(self) -> csr_matrix:
        """K with compact gradient energy u^T K u / 2."""
        h = self.grid.spacing
        index = np.arange(self.grid.size).reshape(self.grid.shape)
        rows, cols, data = [], [], []
        for k, w in enumerate(self.edge_weights):
            lo = [slice(None)] * self.grid.dim
            hi = [slice(None)] * self.grid.dim
            lo[k], hi[k] = slice(0, -1), slice(1, None)
            i = index[tuple(lo)].ravel()
            j = index[tuple(hi)].ravel()
            c = self.eps * w.ravel() / (h * h)
            rows += [i, j, i, j]
            cols += [i, j, j, i]
            data += [c, c, -c, -c]
        n = self.grid.size
        return coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsr()


# ---------------------------------------------------------------------------
# Variational mode
# ---------------------------------------------------------------------------

def _boundary_mask(grid: Grid) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for k in range(grid.dim):
        idx = [slice(None)] * grid.dim
        idx[k] = 0
        mask[tuple(idx)] = True
        idx[k] = -1
        mask[tuple(idx)] = True
    return mask


def _descend_stage(values: np.ndarray, fixed: np.ndarray, functional: _CompactEnergy, cfg: SolverConfig,
                   log: ConvergenceLog, stage: int) -> Tuple[np.ndarray, bool]:
    """
    Projected Newton descent for one smoothing width.

    Nodes at +-1 whose gradient pushes outward are bound; the step solves the
    energy Hessian on the free nodes with a sparse LU. When that step is not a
    descent direction, or its line search fails, the concave part of the
    potential is dropped from the matrix. Armijo backtracking runs on the
    projected arc clamp(u + t d, -1, 1).
    """
    tol = cfg.eps * cfg.tol_fb
    shape = values.shape
    n = values.size
    stiffness = functional.stiffness()

    def project(v):
        out = np.clip(v, -1.0, 1.0)
        out[fixed] = values[fixed]
        return out

    E = functional.value(values)
    for _ in range(cfg.iteration_cap):
        g = functional.gradient(values)
        bound = fixed | ((values >= 1.0) & (g <= 0.0)) | ((values <= -1.0) & (g >= 0.0))
        free = np.flatnonzero(~bound.ravel())
        g_free = g.ravel()[free]
        if free.size == 0 or not np.any(g_free):
            return values, True

        K_free = stiffness[free][:, free]
        curvature = functional.curvature(values).ravel()[free]
        stationarity = None
        accepted = False
        for convex in (False, True):
            direction = _newton_direction(K_free, np.maximum(curvature, 0.0) if convex else curvature, g_free)
            if direction is None:
                continue
            step = np.zeros(n)
            step[free] = direction
            step = step.reshape(shape)
            if stationarity is None:
                stationarity = float(np.max(np.abs(project(values + step) - values)))
                if stationarity < tol:
                    return values, True
            found = _projected_line_search(values, step, g, E, functional, project)
            if found is not None:
                accepted = True
                values, E, t = found
                break
        if not accepted:
            logger.warning(f"stage {stage}: no descent step at energy {E:.12g}; stopping the stage")
            return values, False

        log.record(stationarity / cfg.eps, E, stage)
        logger.debug(f"stage {stage} it {log.iterations}: E={E:.12g} t={t:.3e} step={stationarity:.3e} "
                     f"free={free.size}")

    return values, False


def _newton_direction(matrix, curvature: np.ndarray, g: np.ndarray) -> Optional[np.ndarray]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MatrixRankWarning)
        d = spsolve((matrix + diags(curvature)).tocsc(), -g)
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if not np.all(np.isfinite(d)) or float(g @ d) >= 0.0:
        return None
    return d


def _projected_line_search(values, step, g, E, functional, project):
    t = 1.0
    slack = ROUNDOFF * max(1.0, abs(E))
    for _ in range(MAX_BACKTRACKS):
        trial = project(values + t * step)
        decrease = float(np.sum(g * (values - trial)))
        if decrease > 0.0:
            E_trial = functional.value(trial)
            if E_trial <= E - ARMIJO_C * decrease + slack:
                return trial, E_trial, t
        t *= 0.5
    return None


def _extrapolated_boundaries(u: ScalarField, tau_star: float):
    """
    gamma_+- from the +-tau_star level graphs, extrapolated linearly in tau with
    d gamma / d tau = sigma sqrt(1 + |D gamma|^2).
    """
    upper = extract_level(u, tau_star)
    lower = extract_level(u, -tau_star)
    W_up = np.sqrt(1.0 + np.sum(upper.dgamma ** 2, axis=-1))
    W_lo = np.sqrt(1.0 + np.sum(lower.dgamma ** 2, axis=-1))
    gamma_plus = upper.heights + (1.0 - tau_star) * upper.sigma * W_up
    gamma_minus = lower.heights - (1.0 - tau_star) * lower.sigma * W_lo
    return lower, upper, gamma_minus, gamma_plus


def _fill_band(values: np.ndarray, grid: Grid, lower, upper, gamma_minus, gamma_plus, tau_star: float) -> np.ndarray:
    """Linear extrapolation between the tau_star levels and gamma_+-, +-1 beyond."""
    y = grid.axes()[-1]
    cols = values.reshape(-1, grid.shape[-1]).copy()
    gp = gamma_plus.reshape(-1, 1)
    gm = gamma_minus.reshape(-1, 1)
    yu = upper.heights.reshape(-1, 1)
    yl = lower.heights.reshape(-1, 1)
    Y = np.broadcast_to(y, cols.shape)
    top = (Y > yu) & (Y < gp)
    ramp_up = tau_star + (1.0 - tau_star) * (Y - yu) / (gp - yu)
    cols[top] = ramp_up[top]
    cols[Y >= gp] = 1.0
    bottom = (Y < yl) & (Y > gm)
    ramp_down = -tau_star - (1.0 - tau_star) * (yl - Y) / (yl - gm)
    cols[bottom] = ramp_down[bottom]
    cols[Y <= gm] = -1.0
    return cols.reshape(values.shape)


def _check_monotone(u: ScalarField):
    cols = u.values.reshape(-1, u.grid.shape[-1])
    layer = np.abs(cols) < 1.0
    both = layer[:, :-1] & layer[:, 1:]
    bad = both & (np.diff(cols, axis=1) <= 0)
    if np.any(bad):
        k = int(np.argmax(np.any(bad, axis=1)))
        node = np.unravel_index(k, u.grid.shape[:-1])
        raise NonMonotoneColumn(f"u is not strictly increasing inside the layer at base node "
                                f"{tuple(int(i) for i in node)}", detail=node)


def _harmonic_part(values: np.ndarray, delta: float, previous: Optional[np.ndarray] = None,
                   delta_prev: Optional[float] = None) -> np.ndarray:
    """
    Field the free boundaries are read from. Nodes off the potential band
    (|u| < 1 - delta) and their first vertical neighbour keep their values,
    the rest is pinned to +-1. Given the previous stage, the kept values are
    extrapolated to delta -> 0 assuming an O(delta^2) layer compression.
    """
    harmonic = np.abs(values) < 1.0 - delta
    combined = values
    if previous is not None:
        harmonic &= np.abs(previous) < 1.0 - delta_prev
        weight = delta * delta / (delta_prev * delta_prev - delta * delta)
        combined = np.clip(values + weight * (values - previous), -1.0, 1.0)
    kept = harmonic.copy()
    kept[..., 1:] |= harmonic[..., :-1]
    kept[..., :-1] |= harmonic[..., 1:]
    return np.where(kept, combined, np.sign(values))


def _variational_solution(values, grid, cfg, log, delta_last, previous=None, delta_prev=None) -> Solution:
    tau_star = 1.0 - 2.0 * delta_last
    core = _harmonic_part(values, delta_last, previous, delta_prev)
    raw = ScalarField(grid, core, "variational (raw)", cfg.eps)
    lower, upper, gamma_minus, gamma_plus = _extrapolated_boundaries(raw, tau_star)
    filled = _fill_band(core, grid, lower, upper, gamma_minus, gamma_plus, tau_star)
    u = ScalarField(grid, filled, f"solution {cfg.describe()}", cfg.eps)
    _check_monotone(u)
    return Solution(u, gamma_minus, gamma_plus, log, "variational", cfg)


def minimize_variational(cfg: SolverConfig) -> Solution:
    """
    delta-continuation of projected Newton descent on the compact-stencil
    energy, then free boundaries by extrapolating the +-(1 - 2 delta_last) levels.
    """
    grid = ambient_grid(cfg)
    fixed = _boundary_mask(grid)
    values = profile_boundary_data(cfg.gamma0, cfg.eps, grid.coordinates())
    log = ConvergenceLog()
    logger.info(f"Variational solve: {cfg.describe()}, grid {grid.shape}, deltas {list(cfg.deltas)}")

    converged = False
    previous = None
    for stage, delta in enumerate(cfg.deltas):
        _check_delta(delta)
        if stage == len(cfg.deltas) - 1:
            previous = values if converged else None
        functional = _CompactEnergy(grid, cfg.eps, delta, VARIATIONAL_POTENTIAL_SCALE)
        before = log.iterations
        values, converged = _descend_stage(values, fixed, functional, cfg, log, stage)
        used = log.iterations - before
        if converged:
            logger.info(f"stage {stage} (delta={delta:g}) converged after {used} iterations")
        elif stage < len(cfg.deltas) - 1:
            logger.warning(f"stage {stage} (delta={delta:g}) stopped after {used} iterations without "
                           f"meeting the projected-step tolerance")

    delta_last = cfg.deltas[-1]
    log.converged = converged
    if not converged:
        log.message = f"final stage did not reach eps*tol_fb within {cfg.iteration_cap} iterations"
        try:
            partial = _variational_solution(values, grid, cfg, log, delta_last)
        except FbacError as e:
            logger.warning(f"partial solution unavailable: {e}")
            partial = log
        raise MaxIterations(log.message, detail=partial)

    delta_prev = cfg.deltas[-2] if len(cfg.deltas) > 1 else None
    if previous is not None and delta_last < delta_prev <= 2.0 * delta_last:
        logger.info(f"extrapolating the layer from delta={delta_prev:g} and delta={delta_last:g}")
    else:
        previous = None
    log.message = "converged"
    return _variational_solution(values, grid, cfg, log, delta_last, previous, delta_prev)


# ---------------------------------------------------------------------------
# Trial free-boundary mode
# ---------------------------------------------------------------------------

def _lateral_mask(base_grid: Grid) -> np.ndarray:
    return _boundary_mask(base_grid)


def _flux_response(base_grid: Grid, width: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Flux response of a flat slab of the given width to a boundary mode
    sin(k.x) vanishing on the lateral nodes: kappa tanh(kappa W / 2) when both
    graphs move together, kappa coth(kappa W / 2) when they move apart, with
    kappa the wavenumber of the discrete base Laplacian. Shape: interior base block.
    """
    h = base_grid.spacing
    kappa2 = 0.0
    for k, n in enumerate(base_grid.shape):
        m = n - 2
        wave = (2.0 / h) * np.sin(np.pi * np.arange(1, m + 1) / (2.0 * (m + 1)))
        shape = [1] * base_grid.dim
        shape[k] = m
        kappa2 = kappa2 + (wave * wave).reshape(shape)
    kappa = np.sqrt(kappa2)
    half = 0.5 * kappa * width
    return kappa * np.tanh(half), kappa / np.tanh(half)


def _graph_update(defect_minus: np.ndarray, defect_plus: np.ndarray, base_grid: Grid, width: float,
                  relaxation: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Moves of gamma_-+ for the flux defects eps q - 1: each sine mode of the
    translation and width parts is divided by its flat-slab response.
    Lateral nodes do not move.
    """
    translation, widening = _flux_response(base_grid, width)
    inner = (slice(1, -1),) * base_grid.dim
    lo, hi = defect_minus[inner], defect_plus[inner]
    shift = idstn(dstn(0.5 * (hi - lo), type=1, norm="ortho") / translation, type=1, norm="ortho")
    spread = idstn(dstn(0.5 * (hi + lo), type=1, norm="ortho") / widening, type=1, norm="ortho")
    move_minus = np.zeros_like(defect_minus)
    move_plus = np.zeros_like(defect_plus)
    move_minus[inner] = relaxation * (shift - spread)
    move_plus[inner] = relaxation * (shift + spread)
    return move_minus, move_plus


def solve_trial_free_boundary(cfg: SolverConfig) -> Solution:
    """
    Fixed-point iteration: Laplace solve between the guessed graphs, then move
    the graphs against the flux defect eps q - 1, one sine mode at a time
    scaled by the flat-slab response and relaxed.
    """
    grid = ambient_grid(cfg)
    base_grid = grid.drop_axis(-1)
    h = grid.spacing
    eps = cfg.eps
    x = base_grid.coordinates()
    seed = cfg.gamma0(x)
    slope = cfg.gamma0.gradient(x)
    W0 = np.sqrt(1.0 + np.sum(slope * slope, axis=-1))
    gamma_minus = seed - eps * W0
    gamma_plus = seed + eps * W0
    interior = ~_lateral_mask(base_grid)
    lower, upper = grid.lower[-1] + 2 * h, grid.upper[-1] - 2 * h

    layers = default_layers(gamma_minus, gamma_plus, h)
    log = ConvergenceLog()
    logger.info(f"Trial free-boundary solve: {cfg.describe()}, grid {grid.shape}, {layers} slab layers")

    U = None
    slab = None
    best = math.inf
    rising = 0
    for it in range(cfg.iteration_cap):
        # 1) harmonic u between the current graphs (warm start)
        slab = solve_slab(gamma_minus, gamma_plus, base_grid, cfg.linear_tol, layers=layers, initial=U)
        U = slab.U

        # 2) flux defect on both graphs
        q_minus, q_plus = slab.boundary_speed()
        defect_minus = eps * q_minus - 1.0
        defect_plus = eps * q_plus - 1.0
        residual = float(max(np.max(np.abs(defect_minus[interior]), initial=0.0),
                             np.max(np.abs(defect_plus[interior]), initial=0.0)))
        log.record(residual)
        logger.debug(f"trial it {it + 1}: residual {residual:.3e} ({slab.sweeps} sweeps)")
        if residual < cfg.tol_fb:
            log.converged = True
            log.message = "converged"
            break

        if not np.isfinite(residual):
            raise Divergence(f"flux residual became non-finite at iteration {it + 1}", detail=log)
        previous = log.residuals[-2] if len(log.residuals) > 1 else math.inf
        rising = rising + 1 if residual > previous else 0
        best = min(best, residual)
        if rising >= DIVERGENCE_RUN:
            raise Divergence(f"flux residual grew for {DIVERGENCE_RUN} consecutive iterations "
                             f"(now {residual:.3e}, best {best:.3e})", detail=log)

        # 3) move the graphs; lateral nodes keep their seed values
        width = float(np.mean((gamma_plus - gamma_minus)[interior]))
        move_minus, move_plus = _graph_update(defect_minus, defect_plus, base_grid, width, cfg.relaxation)
        gamma_minus = gamma_minus + move_minus
        gamma_plus = gamma_plus + move_plus
        if np.min(gamma_minus) < lower or np.max(gamma_plus) > upper:
            raise Divergence(f"free boundary left the box at iteration {it + 1}", detail=log)

    u = resample(slab, grid, eps, label=f"solution {cfg.describe()}")
    sol = Solution(u, slab.gamma_minus.copy(), slab.gamma_plus.copy(), log, "trial_fb", cfg)
    if not log.converged:
        log.message = f"flux residual {log.residuals[-1]:.3e} >= tol_fb after {cfg.iteration_cap} iterations"
        raise MaxIterations(log.message, detail=sol)
    logger.info(f"Trial free-boundary solve converged in {log.iterations} iterations "
                f"(residual {log.residuals[-1]:.3e})")
    return sol


# ---------------------------------------------------------------------------
# Residuals, dispatch, reconstruction
# ---------------------------------------------------------------------------

def fb_residual(sol: Solution) -> FbResidual:
    """
    sup |Laplacian u| over nodes 2h inside the layer, and sup |eps |grad u| - 1|
    sampled 2h inside each free boundary along the graph normal.
    """
    u = sol.u
    grid = u.grid
    h = grid.spacing
    eps = sol.eps

    # 1) interior harmonicity
    y = grid.axes()[-1]
    gm = sol.gamma_minus.reshape(-1, 1)
    gp = sol.gamma_plus.reshape(-1, 1)
    inside = (y[None, :] >= gm + 2 * h - 1e-12) & (y[None, :] <= gp - 2 * h + 1e-12)
    inside = inside.reshape(grid.shape) & (grid.distance_to_boundary(grid.coordinates()) >= 2 * h - 1e-12)
    lap = nodal_laplacian(u)
    interior = float(np.max(np.abs(lap[inside]), initial=0.0))

    # 2) boundary flux
    base_grid = sol.base_grid
    x = base_grid.coordinates()
    keep = base_grid.distance_to_boundary(x) >= 2 * h - 1e-12
    flux = 0.0
    for side, heights in ((-1, sol.gamma_minus), (1, sol.gamma_plus)):
        dgamma, _ = base_derivatives(heights, h)
        nu = graph_normal(dgamma, -1)
        points = insert_height(x, heights, -1) - side * 2 * h * nu
        speed = np.linalg.norm(gradient_at(u, points[keep]), axis=-1)
        flux = max(flux, float(np.max(np.abs(eps * speed - 1.0), initial=0.0)))
    return FbResidual(interior_harmonicity=interior, boundary_flux=flux)


def solve(cfg: SolverConfig) -> Solution:
    if cfg.mode == "variational":
        return minimize_variational(cfg)
    return solve_trial_free_boundary(cfg)


def solution_from_field(u: ScalarField, gamma_minus: Optional[np.ndarray] = None,
                        gamma_plus: Optional[np.ndarray] = None, delta: float = 0.05) -> Solution:
    """
    Rebuilds a Solution from a dumped field: given free boundaries are used
    as they are, missing ones come from the extrapolation rule at +-(1 - 2 delta).
    """
    if u.eps is None:
        raise ValueError(f"field '{u.label}' carries no eps; it is not a solved instance")
    if gamma_minus is None or gamma_plus is None:
        _, _, gm, gp = _extrapolated_boundaries(u, 1.0 - 2.0 * delta)
        gamma_minus = gm if gamma_minus is None else gamma_minus
        gamma_plus = gp if gamma_plus is None else gamma_plus
    base_shape = u.grid.shape[:-1]
    gamma_minus = np.asarray(gamma_minus, dtype=float).reshape(base_shape)
    gamma_plus = np.asarray(gamma_plus, dtype=float).reshape(base_shape)
    log = ConvergenceLog(converged=True, message=f"loaded from '{u.label}'")
    return Solution(u, gamma_minus, gamma_plus, log, "loaded")
