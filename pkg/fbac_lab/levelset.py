# === fbac_lab/levelset.py ===

import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from fbac_lab.errors import (
    DegenerateGradient,
    EmptyRegion,
    MultipleCrossings,
    NoCrossing,
    TooNearBoundary,
)
from fbac_lab.field import (
    DEGENERATE_GRADIENT,
    _lagrange4,
    _second_difference,
    column_stencils,
    derivative_mask,
    gradient_at,
    hessian_at,
    layer_mask,
    nodal_gradient,
    restrict_to_graph,
    sample,
    sigma_field,
    to_columns,
)
from fbac_lab.models import (
    Grid,
    HolderNorm,
    LevelSurface,
    Region,
    ScalarField,
    ShapeSample,
    Solution,
    insert_height,
)

logger = logging.getLogger(__name__)

BISECTION_STEPS = 40
# inward distances (in units of h) for one-sided free-boundary sampling
FB_OFFSETS = (3.0, 4.0, 5.0)
FB_VALUE_WEIGHTS = (10.0, -15.0, 6.0)
FB_SLOPE_WEIGHTS = (-4.5, 8.0, -3.5)


# ---------------------------------------------------------------------------
# Graph geometry
# ---------------------------------------------------------------------------

def base_derivatives(heights: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Central differences over the base grid, second-order one-sided at the edges."""
    n = heights.ndim
    grads = np.gradient(heights, h, edge_order=2)
    if n == 1:
        grads = [grads]
    dgamma = np.stack(grads, axis=-1)
    d2gamma = np.empty(heights.shape + (n, n))
    for i in range(n):
        d2gamma[..., i, i] = _second_difference(heights, i, h)
        for j in range(i + 1, n):
            mixed = np.gradient(grads[i], h, axis=j, edge_order=2)
            d2gamma[..., i, j] = mixed
            d2gamma[..., j, i] = mixed
    return dgamma, d2gamma


def graph_geometry(dgamma: np.ndarray, d2gamma: np.ndarray):
    """
    Metric, inverse metric, second fundamental form h_ij = D2gamma_ij / W, mean
    curvature H = g^ij h_ij and the shape operator S = g^(-1/2) h g^(-1/2),
    with W = sqrt(1 + |Dgamma|^2).
    """
    n = dgamma.shape[-1]
    eye = np.eye(n)
    outer = dgamma[..., :, None] * dgamma[..., None, :]
    slope2 = np.sum(dgamma * dgamma, axis=-1)
    W = np.sqrt(1.0 + slope2)
    metric = eye + outer
    inv_metric = eye - outer / (W * W)[..., None, None]
    hform = d2gamma / W[..., None, None]
    H = np.einsum("...ij,...ij->...", inv_metric, hform)
    inv_sqrt = eye - outer / (W * (W + 1.0))[..., None, None]
    shape_operator = inv_sqrt @ hform @ inv_sqrt
    return metric, inv_metric, hform, H, shape_operator


def graph_normal(dgamma: np.ndarray, axis: int) -> np.ndarray:
    """Unit normal (-Dgamma, 1)/W of a height graph, in ambient axis order."""
    W = np.sqrt(1.0 + np.sum(dgamma * dgamma, axis=-1))
    return insert_height(-dgamma / W[..., None], 1.0 / W, axis)


def surface_from_heights(tau: float, axis: int, base_grid: Grid, heights: np.ndarray,
                         gradient: Optional[np.ndarray] = None, sigma: Optional[np.ndarray] = None,
                         extrapolated: bool = False) -> LevelSurface:
    """
    Builds a LevelSurface from heights. `gradient` (ambient grad u on the surface)
    supplies nu and sigma; without it nu is the graph normal and sigma is taken
    from `sigma` (NaN when absent).
    """
    dgamma, d2gamma = base_derivatives(heights, base_grid.spacing)
    metric, inv_metric, hform, H, shape_operator = graph_geometry(dgamma, d2gamma)
    if gradient is not None:
        speed = np.linalg.norm(gradient, axis=-1)
        ok = speed >= DEGENERATE_GRADIENT
        safe = np.where(ok, speed, 1.0)
        nu = np.where(ok[..., None], gradient / safe[..., None], graph_normal(dgamma, axis))
        sig = np.where(ok, 1.0 / safe, np.nan)
    else:
        nu = graph_normal(dgamma, axis)
        sig = np.full(heights.shape, np.nan) if sigma is None else np.asarray(sigma, dtype=float)
    return LevelSurface(
        tau=float(tau), axis=axis, base_grid=base_grid, heights=heights,
        dgamma=dgamma, d2gamma=d2gamma, metric=metric, inv_metric=inv_metric,
        nu=nu, sigma=sig, h=hform, H=H, shape_operator=shape_operator, extrapolated=extrapolated,
    )


# ---------------------------------------------------------------------------
# Level extraction
# ---------------------------------------------------------------------------

def _stencil_eval(columns: np.ndarray, start: np.ndarray, order: np.ndarray, cell: np.ndarray,
                  t: np.ndarray) -> np.ndarray:
    rows = np.arange(columns.shape[0])
    cubic = order == 3
    out = np.empty_like(t)
    if np.any(cubic):
        w = _lagrange4(t[cubic] - start[cubic])
        nodes = columns[rows[cubic][:, None], start[cubic][:, None] + np.arange(4)]
        out[cubic] = np.sum(w * nodes, axis=1)
    lin = ~cubic
    if np.any(lin):
        r = t[lin] - cell[lin]
        out[lin] = (1.0 - r) * columns[rows[lin], cell[lin]] + r * columns[rows[lin], cell[lin] + 1]
    return out


def extract_level(u: ScalarField, tau: float, axis: int = -1) -> LevelSurface:
    """
    The tau-level of u as a height graph along `axis`. Per column: bracket the
    crossing between adjacent nodes, then bisect the cubic column interpolant.
    """
    grid = u.grid
    axis = axis % grid.dim
    if u.eps is not None and not abs(tau) < 1:
        raise ValueError(f"level {tau} outside the open layer (-1, 1)")
    base_grid = grid.drop_axis(axis)
    h = grid.spacing
    columns = to_columns(u.values, grid, axis)
    mask = layer_mask(u, axis)
    valid = to_columns(mask, grid, axis)

    # 1) bracket the crossing in each column
    below = columns <= tau
    up = below[:, :-1] & ~below[:, 1:]
    down = ~below[:, :-1] & below[:, 1:]
    n_up = up.sum(axis=1)
    n_cross = n_up + down.sum(axis=1)
    base_points = base_grid.coordinates().reshape(-1, base_grid.dim)
    for bad, err, what in ((n_cross == 0, NoCrossing, "does not cross"),
                           (n_cross > 1, MultipleCrossings, "crosses more than once"),
                           ((n_cross == 1) & (n_up == 0), NoCrossing, "decreases through")):
        if np.any(bad):
            k = int(np.argmax(bad))
            node = np.unravel_index(k, base_grid.shape)
            raise err(f"column at base node {tuple(int(i) for i in node)} "
                      f"(x={base_points[k].tolist()}) {what} tau={tau}", detail=node)
    cell = np.argmax(up, axis=1)

    # 2) bisection on the cubic column interpolant; stencils of layer nodes first,
    #    then ones reaching the first node past the layer edge
    strict = to_columns(layer_mask(u, axis, grow=False), grid, axis)
    s_in, o_in = column_stencils(strict, cell)
    s_all, o_all = column_stencils(valid, cell)
    start = np.where(o_in == 3, s_in, s_all)
    order = np.where(o_in == 3, o_in, o_all)
    lo = cell.astype(float)
    hi = lo + 1.0
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        left = _stencil_eval(columns, start, order, cell, mid) <= tau
        lo = np.where(left, mid, lo)
        hi = np.where(left, hi, mid)
    heights = (grid.origin[axis] + 0.5 * (lo + hi) * h).reshape(base_grid.shape)

    lower, upper = grid.lower[axis], grid.upper[axis]
    near = (heights < lower + 2 * h - 1e-12) | (heights > upper - 2 * h + 1e-12)
    if np.any(near):
        node = np.unravel_index(int(np.argmax(near)), base_grid.shape)
        raise TooNearBoundary(f"level {tau} within 2h of the box edge at base node {tuple(int(i) for i in node)}",
                              detail=node)

    # 3) field-side normal and speed restricted to the graph
    gradient = restrict_to_graph(nodal_gradient(u), grid, heights, axis, derivative_mask(u), extrapolate=True)
    surface = surface_from_heights(tau, axis, base_grid, heights, gradient=gradient)
    logger.debug(f"Extracted level tau={tau:.6g}: heights in [{heights.min():.6g}, {heights.max():.6g}]")
    return surface


def level_points(surface: LevelSurface, base_points) -> np.ndarray:
    """Ambient points of the level above arbitrary base coordinates (linear in the heights)."""
    pts = np.asarray(base_points, dtype=float)
    interp = RegularGridInterpolator(surface.base_grid.axes(), surface.heights, method="linear", bounds_error=True)
    return insert_height(pts, interp(pts), surface.axis)


def base_node_indices(base_grid: Grid, base_points) -> np.ndarray:
    """Flat base-node indices of coordinates that must sit on base nodes."""
    pts = np.atleast_2d(np.asarray(base_points, dtype=float))
    frac = (pts - base_grid.lower) / base_grid.spacing
    idx = np.rint(frac).astype(int)
    if np.any(np.abs(frac - idx) > 1e-6) or np.any(idx < 0) or np.any(idx >= np.asarray(base_grid.shape)):
        raise ValueError(f"sample base points must be base-grid nodes, got {pts.tolist()}")
    return np.ravel_multi_index(tuple(idx.T), base_grid.shape)


# ---------------------------------------------------------------------------
# Free boundaries
# ---------------------------------------------------------------------------

def free_boundary_sigma(sol: Solution, side: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    sigma and its normal derivative on a free boundary, from sigma sampled at
    3h, 4h, 5h inside the layer and extrapolated quadratically. NaN where a
    sample point leaves the box.
    """
    u = sol.u
    grid = u.grid
    h = grid.spacing
    heights = sol.gamma_plus if side > 0 else sol.gamma_minus
    base_grid = sol.base_grid
    dgamma, _ = base_derivatives(heights, h)
    nu = graph_normal(dgamma, -1)
    points = insert_height(base_grid.coordinates(), heights, -1)
    sig = sigma_field(u)

    samples = []
    for r in FB_OFFSETS:
        p = points - side * r * h * nu
        vals = np.full(heights.shape, np.nan)
        inside = grid.distance_to_boundary(p) >= 0
        if np.any(inside):
            vals[inside] = sample(sig, p[inside])
        samples.append(vals)
    value = sum(w * s for w, s in zip(FB_VALUE_WEIGHTS, samples))
    slope_inward = sum(w * s for w, s in zip(FB_SLOPE_WEIGHTS, samples)) / h
    return value, -side * slope_inward


def free_boundary_surface(sol: Solution, side: int) -> LevelSurface:
    """LevelSurface of {u = side} built from gamma_minus (side -1) or gamma_plus (side +1)."""
    side = 1 if side > 0 else -1
    heights = sol.gamma_plus if side > 0 else sol.gamma_minus
    sigma, _ = free_boundary_sigma(sol, side)
    return surface_from_heights(float(side), -1, sol.base_grid, np.asarray(heights, dtype=float),
                                sigma=sigma, extrapolated=sol.mode != "trial_fb")


def solution_surface(sol: Solution, tau: float) -> LevelSurface:
    """Interior levels by extraction, tau = +-1 from the free boundaries."""
    if abs(tau) >= 1.0 - 1e-12:
        return free_boundary_surface(sol, 1 if tau > 0 else -1)
    return extract_level(sol.u, tau)


# ---------------------------------------------------------------------------
# Field-side geometry
# ---------------------------------------------------------------------------

def shape_from_field(u: ScalarField, p) -> ShapeSample:
    """
    h = -(I - nu nu) Hess u (I - nu nu) / |grad u|, H = trace h, at one point
    or a batch of points (..., d).
    """
    grad = np.asarray(gradient_at(u, p))
    speed = np.linalg.norm(grad, axis=-1)
    if np.any(speed < DEGENERATE_GRADIENT):
        raise DegenerateGradient(f"|grad u| = {np.min(speed):.3g} < {DEGENERATE_GRADIENT:g}", detail=p)
    nu = grad / speed[..., None]
    hess = np.asarray(hessian_at(u, p))
    d = u.grid.dim
    proj = np.eye(d) - nu[..., :, None] * nu[..., None, :]
    hform = -(proj @ hess @ proj) / speed[..., None, None]
    H = np.trace(hform, axis1=-2, axis2=-1)
    return ShapeSample(h=hform, H=H, nu=nu, sigma=1.0 / speed)


def eta_from_surfaces(surfaces: Iterable[LevelSurface], region: Optional[Region] = None) -> float:
    eta = 0.0
    for surface in surfaces:
        mask = (region or Region()).mask(surface.base_points)
        if not np.any(mask):
            raise EmptyRegion(f"region {(region or Region()).describe()} holds no base nodes")
        eta = max(eta, float(np.nanmax(surface.h_spectral()[mask])))
    return eta


def eta_bound(u: ScalarField, tau_samples: Sequence[float], region: Optional[Region] = None,
              axis: int = -1) -> float:
    """Largest principal curvature (spectral norm of h) over the sampled levels and region."""
    return eta_from_surfaces((extract_level(u, tau, axis) for tau in tau_samples), region)


# ---------------------------------------------------------------------------
# Surface operators and norms
# ---------------------------------------------------------------------------

def laplace_beltrami(surface: LevelSurface, f: np.ndarray) -> np.ndarray:
    """
    (1/sqrt g) d_i (sqrt g g^ij d_j f) in conservative form with midpoint-averaged
    coefficients; NaN on base-edge nodes.
    """
    f = np.asarray(f, dtype=float)
    h = surface.base_grid.spacing
    n = f.ndim
    sqrt_g = np.sqrt(np.linalg.det(surface.metric))
    A = sqrt_g[..., None, None] * surface.inv_metric
    central = np.gradient(f, h, edge_order=2)
    if n == 1:
        central = [central]

    out = np.zeros_like(f)
    for i in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[i], hi[i] = slice(0, -1), slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        flux = np.zeros(tuple(s - (1 if k == i else 0) for k, s in enumerate(f.shape)))
        for j in range(n):
            coeff = 0.5 * (A[lo + (i, j)] + A[hi + (i, j)])
            if j == i:
                deriv = (f[hi] - f[lo]) / h
            else:
                deriv = 0.5 * (central[j][lo] + central[j][hi])
            flux += coeff * deriv
        div = np.zeros_like(f)
        inner = [slice(None)] * n
        inner[i] = slice(1, -1)
        fl_hi = [slice(None)] * n
        fl_lo = [slice(None)] * n
        fl_hi[i], fl_lo[i] = slice(1, None), slice(0, -1)
        div[tuple(inner)] = (flux[tuple(fl_hi)] - flux[tuple(fl_lo)]) / h
        out += div

    out = out / sqrt_g
    edge = np.zeros(f.shape, dtype=bool)
    for i in range(n):
        idx = [slice(None)] * n
        idx[i] = 0
        edge[tuple(idx)] = True
        idx[i] = -1
        edge[tuple(idx)] = True
    out[edge] = np.nan
    return out


def _magnitudes(values: np.ndarray, point_dims: int) -> np.ndarray:
    if values.ndim == point_dims:
        return np.abs(values)
    return np.linalg.norm(values, ord=2, axis=(-2, -1))


def holder_norm(values, alpha: float, points, region: Optional[Region] = None) -> HolderNorm:
    """
    C^alpha norm over the region's nodes: sup |f| plus the exhaustive pair scan
    max |f(x) - f(y)| / |x - y|^alpha. Matrix values use the spectral norm.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    values = np.asarray(values, dtype=float)
    pts = np.asarray(points, dtype=float)
    point_shape = pts.shape[:-1]
    region = region or Region()
    mask = region.mask(pts)
    if not np.any(mask):
        raise EmptyRegion(f"region {region.describe()} holds no nodes", detail=region)
    vals = values[mask]
    xs = pts[mask]
    is_matrix = values.ndim > len(point_shape)

    mags = _magnitudes(vals, 1)
    sup_part = float(np.max(mags))
    seminorm = 0.0
    for i in range(len(xs) - 1):
        diff = vals[i + 1:] - vals[i]
        dist = np.sqrt(np.sum((xs[i + 1:] - xs[i]) ** 2, axis=-1))
        num = np.linalg.norm(diff, ord=2, axis=(-2, -1)) if is_matrix else np.abs(diff)
        seminorm = max(seminorm, float(np.max(num / dist ** alpha)))
    return HolderNorm(alpha=float(alpha), sup_part=sup_part, seminorm_part=seminorm, region=region.describe())


def level_rows(surface: LevelSurface) -> List[List[float]]:
    """Rows of the level CSV: base coordinates, gamma, sigma, H, upper triangle of h."""
    n = surface.base_grid.dim
    pts = surface.base_points.reshape(-1, n)
    hform = surface.h.reshape(-1, n, n)
    rows = []
    for k in range(pts.shape[0]):
        row = list(pts[k]) + [surface.heights.ravel()[k], surface.sigma.ravel()[k], surface.H.ravel()[k]]
        row += [hform[k, i, j] for i in range(n) for j in range(i, n)]
        rows.append(row)
    return rows
