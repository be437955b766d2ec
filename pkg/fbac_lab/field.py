# === fbac_lab/field.py ===

import logging
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from fbac_lab.errors import (
    FormatError,
    InvalidOracleParams,
    NonCommensurate,
    OutOfDomain,
    TooCoarse,
    TooNearBoundary,
    UnknownOracle,
)
from fbac_lab.models import Grid, ScalarField

logger = logging.getLogger(__name__)

MIN_NODES = 3
DEGENERATE_GRADIENT = 1e-8
FBAC_MAGIC = "FBAC1"


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

def build_grid(box: Sequence[Tuple[float, float]], h: float) -> Grid:
    """
    Grid covering an axis-aligned box [(lo, hi), ...] with uniform spacing h.
    Raises NonCommensurate when h does not tile a side, TooCoarse below 3 nodes.
    """
    if not h > 0:
        raise NonCommensurate(f"spacing must be positive, got {h}", detail=h)
    shape = []
    for axis, (lo, hi) in enumerate(box):
        side = float(hi) - float(lo)
        if not side > 0:
            raise NonCommensurate(f"degenerate box side on axis {axis}: [{lo}, {hi}]", detail=axis)
        cells = side / h
        n = round(cells)
        if n == 0 or abs(cells - n) > 1e-12 * max(cells, 1.0):
            raise NonCommensurate(f"h={h} does not tile side {side} on axis {axis}", detail=axis)
        if n + 1 < MIN_NODES:
            raise TooCoarse(f"axis {axis} has {n + 1} nodes (< {MIN_NODES}) at h={h}", detail=axis)
        shape.append(n + 1)
    return Grid(dim=len(shape), shape=tuple(shape), origin=tuple(float(lo) for lo, _ in box), spacing=h)


def _points(grid: Grid, p) -> Tuple[np.ndarray, bool]:
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    if pts.shape[-1] != grid.dim:
        raise OutOfDomain(f"point of dimension {pts.shape[-1]} on a {grid.dim}-d grid", detail=pts)
    return np.atleast_2d(pts) if single else pts, single


def _check_inside(grid: Grid, pts: np.ndarray, margin: float = 0.0):
    slack = 1e-9 * grid.spacing
    dist = grid.distance_to_boundary(pts)
    if np.any(dist < -slack):
        bad = pts.reshape(-1, grid.dim)[np.argmin(dist.ravel())]
        raise OutOfDomain(f"point {bad.tolist()} outside the box [{grid.lower.tolist()}, {grid.upper.tolist()}]",
                          detail=bad)
    if margin > 0 and np.any(dist < margin - slack):
        bad = pts.reshape(-1, grid.dim)[np.argmin(dist.ravel())]
        raise TooNearBoundary(f"point {bad.tolist()} closer than {margin:g} to the box boundary", detail=bad)


def _interpolator(f: ScalarField, key: str, values_fn: Callable[[], np.ndarray]) -> RegularGridInterpolator:
    interp = f._cache.get(f"interp:{key}")
    if interp is None:
        interp = RegularGridInterpolator(f.grid.axes(), values_fn(), method="linear", bounds_error=True)
        f._cache[f"interp:{key}"] = interp
    return interp


def _evaluate(f: ScalarField, key: str, values_fn, p, margin: float):
    pts, single = _points(f.grid, p)
    _check_inside(f.grid, pts, margin)
    # clip rounding-level excursions past the last node
    clipped = np.clip(pts, f.grid.lower, f.grid.upper)
    out = _interpolator(f, key, values_fn)(clipped)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Nodal derivatives
# ---------------------------------------------------------------------------

def _second_difference(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
    if v.shape[0] >= 4:
        out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h)
        out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / (h * h)
    else:
        out[0] = out[1]
        out[-1] = out[-2]
    return np.moveaxis(out, 0, axis)


def nodal_gradient(f: ScalarField) -> np.ndarray:
    """Central differences at interior nodes, second-order one-sided at the edges; shape (*shape, d)."""
    cached = f._cache.get("nodal:grad")
    if cached is None:
        g = f.grid
        parts = np.gradient(f.values, g.spacing, edge_order=2)
        if g.dim == 1:
            parts = [parts]
        cached = np.stack(parts, axis=-1)
        cached.setflags(write=False)
        f._cache["nodal:grad"] = cached
    return cached


def nodal_hessian(f: ScalarField) -> np.ndarray:
    """Three-point second differences on the diagonal, nested central differences off it."""
    cached = f._cache.get("nodal:hess")
    if cached is None:
        g = f.grid
        d = g.dim
        grad = nodal_gradient(f)
        hess = np.empty(g.shape + (d, d))
        for i in range(d):
            hess[..., i, i] = _second_difference(f.values, i, g.spacing)
            for j in range(i + 1, d):
                mixed = np.gradient(grad[..., i], g.spacing, axis=j, edge_order=2)
                hess[..., i, j] = mixed
                hess[..., j, i] = mixed
        hess.setflags(write=False)
        cached = f._cache["nodal:hess"] = hess
    return cached


def nodal_laplacian(f: ScalarField) -> np.ndarray:
    return np.trace(nodal_hessian(f), axis1=-2, axis2=-1)


def sigma_field(u: ScalarField) -> ScalarField:
    """sigma = 1/|grad u| at the nodes; nodes with a degenerate gradient carry the sentinel 0."""
    cached = u._cache.get("sigma")
    if cached is None:
        speed = np.linalg.norm(nodal_gradient(u), axis=-1)
        sigma = np.zeros_like(speed)
        ok = speed >= DEGENERATE_GRADIENT
        sigma[ok] = 1.0 / speed[ok]
        cached = u._cache["sigma"] = ScalarField(u.grid, sigma, f"sigma of {u.label}".strip(), u.eps)
    return cached


# ---------------------------------------------------------------------------
# Point evaluation
# ---------------------------------------------------------------------------

def sample(f: ScalarField, p) -> Any:
    """Multilinear interpolation of the node values; exact at nodes and for affine f."""
    return _evaluate(f, "values", lambda: f.values, p, 0.0)


def gradient_at(f: ScalarField, p) -> np.ndarray:
    return _evaluate(f, "grad", lambda: nodal_gradient(f), p, 2.0 * f.grid.spacing)


def hessian_at(f: ScalarField, p) -> np.ndarray:
    hess = _evaluate(f, "hess", lambda: nodal_hessian(f), p, 2.0 * f.grid.spacing)
    return 0.5 * (hess + np.swapaxes(hess, -1, -2))


def laplacian_at(f: ScalarField, p):
    return np.trace(hessian_at(f, p), axis1=-2, axis2=-1)


# ---------------------------------------------------------------------------
# Oracle fields
# ---------------------------------------------------------------------------

def _vector(params: Dict[str, Any], key: str, dim: int, default=None) -> np.ndarray:
    raw = params.get(key, default)
    if raw is None:
        raise InvalidOracleParams(f"missing parameter '{key}'", detail=key)
    vec = np.asarray(raw, dtype=float).ravel()
    if vec.size == 1 and dim > 1 and key != "e":
        vec = np.full(dim, float(vec[0]))
    if vec.size != dim or not np.all(np.isfinite(vec)):
        raise InvalidOracleParams(f"parameter '{key}' must be a finite {dim}-vector, got {raw!r}", detail=key)
    return vec


def _eps(params: Dict[str, Any]) -> float:
    eps = params.get("eps")
    if eps is None or not float(eps) > 0:
        raise InvalidOracleParams(f"parameter 'eps' must be positive, got {eps!r}", detail="eps")
    return float(eps)


def _profile1d(x, params):
    eps = _eps(params)
    return np.clip(x[..., -1] / eps, -1.0, 1.0), eps


def _tilted(x, params):
    eps = _eps(params)
    e = _vector(params, "e", x.shape[-1])
    if abs(np.linalg.norm(e) - 1.0) > 1e-12:
        raise InvalidOracleParams(f"direction e must be a unit vector, |e| = {np.linalg.norm(e):.17g}", detail="e")
    return np.clip((x @ e) / eps, -1.0, 1.0), eps


def _distance(x, params):
    c = _vector(params, "c", x.shape[-1], default=0.0)
    return np.linalg.norm(x - c, axis=-1), None


def _radius_squared(x, params):
    c = _vector(params, "c", x.shape[-1], default=0.0)
    return np.sum((x - c) ** 2, axis=-1), None


def _affine(x, params):
    a = _vector(params, "a", x.shape[-1])
    b = float(params.get("b", 0.0))
    return x @ a + b, None


def _harmonic_exp(x, params):
    if x.shape[-1] < 2:
        raise InvalidOracleParams("harmonic_exp needs at least two coordinates", detail="dim")
    return np.exp(x[..., 0]) * np.cos(x[..., 1]), None


ORACLES: Dict[str, Callable] = {
    "profile1d": _profile1d,
    "tilted": _tilted,
    "distance": _distance,
    "harmonic_exp": _harmonic_exp,
    "affine": _affine,
    "radius_squared": _radius_squared,
}


def analytic_field(name: str, params: Optional[Dict[str, Any]], grid: Grid) -> ScalarField:
    """Samples one of the closed-form oracle fields exactly at the grid nodes."""
    if name not in ORACLES:
        raise UnknownOracle(f"unknown oracle '{name}' (known: {', '.join(sorted(ORACLES))})", detail=name)
    params = dict(params or {})
    values, eps = ORACLES[name](grid.coordinates(), params)
    described = " ".join(f"{k}={_describe(v)}" for k, v in sorted(params.items()))
    label = f"oracle:{name} {described}".strip()
    logger.debug(f"Built oracle field '{label}' on grid {grid.shape}")
    return ScalarField(grid, values, label, eps)


def _describe(value) -> str:
    arr = np.asarray(value, dtype=float).ravel()
    return ",".join(f"{v:.17g}" for v in arr)


# ---------------------------------------------------------------------------
# Column restriction onto height graphs
# ---------------------------------------------------------------------------

def layer_mask(u: ScalarField, axis: int = -1, grow: bool = True) -> np.ndarray:
    """
    Nodes usable for column interpolation: the open layer |u| < 1, grown by one
    node along `axis` unless grow is False. Fields without eps (oracles) are
    usable everywhere.
    """
    if u.eps is None:
        return np.ones(u.grid.shape, dtype=bool)
    inside = np.abs(u.values) < 1.0
    if not grow:
        return inside
    v = np.moveaxis(inside, axis, -1)
    grown = v.copy()
    grown[..., 1:] |= v[..., :-1]
    grown[..., :-1] |= v[..., 1:]
    return np.moveaxis(grown, -1, axis)


def derivative_mask(u: ScalarField) -> np.ndarray:
    """
    Nodes whose nodal derivatives are usable: |u| < 1 at the node and at every
    axis neighbour, so no difference stencil reaches a clamped node.
    """
    if u.eps is None:
        return np.ones(u.grid.shape, dtype=bool)
    inside = np.abs(u.values) < 1.0
    eroded = inside.copy()
    for ax in range(u.grid.dim):
        v = np.moveaxis(inside, ax, -1)
        e = np.moveaxis(eroded, ax, -1)
        e[..., 1:] &= v[..., :-1]
        e[..., :-1] &= v[..., 1:]
    return eroded


def _lagrange4(r: np.ndarray) -> np.ndarray:
    return np.stack([
        -(r - 1.0) * (r - 2.0) * (r - 3.0) / 6.0,
        r * (r - 2.0) * (r - 3.0) / 2.0,
        -r * (r - 1.0) * (r - 3.0) / 2.0,
        r * (r - 1.0) * (r - 2.0) / 6.0,
    ], axis=-1)


def column_stencils(valid: np.ndarray, cell: np.ndarray, extrapolate: bool = False):
    """
    For each column (rows of `valid`, shape (m, ny)) and containing cell index,
    picks the start of a 4-node stencil of valid nodes covering the cell:
    centred first, then one-sided. Returns (start, order) with order 3 (cubic),
    1 (linear on the cell) or 0 (no usable nodes). With `extrapolate`, columns
    left without a stencil fall back to a cubic reaching at most two cells past
    its last node.
    """
    m, ny = valid.shape
    rows = np.arange(m)
    start = np.zeros(m, dtype=int)
    order = np.zeros(m, dtype=int)

    def take(s, accept):
        ok = accept & (s >= 0) & (s <= ny - 4) & (order == 0)
        sc = np.clip(s, 0, ny - 4)
        ok &= np.all(valid[rows[:, None], sc[:, None] + np.arange(4)], axis=1)
        start[ok] = sc[ok]
        order[ok] = 3

    if ny >= 4:
        for offset in (1, 0, 2):
            s = np.clip(cell - offset, 0, ny - 4)
            take(s, (s <= cell) & (cell + 1 <= s + 3))
    linear = (order == 0) & valid[rows, cell] & valid[rows, cell + 1]
    start[linear] = cell[linear]
    order[linear] = 1
    if extrapolate and ny >= 4:
        for s in (cell - 3, cell + 1, cell - 4, cell + 2):
            take(s, np.ones(m, dtype=bool))
    return start, order


def column_eval(columns: np.ndarray, origin: float, h: float, heights: np.ndarray,
                valid: Optional[np.ndarray] = None, extrapolate: bool = False) -> np.ndarray:
    """
    Interpolates column data (m, ny, *extra) at heights (m,) with the stencil rule
    of column_stencils; NaN where no stencil exists.
    """
    m, ny = columns.shape[:2]
    if valid is None:
        valid = np.ones((m, ny), dtype=bool)
    t = (np.asarray(heights, dtype=float) - origin) / h
    finite = np.isfinite(t)
    t = np.where(finite, np.clip(t, 0.0, ny - 1.0), 0.0)
    cell = np.clip(np.floor(t).astype(int), 0, ny - 2)
    start, order = column_stencils(valid, cell, extrapolate)
    rows = np.arange(m)
    extra = columns.shape[2:]
    out = np.full((m,) + extra, np.nan)

    cubic = (order == 3) & finite
    if np.any(cubic):
        r = t[cubic] - start[cubic]
        w = _lagrange4(r)
        idx = start[cubic][:, None] + np.arange(4)
        nodes = columns[rows[cubic][:, None], idx]
        out[cubic] = np.einsum("mk,mk...->m...", w, nodes)
    lin = (order == 1) & finite
    if np.any(lin):
        r = (t[lin] - cell[lin]).reshape((-1,) + (1,) * len(extra))
        lo = columns[rows[lin], cell[lin]]
        hi = columns[rows[lin], cell[lin] + 1]
        out[lin] = (1.0 - r) * lo + r * hi
    return out


def to_columns(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Reorders nodal data so that columns along `axis` are rows: (n_base, ny, *extra)."""
    axis = axis % grid.dim
    moved = np.moveaxis(values, axis, grid.dim - 1)
    ny = grid.shape[axis]
    return moved.reshape((-1, ny) + values.shape[grid.dim:])


def restrict_to_graph(values: np.ndarray, grid: Grid, heights: np.ndarray, axis: int = -1,
                      valid: Optional[np.ndarray] = None, extrapolate: bool = False) -> np.ndarray:
    """
    Restricts nodal data (grid shape, optionally with trailing component axes) to
    the height graph x_axis = heights(base node). Heights have the base grid's shape.
    """
    axis = axis % grid.dim
    heights = np.asarray(heights, dtype=float)
    columns = to_columns(np.asarray(values, dtype=float), grid, axis)
    mask = None if valid is None else to_columns(valid, grid, axis)
    out = column_eval(columns, grid.origin[axis], grid.spacing, heights.ravel(), mask, extrapolate)
    return out.reshape(heights.shape + out.shape[1:])


# ---------------------------------------------------------------------------
# FBAC1 text dump
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.17g}"


def dump_field(f: ScalarField, path: str) -> str:
    """Writes the FBAC1 text dump; every float with 17 significant digits."""
    g = f.grid
    header = [
        FBAC_MAGIC,
        f"dim {g.dim}",
        "shape " + " ".join(str(n) for n in g.shape),
        "origin " + " ".join(_fmt(o) for o in g.origin),
        f"spacing {_fmt(g.spacing)}",
        f"eps {'none' if f.eps is None else _fmt(f.eps)}",
        f"label {f.label}".rstrip(),
        "data",
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(header) + "\n")
        np.savetxt(fh, f.values.ravel(), fmt="%.17g")
    logger.info(f"Wrote field dump '{path}' ({g.size} values)")
    return path


def load_field(path: str) -> ScalarField:
    """Reads an FBAC1 dump; FormatError names the file and the offending line."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        logger.warning(f"Could not open field dump '{path}': {e}")
        raise FormatError(f"cannot read field dump: {e}", path)

    def header(lineno: int, key: str) -> str:
        if len(lines) < lineno:
            raise FormatError(f"truncated header, expected '{key}'", path, lineno)
        text = lines[lineno - 1]
        if text != key and not text.startswith(key + " "):
            raise FormatError(f"expected '{key} ...', got {text!r}", path, lineno)
        return text[len(key):].strip()

    if not lines or lines[0].strip() != FBAC_MAGIC:
        raise FormatError(f"missing {FBAC_MAGIC} magic line", path, 1)
    try:
        dim = int(header(2, "dim"))
    except ValueError:
        raise FormatError("dim must be an integer", path, 2)
    try:
        shape = tuple(int(t) for t in header(3, "shape").split())
    except ValueError:
        raise FormatError("shape must be integers", path, 3)
    try:
        origin = tuple(float(t) for t in header(4, "origin").split())
    except ValueError:
        raise FormatError("origin must be numbers", path, 4)
    try:
        spacing = float(header(5, "spacing"))
    except ValueError:
        raise FormatError("spacing must be a number", path, 5)
    eps_text = header(6, "eps")
    try:
        eps = None if eps_text == "none" else float(eps_text)
    except ValueError:
        raise FormatError(f"eps must be a number or 'none', got {eps_text!r}", path, 6)
    label = header(7, "label")
    header(8, "data")
    if len(shape) != dim or len(origin) != dim:
        raise FormatError(f"shape/origin need {dim} entries", path, 3)

    count = int(np.prod(shape))
    data_lines = lines[8:]
    if len(data_lines) != count:
        raise FormatError(f"expected {count} values, found {len(data_lines)}", path, 9 + min(count, len(data_lines)))
    values = np.empty(count)
    for k, text in enumerate(data_lines):
        try:
            values[k] = float(text)
        except ValueError:
            raise FormatError(f"bad value {text!r}", path, 9 + k)
    try:
        grid = Grid(dim=dim, shape=shape, origin=origin, spacing=spacing)
        field = ScalarField(grid, values.reshape(shape), label, eps)
    except ValueError as e:
        raise FormatError(str(e), path)
    logger.debug(f"Loaded field dump '{path}': shape {shape}, h={spacing:.6g}")
    return field

