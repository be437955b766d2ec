# === fbac_lab/slab_solver.py ===

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from fbac_lab.errors import GraphCollision, LinearSolveStall
from fbac_lab.field import _second_difference
from fbac_lab.models import Grid, ScalarField

logger = logging.getLogger(__name__)

STALL_WINDOW = 100
STALL_REDUCTION = 0.99
MAX_SWEEPS = 200000

# lateral(base_points (..., n), s (M+1,)) -> values (..., M+1)
LateralData = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class SlabSolution:
    """
    Harmonic function between two height graphs, stored on the mapped slab
    s in [-1, 1]: U has shape (*base_shape, M+1), s = 2 (y - gamma_minus) / W - 1.
    """
    base_grid: Grid
    gamma_minus: np.ndarray
    gamma_plus: np.ndarray
    s_nodes: np.ndarray
    U: np.ndarray
    sweeps: int = 0
    omega: float = 1.0
    residuals: List[float] = field(default_factory=list)

    @property
    def width(self) -> np.ndarray:
        return self.gamma_plus - self.gamma_minus

    @property
    def ds(self) -> float:
        return float(self.s_nodes[1] - self.s_nodes[0])

    def boundary_speed(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        |grad u| on the lower and upper graph. On a graph U is constant, so only
        U_s survives: |grad u| = |U_s| (2/W) sqrt(1 + |D gamma|^2), with a
        second-order one-sided U_s.
        """
        h = self.base_grid.spacing
        ds = self.ds
        U = self.U
        us_lo = (-3.0 * U[..., 0] + 4.0 * U[..., 1] - U[..., 2]) / (2.0 * ds)
        us_hi = (3.0 * U[..., -1] - 4.0 * U[..., -2] + U[..., -3]) / (2.0 * ds)
        W = self.width
        q_minus = np.abs(us_lo) * (2.0 / W) * np.sqrt(1.0 + _slope2(self.gamma_minus, h))
        q_plus = np.abs(us_hi) * (2.0 / W) * np.sqrt(1.0 + _slope2(self.gamma_plus, h))
        return q_minus, q_plus


def _base_gradient(values: np.ndarray, h: float) -> List[np.ndarray]:
    parts = np.gradient(values, h, edge_order=2)
    return [parts] if values.ndim == 1 else list(parts)


def _slope2(gamma: np.ndarray, h: float) -> np.ndarray:
    return sum(g * g for g in _base_gradient(gamma, h))


def mapped_coefficients(gamma_minus: np.ndarray, gamma_plus: np.ndarray, h: float, s_nodes: np.ndarray):
    """
    Coefficients of the Laplacian in (x, s): sum_k U_kk + 2 s_k U_ks + c U_ss + e U_s,
    with s_y = 2/W, s_k = -(2 gm_k + (s+1) W_k)/W and
    s_kk = -(2 gm_kk + (s+1) W_kk)/W - 2 s_k W_k / W.
    Returns (b list per base axis, c, e), each of shape (*base_shape, M+1).
    """
    W = gamma_plus - gamma_minus
    s1 = (s_nodes + 1.0)
    gm_d = _base_gradient(gamma_minus, h)
    W_d = _base_gradient(W, h)
    Wx = W[..., None]
    b_list = []
    c = (2.0 / Wx) ** 2 * np.ones_like(s1)
    e = np.zeros(W.shape + s1.shape)
    for k in range(W.ndim):
        gm_kk = _second_difference(gamma_minus, k, h)
        W_kk = _second_difference(W, k, h)
        s_k = -(2.0 * gm_d[k][..., None] + s1 * W_d[k][..., None]) / Wx
        s_kk = -(2.0 * gm_kk[..., None] + s1 * W_kk[..., None]) / Wx - 2.0 * s_k * W_d[k][..., None] / Wx
        b_list.append(2.0 * s_k)
        c = c + s_k * s_k
        e = e + s_kk
    return b_list, c, e


class MappedLaplacian:
    """Matrix-free second-order discretisation of the transformed operator on interior nodes."""

    def __init__(self, gamma_minus, gamma_plus, h: float, s_nodes: np.ndarray):
        self.n = gamma_minus.ndim
        self.h = h
        self.ds = float(s_nodes[1] - s_nodes[0])
        b_list, c, e = mapped_coefficients(gamma_minus, gamma_plus, h, s_nodes)
        inner = (slice(1, -1),) * (self.n + 1)
        self.b = [b[inner] for b in b_list]
        self.c = c[inner]
        self.e = e[inner]
        self.diag = -2.0 * self.n / (h * h) - 2.0 * self.c / (self.ds * self.ds)

    def _shift(self, U: np.ndarray, offsets, parity=None) -> np.ndarray:
        """Interior block of U moved by `offsets`; with `parity`, only that index-parity class."""
        if parity is None:
            return U[tuple(slice(1 + o, U.shape[a] - 1 + o) for a, o in enumerate(offsets))]
        idx = []
        for a, (o, p) in enumerate(zip(offsets, parity)):
            count = len(range(p, U.shape[a] - 2, 2))
            first = 1 + p + o
            idx.append(slice(first, first + 2 * count - 1, 2))
        return U[tuple(idx)]

    def apply(self, U: np.ndarray, parity: Optional[Tuple[int, ...]] = None) -> np.ndarray:
        """L U at interior nodes, or at the interior nodes of one index-parity class."""
        d = self.n + 1
        h2, ds = self.h * self.h, self.ds
        part = (slice(None),) * d if parity is None else tuple(slice(p, None, 2) for p in parity)

        def off(moves=None):
            o = [0] * d
            for axis, step in (moves or {}).items():
                o[axis] = step
            return self._shift(U, o, parity)

        centre = off()
        s_ax = self.n
        out = np.zeros_like(centre)
        for k in range(self.n):
            out += (off({k: 1}) - 2.0 * centre + off({k: -1})) / h2
            cross = (off({k: 1, s_ax: 1}) - off({k: 1, s_ax: -1})
                     - off({k: -1, s_ax: 1}) + off({k: -1, s_ax: -1}))
            out += self.b[k][part] * cross / (4.0 * self.h * ds)
        up, down = off({s_ax: 1}), off({s_ax: -1})
        out += self.c[part] * (up - 2.0 * centre + down) / (ds * ds)
        out += self.e[part] * (up - down) / (2.0 * ds)
        return out

    def scaled_residual(self, U: np.ndarray) -> np.ndarray:
        return self.apply(U) / np.abs(self.diag)


def model_omega(h: float, ds: float, n_cells: List[int], c_mean: float) -> float:
    """Optimal SOR factor of the model problem: Jacobi radius from the axis cosines."""
    weights = [1.0 / (h * h)] * (len(n_cells) - 1) + [c_mean / (ds * ds)]
    rho = sum(w * math.cos(math.pi / n) for w, n in zip(weights, n_cells)) / sum(weights)
    return 2.0 / (1.0 + math.sqrt(max(1.0 - rho * rho, 0.0)))


def default_layers(gamma_minus, gamma_plus, h: float) -> int:
    """Mapped cells across the slab: physical vertical spacing at most h, never below 8."""
    return max(8, int(math.ceil(float(np.max(gamma_plus - gamma_minus)) / h - 1e-9)))


def solve_slab(gamma_minus: np.ndarray, gamma_plus: np.ndarray, base_grid: Grid, tol: float = 1e-10,
               layers: Optional[int] = None, lateral: Optional[LateralData] = None,
               initial: Optional[np.ndarray] = None, min_gap: Optional[float] = None) -> SlabSolution:
    """
    Solves Laplace's equation between the graphs on the mapped slab with
    multi-colour (red-black per axis pair) SOR until the diagonally scaled
    residual sup-norm drops below tol.
    """
    h = base_grid.spacing
    gamma_minus = np.asarray(gamma_minus, dtype=float).reshape(base_grid.shape)
    gamma_plus = np.asarray(gamma_plus, dtype=float).reshape(base_grid.shape)
    gap = float(np.min(gamma_plus - gamma_minus))
    limit = 4.0 * h if min_gap is None else min_gap
    if gap < limit:
        worst = np.unravel_index(np.argmin(gamma_plus - gamma_minus), base_grid.shape)
        raise GraphCollision(f"graphs {gap:.3g} apart at base node {tuple(int(i) for i in worst)} (< {limit:.3g})",
                             detail=worst)

    M = layers if layers is not None else default_layers(gamma_minus, gamma_plus, h)
    s_nodes = np.linspace(-1.0, 1.0, M + 1)
    op = MappedLaplacian(gamma_minus, gamma_plus, h, s_nodes)

    # 1) boundary data: -1 / +1 on the graphs, lateral columns from `lateral` (default U = s)
    if initial is not None and initial.shape == base_grid.shape + (M + 1,):
        U = np.array(initial, dtype=float)
    else:
        U = np.broadcast_to(s_nodes, base_grid.shape + (M + 1,)).copy()
    U[..., 0] = -1.0
    U[..., -1] = 1.0
    lateral_values = (lateral(base_grid.coordinates(), s_nodes) if lateral is not None
                      else np.broadcast_to(s_nodes, base_grid.shape + (M + 1,)))
    edge = np.zeros(base_grid.shape, dtype=bool)
    for k in range(base_grid.dim):
        idx = [slice(None)] * base_grid.dim
        idx[k] = 0
        edge[tuple(idx)] = True
        idx[k] = -1
        edge[tuple(idx)] = True
    U[edge] = lateral_values[edge]

    # 2) colour classes by index parity, so no stencil couples two nodes of one class
    colours = list(itertools.product((0, 1), repeat=U.ndim))

    n_cells = list(np.asarray(base_grid.shape) - 1) + [M]
    omega = model_omega(h, op.ds, n_cells, float(np.mean(op.c)))
    logger.debug(f"slab solve: base {base_grid.shape}, {M} layers, omega={omega:.4f}")

    # 3) sweeps
    inner = (slice(1, -1),) * U.ndim
    residuals: List[float] = []
    res = float(np.max(np.abs(op.scaled_residual(U)))) if U[inner].size else 0.0
    sweeps = 0
    while res >= tol:
        for parity in colours:
            view = op._shift(U, (0,) * U.ndim, parity)
            part = tuple(slice(p, None, 2) for p in parity)
            view -= omega * op.apply(U, parity) / op.diag[part]
        sweeps += 1
        res = float(np.max(np.abs(op.scaled_residual(U))))
        residuals.append(res)
        if not np.isfinite(res):
            raise LinearSolveStall(f"slab residual became non-finite after {sweeps} sweeps", detail=sweeps)
        if sweeps % STALL_WINDOW == 0 and sweeps >= STALL_WINDOW:
            before = residuals[sweeps - STALL_WINDOW]
            if res > STALL_REDUCTION * before:
                raise LinearSolveStall(
                    f"slab residual {res:.3e} reduced less than 1% over {STALL_WINDOW} sweeps", detail=sweeps)
        if sweeps >= MAX_SWEEPS:
            raise LinearSolveStall(f"slab solve did not reach {tol:g} in {MAX_SWEEPS} sweeps", detail=sweeps)

    logger.debug(f"slab solve converged in {sweeps} sweeps (residual {res:.3e})")
    return SlabSolution(base_grid, gamma_minus, gamma_plus, s_nodes, U, sweeps, omega, residuals)


def resample(slab: SlabSolution, grid: Grid, eps: Optional[float] = None, label: str = "") -> ScalarField:
    """
    Cubic-spline resampling of each mapped column onto the ambient grid (vertical
    axis last); -1 below the lower graph, +1 above the upper graph.
    """
    base_shape = slab.base_grid.shape
    n_base = int(np.prod(base_shape))
    M = len(slab.s_nodes) - 1
    cols = slab.U.reshape(n_base, M + 1)
    coeffs = CubicSpline(slab.s_nodes, cols, axis=1).c       # (4, M, n_base)

    y = grid.axes()[-1]
    gm = slab.gamma_minus.reshape(n_base, 1)
    W = slab.width.reshape(n_base, 1)
    s = 2.0 * (y[None, :] - gm) / W - 1.0
    values = np.where(s <= -1.0, -1.0, 1.0)
    inside = (s > -1.0) & (s < 1.0)
    b_idx, _ = np.nonzero(inside)
    s_in = s[inside]
    k = np.clip(np.floor((s_in + 1.0) / slab.ds).astype(int), 0, M - 1)
    t = s_in - slab.s_nodes[k]
    c = coeffs[:, k, b_idx]
    values[inside] = ((c[0] * t + c[1]) * t + c[2]) * t + c[3]
    values = np.clip(values, -1.0, 1.0)
    return ScalarField(grid, values.reshape(grid.shape), label, eps)


def laplace_between_graphs(gamma_minus: np.ndarray, gamma_plus: np.ndarray, base_grid: Grid, tol: float = 1e-10,
                           grid: Optional[Grid] = None, eps: Optional[float] = None,
                           lateral: Optional[LateralData] = None) -> ScalarField:
    """
    u harmonic between the graphs, -1 on the lower and +1 on the upper one,
    frozen to -1/+1 outside. Without an ambient grid, the vertical extent is
    the graphs' range padded by 4h.
    """
    slab = solve_slab(gamma_minus, gamma_plus, base_grid, tol, lateral=lateral)
    if grid is None:
        h = base_grid.spacing
        lo = math.floor(float(np.min(gamma_minus)) / h - 4) * h
        hi = math.ceil(float(np.max(gamma_plus)) / h + 4) * h
        n = int(round((hi - lo) / h))
        grid = Grid(base_grid.dim + 1, base_grid.shape + (n + 1,), base_grid.origin + (lo,), h)
    return resample(slab, grid, eps, label="laplace_between_graphs")
