# === fbac_lab/models.py ===

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class Grid:
    """
    Uniform isotropic node grid over an axis-aligned box.
    Node i (a multi-index) sits at origin + i * spacing.
    """
    dim: int
    shape: Tuple[int, ...]
    origin: Tuple[float, ...]
    spacing: float

    def __post_init__(self):
        if len(self.shape) != self.dim or len(self.origin) != self.dim:
            raise ValueError(f"grid of dim {self.dim} needs {self.dim} shape/origin entries")
        if not self.spacing > 0:
            raise ValueError(f"grid spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + (np.asarray(self.shape) - 1) * self.spacing

    def node(self, index: Sequence[int]) -> np.ndarray:
        return self.lower + np.asarray(index) * self.spacing

    def axes(self) -> List[np.ndarray]:
        return [o + np.arange(n) * self.spacing for o, n in zip(self.origin, self.shape)]

    def coordinates(self) -> np.ndarray:
        """All node coordinates, shape (*shape, dim)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def drop_axis(self, axis: int) -> "Grid":
        axis = axis % self.dim
        keep = [k for k in range(self.dim) if k != axis]
        return Grid(
            dim=self.dim - 1,
            shape=tuple(self.shape[k] for k in keep),
            origin=tuple(self.origin[k] for k in keep),
            spacing=self.spacing,
        )

    def shifted(self, offset: Sequence[float]) -> "Grid":
        return Grid(self.dim, self.shape, tuple(self.lower + np.asarray(offset, dtype=float)), self.spacing)

    def distance_to_boundary(self, points: np.ndarray) -> np.ndarray:
        """Signed distance to the box boundary (negative outside); points shape (..., dim)."""
        p = np.asarray(points, dtype=float)
        return np.minimum(p - self.lower, self.upper - p).min(axis=-1)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    Grid-sampled scalar function. `values` has the grid's shape; `eps` is set when
    the field is a solved free-boundary instance.
    """
    grid: Grid
    values: np.ndarray
    label: str = ""
    eps: Optional[float] = None
    _cache: Dict[str, Any] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.size != self.grid.size:
            raise ValueError(f"field has {values.size} values, grid needs {self.grid.size}")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"field '{self.label}' contains non-finite values")
        if self.eps is not None and not self.eps > 0:
            raise ValueError(f"field eps must be positive, got {self.eps}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "label", " ".join(str(self.label).split()))

    def with_values(self, values: np.ndarray, label: Optional[str] = None) -> "ScalarField":
        return ScalarField(self.grid, values, self.label if label is None else label, self.eps)


@dataclass
class SolverConfig:
    """Parameters of one free-boundary instance; see config_loader.validate_config."""
    eps: float
    gamma0: Any                                   # expressions.SeedGraph
    base_dim: int = 1
    half_height: float = 0.5
    h: Optional[float] = None                     # None -> eps / 8
    mode: str = "trial_fb"
    deltas: Tuple[float, ...] = (0.5, 0.25, 0.1, 0.05)
    relaxation: float = 0.5
    linear_tol: float = 1e-10
    tol_fb: float = 1e-6
    max_iter: Optional[int] = None                # None -> mode default

    @property
    def spacing(self) -> float:
        return self.h if self.h is not None else self.eps / 8.0

    @property
    def iteration_cap(self) -> int:
        if self.max_iter is not None:
            return int(self.max_iter)
        return 20000 if self.mode == "variational" else 200

    def describe(self) -> str:
        return (f"eps={self.eps:.17g} h={self.spacing:.17g} mode={self.mode} "
                f"gamma0={self.gamma0}")


@dataclass
class ConvergenceLog:
    iterations: int = 0
    residuals: List[float] = field(default_factory=list)
    energies: List[float] = field(default_factory=list)
    stages: List[int] = field(default_factory=list)
    converged: bool = False
    message: str = ""

    def record(self, residual: float, energy: float = float("nan"), stage: int = 0):
        self.iterations += 1
        self.residuals.append(float(residual))
        self.energies.append(float(energy))
        self.stages.append(int(stage))


@dataclass
class Solution:
    """
    A solved instance: u on the ambient grid (vertical = last axis) and the free
    boundaries {u=-1}, {u=+1} as heights over the base grid.
    """
    u: ScalarField
    gamma_minus: np.ndarray
    gamma_plus: np.ndarray
    log: ConvergenceLog = field(default_factory=ConvergenceLog)
    mode: str = ""
    config: Optional[SolverConfig] = None

    @property
    def eps(self) -> float:
        return float(self.u.eps)

    @property
    def base_grid(self) -> Grid:
        return self.u.grid.drop_axis(-1)

    def check_invariants(self, tol: float = 1e-10) -> List[str]:
        """Returns a list of violated invariants (empty when the solution is valid)."""
        problems = []
        if np.any(self.gamma_minus >= self.gamma_plus):
            problems.append("gamma_minus >= gamma_plus somewhere")
        vals = self.u.values
        if np.any(np.abs(vals) > 1 + tol):
            problems.append("|u| > 1 somewhere")
        y = self.u.grid.axes()[-1]
        below = y[None, :] < self.gamma_minus.reshape(-1, 1)
        above = y[None, :] > self.gamma_plus.reshape(-1, 1)
        flat = vals.reshape(-1, vals.shape[-1])
        if np.any(np.abs(flat[below] + 1) > tol) or np.any(np.abs(flat[above] - 1) > tol):
            problems.append("u not frozen to +-1 outside the layer")
        if not all(np.isfinite(self.log.residuals)):
            problems.append("non-finite residual history")
        return problems


@dataclass(frozen=True)
class Region:
    """Subset of base nodes: the Euclidean ball |x| <= radius, or everything."""
    radius: Optional[float] = None

    def mask(self, base_points: np.ndarray) -> np.ndarray:
        pts = np.asarray(base_points, dtype=float)
        if self.radius is None:
            return np.ones(pts.shape[:-1], dtype=bool)
        return np.linalg.norm(pts, axis=-1) <= self.radius + 1e-12

    def describe(self) -> str:
        return "all" if self.radius is None else f"|x|<={self.radius:g}"


@dataclass
class LevelSurface:
    """
    The tau-level of u as a height graph over the grid axes other than `axis`.
    Per-base-node caches; sigma is NaN where the field could not be sampled.
    """
    tau: float
    axis: int
    base_grid: Grid
    heights: np.ndarray            # (*base)
    dgamma: np.ndarray             # (*base, n)
    d2gamma: np.ndarray            # (*base, n, n)
    metric: np.ndarray             # (*base, n, n)
    inv_metric: np.ndarray         # (*base, n, n)
    nu: np.ndarray                 # (*base, d), ambient axis order
    sigma: np.ndarray              # (*base)
    h: np.ndarray                  # (*base, n, n) coordinate components
    H: np.ndarray                  # (*base)
    shape_operator: np.ndarray     # (*base, n, n) orthonormal frame
    extrapolated: bool = False

    @property
    def base_points(self) -> np.ndarray:
        return self.base_grid.coordinates()

    @property
    def area_element(self) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.metric))

    def h_spectral(self) -> np.ndarray:
        return np.abs(np.linalg.eigvalsh(self.shape_operator)).max(axis=-1)

    def h_frobenius2(self) -> np.ndarray:
        return np.einsum("...ij,...ij->...", self.shape_operator, self.shape_operator)

    def ambient_points(self) -> np.ndarray:
        return insert_height(self.base_points, self.heights, self.axis)


@dataclass
class HolderNorm:
    alpha: float
    sup_part: float
    seminorm_part: float
    region: str = "all"

    @property
    def total(self) -> float:
        return self.sup_part + self.seminorm_part


@dataclass
class ShapeSample:
    """Field-side geometry at a point, or a batch of points (leading axes)."""
    h: np.ndarray                  # (..., d, d) tangent-projected
    H: Any
    nu: np.ndarray                 # (..., d)
    sigma: Any

    @property
    def h_frobenius2(self):
        return np.einsum("...ij,...ij->...", self.h, self.h)

    @property
    def h_spectral(self):
        return np.abs(np.linalg.eigvalsh(self.h)).max(axis=-1)


@dataclass
class FlowTrajectory:
    start: np.ndarray
    taus: np.ndarray
    points: np.ndarray             # (N, d)
    sigma: np.ndarray
    H: np.ndarray
    lap_u: np.ndarray
    defect: np.ndarray
    h_frobenius2: np.ndarray
    nu: np.ndarray                 # (N, d)
    velocity: np.ndarray           # (N, d)
    spacing: float = float("nan")  # grid h of the field that produced it

    @property
    def dtau(self) -> float:
        return float(self.taus[1] - self.taus[0]) if len(self.taus) > 1 else float("nan")

    def __len__(self):
        return len(self.taus)


@dataclass
class ResidualStats:
    """max/mean of |residual| over a sample set, with the grid parameters used."""
    name: str
    max: float
    mean: float
    count: int
    h: float
    dtau: Optional[float] = None
    values: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_values(cls, name: str, values, h: float, dtau: Optional[float] = None) -> "ResidualStats":
        v = np.abs(np.asarray(values, dtype=float)).ravel()
        v = v[np.isfinite(v)]
        if v.size == 0:
            return cls(name, float("nan"), float("nan"), 0, h, dtau, v)
        return cls(name, float(v.max()), float(v.mean()), int(v.size), h, dtau, v)

    def as_dict(self) -> Dict[str, Any]:
        return {"max": self.max, "mean": self.mean, "count": self.count,
                "h": self.h, "dtau": self.dtau}


@dataclass
class FbResidual:
    interior_harmonicity: float
    boundary_flux: float


@dataclass
class BoundsCheck:
    eta: float
    sup_sigma_dev: float
    sup_sigma_dev_interior: float
    C_naive: Optional[float]
    C_interior: Optional[float]
    applicable: bool


@dataclass
class BarrierCheck:
    status: str                    # "ok", "violated", "not_applicable"
    is_supersolution: bool
    C_tau: float
    C_x: float
    margins: Dict[str, float] = field(default_factory=dict)


@dataclass
class GeometryReport:
    instance: Dict[str, Any]
    eta: float
    levels: List[Dict[str, Any]]
    ratios: Dict[str, Any]
    residuals: Dict[str, Any]
    barrier: Dict[str, Any]
    grid: Dict[str, Any]
    version: str
    extras: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        # timings stay out of the data file; they go to the run manifest
        return {
            "instance": self.instance,
            "eta": self.eta,
            "levels": self.levels,
            "ratios": self.ratios,
            "residuals": self.residuals,
            "barrier": self.barrier,
            "grid": self.grid,
            "version": self.version,
            "extras": self.extras,
        }


@dataclass
class RunManifest:
    subcommand: str
    config_path: Optional[str] = None
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    overrides: Dict[str, Any] = field(default_factory=dict)
    version: str = ""
    timings: Dict[str, float] = field(default_factory=dict)


def insert_height(base_points: np.ndarray, heights: np.ndarray, axis: int) -> np.ndarray:
    """Ambient coordinates from base coordinates (..., n) and heights (...) along `axis`."""
    base = np.asarray(base_points, dtype=float)
    hts = np.asarray(heights, dtype=float)[..., None]
    hts = np.broadcast_to(hts, base.shape[:-1] + (1,))
    axis = axis % (base.shape[-1] + 1)
    return np.concatenate([base[..., :axis], hts, base[..., axis:]], axis=-1)


def split_height(points: np.ndarray, axis: int) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse of insert_height: (base coordinates, heights)."""
    pts = np.asarray(points, dtype=float)
    axis = axis % pts.shape[-1]
    return np.delete(pts, axis, axis=-1), pts[..., axis]
