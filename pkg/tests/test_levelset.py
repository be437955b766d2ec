import numpy as np
import pytest

from fbac_lab.errors import (
    DegenerateGradient,
    EmptyRegion,
    MultipleCrossings,
    NoCrossing,
    TooNearBoundary,
)
from fbac_lab.field import analytic_field, build_grid
from fbac_lab.levelset import (
    base_node_indices,
    eta_bound,
    extract_level,
    free_boundary_sigma,
    graph_geometry,
    holder_norm,
    laplace_beltrami,
    level_points,
    level_rows,
    shape_from_field,
    solution_surface,
)
from fbac_lab.models import Region
from fbac_lab.solver import solution_from_field

EPS = 0.1
PROFILE_BOX = [(-1.0, 1.0), (-0.5, 0.5)]
DISTANCE_BOX = [(-0.25, 0.25), (-0.25, 0.75)]
CENTRE = (0.0, -0.5)


def _distance(h=1.0 / 64):
    return analytic_field("distance", {"c": CENTRE}, build_grid(DISTANCE_BOX, h))


def _profile(h=1.0 / 64):
    return analytic_field("profile1d", {"eps": EPS}, build_grid(PROFILE_BOX, h))


def test_graph_geometry_of_a_circle_arc():
    r = 0.5
    x = np.linspace(-0.3, 0.3, 7)
    g = np.sqrt(r * r - x * x)
    dgamma = (-x / g)[:, None]
    d2gamma = (-r * r / g ** 3)[:, None, None]
    _, inv_metric, hform, H, shape_operator = graph_geometry(dgamma, d2gamma)
    assert np.allclose(H, -1.0 / r, atol=1e-12)
    assert np.allclose(shape_operator[:, 0, 0], -1.0 / r, atol=1e-12)
    assert np.allclose(inv_metric[:, 0, 0] * (1.0 + dgamma[:, 0] ** 2), 1.0, atol=1e-12)


@pytest.mark.parametrize("tau", [-0.5, 0.0, 0.5])
def test_profile_levels_are_flat(tau):
    S = extract_level(_profile(), tau)
    assert np.allclose(S.heights, tau * EPS, atol=1e-12)
    assert np.allclose(S.H, 0.0, atol=1e-8)
    assert np.allclose(S.sigma, EPS, rtol=1e-12)
    assert np.allclose(S.nu, [0.0, 1.0], atol=1e-12)
    assert not S.extrapolated


def test_level_next_to_the_layer_edge_keeps_exact_speed():
    # crossing cell touches the last layer node; the kinked node beyond must not leak in
    S = extract_level(_profile(), 0.9)
    assert np.allclose(S.heights, 0.09, atol=1e-12)
    assert np.allclose(S.sigma, EPS, rtol=1e-10)


def test_distance_level_is_a_circle():
    tau = 0.5
    S = extract_level(_distance(), tau)
    x = S.base_points[..., 0]
    assert np.allclose(S.heights, np.sqrt(tau ** 2 - x ** 2) + CENTRE[1], atol=1e-6)
    inner = Region(0.2).mask(S.base_points)
    assert np.allclose(S.H[inner], -1.0 / tau, atol=1e-2)
    assert np.allclose(S.sigma[inner], 1.0, atol=2e-3)
    assert np.allclose(S.h_spectral()[inner], 1.0 / tau, atol=1e-2)


def test_shape_from_field_on_a_circle():
    u = _distance()
    shape = shape_from_field(u, [0.0, 0.0])
    assert shape.H == pytest.approx(-2.0, abs=1e-2)
    assert shape.sigma == pytest.approx(1.0, abs=1e-3)
    assert np.allclose(shape.nu, [0.0, 1.0], atol=1e-9)
    batch = shape_from_field(u, np.array([[0.0, 0.0], [0.0, 0.25]]))
    assert np.allclose(batch.H, [-2.0, -4.0 / 3.0], atol=2e-2)


def test_shape_from_field_rejects_the_frozen_phase():
    with pytest.raises(DegenerateGradient):
        shape_from_field(_profile(), [0.0, 0.3])


def test_extraction_failures():
    with pytest.raises(NoCrossing):
        extract_level(_distance(), 2.0)
    with pytest.raises(TooNearBoundary):
        extract_level(_distance(), 1.24)
    centred = analytic_field("distance", {"c": (0.0, 0.0)}, build_grid([(-0.25, 0.25), (-0.5, 0.5)], 1.0 / 16))
    with pytest.raises(MultipleCrossings):
        extract_level(centred, 0.3)
    falling = analytic_field("affine", {"a": (0.0, -1.0), "b": 0.0}, build_grid(PROFILE_BOX, 1.0 / 16))
    with pytest.raises(NoCrossing):
        extract_level(falling, 0.0)
    with pytest.raises(ValueError):
        extract_level(_profile(), 1.0)


def test_eta_bound():
    assert eta_bound(_profile(), (-0.5, 0.0, 0.5)) == pytest.approx(0.0, abs=1e-9)
    assert eta_bound(_distance(), (0.5, 0.75), Region(0.2)) == pytest.approx(2.0, abs=2e-2)
    with pytest.raises(EmptyRegion):
        eta_bound(_distance(), (0.5,), Region(-1.0))


def test_laplace_beltrami_of_a_coordinate_on_a_circle():
    tau = 0.5
    S = extract_level(_distance(), tau)
    x = S.base_points[..., 0]
    lb = laplace_beltrami(S, x)
    assert np.isnan(lb[0]) and np.isnan(lb[-1])
    inner = Region(0.2).mask(S.base_points)
    assert np.allclose(lb[inner], -x[inner] / tau ** 2, atol=5e-3)


def test_level_points_and_node_indices():
    S = extract_level(_profile(), 0.5)
    pts = level_points(S, [[0.1234], [-0.5]])
    assert np.allclose(pts, [[0.1234, 0.05], [-0.5, 0.05]], atol=1e-12)
    assert base_node_indices(S.base_grid, [[-1.0], [1.0]]).tolist() == [0, S.base_grid.size - 1]
    with pytest.raises(ValueError):
        base_node_indices(S.base_grid, [[0.001]])


def test_level_rows_layout():
    S = extract_level(_profile(), 0.0)
    rows = level_rows(S)
    assert len(rows) == S.base_grid.size
    # x1, gamma, sigma, H, h11
    assert len(rows[0]) == 5
    assert rows[0][:3] == pytest.approx([-1.0, 0.0, EPS])


def _naive_holder(values, points, alpha):
    sup = max(abs(v) for v in values)
    semi = 0.0
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            dist = float(np.sqrt(np.sum((points[i] - points[j]) ** 2)))
            semi = max(semi, abs(values[i] - values[j]) / dist ** alpha)
    return sup, semi


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0])
def test_holder_norm_matches_a_pair_scan(alpha):
    rng = np.random.default_rng(7)
    pts = rng.uniform(-1.0, 1.0, size=(40, 2))
    vals = rng.normal(size=40)
    norm = holder_norm(vals, alpha, pts)
    sup, semi = _naive_holder(vals, pts, alpha)
    assert norm.sup_part == pytest.approx(sup, rel=1e-13)
    assert norm.seminorm_part == pytest.approx(semi, rel=1e-13)
    assert norm.total == pytest.approx(sup + semi, rel=1e-13)


def test_holder_norm_homogeneity_and_shift():
    pts = np.linspace(0.0, 1.0, 11)[:, None]
    line = holder_norm(2.0 * pts[:, 0], 1.0, pts)
    assert line.sup_part == pytest.approx(2.0)
    assert line.seminorm_part == pytest.approx(2.0)

    vals = np.sin(5.0 * pts[:, 0])
    base = holder_norm(vals, 0.5, pts)
    scaled = holder_norm(-3.0 * vals, 0.5, pts)
    shifted = holder_norm(vals + 5.0, 0.5, pts)
    assert scaled.total == pytest.approx(3.0 * base.total, rel=1e-12)
    assert shifted.seminorm_part == pytest.approx(base.seminorm_part, rel=1e-12)
    assert holder_norm(np.full(11, -0.7), 0.5, pts).seminorm_part == 0.0


def test_holder_norm_on_matrices_uses_the_spectral_norm():
    pts = np.array([[0.0], [0.5], [1.0]])
    mats = np.array([np.diag([1.0, -2.0]), np.zeros((2, 2)), np.diag([0.0, 3.0])])
    norm = holder_norm(mats, 1.0, pts)
    assert norm.sup_part == pytest.approx(3.0)
    # |diag(1,-2) - diag(0,3)| = 5 over distance 1; |0 - diag(0,3)| = 3 over 0.5
    assert norm.seminorm_part == pytest.approx(6.0)


def test_holder_norm_rejects_bad_input():
    pts = np.array([[0.0], [1.0]])
    with pytest.raises(ValueError):
        holder_norm([0.0, 1.0], 0.0, pts)
    with pytest.raises(ValueError):
        holder_norm([0.0, 1.0], 1.5, pts)
    with pytest.raises(EmptyRegion):
        holder_norm([0.0, 1.0], 0.5, pts + 2.0, Region(0.5))


def test_free_boundaries_of_a_loaded_profile():
    sol = solution_from_field(_profile(), delta=0.25)
    assert np.allclose(sol.gamma_plus, EPS, atol=1e-9)
    sigma, dsigma = free_boundary_sigma(sol, 1)
    assert np.allclose(sigma, EPS, rtol=1e-9)
    assert np.allclose(dsigma, 0.0, atol=1e-9)
    S = solution_surface(sol, -1.0)
    assert S.tau == -1.0
    assert S.extrapolated
    assert np.allclose(S.heights, -EPS, atol=1e-9)
    assert np.allclose(S.sigma, EPS, rtol=1e-9)
    interior = solution_surface(sol, 0.5)
    assert not interior.extrapolated
