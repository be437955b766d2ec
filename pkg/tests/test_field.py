import numpy as np
import pytest
from pytools.convergence import EOCRecorder

from fbac_lab.errors import (
    FormatError,
    InvalidOracleParams,
    NonCommensurate,
    OutOfDomain,
    TooCoarse,
    TooNearBoundary,
    UnknownOracle,
)
from fbac_lab.field import (
    analytic_field,
    build_grid,
    dump_field,
    gradient_at,
    hessian_at,
    laplacian_at,
    load_field,
    nodal_laplacian,
    restrict_to_graph,
    sample,
    sigma_field,
)
from fbac_lab.models import ScalarField

BOX = [(-1.0, 1.0), (-0.5, 0.5)]
HARMONIC_BOX = [(-1.0, 1.5), (-1.25, 1.25)]


def test_build_grid_shape_and_origin():
    grid = build_grid(BOX, 0.5)
    assert grid.shape == (5, 3)
    assert grid.origin == (-1.0, -0.5)
    assert grid.node((4, 2)).tolist() == [1.0, 0.5]


def test_build_grid_rejects_non_tiling_spacing():
    with pytest.raises(NonCommensurate):
        build_grid(BOX, 0.3)


def test_build_grid_rejects_too_few_nodes():
    with pytest.raises(TooCoarse):
        build_grid([(-0.5, 0.5)], 1.0)


def test_unknown_oracle_and_bad_params():
    grid = build_grid(BOX, 0.25)
    with pytest.raises(UnknownOracle):
        analytic_field("no_such_field", {}, grid)
    with pytest.raises(InvalidOracleParams):
        analytic_field("tilted", {"eps": 0.1, "e": (1.0, 1.0)}, grid)
    with pytest.raises(InvalidOracleParams):
        analytic_field("profile1d", {"eps": -1.0}, grid)


def test_sample_is_exact_at_nodes_and_for_affine_fields():
    grid = build_grid(BOX, 0.125)
    u = analytic_field("harmonic_exp", {}, grid)
    node = grid.node((3, 5))
    assert sample(u, node) == pytest.approx(np.exp(node[0]) * np.cos(node[1]), abs=1e-15)

    phi = analytic_field("affine", {"a": (0.3, -0.7), "b": 0.2}, grid)
    p = np.array([[0.123, -0.321], [-0.77, 0.41]])
    assert np.allclose(sample(phi, p), p @ np.array([0.3, -0.7]) + 0.2, atol=1e-14)


def test_derivatives_exact_on_polynomials():
    grid = build_grid(BOX, 0.0625)
    phi = analytic_field("affine", {"a": (0.3, -0.7), "b": 0.2}, grid)
    quad = analytic_field("radius_squared", {"c": (0.1, -0.2)}, grid)
    p = np.array([0.0321, 0.1234])
    assert np.allclose(gradient_at(phi, p), [0.3, -0.7], atol=1e-12)
    assert np.allclose(hessian_at(quad, p), 2.0 * np.eye(2), atol=1e-9)
    assert laplacian_at(quad, p) == pytest.approx(4.0, abs=1e-9)


def test_point_evaluation_domain_errors():
    grid = build_grid(BOX, 0.0625)
    u = analytic_field("harmonic_exp", {}, grid)
    with pytest.raises(OutOfDomain):
        sample(u, [1.5, 0.0])
    with pytest.raises(TooNearBoundary):
        gradient_at(u, [0.99, 0.0])


def test_harmonic_laplacian_converges_second_order():
    eoc = EOCRecorder()
    for h in (1.0 / 16, 1.0 / 32, 1.0 / 64):
        u = analytic_field("harmonic_exp", {}, build_grid(HARMONIC_BOX, h))
        inner = u.grid.distance_to_boundary(u.grid.coordinates()) >= 2 * h - 1e-12
        eoc.add_data_point(h, float(np.max(np.abs(nodal_laplacian(u)[inner]))))
    assert eoc.order_estimate() >= 1.7


def test_sigma_field_on_profile():
    eps = 0.1
    u = analytic_field("profile1d", {"eps": eps}, build_grid(BOX, 1.0 / 64))
    sig = sigma_field(u)
    assert sample(sig, [0.0, 0.0]) == pytest.approx(eps, rel=1e-12)
    # frozen phase: zero gradient carries the sentinel
    assert sample(sig, [0.0, 0.4]) == 0.0


def test_restrict_to_graph_is_exact_on_cubics():
    grid = build_grid(BOX, 0.0625)
    y = grid.coordinates()[..., 1]
    values = y ** 3 - 0.5 * y
    base = grid.drop_axis(-1)
    heights = 0.2 * np.sin(3.0 * base.coordinates()[..., 0])
    out = restrict_to_graph(values, grid, heights)
    assert np.allclose(out, heights ** 3 - 0.5 * heights, atol=1e-12)


def test_dump_round_trip_is_byte_identical(tmp_path):
    grid = build_grid(BOX, 0.125)
    u = analytic_field("tilted", {"eps": 0.1, "e": (0.6, 0.8)}, grid)
    first = dump_field(u, str(tmp_path / "a.fbac"))
    loaded = load_field(first)
    assert loaded.grid == grid
    assert loaded.eps == u.eps
    assert np.array_equal(loaded.values, u.values)
    second = dump_field(loaded, str(tmp_path / "b.fbac"))
    assert (tmp_path / "a.fbac").read_bytes() == (tmp_path / "b.fbac").read_bytes()
    assert second.endswith("b.fbac")


def test_load_names_the_bad_line(tmp_path):
    u = ScalarField(build_grid([(0.0, 1.0)], 0.5), [0.0, 0.5, 1.0], "line")
    path = dump_field(u, str(tmp_path / "f.fbac"))
    lines = (tmp_path / "f.fbac").read_text().splitlines()
    lines[9] = "not-a-number"
    (tmp_path / "f.fbac").write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError) as info:
        load_field(path)
    assert info.value.line == 10
    assert "f.fbac:10" in str(info.value)
