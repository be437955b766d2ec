import numpy as np
import pytest

from fbac_lab.errors import NotHarmonic
from fbac_lab.field import analytic_field, build_grid
from fbac_lab.config_loader import config_from_dict
from fbac_lab.models import ScalarField
from fbac_lab.solver import solution_from_field, solve
from fbac_lab.verify import (
    check_barrier,
    check_bounds,
    check_decomposition,
    check_flux_identity,
    check_mean_curvature_bound,
    check_sigma_elliptic,
    mode_agreement,
    theorem_report,
)

EPS = 0.1
H = 1.0 / 64
PROFILE_BOX = [(-1.0, 1.0), (-0.5, 0.5)]


@pytest.fixture(scope="module")
def profile():
    return analytic_field("profile1d", {"eps": EPS}, build_grid(PROFILE_BOX, H))


@pytest.fixture(scope="module")
def flat(profile):
    return solution_from_field(profile, delta=0.25)


def test_decomposition_is_exact_on_flat_levels(profile):
    phi = analytic_field("affine", {"a": (0.3, 0.7), "b": 0.1}, profile.grid)
    res = check_decomposition(profile, phi, (-0.25, 0.0, 0.25))
    assert res["convention"].max <= 1e-8
    assert res["flipped"].max <= 1e-8
    assert res["convention"].count > 0


def test_decomposition_sign_on_circles():
    grid = build_grid([(-0.25, 0.25), (-0.25, 0.75)], H)
    u = analytic_field("distance", {"c": (0.0, -0.5)}, grid)
    phi = analytic_field("radius_squared", {"c": (0.0, -0.5)}, grid)
    res = check_decomposition(u, phi, (0.5, 0.75))
    assert res["convention"].max <= 0.05
    # the other sign arrangement misses Lap phi = 4 by 2 |H| d_nu phi = 4
    assert res["flipped"].mean == pytest.approx(4.0, abs=0.05)


def test_decomposition_needs_a_shared_grid(profile):
    other = analytic_field("affine", {"a": (1.0, 0.0), "b": 0.0}, build_grid(PROFILE_BOX, 2 * H))
    with pytest.raises(ValueError):
        check_decomposition(profile, other, (0.0,))


def test_sigma_elliptic_on_flat_levels(profile):
    res = check_sigma_elliptic(profile, (-0.25, 0.0, 0.25))
    assert res["printed"].max <= 1e-8
    assert res["corrected"].max <= 1e-8
    assert res["points"].shape[-1] == 2


def test_sigma_elliptic_printed_form_misses_the_tangential_term():
    u = analytic_field("harmonic_exp", {}, build_grid([(-1.0, 1.5), (-1.25, 1.25)], H))
    res = check_sigma_elliptic(u, (np.cos(np.pi / 4),), [[0.78125]], axis=0)
    x, y = res["points"][0]
    assert res["printed_values"][0] == pytest.approx(np.exp(-x) * np.sin(y) ** 2, abs=2e-2)
    assert res["corrected"].max <= 2e-2


def test_sigma_elliptic_requires_a_harmonic_field():
    u = analytic_field("distance", {"c": (0.0, -0.5)}, build_grid([(-0.25, 0.25), (-0.25, 0.75)], H))
    with pytest.raises(NotHarmonic):
        check_sigma_elliptic(u, (0.5,))


def test_bounds_on_a_flat_solution_are_not_applicable(flat):
    bounds = check_bounds(flat)
    assert bounds.eta == pytest.approx(0.0, abs=1e-10)
    assert not bounds.applicable
    assert bounds.C_naive is None and bounds.C_interior is None
    assert bounds.sup_sigma_dev <= 1e-9
    assert check_barrier(flat).status == "not_applicable"


def test_barrier_constants_and_margins(flat):
    eta = 0.2
    barrier = check_barrier(flat, eta)
    assert barrier.C_tau == pytest.approx(6.0 * EPS * eta ** 2)
    assert barrier.C_x == pytest.approx(4.0 * EPS * eta ** 2)
    # sigma = eps in the layer, so the computed margin matches the closed form
    assert barrier.margins["laplacian_phi"] == pytest.approx(barrier.margins["analytic_laplacian_phi"], rel=1e-9)
    assert barrier.margins["laplacian_phi"] < 0
    assert barrier.margins["lateral"] == pytest.approx(barrier.C_x, abs=1e-9)
    assert barrier.status == "ok"
    assert barrier.is_supersolution


def test_free_boundary_checks_on_a_flat_solution(flat):
    mc = check_mean_curvature_bound(flat)
    assert mc["H_max"] == pytest.approx(0.0, abs=1e-10)
    assert mc["C_mean_curvature"] is None
    flux = check_flux_identity(flat)
    assert flux["max_diff"] <= 1e-8
    assert flux["within_20h"]


def test_mode_agreement(flat, profile):
    assert mode_agreement(flat, flat) == 0.0
    shifted = ScalarField(profile.grid, np.clip(profile.values + 0.01, -1.0, 1.0), "shifted", EPS)
    other = solution_from_field(shifted, delta=0.25)
    assert mode_agreement(flat, other) == pytest.approx(0.01, abs=1e-12)
    coarse = solution_from_field(analytic_field("profile1d", {"eps": EPS}, build_grid(PROFILE_BOX, 2 * H)),
                                 delta=0.25)
    with pytest.raises(ValueError):
        mode_agreement(flat, coarse)


@pytest.mark.slow
def test_theorem_report_on_a_flat_solution(flat):
    report = theorem_report(flat, alphas=(0.5,))
    data = report.to_dict()
    assert "timings" not in data
    assert set(report.timings) >= {"levels", "holder", "bounds", "residuals"}
    assert data["instance"]["mode"] == "loaded"
    assert data["instance"]["gamma0"] is None
    assert data["ratios"]["applicable"] is False
    assert data["ratios"]["C_naive"] is None
    assert data["barrier"]["status"] == "not_applicable"
    assert data["extras"]["sup_sigma_dev"] <= 1e-9
    assert data["residuals"]["lemma21"]["max"] <= 1e-8
    assert data["residuals"]["ode_sigma_B"]["max"] <= 1e-8
    assert len(data["levels"]) == 21
    assert data["grid"]["alphas"] == [0.5]


@pytest.fixture(scope="module")
def reference():
    return solve(config_from_dict({"eps": 0.05, "gamma0": "0.03*cos(pi*x)"}))


@pytest.mark.slow
def test_reference_instance_settles_flat(reference):
    # the solved layer is flat at gamma0(+-1), so the curvature ratios have nothing to measure
    bounds = check_bounds(reference)
    assert bounds.eta < 1e-3
    assert not bounds.applicable
    assert bounds.sup_sigma_dev <= 1e-6
    assert check_barrier(reference).status == "not_applicable"
    mc = check_mean_curvature_bound(reference)
    assert mc["H_max"] <= 1e-3
    flux = check_flux_identity(reference)
    assert flux["within_20h"]


@pytest.mark.slow
def test_barrier_on_the_reference_instance(reference):
    eta = 0.2
    barrier = check_barrier(reference, eta)
    assert barrier.is_supersolution
    analytic = barrier.margins["analytic_laplacian_phi"]
    assert barrier.margins["laplacian_phi"] == pytest.approx(analytic, rel=0.25)


@pytest.mark.slow
def test_theorem_report_on_the_reference_instance(reference):
    data = theorem_report(reference, alphas=(0.25, 0.5, 0.75)).to_dict()
    assert data["ratios"]["applicable"] is False
    assert data["extras"]["sup_sigma_dev"] <= 1e-6
    assert data["extras"]["free_boundary_flux"]["within_20h"]
