import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capilab.geometry import (
    DomainSpec, NotStarShapedError, SpecError, boundary_point, check_exterior_cap_condition,
    contact_angles, cot, curvature, distance_to_sigma, identity_residuals, measures, radii,
)
from capilab.quantities import capillary_constant, cmc_deficit

# Frozen oracles: an independent mpmath parametrisation (40 digits),
# differentiated with mpmath.diff and integrated with mpmath.quad.
KAPPA_PLANAR_K2_A005 = 0.72022160664819944598    # theta=pi/2, phi=pi/2
AREA_PLANAR_K2_A005 = 1.5323854478662401628
H_AXI_K2_A01_T60 = 1.6787675963007370732          # theta=pi/3, phi=pi/4
VOL_AXI_K2_A01_T60 = 0.67882588238809336499


def test_cap60_closed_forms(cap60):
    gs = measures(cap60)
    assert gs.vol_omega == pytest.approx(math.pi / 3 - math.sqrt(3) / 4, rel=1e-12)
    assert gs.area_sigma == pytest.approx(2 * math.pi / 3, rel=1e-12)
    assert gs.area_T == pytest.approx(math.sqrt(3), rel=1e-12)


def test_half_ball_closed_forms(half_ball):
    gs = measures(half_ball)
    assert gs.vol_omega == pytest.approx(2 * math.pi / 3, rel=1e-12)
    assert gs.area_sigma == pytest.approx(2 * math.pi, rel=1e-12)
    assert gs.area_T == pytest.approx(math.pi, rel=1e-12)
    assert gs.meas_gamma == pytest.approx(2 * math.pi, rel=1e-12)
    assert gs.diameter == pytest.approx(2.0, rel=1e-9)


def test_cap_curvature_is_constant(cap60, half_ball):
    phi = np.linspace(0, math.pi, 33)
    assert np.allclose(curvature(cap60, phi), 1.0, atol=1e-12)
    phi = np.linspace(0, math.pi / 2, 33)
    assert np.allclose(curvature(half_ball, phi), 2.0, atol=1e-10)


def test_perturbed_curvature_oracle():
    spec = DomainSpec("planar", 1, math.pi / 2, [(2, 0.05)])
    assert curvature(spec, math.pi / 2) == pytest.approx(KAPPA_PLANAR_K2_A005, rel=1e-12)
    assert measures(spec).vol_omega == pytest.approx(AREA_PLANAR_K2_A005, rel=1e-12)


def test_axisymmetric_curvature_oracle():
    spec = DomainSpec("axisymmetric", 1, math.pi / 3, [(2, 0.1)])
    assert curvature(spec, math.pi / 4) == pytest.approx(H_AXI_K2_A01_T60, rel=1e-12)
    assert measures(spec).vol_omega == pytest.approx(VOL_AXI_K2_A01_T60, rel=1e-12)


@pytest.mark.parametrize("theta", [math.pi / 2, math.pi / 3, 0.4])
def test_contact_angle_preserved_by_window(theta):
    spec = DomainSpec("planar", 1, theta, [(3, 0.1, 0.3)])
    ca = contact_angles(spec)
    assert not ca["flagged"]
    assert np.allclose(ca["angles"], theta, atol=1e-12)


def test_unwindowed_perturbation_changes_angle():
    spec = DomainSpec("planar", 1, math.pi / 2, [(3, 0.1, 0.3)], windowed=False)
    assert contact_angles(spec)["flagged"]


def test_theta_snap_and_rejects():
    assert DomainSpec("planar", 1, 1.5708).theta == math.pi / 2
    for bad in (0.0, -0.1, 1.6, math.nan):
        with pytest.raises(SpecError):
            DomainSpec("planar", 1, bad)
    with pytest.raises(SpecError):
        DomainSpec("planar", -1, 1.0)
    with pytest.raises(SpecError):
        DomainSpec("cylindrical", 1, 1.0)


def test_not_star_shaped():
    with pytest.raises(NotStarShapedError):
        DomainSpec("planar", 1, math.pi / 2, [(12, 0.6)])


def test_from_dict_round_trip_and_unknown_keys(bumpy):
    assert DomainSpec.from_dict(bumpy.to_dict()) == bumpy
    with pytest.raises(SpecError):
        DomainSpec.from_dict({**bumpy.to_dict(), "radius": 2})
    with pytest.raises(SpecError):
        DomainSpec.from_dict({"r": 1, "theta": 1, "perturbation": [{"k": 2}]})


def test_cot_is_exactly_zero_at_right_angle():
    assert cot(math.pi / 2) == 0.0
    assert capillary_constant(math.pi / 2, measures(DomainSpec("planar", 1, math.pi / 2))) == 0.0


@pytest.mark.parametrize("mode", ["planar", "axisymmetric"])
def test_cmc_deficit_scaling(mode):
    spec = DomainSpec(mode, 1, math.pi / 3, [(2, 0.1)])
    n = spec.n
    d1 = cmc_deficit(spec)
    d2 = cmc_deficit(spec.scaled(2.0))
    assert d1 > 0
    assert d2 == pytest.approx(2.0 ** (n - 1) * d1, rel=1e-9)
    assert cmc_deficit(spec.unperturbed()) < 1e-12


def test_distance_and_radii_for_caps(cap60):
    z = cap60.cap_center
    pts = np.array([[0.0, 0.1], [0.3, 0.2], [-0.2, 0.4]])
    d = distance_to_sigma(cap60, pts)
    assert np.allclose(d, 1.0 - np.linalg.norm(pts - z, axis=1), atol=1e-12)
    rho_e, rho_i = radii(cap60, z)
    assert rho_e == pytest.approx(1.0, abs=1e-12)
    assert rho_i == pytest.approx(1.0, abs=1e-12)
    rho_e, rho_i = radii(cap60, z + np.array([0.0, 0.1]))
    assert rho_e > rho_i


def test_boundary_point_endpoints(cap60):
    X = boundary_point(cap60, np.array([0.0, math.pi]))
    assert np.allclose(X, [[math.sqrt(3) / 2, 0], [-math.sqrt(3) / 2, 0]], atol=1e-14)


def test_exterior_cap_condition_for_cap(cap60):
    res = check_exterior_cap_condition(cap60, math.pi / 3, 0.5, samples=256)
    assert res.satisfied
    # a radius far beyond the cap's own curvature radius cannot touch a
    # perturbed boundary from outside everywhere
    wavy = DomainSpec("planar", 1, math.pi / 2, [(4, 0.15)])
    assert not check_exterior_cap_condition(wavy, math.pi / 2, 5.0, samples=256).satisfied


@pytest.mark.parametrize("mode", ["planar", "axisymmetric"])
@pytest.mark.parametrize("theta", [math.pi / 2, math.pi / 3])
def test_cap_identities(mode, theta):
    res = identity_residuals(DomainSpec(mode, 1.3, theta))
    assert abs(res["conservation"]) <= 1e-10
    assert abs(res["balancing"]) <= 1e-8
    assert abs(res["minkowski"]) <= 1e-8
    assert abs(res["h_reference"]) <= 1e-8


@settings(max_examples=25, deadline=None)
@given(theta=st.floats(0.35, math.pi / 2), k=st.integers(1, 5), a=st.floats(-0.12, 0.12),
       delta=st.floats(0, 2 * math.pi), mode=st.sampled_from(["planar", "axisymmetric"]))
def test_identities_hold_on_random_domains(theta, k, a, delta, mode):
    spec = DomainSpec(mode, 1.0, theta, [(k, a, delta)])
    res = identity_residuals(spec)
    assert abs(res["conservation"]) <= 1e-10
    assert abs(res["balancing"]) <= 1e-8
    assert abs(res["minkowski"]) <= 1e-8


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(0.2, 5.0), theta=st.floats(0.35, math.pi / 2))
def test_measures_scale_homogeneously(lam, theta):
    spec = DomainSpec("axisymmetric", 1.0, theta, [(2, 0.05)])
    g1, g2 = measures(spec), measures(spec.scaled(lam))
    assert g2.vol_omega == pytest.approx(lam ** 3 * g1.vol_omega, rel=1e-10)
    assert g2.area_sigma == pytest.approx(lam ** 2 * g1.area_sigma, rel=1e-10)
    assert g2.meas_gamma == pytest.approx(lam * g1.meas_gamma, rel=1e-10)
