"""Scalars, centre, deficits and integral-identity residuals.

Boundary integrals over Sigma combine the recovered flux of a finite element
field with the analytic geometry (points, normals, mean curvature, area
element) at Gauss nodes whose panels coincide with the Sigma edges of the
mesh.  Volume integrals use the element quadrature of :mod:`capilab.fem`.
Axisymmetric integrals are always full 3-D integrals (weight ``2 pi s``).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import fem
from .geometry import (
    DomainSpec, GeometricSummary, boundary_point, cot, curvature, distance_to_boundary, identity_residuals,
    measures, radii, sigma_quadrature,
)
from .meshgen import EdgeTag, Mesh

CENTER_RTOL = 1e-8
C_MATCH_TOL = 1e-9
SIGMA_ORDER = 8


class HypothesisError(ValueError):
    """A hypothesis of an inequality (e.g. H > 0 on Sigma) does not hold."""


class CenterError(RuntimeError):
    """The computed centre fails its zero-mean defining property."""


# ---------------------------------------------------------------------------
# reference constants

def reference_radius(c: float, gs: GeometricSummary) -> float:
    """R(c, Omega) = (n+1)(|Omega| - c|T|) / |Sigma|."""
    return (gs.n + 1) * (gs.vol_omega - c * gs.area_T) / gs.area_sigma


def capillary_constant(theta: float, gs: GeometricSummary) -> float:
    """c(theta, Omega) = -(n/(n+1)) cot(theta) |T| / |Gamma|."""
    n = gs.n
    return -(n / (n + 1)) * cot(theta) * gs.area_T / gs.meas_gamma


def theta_reference(theta: float, gs: GeometricSummary):
    """(R(theta, Omega), H(theta, Omega)) with H = n / R."""
    R = reference_radius(capillary_constant(theta, gs), gs)
    return R, gs.n / R


# ---------------------------------------------------------------------------
# boundary sampling of the field

def field_sigma_quadrature(field: fem.Field):
    """Sigma quadrature aligned with the mesh edges, and the flux at its nodes."""
    mesh = field.mesh
    panels = int(np.count_nonzero(mesh.edge_tags == EdgeTag.SIGMA))
    q = sigma_quadrature(mesh.spec, order=SIGMA_ORDER, panels=panels)
    return q, fem.boundary_flux(field)(q.phi)


def _volume_and_moment(d: fem.Derivatives, n: int):
    vol = float(d.qweights.sum())
    mom = np.array([d.integrate(d.qpoints[..., 0]), d.integrate(d.qpoints[..., 1])])
    if n == 2:
        mom[0] = 0.0  # horizontal moments vanish by rotational symmetry
    return vol, mom


def center(mesh: Mesh, field: fem.Field, check: bool = True) -> np.ndarray:
    """Centre O = (int x + (n+1) int_T f E) / |Omega| on the mesh domain.

    The plus sign is the one making ``grad(|x - O|^2/(2(n+1)) - f)`` mean-free
    over Omega (the outward normal of T is ``-E``).  With ``check`` the
    mean-free property is verified to ``1e-8 |Omega|`` and CenterError raised
    otherwise.  In axisymmetric mode O lies on the axis: ``(0, O_y)``.
    """
    if field.mesh is not mesh:
        raise ValueError("field was solved on a different mesh")
    n = mesh.spec.n
    d = fem.derivatives(field)
    vol, mom = _volume_and_moment(d, n)
    O = (mom + np.array([0.0, (n + 1) * fem.integral_over_T(field)])) / vol
    if check:
        res = mean_gradient_residual(field, O)
        if res > CENTER_RTOL * vol:
            raise CenterError(f"mean of grad(h - f) is {res:.3e}, above {CENTER_RTOL:g} |Omega|")
    return O


def mean_gradient_residual(field: fem.Field, O) -> float:
    """|int grad(|x - O|^2 / (2(n+1)) - f)| over the mesh domain.

    The trace of f on the straight Sigma edges (nonzero only at corrected
    chord midpoints) is removed, so that the check measures the same
    property as in the continuous setting where f = 0 on Sigma.
    """
    n = field.n
    d = fem.derivatives(field)
    dh = (d.qpoints - np.asarray(O)) / (n + 1)
    v = np.array([d.integrate(dh[..., i] - d.grads[..., i]) for i in range(2)])
    v += fem.sigma_chord_trace(field)
    if n == 2:
        v[0] = 0.0
    return float(np.linalg.norm(v))


# ---------------------------------------------------------------------------
# deficits

def serrin_deficit(field: fem.Field, gs: GeometricSummary, O=None) -> float:
    """int_Sigma |f_nu^2 - (R(c, Omega)/(n+1))^2| dA.

    ``O`` is accepted for signature symmetry with the other deficits and
    is not used.
    """
    q, fnu = field_sigma_quadrature(field)
    target = reference_radius(field.c, gs) / (gs.n + 1)
    return q.integrate(np.abs(fnu ** 2 - target ** 2))


def cmc_deficit(spec: DomainSpec, gs: GeometricSummary | None = None,
                order: int = 16, panels: int = 256) -> float:
    """int_Sigma |H - H(theta, Omega)| dA from the analytic geometry alone."""
    gs = gs or measures(spec)
    q = sigma_quadrature(spec, order, panels)
    _, Ht = theta_reference(spec.theta, gs)
    return q.integrate(np.abs(q.H - Ht))


def check_c_theta(field: fem.Field, gs: GeometricSummary, theta: float) -> float:
    ct = capillary_constant(theta, gs)
    if abs(field.c - ct) > C_MATCH_TOL * max(1.0, abs(ct)):
        raise ValueError(f"field solved with c = {field.c!r}, but c(theta, Omega) = {ct!r}")
    return ct


def pfunction_integral(field: fem.Field) -> float:
    """int_Omega |Hess f|^2 - (Lap f)^2 / (n+1)  (the integral of Lap P)."""
    d = fem.derivatives(field)
    return d.integrate(fem.pfunction_density(d, field.n))


def serrin_identity_residual(field: fem.Field, gs: GeometricSummary, R: float):
    """Both sides of the weighted P-function identity, valid for every R.

    lhs = int (-f)(|Hess f|^2 - (Lap f)^2/(n+1)),
    rhs = 1/2 int_Sigma (f_nu^2 - (R/(n+1))^2)(f_nu - g_nu),
    where ``g = |x - (n+1) c E|^2 / (2(n+1))`` is the quadratic with the same
    Laplacian and Neumann data, so ``g_nu = <x - (n+1) c E, nu>/(n+1)``.
    Returns ``(lhs, rhs, lhs - rhs)``.
    """
    n = gs.n
    d = fem.derivatives(field)
    lhs = d.integrate(-d.values * fem.pfunction_density(d, n))
    q, fnu = field_sigma_quadrature(field)
    shift = np.array([0.0, (n + 1) * field.c])
    g_nu = np.sum((q.X - shift) * q.nu, axis=1) / (n + 1)
    rhs = 0.5 * q.integrate((fnu ** 2 - (R / (n + 1)) ** 2) * (fnu - g_nu))
    return lhs, rhs, lhs - rhs


def reilly_identity_residual(field: fem.Field, gs: GeometricSummary, theta: float):
    """Both sides of the mean-curvature form of Reilly's formula.

    lhs = int Lap P + (n/(n+1)) (1/Rt) int_Sigma (f_nu - Rt)^2 with
    Rt = R(theta, Omega)/(n+1); rhs = int_Sigma (H(theta, Omega) - H) f_nu^2.
    The field must be solved with ``c = c(theta, Omega)``.
    """
    check_c_theta(field, gs, theta)
    n = gs.n
    R, Ht = theta_reference(theta, gs)
    Rt = R / (n + 1)
    q, fnu = field_sigma_quadrature(field)
    lhs = pfunction_integral(field) + (n / (n + 1)) / Rt * q.integrate((fnu - Rt) ** 2)
    rhs = q.integrate((Ht - q.H) * fnu ** 2)
    return lhs, rhs, lhs - rhs


def hk_deficit(spec: DomainSpec, gs: GeometricSummary | None = None, field: fem.Field | None = None,
               order: int = 16, panels: int = 256, samples: int = 4097):
    """Heintze-Karcher deficit eps and, given a field, the refined margin.

    eps = int 1/H - ((n+1)/n)|Omega| - cot(theta)|T|^2/|Gamma|;
    margin = (n/(n+1))^2 eps - int Lap P, using a field solved at c(theta, Omega).
    Raises HypothesisError if H <= 0 somewhere on Sigma.
    """
    gs = gs or measures(spec)
    n = spec.n
    H = curvature(spec, np.linspace(0.0, spec.phi_max, samples))
    if np.min(H) <= 0:
        phi_bad = float(np.linspace(0.0, spec.phi_max, samples)[np.argmin(H)])
        raise HypothesisError(f"mean curvature {np.min(H):.4g} <= 0 at phi = {phi_bad:.4f}")
    q = sigma_quadrature(spec, order, panels)
    if np.min(q.H) <= 0:
        raise HypothesisError("mean curvature <= 0 at a quadrature node")
    eps = q.integrate(1.0 / q.H) - (n + 1) / n * gs.vol_omega - cot(spec.theta) * gs.area_T ** 2 / gs.meas_gamma
    margin = None
    if field is not None:
        check_c_theta(field, gs, spec.theta)
        margin = (n / (n + 1)) ** 2 * eps - pfunction_integral(field)
    return eps, margin


# ---------------------------------------------------------------------------
# pointwise bounds

def _interior_nodes(field: fem.Field):
    space = field.space
    mask = np.ones(space.ndof, bool)
    mask[space.sigma_dofs] = False
    return space.nodes[mask], field.coeffs[mask]


def lower_bound_gap(field: fem.Field) -> float:
    """min over interior nodes of  -f - delta^2/(2(n+1)),  delta = dist to boundary."""
    pts, f = _interior_nodes(field)
    delta = distance_to_boundary(field.mesh.spec, pts)
    return float(np.min(-f - delta ** 2 / (2 * (field.n + 1))))


def c0_bound(field: fem.Field, gs: GeometricSummary):
    """(max |f| over nodes, d^2 + (n+1)^2 c^2)."""
    return float(np.max(np.abs(field.coeffs))), gs.diameter ** 2 + (gs.n + 1) ** 2 * field.c ** 2


def max_nodal_value(field: fem.Field) -> float:
    """max f over nodes; the maximum principle asks for <= 0 when c <= 0."""
    return float(np.max(field.coeffs))


def lipschitz_diag(field: fem.Field) -> float:
    """max |grad f| over the post-processing points (diagnostic only)."""
    d = fem.derivatives(field)
    return float(np.sqrt(np.max(np.sum(d.grads ** 2, axis=-1))))


def oscillation(field: fem.Field, O, samples: int = 2049) -> float:
    """osc of |x - O|^2/(2(n+1)) - f over the closed domain.

    Sampled at all quadratic nodes and at analytic Sigma points (where f = 0).
    """
    n = field.n
    space = field.space
    O = np.asarray(O)
    h_nodes = np.sum((space.nodes - O) ** 2, axis=1) / (2 * (n + 1)) - field.coeffs
    spec = field.mesh.spec
    phi = np.linspace(0.0, spec.phi_max, samples)
    h_sig = np.sum((boundary_point(spec, phi) - O) ** 2, axis=1) / (2 * (n + 1))
    vals = np.concatenate([h_nodes, h_sig])
    return float(vals.max() - vals.min())


def bridging_bound(field: fem.Field, gs: GeometricSummary, O) -> float:
    """Right-hand side 8(n+1)/d * osc(phi) of the radii bridging inequality."""
    return 8 * (gs.n + 1) / gs.diameter * oscillation(field, O)


# ---------------------------------------------------------------------------
# report

CSV_COLUMNS = (
    "mode", "r", "theta", "perturbation", "n_radial", "n_angular", "h",
    "c", "R_c", "c_theta", "R_theta", "H_theta", "O_x", "O_y", "rho_e", "rho_i",
    "serrin_deficit", "cmc_deficit", "hk_deficit", "hk_margin",
    "serrin_lhs", "serrin_rhs", "residual_serrin_identity",
    "reilly_lhs", "reilly_rhs", "residual_reilly_identity",
    "residual_minkowski", "pfunction_integral", "lipschitz_diag",
    "cg_iterations", "cg_residual",
)


def fmt(x) -> str:
    """17-significant-digit text for floats; other values via str()."""
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


@dataclass
class DeficitReport:
    """All scalars of one domain/mesh/field combination.

    ``hk_deficit``/``hk_margin`` are None when H <= 0 somewhere on Sigma;
    the Reilly entries and the margin are None unless ``c = c(theta, Omega)``.
    """

    mode: str
    r: float
    theta: float
    perturbation: str
    n_radial: int
    n_angular: int
    h: float
    c: float
    R_c: float
    c_theta: float
    R_theta: float
    H_theta: float
    O_x: float
    O_y: float
    rho_e: float
    rho_i: float
    serrin_deficit: float
    cmc_deficit: float
    hk_deficit: float | None
    hk_margin: float | None
    serrin_lhs: float
    serrin_rhs: float
    residual_serrin_identity: float
    reilly_lhs: float | None
    reilly_rhs: float | None
    residual_reilly_identity: float | None
    residual_minkowski: float
    pfunction_integral: float
    lipschitz_diag: float
    cg_iterations: int
    cg_residual: float
    notes: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def csv_row(self) -> list:
        d = asdict(self)
        return [fmt(d[k]) for k in CSV_COLUMNS]

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(CSV_COLUMNS)
        w.writerow(self.csv_row())
        return buf.getvalue()


def perturbation_label(spec: DomainSpec) -> str:
    return ";".join(f"{m.k}:{fmt(m.a)}:{fmt(m.delta)}" for m in spec.perturbation)


def deficit_report(field: fem.Field, n_radial: int = 0, n_angular: int = 0) -> DeficitReport:
    """Evaluate every quantity for a solved field."""
    mesh = field.mesh
    spec = mesh.spec
    gs = measures(spec)
    theta = spec.theta
    ct = capillary_constant(theta, gs)
    R_theta, H_theta = theta_reference(theta, gs)
    O = center(mesh, field)
    rho_e, rho_i = radii(spec, O)
    sl, sr, sres = serrin_identity_residual(field, gs, reference_radius(field.c, gs))
    at_ct = abs(field.c - ct) <= C_MATCH_TOL * max(1.0, abs(ct))
    notes = []
    rl = rr = rres = None
    if at_ct:
        rl, rr, rres = reilly_identity_residual(field, gs, theta)
    try:
        eps, margin = hk_deficit(spec, gs, field if at_ct else None)
    except HypothesisError as exc:
        eps = margin = None
        notes.append(f"hk skipped: {exc}")
    return DeficitReport(
        mode=spec.mode.value, r=spec.r, theta=theta, perturbation=perturbation_label(spec),
        n_radial=n_radial, n_angular=n_angular, h=mesh.h,
        c=field.c, R_c=reference_radius(field.c, gs), c_theta=ct, R_theta=R_theta, H_theta=H_theta,
        O_x=float(O[0]), O_y=float(O[1]), rho_e=rho_e, rho_i=rho_i,
        serrin_deficit=serrin_deficit(field, gs), cmc_deficit=cmc_deficit(spec, gs),
        hk_deficit=eps, hk_margin=margin,
        serrin_lhs=sl, serrin_rhs=sr, residual_serrin_identity=sres,
        reilly_lhs=rl, reilly_rhs=rr, residual_reilly_identity=rres,
        residual_minkowski=identity_residuals(spec)["minkowski"],
        pfunction_integral=pfunction_integral(field), lipschitz_diag=lipschitz_diag(field),
        cg_iterations=field.cg_iterations, cg_residual=field.cg_residual,
        notes="; ".join(notes),
    )


# ---------------------------------------------------------------------------
# invariant suite

def compatibility_residual(field: fem.Field) -> float:
    """|int_Sigma f_nu + c|T| - |Omega|| / |Omega| on the mesh domain.

    The flux is integrated over the straight Sigma edges with the same
    weights it was recovered with, so the residual sits at solver tolerance.
    """
    mesh = field.mesh
    space = field.space
    flux = fem.boundary_flux(field)
    dofs, wts = fem._edge_weights(space, EdgeTag.SIGMA)
    vphi = mesh.vertex_phi
    q0, q2 = flux(vphi[dofs[:, 0]]), flux(vphi[dofs[:, 2]])
    # piecewise linear flux in P2 nodal form: (q0, (q0+q2)/2, q2)
    flux_int = float(np.sum(wts[:, 0] * q0 + wts[:, 1] * 0.5 * (q0 + q2) + wts[:, 2] * q2))
    tdofs, twts = fem._edge_weights(space, EdgeTag.T)
    area_T = float(twts.sum())
    if mesh.mode.n == 2:
        flux_int *= 2 * math.pi
        area_T *= 2 * math.pi
    vol = mesh.volume()
    return abs(flux_int + field.c * area_T - vol) / vol


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    bound: float
    ok: bool


def _ge(name, value, bound):
    return Check(name, float(value), float(bound), bool(value >= bound))


def _le(name, value, bound):
    return Check(name, float(value), float(bound), bool(value <= bound))


def identity_tolerance(report: DeficitReport, floor: float = 1e-10) -> float:
    """10 x the larger absolute identity residual of the report (with a floor)."""
    res = [abs(report.residual_serrin_identity)]
    if report.residual_reilly_identity is not None:
        res.append(abs(report.residual_reilly_identity))
    return max(10.0 * max(res), floor)


def invariant_suite(field: fem.Field, report: DeficitReport, tol: float | None = None) -> list:
    """Every checkable invariant for one solved domain.

    Returns a list of :class:`Check`; ``tol`` defaults to
    :func:`identity_tolerance`.  Sign conditions that need ``c <= 0`` are
    only included when it holds.
    """
    spec = field.mesh.spec
    gs = measures(spec)
    tol = identity_tolerance(report) if tol is None else tol
    geo = identity_residuals(spec)
    O = np.array([report.O_x, report.O_y])
    vol = field.mesh.volume()
    checks = [
        _le("conservation", abs(geo["conservation"]), 1e-10),
        _le("minkowski", abs(geo["minkowski"]), 1e-8),
        _le("balancing", abs(geo["balancing"]), 1e-8),
        _le("compatibility", compatibility_residual(field), 1e-8),
        _le("center_zero_mean", mean_gradient_residual(field, O), CENTER_RTOL * vol),
        _ge("pfunction_integral", report.pfunction_integral, -tol),
    ]
    if spec.is_cap:
        checks.append(_le("h_reference", abs(geo["h_reference"]), 1e-8))
    fmax, c0 = c0_bound(field, gs)
    checks.append(_le("c0_bound", fmax, c0))
    if field.c <= 0:
        checks += [
            _le("maximum_principle", max_nodal_value(field), tol),
            _ge("lower_bound", lower_bound_gap(field), -tol),
            _ge("serrin_lhs", report.serrin_lhs, -tol),
        ]
    if report.reilly_lhs is not None:
        checks.append(_ge("reilly_lhs", report.reilly_lhs, -tol))
    if report.hk_deficit is not None:
        checks.append(_ge("hk_deficit", report.hk_deficit, -tol))
    if report.hk_margin is not None:
        checks.append(_ge("hk_margin", report.hk_margin, -tol))
    checks.append(_le("bridging", report.rho_e - report.rho_i, bridging_bound(field, gs, O)))
    return checks
