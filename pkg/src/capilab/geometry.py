"""Capillary domains in the half-space and their exact boundary geometry.

A domain is described by a radial graph about the origin ``q``: the free
boundary Sigma is ``X(phi) = g(phi) (cos phi, sin phi)`` and the flat part T
lies on ``{y = 0}``.  In planar mode ``phi`` runs over ``[0, pi]`` and the
picture is the whole 2-D domain.  In axisymmetric mode ``phi`` runs over
``[0, pi/2]``, the first coordinate is the distance ``s`` from the symmetry
axis and the 3-D domain is obtained by revolving the meridian region.

All quantities here are evaluated from the parametric description with
composite Gauss-Legendre quadrature, never from a mesh.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

STAR_SLOPE_LIMIT = math.tan(math.radians(80.0))
STAR_SAMPLES = 4096
THETA_SNAP = 1e-4


def cot(theta: float) -> float:
    """Cotangent that is exactly 0 at theta = pi/2 (the snapped right angle)."""
    if theta == 0.5 * math.pi:
        return 0.0
    return math.cos(theta) / math.sin(theta)


class SpecError(ValueError):
    """Invalid domain description."""


class NotStarShapedError(SpecError):
    """The perturbed radial graph is not a valid star-shaped boundary."""


class QuadratureError(RuntimeError):
    """Successive quadrature orders disagree beyond tolerance."""


class Mode(str, enum.Enum):
    PLANAR = "planar"
    AXISYMMETRIC = "axisymmetric"

    @property
    def n(self) -> int:
        """Dimension of Sigma (ambient dimension minus one)."""
        return 1 if self is Mode.PLANAR else 2

    @property
    def phi_max(self) -> float:
        return math.pi if self is Mode.PLANAR else 0.5 * math.pi


@dataclass(frozen=True)
class PerturbationMode:
    k: int
    a: float
    delta: float = 0.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise SpecError(f"perturbation frequency must be a positive integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "delta", float(self.delta))


@dataclass(frozen=True)
class DomainSpec:
    """Analytic description of a capillary domain.

    Parameters
    ----------
    mode : Mode or str
        ``"planar"`` (n = 1) or ``"axisymmetric"`` (n = 2).
    r : float
        Radius of the reference spherical cap.
    theta : float
        Contact angle in radians, in ``(0, pi/2]``.  Values within 1e-4
        above ``pi/2`` are snapped to ``pi/2`` so that rounded inputs such
        as 1.5708 are accepted.
    perturbation : sequence of PerturbationMode or (k, a, delta) tuples
        Multiplicative modes applied to the cap's radial graph.
    windowed : bool
        Multiply the perturbation by the endpoint window.  Only diagnostic
        runs switch this off; the contact angle is then no longer ``theta``.
    """

    mode: Mode
    r: float
    theta: float
    perturbation: tuple = ()
    windowed: bool = True

    def __post_init__(self):
        try:
            mode = Mode(self.mode)
        except ValueError:
            raise SpecError(f"unknown mode {self.mode!r}") from None
        object.__setattr__(self, "mode", mode)
        r = float(self.r)
        theta = float(self.theta)
        if not (r > 0 and math.isfinite(r)):
            raise SpecError(f"cap radius must be positive, got {self.r}")
        if 0.5 * math.pi < theta <= 0.5 * math.pi + THETA_SNAP:
            theta = 0.5 * math.pi
        if not (0.0 < theta <= 0.5 * math.pi):
            raise SpecError(f"contact angle must lie in (0, pi/2], got {self.theta}")
        modes = []
        for m in self.perturbation:
            if isinstance(m, PerturbationMode):
                modes.append(m)
            elif isinstance(m, dict):
                modes.append(PerturbationMode(m["k"], m["a"], m.get("delta", 0.0)))
            else:
                modes.append(PerturbationMode(*m))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "perturbation", tuple(modes))
        object.__setattr__(self, "windowed", bool(self.windowed))
        _check_star_shaped(self)

    @property
    def n(self) -> int:
        return self.mode.n

    @property
    def phi_max(self) -> float:
        return self.mode.phi_max

    @property
    def is_cap(self) -> bool:
        return all(m.a == 0.0 for m in self.perturbation)

    @property
    def cap_center(self) -> np.ndarray:
        return np.array([0.0, -self.r * math.cos(self.theta)])

    def scaled(self, lam: float) -> "DomainSpec":
        return DomainSpec(self.mode, lam * self.r, self.theta, self.perturbation, self.windowed)

    def unperturbed(self) -> "DomainSpec":
        return DomainSpec(self.mode, self.r, self.theta)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "r": self.r,
            "theta": self.theta,
            "perturbation": [{"k": m.k, "a": m.a, "delta": m.delta} for m in self.perturbation],
            "windowed": self.windowed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        allowed = {"mode", "r", "theta", "perturbation", "windowed"}
        unknown = set(d) - allowed
        if unknown:
            raise SpecError(f"unknown domain keys: {sorted(unknown)}")
        for m in d.get("perturbation", []):
            if not isinstance(m, dict) or set(m) - {"k", "a", "delta"} or not {"k", "a"} <= set(m):
                raise SpecError(f"perturbation entries need keys k, a[, delta]; got {m!r}")
        return cls(d.get("mode", "planar"), d["r"], d["theta"],
                   tuple(d.get("perturbation", ())), d.get("windowed", True))


# ---------------------------------------------------------------------------
# radial graph and its derivatives

def _cap_graph(r, theta, phi):
    c, s = math.cos(theta), math.sin(theta)
    u = np.sin(phi)
    A = np.sqrt((r * c * u) ** 2 + (r * s) ** 2)
    g = -r * c * u + A
    G1 = -r * c + r * r * c * c * u / A
    g1 = np.cos(phi) * G1
    g2 = -u * G1 + np.cos(phi) ** 2 * (r ** 4 * c * c * s * s) / A ** 3
    return g, g1, g2


def _perturbation_factor(spec, phi):
    P = np.ones_like(phi)
    P1 = np.zeros_like(phi)
    P2 = np.zeros_like(phi)
    if not spec.perturbation:
        return P, P1, P2
    if spec.windowed:
        om = 2.0 * math.pi / spec.phi_max
        w = 0.5 * (1.0 - np.cos(om * phi))
        w1 = 0.5 * om * np.sin(om * phi)
        w2 = 0.5 * om * om * np.cos(om * phi)
    else:
        w, w1, w2 = np.ones_like(phi), np.zeros_like(phi), np.zeros_like(phi)
    for m in spec.perturbation:
        arg = m.k * phi + m.delta
        cs, sn = np.cos(arg), np.sin(arg)
        P += m.a * w * cs
        P1 += m.a * (w1 * cs - m.k * w * sn)
        P2 += m.a * (w2 * cs - 2 * m.k * w1 * sn - m.k * m.k * w * cs)
    return P, P1, P2


def radial_graph_derivs(spec: DomainSpec, phi):
    """Return ``(g, g', g'')`` at ``phi`` (arrays broadcast like ``phi``)."""
    phi = np.asarray(phi, dtype=float)
    gc, gc1, gc2 = _cap_graph(spec.r, spec.theta, phi)
    P, P1, P2 = _perturbation_factor(spec, phi)
    return gc * P, gc1 * P + gc * P1, gc2 * P + 2 * gc1 * P1 + gc * P2


def radial_graph(spec: DomainSpec, phi):
    """Radial distance from the anchor to Sigma in direction ``phi``."""
    phi_arr = np.asarray(phi, dtype=float)
    if np.any(phi_arr < -1e-14) or np.any(phi_arr > spec.phi_max + 1e-14):
        raise SpecError(f"phi outside the parameter interval [0, {spec.phi_max}]")
    g = radial_graph_derivs(spec, phi_arr)[0]
    return float(g) if np.ndim(phi) == 0 else g


def _check_star_shaped(spec):
    phi = np.linspace(0.0, spec.phi_max, STAR_SAMPLES)
    g, g1, _ = radial_graph_derivs(spec, phi)
    if np.any(g <= 0):
        raise NotStarShapedError("radial graph is not strictly positive")
    worst = float(np.max(np.abs(g1 / g)))
    if worst >= STAR_SLOPE_LIMIT:
        raise NotStarShapedError(
            f"|g'/g| reaches {worst:.3f} >= tan(80 deg); perturbation too large")


# ---------------------------------------------------------------------------
# pointwise boundary geometry

def boundary_point(spec, phi):
    """Points of Sigma, shape (..., 2): (x, y) planar or (s, y) meridian."""
    g = radial_graph_derivs(spec, phi)[0]
    return np.stack([g * np.cos(phi), g * np.sin(phi)], axis=-1)


def _frame(spec, phi):
    phi = np.asarray(phi, dtype=float)
    g, g1, g2 = radial_graph_derivs(spec, phi)
    c, s = np.cos(phi), np.sin(phi)
    X = np.stack([g * c, g * s], axis=-1)
    dX = np.stack([g1 * c - g * s, g1 * s + g * c], axis=-1)
    speed = np.hypot(g, g1)
    nu = np.stack([dX[..., 1], -dX[..., 0]], axis=-1) / speed[..., None]
    return g, g1, g2, X, dX, speed, nu


def outward_normal(spec, phi):
    """Unit normal of Sigma pointing out of the domain."""
    return _frame(spec, phi)[-1]


def curvature(spec: DomainSpec, phi):
    """Mean curvature H (sum of principal curvatures) with the outward normal.

    Planar mode returns the signed curvature of the curve.  In axisymmetric
    mode the meridian curvature is added to ``nu_s / s``; on the axis the
    two principal curvatures coincide and the limit is used.
    """
    phi_arr = np.asarray(phi, dtype=float)
    g, g1, g2, X, _, speed, nu = _frame(spec, phi_arr)
    k1 = (g * g + 2 * g1 * g1 - g * g2) / speed ** 3
    if spec.mode is Mode.PLANAR:
        H = k1
    else:
        s = X[..., 0]
        on_axis = np.abs(s) < 1e-13 * spec.r
        k2 = np.where(on_axis, k1, nu[..., 0] / np.where(on_axis, 1.0, s))
        H = k1 + k2
    return float(H) if np.ndim(phi) == 0 else H


def contact_angles(spec: DomainSpec, tol: float = 1e-12) -> dict:
    """Contact angle(s) at Gamma, from g and g' at the parameter endpoints.

    Returns a dict with the measured ``angles`` (radians) and ``flagged``
    set when any of them differs from ``spec.theta`` by more than ``tol``.
    """
    ends = [0.0] if spec.mode is Mode.AXISYMMETRIC else [0.0, math.pi]
    angles = []
    for phi0, side in zip(ends, (1.0, -1.0)):
        nu = outward_normal(spec, np.array(phi0))
        angles.append(float(math.atan2(side * nu[0], nu[1])))
    flagged = any(abs(a - spec.theta) > tol for a in angles)
    return {"angles": tuple(angles), "flagged": flagged}


# ---------------------------------------------------------------------------
# quadrature and global measures

def composite_gauss(a, b, order=16, panels=64):
    """Nodes and weights of composite Gauss-Legendre on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class SigmaQuadrature:
    """Quadrature on Sigma: parameters, points, normals, area weights, H.

    ``dA`` already contains the ``2 pi s`` factor in axisymmetric mode, so
    ``sum(F * dA)`` approximates the surface integral of F over Sigma.
    """

    phi: np.ndarray
    X: np.ndarray
    nu: np.ndarray
    dA: np.ndarray
    H: np.ndarray

    def integrate(self, values) -> float:
        return float(np.sum(np.asarray(values) * self.dA))


def sigma_quadrature(spec: DomainSpec, order: int = 16, panels: int = 64) -> SigmaQuadrature:
    phi, w = composite_gauss(0.0, spec.phi_max, order, panels)
    _, _, _, X, _, speed, nu = _frame(spec, phi)
    dA = w * speed
    if spec.mode is Mode.AXISYMMETRIC:
        dA = dA * 2.0 * math.pi * X[:, 0]
    return SigmaQuadrature(phi, X, nu, dA, curvature(spec, phi))


def _raw_measures(spec, order, panels):
    phi, w = composite_gauss(0.0, spec.phi_max, order, panels)
    g, g1, _ = radial_graph_derivs(spec, phi)
    speed = np.hypot(g, g1)
    g0 = radial_graph(spec, 0.0)
    if spec.mode is Mode.PLANAR:
        area_sigma = float(np.sum(w * speed))
        vol = float(0.5 * np.sum(w * g * g))
        area_T = g0 + radial_graph(spec, math.pi)
        gamma = 2.0
    else:
        s = g * np.cos(phi)
        area_sigma = float(2 * math.pi * np.sum(w * s * speed))
        vol = float(2 * math.pi / 3 * np.sum(w * g ** 3 * np.cos(phi)))
        area_T = math.pi * g0 ** 2
        gamma = 2 * math.pi * g0
    return np.array([vol, area_sigma, area_T, gamma])


def diameter(spec: DomainSpec, samples: int = STAR_SAMPLES) -> float:
    """Diameter of the domain by brute force over dense Sigma samples.

    In axisymmetric mode the farthest pairs sit in opposite meridians, so
    samples are paired with their mirror images ``(-s, y)``.
    """
    P = boundary_point(spec, np.linspace(0.0, spec.phi_max, samples))
    Q = P if spec.mode is Mode.PLANAR else P * np.array([-1.0, 1.0])
    return kernels.max_pair_distance(P, Q)


@dataclass(frozen=True)
class GeometricSummary:
    spec: DomainSpec
    vol_omega: float
    area_sigma: float
    area_T: float
    meas_gamma: float
    diameter: float
    contact_angle_samples: tuple
    curvature_phi: np.ndarray = field(repr=False)
    curvature_samples: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.spec.n


@functools.lru_cache(maxsize=256)
def measures(spec: DomainSpec, order: int = 16, panels: int = 64,
             rtol: float = 1e-10) -> GeometricSummary:
    """|Omega|, |Sigma|, |T|, |Gamma|, diameter, contact angles and H samples.

    Raises QuadratureError if order ``order`` and ``order + 4`` disagree by
    more than ``rtol`` (relative) in any measure.
    """
    m1 = _raw_measures(spec, order, panels)
    m2 = _raw_measures(spec, order + 4, panels)
    err = np.max(np.abs(m1 - m2) / np.abs(m2))
    if err > rtol:
        raise QuadratureError(f"quadrature orders {order} and {order + 4} disagree by {err:.2e}")
    phi_s = np.linspace(0.0, spec.phi_max, 257)
    return GeometricSummary(
        spec=spec,
        vol_omega=float(m2[0]), area_sigma=float(m2[1]), area_T=float(m2[2]),
        meas_gamma=float(m2[3]),
        diameter=diameter(spec),
        contact_angle_samples=contact_angles(spec)["angles"],
        curvature_phi=phi_s,
        curvature_samples=curvature(spec, phi_s),
    )


def identity_residuals(spec: DomainSpec, order: int = 16, panels: int = 64) -> dict:
    """Boundary integral identities evaluated by quadrature.

    ``conservation``: int <nu, E> dA - |T|, relative to |T|.
    ``balancing``: int H <nu, E> dA - sin(theta)|Gamma|, relative.
    ``minkowski``: int [n (1 - cos(theta) <nu, E>) - H <x, nu>] dA over |Sigma|.
    ``h_reference``: H(theta, Omega) r / n - 1 (meaningful for caps only).
    """
    gs = measures(spec, order, panels)
    q = sigma_quadrature(spec, order, panels)
    n = spec.n
    nuE = q.nu[:, 1]
    xnu = np.sum(q.X * q.nu, axis=1)
    cons = q.integrate(nuE)
    bal = q.integrate(q.H * nuE)
    mink = q.integrate(n * (1 - math.cos(spec.theta) * nuE) - q.H * xnu)
    c_theta = -(n / (n + 1)) * cot(spec.theta) * gs.area_T / gs.meas_gamma
    R_theta = (n + 1) * (gs.vol_omega - c_theta * gs.area_T) / gs.area_sigma
    return {
        "conservation": (cons - gs.area_T) / gs.area_T,
        "balancing": (bal - math.sin(spec.theta) * gs.meas_gamma) / (math.sin(spec.theta) * gs.meas_gamma),
        "minkowski": mink / gs.area_sigma,
        "h_reference": (n / R_theta) * spec.r / n - 1.0,
    }


# ---------------------------------------------------------------------------
# distances, radii, exterior cap condition

def distance_to_sigma(spec: DomainSpec, pts, samples: int = 2048, newton: int = 8):
    """Euclidean distance from meridian/planar points to Sigma.

    Nearest dense sample followed by safeguarded Newton steps on
    ``|X(phi) - p|^2`` within the neighbouring sample bracket.
    """
    from scipy.spatial import cKDTree

    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    phis = np.linspace(0.0, spec.phi_max, samples)
    tree = cKDTree(boundary_point(spec, phis))
    _, idx = tree.query(pts)
    dphi = phis[1] - phis[0]
    lo = np.maximum(phis[idx] - dphi, 0.0)
    hi = np.minimum(phis[idx] + dphi, spec.phi_max)
    phi = phis[idx].copy()
    for _ in range(newton):
        g, g1, g2 = radial_graph_derivs(spec, phi)
        c, s = np.cos(phi), np.sin(phi)
        X = np.stack([g * c, g * s], axis=1)
        X1 = np.stack([g1 * c - g * s, g1 * s + g * c], axis=1)
        X2 = np.stack([(g2 - g) * c - 2 * g1 * s, (g2 - g) * s + 2 * g1 * c], axis=1)
        d = X - pts
        f1 = np.sum(d * X1, axis=1)
        f2 = np.sum(X1 * X1, axis=1) + np.sum(d * X2, axis=1)
        step = np.where(f2 > 0, f1 / np.where(f2 > 0, f2, 1.0), 0.0)
        phi = np.clip(phi - step, lo, hi)
    dist = np.linalg.norm(boundary_point(spec, phi) - pts, axis=1)
    return dist


def distance_to_boundary(spec: DomainSpec, pts):
    """Distance to the whole boundary Sigma u T (the axis is not boundary)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return np.minimum(distance_to_sigma(spec, pts), np.abs(pts[:, 1]))


def radii(spec: DomainSpec, O, samples: int = 8192):
    """Exterior and interior radius of Sigma about the centre ``O``.

    Dense sampling, then a bounded scalar refinement around the extremal
    samples.  ``O`` is a point of the planar/meridian plane (on the axis in
    axisymmetric mode).
    """
    from scipy.optimize import minimize_scalar

    O = np.asarray(O, dtype=float)
    phis = np.linspace(0.0, spec.phi_max, samples)
    d = np.linalg.norm(boundary_point(spec, phis) - O, axis=1)
    dphi = phis[1] - phis[0]

    def dist(p):
        return float(np.linalg.norm(boundary_point(spec, np.array(p)) - O))

    def bracket(i):
        return max(phis[i] - dphi, 0.0), min(phis[i] + dphi, spec.phi_max)

    opts = {"xatol": 1e-13}
    i_max, i_min = int(np.argmax(d)), int(np.argmin(d))
    far = minimize_scalar(lambda p: -dist(p), bounds=bracket(i_max), method="bounded", options=opts)
    near = minimize_scalar(dist, bounds=bracket(i_min), method="bounded", options=opts)
    return float(max(d[i_max], -far.fun)), float(min(d[i_min], near.fun))


@dataclass(frozen=True)
class ExteriorCapResult:
    satisfied: bool
    violating_phi: np.ndarray
    height_violations: int
    ball_violations: int


def _closure_samples(spec, samples):
    """Sampled points of the closed domain in the full (mirrored) meridian plane."""
    phis = np.linspace(0.0, spec.phi_max, samples)
    sig = boundary_point(spec, phis)
    if spec.mode is Mode.PLANAR:
        xl, xr = -radial_graph(spec, math.pi), radial_graph(spec, 0.0)
        base = np.stack([np.linspace(xl, xr, samples), np.zeros(samples)], axis=1)
        return np.vstack([sig, base])
    g0 = radial_graph(spec, 0.0)
    base = np.stack([np.linspace(-g0, g0, samples), np.zeros(samples)], axis=1)
    return np.vstack([sig, sig * np.array([-1.0, 1.0]), base])


def check_exterior_cap_condition(spec: DomainSpec, theta: float, r_e: float,
                                 samples: int = 1024) -> ExteriorCapResult:
    """Sampled test of the uniform exterior theta-spherical cap condition.

    For each sample x of Sigma the candidate ball has radius ``r_e`` and
    centre ``x + r_e nu(x)``.  It must (1) contain no sampled point of the
    closed domain in its interior and (2) have centre height at least
    ``r_e cos(theta)``.  A pass certifies the condition only up to the
    sampling resolution.
    """
    if not r_e > 0:
        raise SpecError("r_e must be positive")
    phis = np.linspace(0.0, spec.phi_max, samples)
    X = boundary_point(spec, phis)
    nu = outward_normal(spec, phis)
    cloud = _closure_samples(spec, 2 * samples)
    scale = spec.r * spec.r
    counts = kernels.ball_violations(X, nu, r_e, cloud, 1e-12 * scale)
    height = X[:, 1] + r_e * nu[:, 1] - r_e * math.cos(theta)
    bad_h = height < -1e-12 * max(r_e, spec.r)
    bad = (counts > 0) | bad_h
    return ExteriorCapResult(
        satisfied=not bool(bad.any()),
        violating_phi=phis[bad],
        height_violations=int(bad_h.sum()),
        ball_violations=int((counts > 0).sum()),
    )
