"""Quadratic Lagrange finite elements for the mixed torsion problem.

Solves ``Lap f = 1`` in the domain, ``f = 0`` on Sigma and ``df/dN = c`` on
T where ``N = -E_{n+1}`` is the outward normal of the flat part.  The weak
form is ``a(f, v) = -int v + c int_T v`` for all test functions vanishing on
Sigma.  In axisymmetric mode every integral over the meridian section carries
the weight ``s`` (the common ``2 pi`` factor is dropped inside the solver and
restored by the reporting functions).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .geometry import Mode, distance_to_sigma
from .meshgen import EdgeTag, Mesh

# 6-point, degree-4 rule on the reference triangle (barycentric, weights sum to 1)
_A, _B = 0.445948490915965, 0.091576213509771
QBARY6 = np.array([
    [_A, _A, 1 - 2 * _A], [_A, 1 - 2 * _A, _A], [1 - 2 * _A, _A, _A],
    [_B, _B, 1 - 2 * _B], [_B, 1 - 2 * _B, _B], [1 - 2 * _B, _B, _B],
])
QW6 = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)

# 3-point Gauss-Legendre on [0, 1]
GAUSS3_X = 0.5 + 0.5 * np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
GAUSS3_W = np.array([5.0, 8.0, 5.0]) / 18.0


class ConvergenceError(RuntimeError):
    """Linear solver failed to reach the requested residual."""


def triangle_rule(order: int = 5):
    """Collapsed Gauss product rule (barycentric points, weights summing to 1)."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    l1 = u.ravel()
    l2 = (v * (1 - u)).ravel()
    wt = (wu * wv * (1 - u)).ravel() * 2.0
    return np.stack([1 - l1 - l2, l1, l2], axis=1), wt


def edge_p2(xi):
    """1-D quadratic basis on [0, 1] for nodes (start, midpoint, end)."""
    xi = np.asarray(xi, dtype=float)
    return np.stack([(1 - xi) * (1 - 2 * xi), 4 * xi * (1 - xi), xi * (2 * xi - 1)], axis=-1)


@dataclass(frozen=True, eq=False)
class P2Space:
    """Degree-of-freedom layout: vertices first, then one node per edge."""

    mesh: Mesh
    tri_dofs: np.ndarray
    nodes: np.ndarray
    sigma_dofs: np.ndarray

    @property
    def ndof(self) -> int:
        return len(self.nodes)

    def edge_dofs(self, tag: EdgeTag):
        """(k, 3) dof triples (start, mid, end) of edges carrying ``tag``."""
        idx = np.flatnonzero(self.mesh.edge_tags == tag)
        e = self.mesh.edges[idx]
        return np.stack([e[:, 0], idx + len(self.mesh.vertices), e[:, 1]], axis=1)


def p2_space(mesh: Mesh) -> P2Space:
    if "space" in mesh._cache:
        return mesh._cache["space"]
    nv = len(mesh.vertices)
    tri_dofs = np.concatenate([mesh.triangles, mesh.tri_edges + nv], axis=1)
    mids = 0.5 * mesh.vertices[mesh.edges].sum(axis=1)
    nodes = np.vstack([mesh.vertices, mids])
    sig_idx = np.flatnonzero(mesh.edge_tags == EdgeTag.SIGMA)
    sigma = np.unique(np.concatenate([mesh.edges[sig_idx].ravel(), sig_idx + nv]))
    space = P2Space(mesh, tri_dofs, nodes, sigma)
    mesh._cache["space"] = space
    return space


def _edge_weights(space, tag):
    """Consistent load ``int_edge phi_k w`` for every ``tag`` edge, shape (k, 3)."""
    dofs = space.edge_dofs(tag)
    P = space.nodes[dofs]
    L = np.linalg.norm(P[:, 2] - P[:, 0], axis=1)
    B = edge_p2(GAUSS3_X)
    if space.mesh.mode is Mode.AXISYMMETRIC:
        s = P[:, 0, 0][:, None] * (1 - GAUSS3_X) + P[:, 2, 0][:, None] * GAUSS3_X
    else:
        s = np.ones((len(dofs), 3))
    return dofs, L[:, None] * np.einsum("q,eq,qk->ek", GAUSS3_W, s, B)


def _sigma_p1_mass(space):
    """Linear-element mass matrix on the Sigma vertices (s-weighted if axisymmetric).

    Indexed by vertex number; rows of non-Sigma vertices are empty.
    """
    dofs = space.edge_dofs(EdgeTag.SIGMA)
    P = space.nodes[dofs]
    L = np.linalg.norm(P[:, 2] - P[:, 0], axis=1)
    x, w = GAUSS3_X, GAUSS3_W
    B = np.stack([1 - x, x], axis=-1)
    if space.mesh.mode is Mode.AXISYMMETRIC:
        s = P[:, 0, 0][:, None] * (1 - x) + P[:, 2, 0][:, None] * x
    else:
        s = np.ones((len(dofs), len(x)))
    Me = L[:, None, None] * np.einsum("q,eq,qa,qb->eab", w, s, B, B)
    ends = dofs[:, [0, 2]]
    rows = np.repeat(ends, 2, axis=1).ravel()
    cols = np.tile(ends, (1, 2)).ravel()
    nv = len(space.mesh.vertices)
    return sp.csr_matrix((Me.ravel(), (rows, cols)), shape=(nv, nv))


@dataclass(frozen=True, eq=False)
class System:
    K: sp.csr_matrix
    load: np.ndarray
    neumann: np.ndarray


def assemble(mesh: Mesh) -> System:
    """Global stiffness, unit-source load ``int phi`` and T load ``int_T phi``."""
    if "system" in mesh._cache:
        return mesh._cache["system"]
    space = p2_space(mesh)
    X = mesh.vertices[mesh.triangles]
    Ke, Fe = kernels.p2_element_matrices(X, QBARY6, QW6, mesh.mode is Mode.AXISYMMETRIC)
    td = space.tri_dofs
    rows = np.repeat(td, 6, axis=1).ravel()
    cols = np.tile(td, (1, 6)).ravel()
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(space.ndof, space.ndof))
    K.sum_duplicates()
    K.sort_indices()
    load = np.bincount(td.ravel(), weights=Fe.ravel(), minlength=space.ndof)
    dofs, wts = _edge_weights(space, EdgeTag.T)
    neumann = np.bincount(dofs.ravel(), weights=wts.ravel(), minlength=space.ndof)
    system = System(K, load, neumann)
    mesh._cache["system"] = system
    return system


@dataclass(frozen=True, eq=False)
class Field:
    """P2 solution of the mixed problem on a mesh.

    ``coeffs`` are nodal values at vertices followed by edge midpoints.
    """

    mesh: Mesh
    coeffs: np.ndarray
    c: float
    cg_iterations: int
    cg_residual: float
    c_positive_warning: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def space(self) -> P2Space:
        return p2_space(self.mesh)

    @property
    def n(self) -> int:
        return self.mesh.spec.n


CORRECTION_STEPS = 2


def sigma_midpoint_offsets(mesh: Mesh):
    """Chord-midpoint dofs of Sigma edges, their curve parameter and sagitta.

    The sagitta is the distance from the straight edge's midpoint to the
    analytic curve (positive: the midpoint lies inside the domain).
    """
    if "sagitta" in mesh._cache:
        return mesh._cache["sagitta"]
    space = p2_space(mesh)
    dofs = space.edge_dofs(EdgeTag.SIGMA)
    phi = 0.5 * (mesh.vertex_phi[dofs[:, 0]] + mesh.vertex_phi[dofs[:, 2]])
    sag = distance_to_sigma(mesh.spec, space.nodes[dofs[:, 1]])
    out = (dofs[:, 1], phi, sag)
    mesh._cache["sagitta"] = out
    return out


def _solve(mesh, c, linear_solve, correction_steps):
    space = p2_space(mesh)
    system = assemble(mesh)
    free = np.ones(space.ndof, dtype=bool)
    free[space.sigma_dofs] = False
    A = system.K[free][:, free].tocsr()
    A.sort_indices()
    B = system.K[free][:, ~free].tocsr()
    b = -system.load[free] + c * system.neumann[free]
    u = np.zeros(space.ndof)
    its = 0
    res = 0.0
    for step in range(correction_steps + 1):
        if step:
            mids, phi, sag = sigma_midpoint_offsets(mesh)
            trial = Field(mesh, u.copy(), float(c), 0, 0.0)
            u[mids] = -sag * boundary_flux(trial)(phi)
        x, k, res = linear_solve(A, b - B @ u[~free], u[free])
        its += k
        u[free] = x
    return u, its, res


def solve_mixed_bvp(mesh: Mesh, c: float, tol: float = 1e-12, maxiter: int | None = None,
                    correction_steps: int = CORRECTION_STEPS) -> Field:
    """Solve the mixed problem with Neumann constant ``c`` by Jacobi-PCG.

    Sigma vertices carry the exact value 0.  The midpoints of Sigma edges
    lie a sagitta ``sigma`` inside the curve, so instead of 0 they receive
    the boundary-value correction ``-sigma f_nu`` (first-order Taylor
    expansion of the zero trace), with ``f_nu`` the recovered flux of the
    previous pass.  ``correction_steps = 0`` gives plain zero data on every
    Sigma node; without the correction the Hessian is O(1) wrong in the
    outermost element layer.  Dirichlet rows are eliminated in every pass.

    ``c > 0`` is accepted but flagged, since the sign results only hold for
    ``c <= 0``.  Raises ConvergenceError when PCG stalls before ``tol``.
    """
    space = p2_space(mesh)
    nfree = space.ndof - len(space.sigma_dofs)
    if maxiter is None:
        maxiter = int(50 * math.sqrt(nfree))

    def pcg(A, b, x0):
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise ConvergenceError("non-positive stiffness diagonal: indefinite assembly")
        x, its, res = kernels.pcg_csr(A.indptr, A.indices, A.data, b, x0, 1.0 / diag, tol, maxiter)
        if not res <= tol:
            raise ConvergenceError(f"PCG stopped at relative residual {res:.3e} after {its} iterations")
        return x, its, res

    u, its, res = _solve(mesh, c, pcg, correction_steps)
    warn = c > 0
    if warn:
        warnings.warn("Neumann constant c > 0: maximum principle not guaranteed", stacklevel=2)
    return Field(mesh, u, float(c), its, res, warn)


def direct_solve(mesh: Mesh, c: float, correction_steps: int = CORRECTION_STEPS) -> np.ndarray:
    """Sparse direct solve of the same system (test oracle for the PCG path)."""
    def lu(A, b, x0):
        return spla.spsolve(A.tocsc(), b), 0, 0.0

    return _solve(mesh, c, lu, correction_steps)[0]


# ---------------------------------------------------------------------------
# boundary flux

@dataclass(frozen=True, eq=False)
class BoundaryFlux:
    """Piecewise-linear normal derivative on Sigma, ordered by the curve parameter.

    ``phi_nodes`` holds (start, mid, end) parameters for each Sigma edge
    and ``values`` the matching flux coefficients.
    """

    phi_nodes: np.ndarray
    values: np.ndarray

    def __call__(self, phi):
        phi = np.asarray(phi, dtype=float)
        starts = self.phi_nodes[:, 0]
        k = np.clip(np.searchsorted(starts, phi, side="right") - 1, 0, len(starts) - 1)
        a, b = self.phi_nodes[k, 0], self.phi_nodes[k, 2]
        xi = (phi - a) / (b - a)
        return np.sum(edge_p2(xi) * self.values[k], axis=-1)

    @property
    def nodal(self) -> np.ndarray:
        return self.values


def boundary_flux(field: Field) -> BoundaryFlux:
    """Variationally consistent normal derivative on Sigma.

    The weak residual of the discrete solution is tested with the continuous
    piecewise-linear hat functions of the Sigma vertices and the linear-element
    mass system is solved for the flux.  Testing with linear rather than
    quadratic functions filters out the vertex/midpoint oscillation caused by
    the zero data at chord midpoints, which lie slightly inside the curve; that
    oscillation is orthogonal to linears edge by edge.  The flux still
    satisfies the discrete divergence identity exactly.
    """
    if "flux" in field._cache:
        return field._cache["flux"]
    space = field.space
    system = assemble(field.mesh)
    resid = system.K @ field.coeffs + system.load - field.c * system.neumann
    dofs = space.edge_dofs(EdgeTag.SIGMA)
    nv = len(field.mesh.vertices)
    # hat restricted to an edge is phi_start + phi_mid / 2
    r1 = np.zeros(nv)
    verts = np.unique(dofs[:, [0, 2]])
    r1[verts] = resid[verts]
    np.add.at(r1, dofs[:, 0], 0.5 * resid[dofs[:, 1]])
    np.add.at(r1, dofs[:, 2], 0.5 * resid[dofs[:, 1]])
    M = _sigma_p1_mass(space)[verts][:, verts].tocsc()
    q = np.zeros(nv)
    q[verts] = spla.spsolve(M, r1[verts])
    vphi = field.mesh.vertex_phi
    ends = dofs[:, [0, 2]].copy()
    swap = vphi[ends[:, 0]] > vphi[ends[:, 1]]
    ends[swap] = ends[swap][:, ::-1]
    ends = ends[np.argsort(vphi[ends[:, 0]])]
    p0, p2 = vphi[ends[:, 0]], vphi[ends[:, 1]]
    q0, q2 = q[ends[:, 0]], q[ends[:, 1]]
    phi_nodes = np.stack([p0, 0.5 * (p0 + p2), p2], axis=1)
    flux = BoundaryFlux(phi_nodes, np.stack([q0, 0.5 * (q0 + q2), q2], axis=1))
    field._cache["flux"] = flux
    return flux


def gradient_trace_flux(field: Field):
    """Naive flux: element gradient dotted with the straight edge normal.

    Returns (phi, values) at Sigma edge midpoints; used to compare against
    the recovered flux.
    """
    mesh = field.mesh
    space = field.space
    sig = np.flatnonzero(mesh.edge_tags == EdgeTag.SIGMA)
    owner = {}
    for t, es in enumerate(mesh.tri_edges):
        for loc, e in enumerate(es):
            owner.setdefault(int(e), (t, loc))
    phis, vals = [], []
    G, _ = _bary_grads(mesh)
    for e in sig:
        t, loc = owner[int(e)]
        bary = np.zeros(3)
        bary[loc] = 0.5
        bary[(loc + 1) % 3] = 0.5
        grad = _grad_at(field.coeffs[space.tri_dofs[t]], G[t], bary)
        a, b = mesh.edges[e]
        d = mesh.vertices[b] - mesh.vertices[a]
        nrm = np.array([d[1], -d[0]]) / np.linalg.norm(d)
        if np.dot(nrm, 0.5 * (mesh.vertices[a] + mesh.vertices[b])) < 0:
            nrm = -nrm
        phis.append(0.5 * (mesh.vertex_phi[a] + mesh.vertex_phi[b]))
        vals.append(float(grad @ nrm))
    order = np.argsort(phis)
    return np.asarray(phis)[order], np.asarray(vals)[order]


# ---------------------------------------------------------------------------
# derivatives and volume integrals

def _bary_grads(mesh):
    X = mesh.vertices[mesh.triangles]
    d1, d2 = X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    g1 = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / det[:, None]
    return np.stack([-g1 - g2, g1, g2], axis=1), 0.5 * det


_PAIRS = ((0, 1), (1, 2), (2, 0))


def _grad_at(u6, G, bary):
    l = bary
    g = np.zeros(2)
    for i in range(3):
        g += u6[i] * (4 * l[i] - 1) * G[i]
    for k, (i, j) in enumerate(_PAIRS):
        g += u6[3 + k] * 4 * (l[j] * G[i] + l[i] * G[j])
    return g


@dataclass(frozen=True, eq=False)
class Derivatives:
    """Element-wise derivative data of a P2 field.

    ``hessian`` (nt, 2, 2) is constant per element; ``qpoints``, ``qweights``
    (nt, nq) and the values/gradients there use the post-processing rule.
    Weights include ``2 pi s`` in axisymmetric mode, so ``sum(F * qweights)``
    is the integral of F over the (3-D) domain.
    """

    hessian: np.ndarray
    qpoints: np.ndarray
    qweights: np.ndarray
    values: np.ndarray
    grads: np.ndarray
    laplacian: np.ndarray
    hess_norm2: np.ndarray

    def integrate(self, F) -> float:
        return float(np.sum(F * self.qweights))


def derivatives(field: Field, rule_order: int = 5) -> Derivatives:
    """Exact derivatives of the quadratic interpolant on every element.

    In axisymmetric mode the full 3-D Hessian of the revolved function has
    the extra azimuthal eigenvalue ``f_s / s``; the returned ``laplacian`` and
    ``hess_norm2`` (squared Frobenius norm) include it.
    """
    key = ("deriv", rule_order)
    if key in field._cache:
        return field._cache[key]
    mesh = field.mesh
    G, area = _bary_grads(mesh)
    u = field.coeffs[field.space.tri_dofs]
    Hs = np.zeros((len(area), 2, 2))
    for i in range(3):
        Hs += 4 * u[:, i, None, None] * np.einsum("ta,tb->tab", G[:, i], G[:, i])
    for k, (i, j) in enumerate(_PAIRS):
        outer = np.einsum("ta,tb->tab", G[:, i], G[:, j])
        Hs += 4 * u[:, 3 + k, None, None] * (outer + outer.transpose(0, 2, 1))
    qb, qw = triangle_rule(rule_order)
    X = mesh.vertices[mesh.triangles]
    qpts = np.einsum("qk,tkd->tqd", qb, X)
    phi = np.stack([qb[:, 0] * (2 * qb[:, 0] - 1), qb[:, 1] * (2 * qb[:, 1] - 1),
                    qb[:, 2] * (2 * qb[:, 2] - 1), 4 * qb[:, 0] * qb[:, 1],
                    4 * qb[:, 1] * qb[:, 2], 4 * qb[:, 2] * qb[:, 0]], axis=1)
    vals = u @ phi.T
    grads = np.zeros(qpts.shape)
    for i in range(3):
        grads += u[:, i, None, None] * (4 * qb[None, :, i, None] - 1) * G[:, None, i, :]
    for k, (i, j) in enumerate(_PAIRS):
        grads += 4 * u[:, 3 + k, None, None] * (qb[None, :, j, None] * G[:, None, i, :]
                                                + qb[None, :, i, None] * G[:, None, j, :])
    wts = area[:, None] * qw[None, :]
    lap = np.broadcast_to((Hs[:, 0, 0] + Hs[:, 1, 1])[:, None], vals.shape).copy()
    hn2 = np.broadcast_to(np.sum(Hs ** 2, axis=(1, 2))[:, None], vals.shape).copy()
    if mesh.mode is Mode.AXISYMMETRIC:
        s = qpts[..., 0]
        azim = grads[..., 0] / s
        lap += azim
        hn2 += azim ** 2
        wts = wts * 2 * math.pi * s
    d = Derivatives(Hs, qpts, wts, vals, grads, lap, hn2)
    field._cache[key] = d
    return d


def pfunction_density(d: Derivatives, n: int):
    """Pointwise |Hess f|^2 - (Lap f)^2/(n+1) (the Laplacian of the P-function)."""
    return d.hess_norm2 - d.laplacian ** 2 / (n + 1)


def sigma_chord_trace(field: Field) -> np.ndarray:
    """Vector integral of ``f nu`` over the straight Sigma edges of the mesh.

    Nonzero only through the boundary-value correction at chord midpoints;
    it is the term by which the discrete divergence theorem differs from the
    continuous one, where f vanishes on Sigma.  Includes ``2 pi`` in
    axisymmetric mode, where only the axial component is meaningful.
    """
    space = field.space
    dofs, wts = _edge_weights(space, EdgeTag.SIGMA)
    P = space.nodes[dofs]
    d = P[:, 2] - P[:, 0]
    nrm = np.stack([d[:, 1], -d[:, 0]], axis=1) / np.linalg.norm(d, axis=1)[:, None]
    flip = np.sum(nrm * P[:, 1], axis=1) < 0
    nrm[flip] *= -1
    vals = np.sum(field.coeffs[dofs] * wts, axis=1)
    out = vals @ nrm
    if field.mesh.mode is Mode.AXISYMMETRIC:
        out = np.array([0.0, 2 * math.pi * out[1]])
    return out


def integral_over_T(field: Field) -> float:
    """Integral of ``f`` over T (with 2 pi s weight in axisymmetric mode)."""
    space = field.space
    dofs, wts = _edge_weights(space, EdgeTag.T)
    total = float(np.sum(field.coeffs[dofs] * wts))
    if field.mesh.mode is Mode.AXISYMMETRIC:
        total *= 2 * math.pi
    return total

