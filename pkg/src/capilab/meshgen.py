"""Structured triangulation of star-shaped capillary domains.

Vertices sit on rings ``x = t_i g(phi) (cos phi, sin phi)`` with radially
graded fractions ``t_i = (i / n_radial)**0.8``.  The outer ring carries
``n_angular`` segments; going inward the segment count is halved whenever
the cells become much longer radially than angularly, so triangles stay
well shaped all the way down to the central fan around the anchor point.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import DomainSpec, Mode, radial_graph

GRADING = 0.8
MIN_ANGLE_DEG = 20.0


class MeshQualityError(ValueError):
    """Mesh request that cannot produce a valid triangulation."""


class EdgeTag(enum.IntEnum):
    INTERIOR = 0
    SIGMA = 1
    T = 2
    AXIS = 3


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh of a capillary domain (planar domain or meridian section).

    Attributes
    ----------
    vertices : (nv, 2) float
    triangles : (nt, 3) int, counter-clockwise
    edges : (ne, 2) int, each sorted ascending
    edge_tags : (ne,) int, values of :class:`EdgeTag`
    tri_edges : (nt, 3) int, edge indices of local edges (01, 12, 20)
    vertex_phi : (nv,) float, parameter of vertices on Sigma, NaN elsewhere
    gamma : (k,) int, vertices shared by a Sigma edge and a T edge
    """

    spec: DomainSpec
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_tags: np.ndarray
    tri_edges: np.ndarray
    vertex_phi: np.ndarray
    gamma: np.ndarray
    level: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def mode(self) -> Mode:
        return self.spec.mode

    @property
    def h(self) -> float:
        """Characteristic size: longest edge."""
        return float(self.edge_lengths().max())

    @property
    def mean_size(self) -> float:
        """sqrt(planar area / triangle count); halves exactly under refinement.

        The longest edge sits in a ring-transition cell whose shape varies
        between resolutions, so convergence orders are measured against
        this size instead of :attr:`h`.
        """
        return float(math.sqrt(self.signed_areas().sum() / len(self.triangles)))

    def edge_lengths(self):
        e = self.vertices[self.edges]
        return np.linalg.norm(e[:, 1] - e[:, 0], axis=1)

    def signed_areas(self):
        X = self.vertices[self.triangles]
        d1, d2 = X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def angles(self):
        """Interior angles in degrees, shape (nt, 3)."""
        X = self.vertices[self.triangles]
        out = np.empty((X.shape[0], 3))
        for k in range(3):
            u = X[:, (k + 1) % 3] - X[:, k]
            v = X[:, (k + 2) % 3] - X[:, k]
            cosang = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            out[:, k] = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return out

    def min_angle(self) -> float:
        return float(self.angles().min())

    def tagged(self, tag: EdgeTag) -> np.ndarray:
        return self.edges[self.edge_tags == tag]

    def boundary_edge_mask(self):
        counts = np.bincount(self.tri_edges.ravel(), minlength=len(self.edges))
        return counts == 1

    def volume(self) -> float:
        """Sum of triangle areas, weighted by 2 pi s in axisymmetric mode."""
        A = self.signed_areas()
        if self.mode is Mode.PLANAR:
            return float(A.sum())
        s = self.vertices[self.triangles][:, :, 0].mean(axis=1)
        return float(2 * math.pi * np.sum(A * s))

    def validate(self) -> None:
        """Raise MeshQualityError if any structural invariant fails."""
        if np.any(self.signed_areas() <= 0):
            raise MeshQualityError("non-positive triangle area")
        ang = self.min_angle()
        if ang < MIN_ANGLE_DEG:
            raise MeshQualityError(f"minimum angle {ang:.2f} deg below {MIN_ANGLE_DEG} deg")
        bnd = self.boundary_edge_mask()
        if np.any(bnd != (self.edge_tags != EdgeTag.INTERIOR)):
            raise MeshQualityError("boundary edges and non-interior tags disagree")
        for tag in (EdgeTag.SIGMA, EdgeTag.T):
            if not _is_connected_chain(self.tagged(tag)):
                raise MeshQualityError(f"{tag.name} edges do not form a connected chain")
        T = self.tagged(EdgeTag.T)
        if np.any(self.vertices[T.ravel(), 1] != 0.0):
            raise MeshQualityError("T edge off the plane y = 0")
        A = self.tagged(EdgeTag.AXIS)
        if np.any(self.vertices[A.ravel(), 0] != 0.0):
            raise MeshQualityError("axis edge off s = 0")


def _is_connected_chain(edges) -> bool:
    if len(edges) == 0:
        return True
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    nodes, inv = np.unique(edges.ravel(), return_inverse=True)
    inv = inv.reshape(-1, 2)
    g = coo_matrix((np.ones(len(inv)), (inv[:, 0], inv[:, 1])), shape=(len(nodes), len(nodes)))
    return connected_components(g, directed=False)[0] == 1


def ring_counts(n_radial: int, n_angular: int, phi_max: float):
    """Angular segment count of every ring (index 1..n_radial).

    Going inward from ``n_angular``, the count is halved (at most once per
    ring) while the arc spacing is below 0.7 times the radial spacing.
    """
    t = (np.arange(n_radial + 1) / n_radial) ** GRADING
    counts = [n_angular]
    for i in range(n_radial - 1, 0, -1):
        m = counts[-1]
        aspect = t[i] * phi_max / (m * (t[i] - t[i - 1]))
        if aspect < 0.7 and m % 2 == 0 and m // 2 >= 2:
            m //= 2
        counts.append(m)
    return t, counts[::-1]


def build_mesh(spec: DomainSpec, n_radial: int, n_angular: int, validate: bool = True) -> Mesh:
    """Structured mesh of ``spec`` with ``n_radial`` rings and ``n_angular`` Sigma edges."""
    if n_radial < 2 or n_angular < 4:
        raise MeshQualityError(f"need n_radial >= 2 and n_angular >= 4, got {n_radial}x{n_angular}")
    Phi = spec.phi_max
    t, counts = ring_counts(n_radial, n_angular, Phi)

    verts = [np.zeros((1, 2))]
    rings = [np.array([0])]
    vphi = [np.array([np.nan])]
    nxt = 1
    for i in range(1, n_radial + 1):
        m = counts[i - 1]
        phi = Phi * np.arange(m + 1) / m
        g = radial_graph(spec, phi)
        xy = np.stack([t[i] * g * np.cos(phi), t[i] * g * np.sin(phi)], axis=1)
        xy[0, 1] = 0.0
        if spec.mode is Mode.PLANAR:
            xy[-1, 1] = 0.0
        else:
            xy[-1, 0] = 0.0
        verts.append(xy)
        rings.append(np.arange(nxt, nxt + m + 1))
        vphi.append(phi if i == n_radial else np.full(m + 1, np.nan))
        nxt += m + 1
    V = np.vstack(verts)

    tris = []
    r1 = rings[1]
    for j in range(counts[0]):
        tris.append((0, r1[j], r1[j + 1]))
    for i in range(1, n_radial):
        inner, outer = rings[i], rings[i + 1]
        mi, mo = counts[i - 1], counts[i]
        if mo == mi:
            for j in range(mi):
                a, b, c, d = inner[j], inner[j + 1], outer[j + 1], outer[j]
                if np.linalg.norm(V[a] - V[c]) <= np.linalg.norm(V[b] - V[d]):
                    tris += [(a, d, c), (a, c, b)]
                else:
                    tris += [(a, d, b), (b, d, c)]
        else:
            for j in range(mi):
                a, b = inner[j], inner[j + 1]
                o0, o1, o2 = outer[2 * j], outer[2 * j + 1], outer[2 * j + 2]
                tris += [(a, o0, o1), (a, o1, b), (b, o1, o2)]
    mesh = _assemble(spec, V, np.array(tris, dtype=np.int64), np.concatenate(vphi), level=0)
    if validate:
        mesh.validate()
    return mesh


def _assemble(spec, V, tris, vphi, level):
    local = np.stack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=1).reshape(-1, 2)
    local = np.sort(local, axis=1)
    edges, inv = np.unique(local, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    tri_edges = inv.reshape(-1, 3)
    counts = np.bincount(inv, minlength=len(edges))
    bnd = counts == 1
    tags = np.full(len(edges), EdgeTag.INTERIOR, dtype=np.int8)
    on_sigma = ~np.isnan(vphi)
    both_sigma = on_sigma[edges[:, 0]] & on_sigma[edges[:, 1]]
    on_plane = (V[edges[:, 0], 1] == 0.0) & (V[edges[:, 1], 1] == 0.0)
    on_axis = (V[edges[:, 0], 0] == 0.0) & (V[edges[:, 1], 0] == 0.0)
    tags[bnd & both_sigma] = EdgeTag.SIGMA
    tags[bnd & ~both_sigma & on_plane] = EdgeTag.T
    if spec.mode is Mode.AXISYMMETRIC:
        tags[bnd & ~both_sigma & ~on_plane & on_axis] = EdgeTag.AXIS
    sig_v = np.unique(edges[tags == EdgeTag.SIGMA].ravel())
    t_v = np.unique(edges[tags == EdgeTag.T].ravel())
    gamma = np.intersect1d(sig_v, t_v)
    return Mesh(spec, V, tris, edges, tags, tri_edges, vphi, gamma, level)


def refine(mesh: Mesh) -> Mesh:
    """Uniform red refinement; new Sigma vertices are snapped to the analytic curve."""
    spec = mesh.spec
    nv = len(mesh.vertices)
    ends = mesh.vertices[mesh.edges]
    mid = 0.5 * (ends[:, 0] + ends[:, 1])
    mid_phi = np.full(len(mesh.edges), np.nan)
    sig = mesh.edge_tags == EdgeTag.SIGMA
    phi = 0.5 * (mesh.vertex_phi[mesh.edges[sig, 0]] + mesh.vertex_phi[mesh.edges[sig, 1]])
    g = radial_graph(spec, phi)
    mid[sig] = np.stack([g * np.cos(phi), g * np.sin(phi)], axis=1)
    mid_phi[sig] = phi
    mid[mesh.edge_tags == EdgeTag.T, 1] = 0.0
    mid[mesh.edge_tags == EdgeTag.AXIS, 0] = 0.0
    V = np.vstack([mesh.vertices, mid])
    vphi = np.concatenate([mesh.vertex_phi, mid_phi])
    a, b, c = mesh.triangles.T
    m01, m12, m20 = (mesh.tri_edges + nv).T
    tris = np.concatenate([
        np.stack([a, m01, m20], axis=1),
        np.stack([m01, b, m12], axis=1),
        np.stack([m20, m12, c], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ])
    return _assemble(spec, V, tris, vphi, mesh.level + 1)
