"""Plain-text mesh and field files.

Mesh format, version 1 (one record per line, whitespace separated)::

    capilab-mesh 1
    <n_vertices> <n_triangles> <n_edges> <mode>
    spec <domain spec as one-line JSON>
    v <x> <y> <phi>            # phi = nan off Sigma
    t <i> <j> <k>              # counter-clockwise, 0-based
    e <i> <j> <tag>            # tag: 0 interior, 1 Sigma, 2 T, 3 axis

A field file is a mesh file followed by::

    field <n_nodes> <c>
    f <value>                  # vertices first, then one node per edge

Floats are written with 17 significant digits so a round trip is exact.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .geometry import DomainSpec
from .meshgen import Mesh, _assemble

MESH_MAGIC = "capilab-mesh"
VERSION = 1


class FormatError(ValueError):
    """Malformed or unsupported mesh/field file."""


def _f(x) -> str:
    return format(float(x), ".17g")


def mesh_lines(mesh: Mesh) -> list:
    out = [f"{MESH_MAGIC} {VERSION}",
           f"{len(mesh.vertices)} {len(mesh.triangles)} {len(mesh.edges)} {mesh.mode.value}",
           "spec " + json.dumps(mesh.spec.to_dict(), sort_keys=True)]
    for (x, y), p in zip(mesh.vertices, mesh.vertex_phi):
        out.append(f"v {_f(x)} {_f(y)} {_f(p)}")
    for a, b, c in mesh.triangles:
        out.append(f"t {a} {b} {c}")
    for (a, b), tag in zip(mesh.edges, mesh.edge_tags):
        out.append(f"e {a} {b} {int(tag)}")
    return out


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(mesh_lines(mesh)) + "\n")


def _parse_mesh(lines):
    if not lines or lines[0].split() != [MESH_MAGIC, str(VERSION)]:
        raise FormatError(f"expected header '{MESH_MAGIC} {VERSION}'")
    try:
        nv, nt, ne, mode = lines[1].split()
        nv, nt, ne = int(nv), int(nt), int(ne)
        key, payload = lines[2].split(" ", 1)
        if key != "spec":
            raise FormatError("third line must hold the spec")
        spec = DomainSpec.from_dict(json.loads(payload))
    except (ValueError, KeyError) as exc:
        raise FormatError(f"bad mesh preamble: {exc}") from None
    if spec.mode.value != mode:
        raise FormatError("mode in header and spec disagree")
    body = lines[3:3 + nv + nt + ne]
    if len(body) != nv + nt + ne:
        raise FormatError("file ends before all mesh records were read")
    try:
        V = np.array([[float(t) for t in ln.split()[1:3]] for ln in body[:nv]])
        phi = np.array([float(ln.split()[3]) for ln in body[:nv]])
        T = np.array([[int(t) for t in ln.split()[1:]] for ln in body[nv:nv + nt]], dtype=np.int64)
        E = np.array([[int(t) for t in ln.split()[1:]] for ln in body[nv + nt:]], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"bad mesh record: {exc}") from None
    for ln, kind in zip(body, ["v"] * nv + ["t"] * nt + ["e"] * ne):
        if not ln.startswith(kind + " "):
            raise FormatError(f"expected a '{kind}' record, got {ln[:20]!r}")
    mesh = _assemble(spec, V, T.reshape(-1, 3), phi, level=0)
    if not (np.array_equal(mesh.edges, E[:, :2]) and np.array_equal(mesh.edge_tags, E[:, 2])):
        raise FormatError("edge records do not match the triangulation")
    return mesh, 3 + nv + nt + ne


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        lines = fh.read().splitlines()
    return _parse_mesh(lines)[0]


def write_field(field, path) -> None:
    lines = mesh_lines(field.mesh)
    lines.append(f"field {len(field.coeffs)} {_f(field.c)}")
    lines += [f"f {_f(v)}" for v in field.coeffs]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field(path):
    """Return ``(mesh, coeffs, c)`` from a field file."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    mesh, pos = _parse_mesh(lines)
    try:
        key, n, c = lines[pos].split()
        if key != "field":
            raise ValueError
        n, c = int(n), float(c)
        coeffs = np.array([float(ln.split()[1]) for ln in lines[pos + 1:pos + 1 + n]])
    except (ValueError, IndexError):
        raise FormatError("bad field section") from None
    if len(coeffs) != n or not math.isfinite(c):
        raise FormatError("field section truncated")
    return mesh, coeffs, c
