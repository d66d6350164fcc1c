"""Tetrahedral meshes: loading, derived topology, orientations, incidence.

A mesh is stored as node coordinates plus cell connectivity; edges and
faces are derived deterministically (each stored with ascending node
indices, rows in lexicographic order), so entity numbering does not
depend on the order cells appear in the input file.

Orientation conventions, used consistently by every downstream module:

* an edge points from its lower to its higher node index;
* a face normal follows the right-hand rule on its ascending node triple;
* ``D[c, f] = +1`` when the face normal points out of cell ``c``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MeshFormatError",
    "DegenerateCellError",
    "TetMesh",
    "IncidenceMatrices",
    "GeometricVectors",
    "load_mesh",
    "write_mesh",
    "mesh_from_arrays",
    "build_incidence",
    "geometric_vectors",
]

# Local vertex slots of the 6 edges and 4 faces of a tetrahedron.  Face k
# is opposite vertex slot k; TET_FACES_OUT lists it with the vertex order
# whose right-hand normal points out of a positively oriented cell.
TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
TET_FACES_OUT = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])

# Signs of the three edges [v0v1, v1v2, v0v2] in the boundary cycle
# v0 -> v1 -> v2 of an ascending face triple (v0 < v1 < v2).
FACE_EDGE_SIGNS = np.array([1, 1, -1])

DEGENERATE_REL_TOL = 1e-14


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed."""


class DegenerateCellError(ValueError):
    """Raised when a cell has (near-)zero volume."""

    def __init__(self, cell_index: int, volume: float):
        self.cell_index = cell_index
        self.volume = volume
        super().__init__(
            f"cell {cell_index} is degenerate (signed volume {volume:.3e})"
        )


@dataclass(frozen=True)
class TetMesh:
    """An oriented tetrahedral mesh with derived edges and faces.

    ``cells`` rows are stored in positive-volume vertex order.  ``edges``
    and ``faces`` rows hold ascending node indices.  ``face_cells`` lists
    the one or two incident cells per face (-1 marks the missing side of
    a boundary face).  ``face_tags`` is -1 on interior/untagged faces.
    """

    nodes: np.ndarray       # (N, 3) float64
    cells: np.ndarray       # (C, 4) int64
    cell_tags: np.ndarray   # (C,)   int64 material tag
    edges: np.ndarray       # (E, 2) int64
    faces: np.ndarray       # (F, 3) int64
    cell_edges: np.ndarray  # (C, 6) edge ids, slot k = TET_EDGES[k]
    cell_faces: np.ndarray  # (C, 4) face ids, slot k opposite vertex k
    face_edges: np.ndarray  # (F, 3) edge ids [v0v1, v1v2, v0v2]
    face_cells: np.ndarray  # (F, 2) cell ids, -1 padded
    face_tags: np.ndarray   # (F,)   int64

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def boundary_faces(self) -> np.ndarray:
        """Indices of faces incident to exactly one cell."""
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    @property
    def boundary_nodes(self) -> np.ndarray:
        """Indices of nodes lying on at least one boundary face."""
        return np.unique(self.faces[self.boundary_faces])


@dataclass(frozen=True)
class IncidenceMatrices:
    """Signed incidence operators G (edge-node), C (face-edge), D (cell-face).

    Held as dense index/sign arrays: each operator row has a fixed small
    number of entries, which is also the form every consumer wants.  Use
    :meth:`grad`/:meth:`curl`/:meth:`div` or the ``*_csr`` helpers for the
    algebraic view.  Entries are exact (+1/-1) integers.
    """

    mesh: TetMesh
    d_signs: np.ndarray  # (C, 4) int64, D[c, cell_faces[c, k]]

    def grad(self, node_values: np.ndarray) -> np.ndarray:
        """Apply G: per-edge differences head minus tail."""
        e = self.mesh.edges
        return node_values[e[:, 1]] - node_values[e[:, 0]]

    def grad_t(self, edge_values: np.ndarray) -> np.ndarray:
        """Apply G^T, scattering signed edge values onto nodes."""
        e = self.mesh.edges
        out = np.zeros(self.mesh.num_nodes, dtype=edge_values.dtype)
        np.add.at(out, e[:, 1], edge_values)
        np.subtract.at(out, e[:, 0], edge_values)
        return out

    def curl(self, edge_values: np.ndarray) -> np.ndarray:
        """Apply C: signed sum of edge values around each face boundary."""
        fe = self.mesh.face_edges
        v = edge_values[fe]
        return v @ FACE_EDGE_SIGNS.astype(v.dtype)

    def curl_t(self, face_values: np.ndarray) -> np.ndarray:
        """Apply C^T, scattering signed face values onto edges."""
        fe = self.mesh.face_edges
        out = np.zeros(self.mesh.num_edges, dtype=face_values.dtype)
        for k in range(3):
            np.add.at(out, fe[:, k], FACE_EDGE_SIGNS[k] * face_values)
        return out

    def div(self, face_values: np.ndarray) -> np.ndarray:
        """Apply D: signed (outward) sum of face values per cell."""
        v = face_values[self.mesh.cell_faces]
        return np.sum(self.d_signs * v, axis=1)

    def div_t(self, cell_values: np.ndarray) -> np.ndarray:
        """Apply D^T, scattering signed cell values onto faces."""
        out = np.zeros(self.mesh.num_faces, dtype=cell_values.dtype)
        for k in range(4):
            np.add.at(out, self.mesh.cell_faces[:, k],
                      self.d_signs[:, k] * cell_values)
        return out

    def grad_coo(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """G as COO triplets (rows, cols, signs)."""
        m = self.mesh
        rows = np.repeat(np.arange(m.num_edges), 2)
        cols = m.edges.ravel()
        vals = np.tile(np.array([-1.0, 1.0]), m.num_edges)
        return rows, cols, vals

    def curl_coo(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """C as COO triplets."""
        m = self.mesh
        rows = np.repeat(np.arange(m.num_faces), 3)
        cols = m.face_edges.ravel()
        vals = np.tile(FACE_EDGE_SIGNS.astype(np.float64), m.num_faces)
        return rows, cols, vals

    def div_coo(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """D as COO triplets."""
        m = self.mesh
        rows = np.repeat(np.arange(m.num_cells), 4)
        cols = m.cell_faces.ravel()
        vals = self.d_signs.ravel().astype(np.float64)
        return rows, cols, vals


@dataclass(frozen=True)
class GeometricVectors:
    """Oriented edge/face vectors, barycenters and measures of a mesh."""

    edge_vec: np.ndarray    # (E, 3) head minus tail
    edge_len: np.ndarray    # (E,)
    edge_bary: np.ndarray   # (E, 3)
    face_vec: np.ndarray    # (F, 3) area-weighted normal
    face_area: np.ndarray   # (F,)
    face_bary: np.ndarray   # (F, 3)
    cell_bary: np.ndarray   # (C, 3)
    cell_vol: np.ndarray    # (C,) positive


def _signed_volumes(nodes: np.ndarray, cells: np.ndarray) -> np.ndarray:
    p = nodes[cells]
    return np.linalg.det(p[:, 1:] - p[:, :1]) / 6.0


def _unique_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lex-sorted unique rows and the inverse map, via a structured view."""
    rows = np.ascontiguousarray(np.sort(rows, axis=1))
    view = rows.view([("", rows.dtype)] * rows.shape[1]).ravel()
    uniq, inverse = np.unique(view, return_inverse=True)
    return uniq.view(rows.dtype).reshape(-1, rows.shape[1]), inverse


def mesh_from_arrays(
    nodes: np.ndarray,
    cells: np.ndarray,
    cell_tags: np.ndarray | None = None,
    boundary_tag_triples: np.ndarray | None = None,
    boundary_tag_values: np.ndarray | None = None,
) -> TetMesh:
    """Build a :class:`TetMesh` from raw arrays, deriving all topology.

    Cells with negative signed volume are reordered (last two vertices
    swapped); cells below the degeneracy threshold raise
    :class:`DegenerateCellError`.  Boundary tags are given as node
    triples plus one integer per triple.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    cells = np.asarray(cells, dtype=np.int64)
    if nodes.ndim != 2 or nodes.shape[1] != 3:
        raise MeshFormatError("nodes must be an (N, 3) array")
    if cells.ndim != 2 or cells.shape[1] != 4 or cells.shape[0] == 0:
        raise MeshFormatError("cells must be a nonempty (C, 4) array")
    if not np.all(np.isfinite(nodes)):
        raise MeshFormatError("node coordinates must be finite")
    if cells.min() < 0 or cells.max() >= nodes.shape[0]:
        raise MeshFormatError("cell indices out of range")

    if cell_tags is None:
        cell_tags = np.zeros(cells.shape[0], dtype=np.int64)
    cell_tags = np.asarray(cell_tags, dtype=np.int64)

    cells = cells.copy()
    vols = _signed_volumes(nodes, cells)
    flip = vols < 0
    cells[np.ix_(flip, [2, 3])] = cells[np.ix_(flip, [3, 2])]
    vols = np.abs(vols)

    extent = np.max(np.ptp(nodes, axis=0))
    vol_floor = DEGENERATE_REL_TOL * extent**3
    bad = np.flatnonzero(vols <= vol_floor)
    if bad.size:
        raise DegenerateCellError(int(bad[0]), float(vols[bad[0]]))

    edges, edge_inv = _unique_rows(cells[:, TET_EDGES].reshape(-1, 2))
    cell_edges = edge_inv.reshape(-1, 6)

    face_rows = cells[:, TET_FACES_OUT].reshape(-1, 3)
    faces, face_inv = _unique_rows(face_rows)
    cell_faces = face_inv.reshape(-1, 4)

    counts = np.bincount(cell_faces.ravel(), minlength=faces.shape[0])
    if counts.max() > 2:
        raise MeshFormatError("a face is shared by more than two cells")

    face_cells = np.full((faces.shape[0], 2), -1, dtype=np.int64)
    order = np.argsort(cell_faces.ravel(), kind="stable")
    owner = np.repeat(np.arange(cells.shape[0]), 4)[order]
    fids = cell_faces.ravel()[order]
    first = np.searchsorted(fids, np.arange(faces.shape[0]), side="left")
    face_cells[:, 0] = owner[first]
    two = counts == 2
    face_cells[two, 1] = owner[first[two] + 1]

    # The three edges [v0v1, v1v2, v0v2] of each ascending face triple.
    fe_rows = faces[:, [[0, 1], [1, 2], [0, 2]]].reshape(-1, 2)
    view = np.ascontiguousarray(fe_rows).view(
        [("", fe_rows.dtype)] * 2).ravel()
    edge_view = np.ascontiguousarray(edges).view(
        [("", edges.dtype)] * 2).ravel()
    face_edges = np.searchsorted(edge_view, view).reshape(-1, 3)

    face_tags = np.full(faces.shape[0], -1, dtype=np.int64)
    if boundary_tag_triples is not None and len(boundary_tag_triples):
        tri = np.sort(np.asarray(boundary_tag_triples, dtype=np.int64), axis=1)
        tri_view = np.ascontiguousarray(tri).view(
            [("", tri.dtype)] * 3).ravel()
        fview = np.ascontiguousarray(faces).view(
            [("", faces.dtype)] * 3).ravel()
        pos = np.searchsorted(fview, tri_view)
        if pos.max(initial=-1) >= faces.shape[0] or not np.all(
                fview[np.clip(pos, 0, faces.shape[0] - 1)] == tri_view):
            raise MeshFormatError("boundary tag triple is not a mesh face")
        face_tags[pos] = np.asarray(boundary_tag_values, dtype=np.int64)

    return TetMesh(
        nodes=nodes, cells=cells, cell_tags=cell_tags,
        edges=edges, faces=faces,
        cell_edges=cell_edges, cell_faces=cell_faces,
        face_edges=face_edges, face_cells=face_cells, face_tags=face_tags,
    )


def build_incidence(mesh: TetMesh) -> IncidenceMatrices:
    """Signed incidence operators for a mesh.

    The D sign is combinatorial: +1 iff the ascending triple of face slot
    k is an even permutation of the outward order ``TET_FACES_OUT[k]`` of
    the (positively oriented) cell, so no floating point is involved and
    ``C @ G == 0`` and ``D @ C == 0`` hold exactly.
    """
    out = mesh.cells[:, TET_FACES_OUT]  # (C, 4, 3) outward vertex order
    a, b, c = out[..., 0], out[..., 1], out[..., 2]
    even = ((a < b) & (b < c)) | ((b < c) & (c < a)) | ((c < a) & (a < b))
    d_signs = np.where(even, 1, -1).astype(np.int64)
    return IncidenceMatrices(mesh=mesh, d_signs=d_signs)


def geometric_vectors(mesh: TetMesh) -> GeometricVectors:
    """Edge/face vectors, barycenters, lengths, areas and volumes."""
    nodes = mesh.nodes
    edge_vec = nodes[mesh.edges[:, 1]] - nodes[mesh.edges[:, 0]]
    edge_len = np.linalg.norm(edge_vec, axis=1)
    edge_bary = nodes[mesh.edges].mean(axis=1)

    p = nodes[mesh.faces]
    face_vec = 0.5 * np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    face_area = np.linalg.norm(face_vec, axis=1)
    face_bary = p.mean(axis=1)

    cell_bary = nodes[mesh.cells].mean(axis=1)
    cell_vol = _signed_volumes(nodes, mesh.cells)

    return GeometricVectors(
        edge_vec=edge_vec, edge_len=edge_len, edge_bary=edge_bary,
        face_vec=face_vec, face_area=face_area, face_bary=face_bary,
        cell_bary=cell_bary, cell_vol=cell_vol,
    )


def _parse_simple(text: str) -> tuple[np.ndarray, ...]:
    tokens = []
    for line in text.splitlines():
        body = line.split("#", 1)[0].strip()
        if body:
            tokens.extend(body.split())
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(tokens):
            raise MeshFormatError("unexpected end of file")
        chunk = tokens[pos:pos + n]
        pos += n
        return chunk

    try:
        nn = int(take(1)[0])
        nodes = np.array(take(3 * nn), dtype=np.float64).reshape(nn, 3)
        nc = int(take(1)[0])
        raw = np.array(take(5 * nc), dtype=np.int64).reshape(nc, 5)
        cells = raw[:, :4] - 1
        tags = raw[:, 4]
        tri = val = None
        if pos < len(tokens):
            nb = int(take(1)[0])
            braw = np.array(take(4 * nb), dtype=np.int64).reshape(nb, 4)
            tri = braw[:, :3] - 1
            val = braw[:, 3]
    except ValueError as exc:
        raise MeshFormatError(f"simple format: {exc}") from exc
    if pos != len(tokens):
        raise MeshFormatError("trailing tokens in simple mesh file")
    return nodes, cells, tags, tri, val


def _parse_msh2(text: str) -> tuple[np.ndarray, ...]:
    lines = [ln.strip() for ln in text.splitlines()]
    sections: dict[str, list[str]] = {}
    i = 0
    while i < len(lines):
        if lines[i].startswith("$") and not lines[i].startswith("$End"):
            name = lines[i][1:]
            j = i + 1
            while j < len(lines) and lines[j] != f"$End{name}":
                j += 1
            if j == len(lines):
                raise MeshFormatError(f"unterminated ${name} section")
            sections[name] = lines[i + 1:j]
            i = j + 1
        else:
            i += 1

    if "MeshFormat" in sections:
        version = sections["MeshFormat"][0].split()[0]
        if not version.startswith("2."):
            raise MeshFormatError(f"unsupported MSH version {version}")
    if "Nodes" not in sections or "Elements" not in sections:
        raise MeshFormatError("missing $Nodes or $Elements section")

    try:
        body = sections["Nodes"]
        nn = int(body[0])
        rows = np.array(" ".join(body[1:1 + nn]).split(), dtype=np.float64)
        rows = rows.reshape(nn, 4)
    except ValueError as exc:
        raise MeshFormatError(f"bad $Nodes section: {exc}") from exc
    ids = rows[:, 0].astype(np.int64)
    remap = np.full(ids.max() + 1, -1, dtype=np.int64)
    remap[ids] = np.arange(nn)
    nodes = rows[:, 1:4]

    cells, tags, tri, val = [], [], [], []
    try:
        body = sections["Elements"]
        ne = int(body[0])
        for ln in body[1:1 + ne]:
            parts = [int(t) for t in ln.split()]
            etype, ntags = parts[1], parts[2]
            phys = parts[3] if ntags >= 1 else 0
            conn = parts[3 + ntags:]
            if etype == 4:
                cells.append(conn)
                tags.append(phys)
            elif etype == 2:
                tri.append(conn)
                val.append(phys)
            # other element types (points, lines, ...) are ignored
    except (ValueError, IndexError) as exc:
        raise MeshFormatError(f"bad $Elements section: {exc}") from exc

    if not cells:
        raise MeshFormatError("MSH file contains no tetrahedra")
    cells = remap[np.array(cells, dtype=np.int64)]
    tri_arr = remap[np.array(tri, dtype=np.int64)] if tri else None
    val_arr = np.array(val, dtype=np.int64) if val else None
    if (cells < 0).any() or (tri_arr is not None and (tri_arr < 0).any()):
        raise MeshFormatError("element references unknown node id")
    return nodes, cells, np.array(tags, dtype=np.int64), tri_arr, val_arr


def load_mesh(path: str | os.PathLike, format: str | None = None) -> TetMesh:
    """Load a mesh from a ``simple`` or Gmsh MSH 2.2 ASCII file.

    Indices in files are 1-based (Gmsh convention).  When ``format`` is
    omitted it is sniffed from the content.
    """
    with open(path) as fh:
        text = fh.read()
    if format is None:
        format = "msh2" if text.lstrip().startswith("$MeshFormat") else "simple"
    if format == "msh2":
        nodes, cells, tags, tri, val = _parse_msh2(text)
    elif format == "simple":
        nodes, cells, tags, tri, val = _parse_simple(text)
    else:
        raise ValueError(f"unknown mesh format {format!r}")
    return mesh_from_arrays(nodes, cells, tags, tri, val)


def write_mesh(mesh: TetMesh, path: str | os.PathLike) -> None:
    """Write a mesh in the ``simple`` format (round-trip exact)."""
    lines = [f"{mesh.num_nodes}"]
    lines.extend("%.17g %.17g %.17g" % tuple(p) for p in mesh.nodes)
    lines.append(f"{mesh.num_cells}")
    for conn, tag in zip(mesh.cells, mesh.cell_tags):
        lines.append("%d %d %d %d %d" % (*(conn + 1), tag))
    bnd = mesh.boundary_faces
    tagged = bnd[mesh.face_tags[bnd] >= 0]
    if tagged.size:
        lines.append(f"{tagged.size}")
        for f in tagged:
            lines.append("%d %d %d %d" % (*(mesh.faces[f] + 1),
                                          mesh.face_tags[f]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
