"""Barycentric dual-grid geometry and its exact reconstruction identities.

Every quantity here is defined per cell first and then assembled:

* the restriction of the dual edge of face ``f`` to cell ``c`` is the
  segment from the cell barycenter to the face barycenter, oriented so
  the full dual edge crosses ``f`` along the face normal.  As a vector:
  ``D[c,f] * (b_f - b_c)``;
* the restriction of the dual face of edge ``e`` is a planar quadrilateral
  through the cell barycenter, the barycenters of the two faces of ``c``
  containing ``e`` and the edge midpoint, oriented right-handedly with
  ``e``.  Splitting it into the two triangles (b_c, b_f, b_e) gives the
  vector ``sum_f tau * 0.5 (b_f - b_c) x (b_e - b_c)`` where
  ``tau = D[c,f] * C[f,e]`` is the traversal sign of ``e`` in the
  outward-oriented boundary of ``f``;
* boundary closure terms ("stubs"): for a node ``n`` of edge ``e`` the
  stub surface is the pair of triangles (b_e, b_f, p_ne) on the two faces
  of ``c`` containing ``e``, with anchor ``p_ne = 3/4 n + 1/4 n1``; for a
  node of face ``f`` the stub segment runs between ``b_f`` and
  ``p_nf = 1/2 n + 1/4 n1 + 1/4 n2``, signed with ``D[c,f]``.  Summed
  over the cells of an interior face/edge these cancel exactly (bitwise,
  since the paired contributions are identical up to sign).

Four families of tensor identities tie these vectors to cell and dual
cell volumes; :func:`identity_report` evaluates all of them and is the
backbone of the verification CLI and the acceptance suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import (
    FACE_EDGE_SIGNS,
    TET_EDGES,
    GeometricVectors,
    IncidenceMatrices,
    TetMesh,
    build_incidence,
    geometric_vectors,
)

__all__ = [
    "CellDualVectors",
    "BoundaryStubs",
    "DualCellGeometry",
    "DualGeometry",
    "cell_dual_vectors",
    "boundary_stubs",
    "dual_cell_geometry",
    "fundamental_identity_check",
    "identity_report",
    "IDENTITY_NAMES",
]

# For edge slot ke (see TET_EDGES) the two face slots containing it; the
# face slot opposite vertex slot k contains every edge not touching k.
EDGE_FACE_SLOTS = np.array(
    [[2, 3], [1, 3], [1, 2], [0, 3], [0, 2], [0, 1]])

# For vertex slot kn: the three incident edge slots, and the opposite
# vertex slot of each of those edges (= the paired face slot: the unique
# face at kn to which the edge does not belong).
NODE_EDGE_SLOTS = np.array([[0, 1, 2], [0, 3, 4], [1, 3, 5], [2, 4, 5]])
NODE_PAIR_SLOTS = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])

# Whether vertex slot kn is the lower slot of each of its incident edges
# (slot pairs in TET_EDGES are ordered by slot index).
NODE_EDGE_SLOTS_IS_LOW = np.array(
    [[TET_EDGES[e, 0] == kn for e in NODE_EDGE_SLOTS[kn]]
     for kn in range(4)])


@dataclass(frozen=True)
class CellDualVectors:
    """Dual vectors of one cell, indexed by its local face/edge slots."""

    cell: int
    face_ids: np.ndarray     # (4,)
    edge_ids: np.ndarray     # (6,)
    dual_edges: np.ndarray   # (4, 3) restricted dual edge per face slot
    dual_faces: np.ndarray   # (6, 3) restricted dual face per edge slot
    volume: float
    node_subvolume: float    # |dual cell ∩ cell|, same for all 4 nodes


@dataclass(frozen=True)
class BoundaryStubs:
    """Assembled boundary closure vectors.

    ``edge_stub[e, k]`` is the stub face vector for edge ``e`` seen from
    its k-th node (ascending order); ``face_stub[f, k]`` the stub edge
    vector for face ``f`` seen from its k-th node.  Both are exactly zero
    away from the boundary.
    """

    edge_stub: np.ndarray  # (E, 2, 3)
    face_stub: np.ndarray  # (F, 3, 3)


@dataclass(frozen=True)
class DualCellGeometry:
    """Everything attached to the dual cell of one node.

    Row blocks are ordered by ascending entity index.  ``half_edges``
    and ``third_faces`` are the restrictions of primal edges/faces to
    the dual cell (factors 1/2 and 1/3); ``dual_faces``/``dual_edges``
    are the assembled dual vectors of the incident edges/faces, and the
    ``*_stubs`` the matching boundary closure rows (zero on interior
    dual cells).
    """

    node: int
    is_boundary: bool
    volume: float
    cell_ids: np.ndarray      # (m_c,)
    cell_slots: np.ndarray    # (m_c,) local vertex slot of node in cell
    sub_volumes: np.ndarray   # (m_c,) cell volumes / 4
    edge_ids: np.ndarray      # (m_e,) ascending
    edge_ends: np.ndarray     # (m_e,) 0/1 position of node in edge
    half_edges: np.ndarray    # (m_e, 3)
    dual_faces: np.ndarray    # (m_e, 3)
    edge_stubs: np.ndarray    # (m_e, 3)
    face_ids: np.ndarray      # (m_f,) ascending
    face_corners: np.ndarray  # (m_f,) 0/1/2 position of node in face
    third_faces: np.ndarray   # (m_f, 3)
    dual_edges: np.ndarray    # (m_f, 3)
    face_stubs: np.ndarray    # (m_f, 3)


def _node_incidence(entity_nodes: np.ndarray, num_nodes: int):
    """CSR adjacency node -> (entity id, local position), both sorted."""
    k = entity_nodes.shape[1]
    n_ent = entity_nodes.shape[0]
    nodes = entity_nodes.ravel()
    ids = np.repeat(np.arange(n_ent), k)
    pos = np.tile(np.arange(k), n_ent)
    order = np.lexsort((ids, nodes))
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(indptr, nodes + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, ids[order], pos[order]


class DualGeometry:
    """Cached dual-grid structure of a whole mesh.

    Builds all per-cell restricted vectors, assembled dual vectors,
    boundary stubs, pairing signs and node incidence in vectorized form;
    :meth:`dual_cell` and :meth:`cell_dual` slice out per-entity views.
    """

    def __init__(self, mesh: TetMesh,
                 vectors: GeometricVectors | None = None,
                 incidence: IncidenceMatrices | None = None):
        self.mesh = mesh
        self.vectors = vectors if vectors is not None else geometric_vectors(mesh)
        self.incidence = incidence if incidence is not None else build_incidence(mesh)
        vec, inc = self.vectors, self.incidence

        b_c = vec.cell_bary                      # (C, 3)
        b_f = vec.face_bary[mesh.cell_faces]     # (C, 4, 3)
        b_e = vec.edge_bary[mesh.cell_edges]     # (C, 6, 3)
        dsg = inc.d_signs.astype(np.float64)     # (C, 4)

        # Restricted dual edges, oriented along the global face normal.
        self.etilde_local = dsg[:, :, None] * (b_f - b_c[:, None, :])

        # tau[c, ke, m] = D[c, f] * C[f, e] for the m-th face containing
        # edge slot ke: the traversal sign of e in the outward boundary
        # of that face.
        fe_of_cf = mesh.face_edges[mesh.cell_faces]         # (C, 4, 3)
        kf = EDGE_FACE_SLOTS                                # (6, 2)
        cand = fe_of_cf[:, kf, :]                           # (C, 6, 2, 3)
        match = cand == mesh.cell_edges[:, :, None, None]   # one hit each
        csign = (match * FACE_EDGE_SIGNS).sum(axis=3)       # (C, 6, 2)
        self.tau = dsg[:, kf] * csign                       # (C, 6, 2)

        # Restricted dual faces: signed triangle vectors (b_c, b_f, b_e).
        bf_pair = b_f[:, kf, :]                             # (C, 6, 2, 3)
        tri = 0.5 * np.cross(bf_pair - b_c[:, None, None, :],
                             b_e[:, :, None, :] - b_c[:, None, None, :])
        self.ftilde_local = (self.tau[..., None] * tri).sum(axis=2)

        # Assembled dual vectors over all incident cells.
        self.etilde_face = np.zeros((mesh.num_faces, 3))
        np.add.at(self.etilde_face, mesh.cell_faces, self.etilde_local)
        self.ftilde_edge = np.zeros((mesh.num_edges, 3))
        np.add.at(self.ftilde_edge, mesh.cell_edges, self.ftilde_local)

        # Net D sign per face: the D sign of the owning cell on boundary
        # faces, exactly zero on interior faces.
        d_net = np.zeros(mesh.num_faces, dtype=np.int64)
        np.add.at(d_net, mesh.cell_faces, inc.d_signs)
        self.d_net = d_net

        # Stub anchors.  p_edge[e, k]: 3/4 of node k plus 1/4 of the
        # other node; p_face[f, k]: 1/2 of node k plus 1/4 of each other.
        en = mesh.nodes[mesh.edges]                          # (E, 2, 3)
        self.p_edge = 0.75 * en + 0.25 * en[:, ::-1]
        fn = mesh.nodes[mesh.faces]                          # (F, 3, 3)
        self.p_face = 0.25 * fn.sum(axis=1, keepdims=True) + 0.25 * fn

        # Assembled face stubs l: only the boundary face's cell survives.
        self.face_stub = d_net[:, None, None] * (
            self.p_face - vec.face_bary[:, None, :])

        # Assembled edge stubs s: triangle (b_e, b_f, p_ne) per boundary
        # face containing e, signed with tau = D * C of the owning cell.
        self.edge_stub = np.zeros((mesh.num_edges, 2, 3))
        bnd = mesh.boundary_faces
        if bnd.size:
            eids = mesh.face_edges[bnd]                      # (B, 3)
            taub = (d_net[bnd, None] * FACE_EDGE_SIGNS)      # (B, 3)
            be = vec.edge_bary[eids]                         # (B, 3, 3)
            bf = vec.face_bary[bnd][:, None, :]              # (B, 1, 3)
            for k in range(2):
                p = self.p_edge[eids, k]                     # (B, 3, 3)
                tri = 0.5 * np.cross(bf - be, p - be)
                np.add.at(self.edge_stub[:, k, :], eids,
                          taub[..., None] * tri)

        # Pairing signs r[c, kn, t] for the edge/face pairs at each node:
        # the unique sign making (r * face) . edge positive.
        fvec = vec.face_vec[mesh.cell_faces]     # (C, 4, 3)
        evec = vec.edge_vec[mesh.cell_edges]     # (C, 6, 3)
        dots = np.einsum(
            "cti,cti->ct",
            fvec[:, NODE_PAIR_SLOTS.ravel(), :],
            evec[:, NODE_EDGE_SLOTS.ravel(), :]).reshape(-1, 4, 3)
        self.r_sign = np.sign(dots)

        # Node position inside each global entity row.
        self.cell_node_end = (
            mesh.cells[:, TET_EDGES[:, 0]] > mesh.cells[:, TET_EDGES[:, 1]]
        ).astype(np.int64)  # (C, 6) position of the LOWER local slot's node

        self.node_cells_csr = _node_incidence(mesh.cells, mesh.num_nodes)
        self.node_edges_csr = _node_incidence(mesh.edges, mesh.num_nodes)
        self.node_faces_csr = _node_incidence(mesh.faces, mesh.num_nodes)

        bnode = np.zeros(mesh.num_nodes, dtype=bool)
        bnode[np.unique(mesh.faces[bnd])] = True
        self.node_on_boundary = bnode

    # -- per-cell restricted stubs (identity checks, piecewise builder) --

    def edge_stub_local(self) -> np.ndarray:
        """s restricted to cells: (C, 6, 2, 3), indexed by edge slot and
        by the node's position in the global (ascending) edge row."""
        mesh, vec = self.mesh, self.vectors
        kf = EDGE_FACE_SLOTS
        b_f = vec.face_bary[mesh.cell_faces][:, kf, :]       # (C, 6, 2, 3)
        b_e = vec.edge_bary[mesh.cell_edges][:, :, None, :]  # (C, 6, 1, 3)
        p = self.p_edge[mesh.cell_edges]                     # (C, 6, 2, 3)
        out = np.empty((mesh.num_cells, 6, 2, 3))
        for k in range(2):
            tri = 0.5 * np.cross(b_f - b_e, p[:, :, None, k, :] - b_e)
            out[:, :, k, :] = (self.tau[..., None] * tri).sum(axis=2)
        return out

    def face_stub_local(self) -> np.ndarray:
        """l restricted to cells: (C, 4, 3, 3) by face slot and corner."""
        mesh, vec = self.mesh, self.vectors
        p = self.p_face[mesh.cell_faces]                     # (C, 4, 3, 3)
        b_f = vec.face_bary[mesh.cell_faces][:, :, None, :]
        return self.incidence.d_signs[:, :, None, None] * (p - b_f)

    # -- per-entity views --

    def cell_dual(self, cell: int) -> CellDualVectors:
        vol = float(self.vectors.cell_vol[cell])
        return CellDualVectors(
            cell=cell,
            face_ids=self.mesh.cell_faces[cell].copy(),
            edge_ids=self.mesh.cell_edges[cell].copy(),
            dual_edges=self.etilde_local[cell].copy(),
            dual_faces=self.ftilde_local[cell].copy(),
            volume=vol,
            node_subvolume=vol / 4.0,
        )

    def dual_cell(self, node: int) -> DualCellGeometry:
        mesh, vec = self.mesh, self.vectors
        ptr, ids, pos = self.node_cells_csr
        cell_ids = ids[ptr[node]:ptr[node + 1]]
        cell_slots = pos[ptr[node]:ptr[node + 1]]
        sub_volumes = vec.cell_vol[cell_ids] / 4.0

        ptr, ids, pos = self.node_edges_csr
        edge_ids = ids[ptr[node]:ptr[node + 1]]
        edge_ends = pos[ptr[node]:ptr[node + 1]]

        ptr, ids, pos = self.node_faces_csr
        face_ids = ids[ptr[node]:ptr[node + 1]]
        face_corners = pos[ptr[node]:ptr[node + 1]]

        return DualCellGeometry(
            node=node,
            is_boundary=bool(self.node_on_boundary[node]),
            volume=float(np.sum(sub_volumes)),
            cell_ids=cell_ids,
            cell_slots=cell_slots,
            sub_volumes=sub_volumes,
            edge_ids=edge_ids,
            edge_ends=edge_ends,
            half_edges=0.5 * vec.edge_vec[edge_ids],
            dual_faces=self.ftilde_edge[edge_ids].copy(),
            edge_stubs=self.edge_stub[edge_ids, edge_ends],
            face_ids=face_ids,
            face_corners=face_corners,
            third_faces=vec.face_vec[face_ids] / 3.0,
            dual_edges=self.etilde_face[face_ids].copy(),
            face_stubs=self.face_stub[face_ids, face_corners],
        )


# -- spec-level operations (thin wrappers over DualGeometry) --


def cell_dual_vectors(mesh: TetMesh, vectors: GeometricVectors,
                      cell_index: int) -> CellDualVectors:
    """Restricted dual edge/face vectors of one cell."""
    return DualGeometry(mesh, vectors).cell_dual(cell_index)


def boundary_stubs(mesh: TetMesh,
                   vectors: GeometricVectors) -> BoundaryStubs:
    """Assembled boundary stub vectors s (per edge end) and l (per face
    corner); exactly zero on interior entities."""
    dg = DualGeometry(mesh, vectors)
    return BoundaryStubs(edge_stub=dg.edge_stub, face_stub=dg.face_stub)


def dual_cell_geometry(mesh: TetMesh, vectors: GeometricVectors,
                       stubs: BoundaryStubs, node: int) -> DualCellGeometry:
    """Full dual-cell data of one node (stubs argument kept for the
    documented call shape; the assembled values are identical)."""
    del stubs
    return DualGeometry(mesh, vectors).dual_cell(node)


def fundamental_identity_check(mesh: TetMesh, vectors: GeometricVectors,
                               cell_index: int, node: int) -> np.ndarray:
    """Residual of the node/cell tensor identity.

    Returns ``sum_i r_i (f_i ⊗ e_i) - 3|c| I`` for the three edge/face
    pairs of ``node`` in the cell; exact geometry makes this zero.
    """
    slot = int(np.flatnonzero(mesh.cells[cell_index] == node)[0])
    dg = DualGeometry(mesh, vectors)
    r = dg.r_sign[cell_index, slot]                       # (3,)
    f = vectors.face_vec[
        mesh.cell_faces[cell_index, NODE_PAIR_SLOTS[slot]]]
    e = vectors.edge_vec[
        mesh.cell_edges[cell_index, NODE_EDGE_SLOTS[slot]]]
    acc = np.einsum("t,ti,tj->ij", r, f, e)
    return acc - 3.0 * vectors.cell_vol[cell_index] * np.eye(3)


# -- whole-mesh identity verification --

IDENTITY_NAMES = (
    "face_reconstruction",        # sum_f dual_edge ⊗ f = |c| I
    "edge_reconstruction",        # sum_e dual_face ⊗ e = |c| I
    "node_tensor",                # sum_i r f ⊗ e = 3|c| I
    "edge_stub_closure",          # r f / 6 = dual_face + s
    "face_stub_closure",          # r e / 4 = dual_edge + l
    "dual_cell_edges_interior",   # sum (e/2) ⊗ dual_face = |dc| I
    "dual_cell_faces_interior",   # sum (f/3) ⊗ dual_edge = |dc| I
    "dual_cell_edges_boundary",   # with edge stubs added
    "dual_cell_faces_boundary",   # with face stubs added
)


def _worst(residual: np.ndarray, scale: np.ndarray, axes) -> tuple[float, int]:
    rel = np.sqrt(np.sum(residual**2, axis=axes)) / scale
    loc = int(np.argmax(rel))
    return float(rel[loc]), loc


def identity_report(mesh: TetMesh,
                    dg: DualGeometry | None = None) -> dict[str, tuple[float, int]]:
    """Worst relative residual and its location for every identity family.

    Per-cell families report the offending cell index, dual-cell families
    the node index.  Residuals are measured in Frobenius norm relative to
    the identity's natural scale (cell or dual-cell volume; stub-closure
    rows relative to the paired geometric vector).
    """
    if dg is None:
        dg = DualGeometry(mesh)
    vec = dg.vectors
    eye = np.eye(3)
    out: dict[str, tuple[float, int]] = {}

    fvec = vec.face_vec[mesh.cell_faces]   # (C, 4, 3)
    evec = vec.edge_vec[mesh.cell_edges]   # (C, 6, 3)
    vol = vec.cell_vol

    acc = np.einsum("cki,ckj->cij", dg.etilde_local, fvec)
    out["face_reconstruction"] = _worst(
        acc - vol[:, None, None] * eye, vol, (1, 2))

    acc = np.einsum("cki,ckj->cij", dg.ftilde_local, evec)
    out["edge_reconstruction"] = _worst(
        acc - vol[:, None, None] * eye, vol, (1, 2))

    f_pair = fvec[:, NODE_PAIR_SLOTS, :]     # (C, 4, 3, 3)
    e_pair = evec[:, NODE_EDGE_SLOTS, :]     # (C, 4, 3, 3)
    acc = np.einsum("cnt,cnti,cntj->cnij", dg.r_sign, f_pair, e_pair)
    res = acc - 3.0 * vol[:, None, None, None] * eye
    rel = np.sqrt(np.sum(res**2, axis=(2, 3))).max(axis=1) / (3 * vol)
    loc = int(np.argmax(rel))
    out["node_tensor"] = (float(rel[loc]), loc)

    # Stub closures, evaluated for every (cell, node, pair).
    s_loc = dg.edge_stub_local()             # (C, 6, 2, 3)
    ends = dg.cell_node_end[:, NODE_EDGE_SLOTS]              # (C, 4, 3)
    # cell_node_end holds the position of the lower slot's node; the
    # other end belongs to the opposite slot of each pair.
    low_is_node = NODE_EDGE_SLOTS_IS_LOW[None, :, :]
    node_end = np.where(low_is_node, ends, 1 - ends)
    ft = dg.ftilde_local[:, NODE_EDGE_SLOTS, :]
    idx_c = np.arange(mesh.num_cells)[:, None, None]
    s_sel = s_loc[idx_c, NODE_EDGE_SLOTS[None], node_end]
    lhs = dg.r_sign[..., None] * f_pair / 6.0
    res = lhs - (ft + s_sel)
    scale = np.linalg.norm(f_pair / 6.0, axis=3)
    rel = (np.linalg.norm(res, axis=3) / scale).reshape(mesh.num_cells, -1)
    flat = rel.max(axis=1)
    loc = int(np.argmax(flat))
    out["edge_stub_closure"] = (float(flat[loc]), loc)

    l_loc = dg.face_stub_local()             # (C, 4, 3, 3)
    # Corner of the node inside the paired face's ascending triple.
    node_ids = mesh.cells[:, :, None] * np.ones(3, dtype=np.int64)
    pair_faces = mesh.cell_faces[:, NODE_PAIR_SLOTS]         # (C, 4, 3)
    corners = np.argmax(
        mesh.faces[pair_faces] == node_ids[..., None], axis=3)
    et = dg.etilde_local[:, NODE_PAIR_SLOTS, :]
    l_sel = l_loc[idx_c, NODE_PAIR_SLOTS[None], corners]
    lhs = dg.r_sign[..., None] * e_pair / 4.0
    res = lhs - (et + l_sel)
    scale = np.linalg.norm(e_pair / 4.0, axis=3)
    rel = (np.linalg.norm(res, axis=3) / scale).reshape(mesh.num_cells, -1)
    flat = rel.max(axis=1)
    loc = int(np.argmax(flat))
    out["face_stub_closure"] = (float(flat[loc]), loc)

    # Dual-cell reconstructions via segmented sums over node incidence.
    dvol = np.zeros(mesh.num_nodes)
    np.add.at(dvol, mesh.cells, vec.cell_vol[:, None] / 4.0)

    half = 0.5 * vec.edge_vec
    acc = np.zeros((mesh.num_nodes, 3, 3))
    acc_b = np.zeros((mesh.num_nodes, 3, 3))
    for k in range(2):
        n = mesh.edges[:, k]
        outer = np.einsum("ei,ej->eij", half, dg.ftilde_edge)
        outer_b = np.einsum("ei,ej->eij", half,
                            dg.ftilde_edge + dg.edge_stub[:, k])
        np.add.at(acc, n, outer)
        np.add.at(acc_b, n, outer_b)
    res = acc - dvol[:, None, None] * eye
    res_b = acc_b - dvol[:, None, None] * eye
    interior = ~dg.node_on_boundary
    out["dual_cell_edges_interior"] = _masked_worst(res, dvol, interior)
    out["dual_cell_edges_boundary"] = _masked_worst(
        res_b, dvol, np.ones(mesh.num_nodes, dtype=bool))

    third = vec.face_vec / 3.0
    acc = np.zeros((mesh.num_nodes, 3, 3))
    acc_b = np.zeros((mesh.num_nodes, 3, 3))
    for k in range(3):
        n = mesh.faces[:, k]
        outer = np.einsum("fi,fj->fij", third, dg.etilde_face)
        outer_b = np.einsum("fi,fj->fij", third,
                            dg.etilde_face + dg.face_stub[:, k])
        np.add.at(acc, n, outer)
        np.add.at(acc_b, n, outer_b)
    res = acc - dvol[:, None, None] * eye
    res_b = acc_b - dvol[:, None, None] * eye
    out["dual_cell_faces_interior"] = _masked_worst(res, dvol, interior)
    out["dual_cell_faces_boundary"] = _masked_worst(
        res_b, dvol, np.ones(mesh.num_nodes, dtype=bool))

    return out


def _masked_worst(res: np.ndarray, scale: np.ndarray,
                  mask: np.ndarray) -> tuple[float, int]:
    rel = np.sqrt(np.sum(res**2, axis=(1, 2))) / scale
    rel = np.where(mask, rel, 0.0)
    loc = int(np.argmax(rel))
    return float(rel[loc]), loc
