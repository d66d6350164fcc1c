"""Local mass matrices and their sparse inverses.

Every operator here is the sum of a rank-3 *consistent* term, built
purely from geometric row matrices,

    cons = R K R^T / volume,

and a positive semidefinite *stabilization* term supported on the
orthogonal complement of the degree-of-freedom row matrix ``X``,

    stab = W diag(alpha) W^T,     span(W) = im(X)^perp,

which makes the sum positive definite without touching its action on
the DoFs of constant fields.  The four flavours differ only in which
rows play R and X:

====================  =======================  =========================
operator               consistent rows R        stabilized-complement X
====================  =======================  =========================
face mass (4x4)        restricted dual edges    face vectors
edge mass (6x6)        restricted dual faces    edge vectors
inverse face mass      half primal edges        dual faces + edge stubs
inverse edge mass      third primal faces       dual edges + face stubs
====================  =======================  =========================

The first two live on cells, the last two on dual cells; on dual cells
touching the domain boundary the stub rows complete the reconstruction
identity, which is exactly what makes the complement the right space to
stabilize.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import SparseMatrix, assemble
from .dualgeom import NODE_EDGE_SLOTS, NODE_PAIR_SLOTS, DualCellGeometry, DualGeometry
from .mesh import TetMesh

__all__ = [
    "StabilizationRule",
    "LocalMatrix",
    "orthonormal_complement",
    "local_mass_face",
    "local_mass_edge",
    "local_inverse_mass_ftilde",
    "local_inverse_mass_etilde",
    "weighted_average_material",
    "piecewise_local_inverse",
    "hybrid_material_strategy",
    "edge_mass_blocks",
    "face_mass_blocks",
    "global_edge_mass",
    "global_face_mass",
    "global_inverse_edge_mass",
    "global_inverse_face_mass",
    "MODE_EXPLICIT",
    "MODE_WEIGHTED",
    "MODE_PIECEWISE",
]

MODE_EXPLICIT = 0   # uniform material: explicit geometric construction
MODE_WEIGHTED = 1   # heterogeneous dual cell, weighted-average material
MODE_PIECEWISE = 2  # heterogeneous dual cell, piecewise-exact inverse


@dataclass(frozen=True)
class StabilizationRule:
    """Weights of the stabilization term.

    The default makes every weight ``scale * trace(cons)/m``, which keeps
    conditioning independent of mesh size and material magnitude.  Any
    positive weights are admissible; pass ``alphas`` to pin them
    explicitly (length m-3, checked at use).
    """

    scale: float = 1.0
    alphas: np.ndarray | None = None

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("stabilization scale must be positive")
        if self.alphas is not None and np.any(np.asarray(self.alphas) <= 0):
            raise ValueError("stabilization weights must be positive")


DEFAULT_STAB = StabilizationRule()


@dataclass(frozen=True)
class LocalMatrix:
    """Dense local operator plus the global entity ids of its rows."""

    matrix: np.ndarray
    index_map: np.ndarray
    kind: str

    @property
    def order(self) -> int:
        return self.matrix.shape[0]


def orthonormal_complement(x: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of im(x).

    Uses a complete QR factorization; for an (m, 3) row-geometry matrix
    of a nondegenerate entity this returns m-3 columns.
    """
    m, k = x.shape
    q, r = np.linalg.qr(x, mode="complete")
    rank = np.sum(np.abs(np.diag(r[:k, :k])) >
                  np.finfo(float).eps * m * np.abs(r[0, 0]))
    if rank < k:
        raise ValueError("degenerate geometry: DoF rows have rank < 3")
    return q[:, k:]


def _stab_term(x: np.ndarray, cons_trace: float,
               stab: StabilizationRule) -> np.ndarray:
    """W diag(alpha) W^T on im(x)^perp.

    With uniform weights this equals alpha (I - P) for the orthogonal
    projector P onto im(x), which needs no explicit basis.
    """
    m = x.shape[0]
    if stab.alphas is not None:
        alphas = np.asarray(stab.alphas, dtype=np.float64)
        if alphas.shape != (m - 3,):
            raise ValueError(f"expected {m - 3} stabilization weights")
        w = orthonormal_complement(x)
        return (w * alphas) @ w.T
    alpha = stab.scale * cons_trace / m
    xtx = x.T @ x
    if np.linalg.matrix_rank(xtx) < 3:
        raise ValueError("degenerate geometry: DoF rows have rank < 3")
    proj = x @ np.linalg.solve(xtx, x.T)
    return alpha * (np.eye(m) - proj)


def _consistent_plus_stab(rec: np.ndarray, dof: np.ndarray, k: np.ndarray,
                          volume: float, stab: StabilizationRule) -> np.ndarray:
    cons = rec @ np.asarray(k, dtype=np.float64) @ rec.T / volume
    mat = cons + _stab_term(dof, float(np.trace(cons)), stab)
    return 0.5 * (mat + mat.T)


def local_mass_face(dual: DualGeometry, cell: int, k: np.ndarray,
                    stab: StabilizationRule = DEFAULT_STAB) -> LocalMatrix:
    """4x4 mass matrix mapping face DoFs to dual-edge DoFs."""
    mesh, vec = dual.mesh, dual.vectors
    rec = dual.etilde_local[cell]
    dof = vec.face_vec[mesh.cell_faces[cell]]
    mat = _consistent_plus_stab(rec, dof, k, vec.cell_vol[cell], stab)
    return LocalMatrix(mat, mesh.cell_faces[cell].copy(), "face_mass")


def local_mass_edge(dual: DualGeometry, cell: int, k: np.ndarray,
                    stab: StabilizationRule = DEFAULT_STAB) -> LocalMatrix:
    """6x6 mass matrix mapping edge DoFs to dual-face DoFs."""
    mesh, vec = dual.mesh, dual.vectors
    rec = dual.ftilde_local[cell]
    dof = vec.edge_vec[mesh.cell_edges[cell]]
    mat = _consistent_plus_stab(rec, dof, k, vec.cell_vol[cell], stab)
    return LocalMatrix(mat, mesh.cell_edges[cell].copy(), "edge_mass")


def local_inverse_mass_ftilde(dc: DualCellGeometry, k_dual: np.ndarray,
                              stab: StabilizationRule = DEFAULT_STAB) -> LocalMatrix:
    """Inverse mass matrix on a dual cell: dual-face DoFs to edge DoFs.

    ``k_dual`` is the constitutive tensor of this map (a resistivity in
    the conduction application).  Stub rows enter only through the
    stabilization complement; on interior dual cells they are zero.
    """
    rec = dc.half_edges
    dof = dc.dual_faces + dc.edge_stubs
    mat = _consistent_plus_stab(rec, dof, k_dual, dc.volume, stab)
    return LocalMatrix(mat, dc.edge_ids.copy(), "inverse_face_mass")


def local_inverse_mass_etilde(dc: DualCellGeometry, k_dual: np.ndarray,
                              stab: StabilizationRule = DEFAULT_STAB) -> LocalMatrix:
    """Inverse mass matrix on a dual cell: dual-edge DoFs to face DoFs.

    ``k_dual`` maps dual-edge-type fields to face-type fields (a
    conductivity in the conduction application).
    """
    rec = dc.third_faces
    dof = dc.dual_edges + dc.face_stubs
    mat = _consistent_plus_stab(rec, dof, k_dual, dc.volume, stab)
    return LocalMatrix(mat, dc.face_ids.copy(), "inverse_edge_mass")


def weighted_average_material(k_cells: np.ndarray,
                              sub_volumes: np.ndarray) -> np.ndarray:
    """Dual-cell material: inverse of the volume-weighted mean tensor.

    ``k_cells`` holds one SPD 3x3 tensor per incident cell in the sense
    of the operator being inverted, so a uniform material K yields
    K^{-1}, the constitutive tensor of the inverse map.
    """
    k_cells = np.asarray(k_cells, dtype=np.float64)
    w = np.asarray(sub_volumes, dtype=np.float64)
    mean = np.einsum("c,cij->ij", w, k_cells) / w.sum()
    out = np.linalg.inv(mean)
    return 0.5 * (out + out.T)


def _spd_inverse(mat: np.ndarray) -> np.ndarray:
    """Cholesky-based inverse; raises LinAlgError when not SPD."""
    low = np.linalg.cholesky(0.5 * (mat + mat.T))
    linv = np.linalg.inv(low)
    out = linv.T @ linv
    return 0.5 * (out + out.T)


def piecewise_local_inverse(dual: DualGeometry, node: int,
                            k_cells: np.ndarray) -> tuple[LocalMatrix, LocalMatrix]:
    """Inverse mass matrices on a heterogeneous dual cell.

    Assembles, per incident cell, the rank-3 consistent blocks built
    from the stub-completed restricted rows (dual faces + edge stubs
    against ``K``; dual edges + face stubs against ``K^{-1}``), then
    inverts the two assembled SPD matrices.  The result is exact on
    piecewise-constant fields whose tangential/normal traces match
    across the intra-dual-cell interfaces, which is what makes the
    multi-material patch tests exact.

    ``k_cells`` holds the per-cell tensor of the edge-to-face map
    (conductivity); one entry per mesh cell.
    """
    mesh = dual.mesh
    dc = dual.dual_cell(node)
    m_e, m_f = dc.edge_ids.size, dc.face_ids.size
    edge_acc = np.zeros((m_e, m_e))
    face_acc = np.zeros((m_f, m_f))
    s_local = dual.edge_stub_local()
    l_local = dual.face_stub_local()

    for cell, slot, subvol in zip(dc.cell_ids, dc.cell_slots, dc.sub_volumes):
        ke = NODE_EDGE_SLOTS[slot]
        kf = NODE_PAIR_SLOTS[slot]
        geids = mesh.cell_edges[cell, ke]
        gfids = mesh.cell_faces[cell, kf]
        ends = (mesh.edges[geids, 0] != node).astype(np.int64)
        corners = np.argmax(mesh.faces[gfids] == node, axis=1)

        erows = dual.ftilde_local[cell, ke] + s_local[cell, ke, ends]
        frows = dual.etilde_local[cell, kf] + l_local[cell, kf, corners]

        k = np.asarray(k_cells[cell], dtype=np.float64)
        eloc = np.searchsorted(dc.edge_ids, geids)
        floc = np.searchsorted(dc.face_ids, gfids)
        edge_acc[np.ix_(eloc, eloc)] += erows @ k @ erows.T / subvol
        face_acc[np.ix_(floc, floc)] += (
            frows @ np.linalg.inv(k) @ frows.T / subvol)

    ftilde = LocalMatrix(_spd_inverse(edge_acc), dc.edge_ids.copy(),
                         "inverse_face_mass")
    etilde = LocalMatrix(_spd_inverse(face_acc), dc.face_ids.copy(),
                         "inverse_edge_mass")
    return ftilde, etilde


def material_fingerprint(k_cells: np.ndarray) -> np.ndarray:
    """Integer label per cell, equal labels iff bitwise-equal tensors."""
    flat = np.ascontiguousarray(k_cells).reshape(k_cells.shape[0], -1)
    _, inverse = np.unique(flat, axis=0, return_inverse=True)
    return inverse


def hybrid_material_strategy(mesh: TetMesh, k_cells: np.ndarray,
                             mode: str) -> np.ndarray:
    """Per-dual-cell builder selection for the hybrid material handling.

    Dual cells whose incident cells share one material tensor use the
    explicit construction; the others fall back to ``mode`` ("weighted"
    or "piecewise").  Returns one MODE_* code per node.
    """
    if mode not in ("weighted", "piecewise"):
        raise ValueError(f"unknown material mode {mode!r}")
    labels = material_fingerprint(k_cells)
    lo = np.full(mesh.num_nodes, np.iinfo(np.int64).max)
    hi = np.full(mesh.num_nodes, -1, dtype=np.int64)
    for k in range(4):
        np.minimum.at(lo, mesh.cells[:, k], labels)
        np.maximum.at(hi, mesh.cells[:, k], labels)
    codes = np.where(lo == hi, MODE_EXPLICIT,
                     MODE_WEIGHTED if mode == "weighted" else MODE_PIECEWISE)
    return codes.astype(np.uint8)


# -- assembled global operators --


def edge_mass_blocks(dual: DualGeometry, sigma: np.ndarray,
                     stab: StabilizationRule = DEFAULT_STAB) -> np.ndarray:
    """Batched per-cell 6x6 edge mass matrices."""
    mesh, vec = dual.mesh, dual.vectors
    ft = dual.ftilde_local
    cons = np.einsum("cik,ckl,cjl->cij", ft, sigma, ft)
    cons /= vec.cell_vol[:, None, None]
    x = vec.edge_vec[mesh.cell_edges]
    return _blocks_with_stab(cons, x, stab)


def face_mass_blocks(dual: DualGeometry, rho: np.ndarray,
                     stab: StabilizationRule = DEFAULT_STAB) -> np.ndarray:
    """Batched per-cell 4x4 face mass matrices (material in the
    face-to-dual-edge sense, a resistivity for conduction)."""
    mesh, vec = dual.mesh, dual.vectors
    et = dual.etilde_local
    cons = np.einsum("cik,ckl,cjl->cij", et, rho, et)
    cons /= vec.cell_vol[:, None, None]
    x = vec.face_vec[mesh.cell_faces]
    return _blocks_with_stab(cons, x, stab)


def _blocks_with_stab(cons: np.ndarray, x: np.ndarray,
                      stab: StabilizationRule) -> np.ndarray:
    m = cons.shape[1]
    xtx = np.einsum("cik,cil->ckl", x, x)
    proj = np.einsum("cik,ckl,cjl->cij", x, np.linalg.inv(xtx), x)
    alpha = stab.scale * np.trace(cons, axis1=1, axis2=2) / m
    mats = cons + alpha[:, None, None] * (np.eye(m) - proj)
    return 0.5 * (mats + np.swapaxes(mats, 1, 2))


def global_edge_mass(dual: DualGeometry, sigma: np.ndarray,
                     stab: StabilizationRule = DEFAULT_STAB) -> SparseMatrix:
    """Assembled edge mass matrix (edges x edges)."""
    mesh = dual.mesh
    blocks = edge_mass_blocks(dual, sigma, stab)
    return assemble(
        ((mesh.cell_edges[c], blocks[c]) for c in range(mesh.num_cells)),
        (mesh.num_edges, mesh.num_edges))


def global_face_mass(dual: DualGeometry, rho: np.ndarray,
                     stab: StabilizationRule = DEFAULT_STAB) -> SparseMatrix:
    """Assembled face mass matrix (faces x faces)."""
    mesh = dual.mesh
    blocks = face_mass_blocks(dual, rho, stab)
    return assemble(
        ((mesh.cell_faces[c], blocks[c]) for c in range(mesh.num_cells)),
        (mesh.num_faces, mesh.num_faces))


def _global_inverse(dual: DualGeometry, k_cells: np.ndarray, mode: str,
                    stab: StabilizationRule, which: str) -> SparseMatrix:
    mesh = dual.mesh
    k_cells = np.asarray(k_cells, dtype=np.float64)
    codes = hybrid_material_strategy(mesh, k_cells, mode)
    contribs = []
    for node in range(mesh.num_nodes):
        if codes[node] == MODE_PIECEWISE:
            ftilde, etilde = piecewise_local_inverse(dual, node, k_cells)
            local = etilde if which == "etilde" else ftilde
        else:
            dc = dual.dual_cell(node)
            # material of the operator being inverted, per incident cell
            if which == "etilde":
                kc = np.linalg.inv(k_cells[dc.cell_ids])
            else:
                kc = k_cells[dc.cell_ids]
            kd = weighted_average_material(kc, dc.sub_volumes)
            if which == "etilde":
                local = local_inverse_mass_etilde(dc, kd, stab)
            else:
                local = local_inverse_mass_ftilde(dc, kd, stab)
        contribs.append((local.index_map, local.matrix))
    n = mesh.num_faces if which == "etilde" else mesh.num_edges
    return assemble(contribs, (n, n))


def global_inverse_edge_mass(dual: DualGeometry, k_cells: np.ndarray,
                             mode: str = "piecewise",
                             stab: StabilizationRule = DEFAULT_STAB) -> SparseMatrix:
    """Assembled sparse inverse edge mass matrix (faces x faces).

    ``k_cells`` is the per-cell constitutive tensor in the edge-mass
    sense (conductivity); this operator maps dual-edge DoFs to face
    DoFs.
    """
    return _global_inverse(dual, k_cells, mode, stab, "etilde")


def global_inverse_face_mass(dual: DualGeometry, k_cells: np.ndarray,
                             mode: str = "piecewise",
                             stab: StabilizationRule = DEFAULT_STAB) -> SparseMatrix:
    """Assembled sparse inverse face mass matrix (edges x edges)."""
    return _global_inverse(dual, k_cells, mode, stab, "ftilde")
