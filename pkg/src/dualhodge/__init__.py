"""Sparse inverse mass matrices on barycentric dual grids of tet meshes."""

from .mesh import (
    TetMesh,
    IncidenceMatrices,
    GeometricVectors,
    load_mesh,
    write_mesh,
    mesh_from_arrays,
    build_incidence,
    geometric_vectors,
)
from .dualgeom import (
    DualGeometry,
    cell_dual_vectors,
    boundary_stubs,
    dual_cell_geometry,
    fundamental_identity_check,
    identity_report,
)

__version__ = "0.1.0"
