"""Built-in benchmark mesh generators.

All generators produce conforming tetrahedral meshes by splitting a
structured hexahedral lattice into 6 tets per hex around the main
diagonal (Kuhn subdivision).  Every hex uses the same diagonal rule, so
neighbouring hexes share identical triangulated faces.

Boundary faces are tagged with :data:`TAG_ELECTRODE0`,
:data:`TAG_ELECTRODE1` or :data:`TAG_INSULATED`; cell material regions
with integer tags starting at 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TetMesh, mesh_from_arrays

__all__ = [
    "TAG_INSULATED",
    "TAG_ELECTRODE0",
    "TAG_ELECTRODE1",
    "BenchmarkSpec",
    "generate_mesh",
    "kuhn_box_mesh",
    "jitter_interior",
    "random_tets",
    "SQUARE_RESISTOR_CONDUCTANCE",
    "SQUARE_RESISTOR_SYMMETRY_FACTOR",
]

TAG_INSULATED = 0
TAG_ELECTRODE0 = 1
TAG_ELECTRODE1 = 2

GEOMETRIES = ("unit_box", "series_box", "parallel_box",
              "square_resistor_eighth")

# Analytic conductance of the full square resistor (sigma = 1 S/m) and
# the factor relating it to the one-eighth symmetry wedge.
SQUARE_RESISTOR_CONDUCTANCE = 10.23409256
SQUARE_RESISTOR_SYMMETRY_FACTOR = 8.0

# The 6 Kuhn tets of the unit hex: vertex chains from corner (0,0,0) to
# (1,1,1), one per permutation of the axis steps.
_KUHN_PATHS = np.array([
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, 1]],
    [[0, 0, 0], [1, 0, 0], [1, 0, 1], [1, 1, 1]],
    [[0, 0, 0], [0, 1, 0], [1, 1, 0], [1, 1, 1]],
    [[0, 0, 0], [0, 1, 0], [0, 1, 1], [1, 1, 1]],
    [[0, 0, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1]],
    [[0, 0, 0], [0, 0, 1], [0, 1, 1], [1, 1, 1]],
], dtype=np.int64)


@dataclass(frozen=True)
class BenchmarkSpec:
    """Description of a generated benchmark mesh.

    ``level`` is the subdivision count (hexes per unit length along the
    driving axis).  ``jitter`` displaces interior nodes by the given
    fraction of the local spacing (seeded, boundary nodes untouched).
    """

    geometry: str
    level: int = 1
    voltage: float = 1.0
    materials: tuple[float, ...] = (1.0,)
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.level < 1:
            raise ValueError("level must be >= 1")
        if not 0.0 <= self.jitter < 0.3:
            raise ValueError("jitter fraction must be in [0, 0.3)")


def _lattice_cells(nx: int, ny: int, nz: int) -> np.ndarray:
    """Kuhn-split connectivity over an (nx, ny, nz) hex lattice."""
    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                          indexing="ij")
    base = np.stack([i, j, k], axis=-1).reshape(-1, 1, 1, 3)
    corners = base + _KUHN_PATHS[None]          # (H, 6, 4, 3)
    cells = nid(corners[..., 0], corners[..., 1], corners[..., 2])
    return cells.reshape(-1, 4)


def _lattice_nodes(nx: int, ny: int, nz: int) -> np.ndarray:
    gx = np.arange(nx + 1) / nx
    gy = np.arange(ny + 1) / ny
    gz = np.arange(nz + 1) / nz
    x, y, z = np.meshgrid(gx, gy, gz, indexing="ij")
    return np.stack([x, y, z], axis=-1).reshape(-1, 3)


def kuhn_box_mesh(nx: int, ny: int = 0, nz: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and cells of a Kuhn-subdivided unit box, ``n*`` hexes per axis."""
    ny = ny or nx
    nz = nz or nx
    return _lattice_nodes(nx, ny, nz), _lattice_cells(nx, ny, nz)


def jitter_interior(nodes: np.ndarray, amplitude: float,
                    seed: int) -> np.ndarray:
    """Displace nodes that lie strictly inside the unit box.

    Displacements are uniform in ``[-a, a]`` per axis with ``a`` the
    amplitude times the smallest node spacing, small enough that Kuhn
    cells cannot invert.
    """
    nodes = nodes.copy()
    lo = np.isclose(nodes, 0.0).any(axis=1)
    hi = np.isclose(nodes, 1.0).any(axis=1)
    interior = ~(lo | hi)
    if interior.any():
        coords = [np.unique(nodes[:, k]) for k in range(3)]
        h = min(np.diff(c).min() for c in coords if c.size > 1)
        rng = np.random.default_rng(seed)
        shift = rng.uniform(-1.0, 1.0, size=(int(interior.sum()), 3))
        nodes[interior] += amplitude * h * shift
    return nodes


def _tag_boundary(nodes, cells, electrode_axis=0, lo=0.0, hi=1.0,
                  tol=1e-12):
    """Tag triples: boundary faces on the electrode planes, rest insulated.

    Returns (triples, tags) covering *all* boundary faces, derived by a
    throwaway topology pass.
    """
    probe = mesh_from_arrays(nodes, cells)
    bnd = probe.boundary_faces
    tri = probe.faces[bnd]
    x = nodes[tri][:, :, electrode_axis]
    tags = np.full(bnd.size, TAG_INSULATED, dtype=np.int64)
    tags[np.all(np.abs(x - lo) <= tol, axis=1)] = TAG_ELECTRODE0
    tags[np.all(np.abs(x - hi) <= tol, axis=1)] = TAG_ELECTRODE1
    return tri, tags


def _box_spec_mesh(spec: BenchmarkSpec, material_axis: int | None) -> TetMesh:
    # An even hex count guarantees the material interface plane at 0.5
    # is a union of mesh faces.
    n = 2 * spec.level if material_axis is not None else spec.level
    nodes, cells = kuhn_box_mesh(n)
    if spec.jitter:
        nodes = jitter_interior(nodes, spec.jitter, spec.seed)

    if material_axis is None:
        mats = np.ones(cells.shape[0], dtype=np.int64)
    else:
        bary = nodes[cells].mean(axis=1)[:, material_axis]
        mats = np.where(bary < 0.5, 1, 2).astype(np.int64)

    tri, tags = _tag_boundary(nodes, cells)
    return mesh_from_arrays(nodes, cells, mats, tri, tags)


def _square_resistor_mesh(spec: BenchmarkSpec) -> TetMesh:
    """One-eighth wedge of the square resistor.

    The full resistor is a square annulus (outer side 4 m, inner side
    2 m, height 1 m) with electrodes on the inner and outer lateral
    walls.  The wedge is the sector 0 <= y <= x of it: radial coordinate
    x in [1, 2], y in [0, x], z in [0, 1].  Both symmetry planes (y = 0
    and y = x) and the z faces carry no normal current, so they are
    insulated; the conductance of the full resistor is 8x the wedge's.
    """
    nr = 4 * 2 ** (spec.level - 1)
    na = 2 * nr
    nz = max(1, nr // 4)
    nodes, cells = kuhn_box_mesh(nr, na, nz)

    # Shear map of the unit box onto the wedge: x = 1 + xi, y = eta * x.
    xi, eta, z = nodes[:, 0], nodes[:, 1], nodes[:, 2]
    x = 1.0 + xi
    phys = np.column_stack([x, eta * x, z])

    probe = mesh_from_arrays(phys, cells)
    bnd = probe.boundary_faces
    tri = probe.faces[bnd]
    fx = phys[tri][:, :, 0]
    tags = np.full(bnd.size, TAG_INSULATED, dtype=np.int64)
    tags[np.all(np.abs(fx - 1.0) <= 1e-12, axis=1)] = TAG_ELECTRODE0
    tags[np.all(np.abs(fx - 2.0) <= 1e-12, axis=1)] = TAG_ELECTRODE1

    mats = np.ones(cells.shape[0], dtype=np.int64)
    return mesh_from_arrays(phys, cells, mats, tri, tags)


def generate_mesh(spec: BenchmarkSpec) -> TetMesh:
    """Generate the tagged benchmark mesh described by ``spec``."""
    if spec.geometry == "unit_box":
        return _box_spec_mesh(spec, material_axis=None)
    if spec.geometry == "series_box":
        return _box_spec_mesh(spec, material_axis=0)
    if spec.geometry == "parallel_box":
        return _box_spec_mesh(spec, material_axis=1)
    return _square_resistor_mesh(spec)


def conductivity_from_tags(mesh: TetMesh,
                           materials: tuple[float, ...]) -> np.ndarray:
    """Per-cell isotropic conductivity tensors from material tags.

    Tag ``t`` selects ``materials[t - 1]``; untagged (0) cells use the
    first entry.
    """
    sigma = np.asarray(materials, dtype=np.float64)
    idx = np.clip(mesh.cell_tags - 1, 0, sigma.size - 1)
    return sigma[idx][:, None, None] * np.eye(3)


def random_tets(count: int, seed: int, min_quality: float = 1e-2) -> np.ndarray:
    """Sample well-shaped random tetrahedra as a (count, 4, 3) array.

    Vertices are uniform in the unit cube; a candidate is kept when its
    volume exceeds ``min_quality`` times the cube of its longest edge,
    which rejects slivers without biasing orientation (both chiralities
    occur).
    """
    rng = np.random.default_rng(seed)
    out = np.empty((count, 4, 3))
    have = 0
    while have < count:
        cand = rng.random((2 * (count - have) + 8, 4, 3))
        e = cand[:, 1:] - cand[:, :1]
        vol = np.abs(np.linalg.det(e)) / 6.0
        pair = cand[:, :, None, :] - cand[:, None, :, :]
        longest = np.sqrt((pair**2).sum(-1)).max(axis=(1, 2))
        good = cand[vol > min_quality * longest**3]
        take = min(count - have, good.shape[0])
        out[have:have + take] = good[:take]
        have += take
    return out
