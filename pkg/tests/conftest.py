import numpy as np
import pytest

from dualhodge.generators import (
    BenchmarkSpec,
    generate_mesh,
    jitter_interior,
    kuhn_box_mesh,
)
from dualhodge.mesh import mesh_from_arrays

REFERENCE_TET_NODES = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


@pytest.fixture
def reference_tet():
    return mesh_from_arrays(REFERENCE_TET_NODES, np.array([[0, 1, 2, 3]]))


@pytest.fixture
def double_tet():
    nodes = np.vstack([REFERENCE_TET_NODES, [[1.0, 1.0, 1.0]]])
    return mesh_from_arrays(nodes, np.array([[0, 1, 2, 3], [1, 2, 3, 4]]))


@pytest.fixture
def jittered_box():
    nodes, cells = kuhn_box_mesh(4)
    nodes = jitter_interior(nodes, 0.1, seed=11)
    return mesh_from_arrays(nodes, cells)


@pytest.fixture
def box_mesh_2():
    nodes, cells = kuhn_box_mesh(2)
    return mesh_from_arrays(nodes, cells)


@pytest.fixture
def series_mesh():
    return generate_mesh(BenchmarkSpec("series_box", level=2))


def random_spd(rng, scale=1.0):
    """Random well-conditioned SPD 3x3 tensor."""
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    eig = scale * rng.uniform(0.2, 5.0, size=3)
    return q @ np.diag(eig) @ q.T
