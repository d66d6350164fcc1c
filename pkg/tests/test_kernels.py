"""Parity between the pure-python and compiled kernel backends."""

import numpy as np
import pytest

import dualhodge._kernels as kernels
from dualhodge._kernels import pyk

try:
    cyk = kernels.get_backend("cython")
except ImportError:
    cyk = None

needs_cython = pytest.mark.skipif(cyk is None,
                                  reason="compiled backend unavailable")


def coo_case(seed, n=60, nnz=700):
    rng = np.random.default_rng(seed)
    return (rng.integers(0, n, nnz), rng.integers(0, n, nnz),
            rng.normal(size=nnz))


@needs_cython
def test_coo_to_csr_parity():
    r, c, v = coo_case(0)
    a = pyk.coo_to_csr(60, 60, r, c, v)
    b = cyk.coo_to_csr(60, 60, r, c, v)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])
    assert np.abs(a[2] - b[2]).max() < 1e-14


@needs_cython
def test_coo_bounds_checked():
    for mod in (pyk, cyk):
        with pytest.raises(IndexError):
            mod.coo_to_csr(4, 4, np.array([5]), np.array([0]),
                           np.array([1.0]))


@needs_cython
def test_matvec_parity():
    r, c, v = coo_case(1)
    a = pyk.coo_to_csr(60, 60, r, c, v)
    x = np.random.default_rng(2).normal(size=60)
    y1 = pyk.csr_matvec(*a, x)
    y2 = cyk.csr_matvec(*a, x)
    assert np.abs(y1 - y2).max() < 1e-13


def test_matvec_empty_rows():
    # rows 0 and 2 empty
    indptr = np.array([0, 0, 2, 2, 3])
    indices = np.array([1, 3, 0])
    data = np.array([2.0, 1.0, -1.0])
    x = np.array([1.0, 10.0, 100.0, 1000.0])
    want = np.array([0.0, 1020.0, 0.0, -1.0])
    assert np.array_equal(pyk.csr_matvec(indptr, indices, data, x), want)
    if cyk is not None:
        assert np.array_equal(cyk.csr_matvec(indptr, indices, data, x), want)


@needs_cython
def test_matmat_parity():
    rng = np.random.default_rng(3)
    a = pyk.coo_to_csr(40, 50, rng.integers(0, 40, 500),
                       rng.integers(0, 50, 500), rng.normal(size=500))
    b = pyk.coo_to_csr(50, 30, rng.integers(0, 50, 400),
                       rng.integers(0, 30, 400), rng.normal(size=400))
    m1 = pyk.csr_matmat(40, *a, 30, *b)
    m2 = cyk.csr_matmat(40, *a, 30, *b)
    assert np.array_equal(m1[0], m2[0])
    assert np.array_equal(m1[1], m2[1])
    assert np.abs(m1[2] - m2[2]).max() < 1e-13


@needs_cython
def test_dual_cell_blocks_parity():
    from dualhodge.dualgeom import DualGeometry
    from dualhodge.generators import (BenchmarkSpec, conductivity_from_tags,
                                      generate_mesh)
    from dualhodge.solver import SolverOptions, _DspContext, problem_from_tags

    mesh = generate_mesh(BenchmarkSpec("series_box", level=1,
                                       jitter=0.05, seed=3))
    sigma = conductivity_from_tags(mesh, (1.0, 4.0))
    problem = problem_from_tags(mesh, sigma)
    ctx = _DspContext(problem, SolverOptions(), DualGeometry(mesh))
    args = (ctx.f_ptr, ctx.f_rows, ctx.x_rows, ctx.f_active, ctx.f_es,
            ctx.kd, ctx.dvol, ctx.kernel_skip, ctx.c_ptr, ctx.dloc_col,
            ctx.dloc_sign, ctx.a_ptr, True, ctx.s_ptr)
    a1, r1, s1 = pyk.dual_cell_blocks(*args)
    a2, r2, s2 = cyk.dual_cell_blocks(*args)
    scale = np.abs(a1).max()
    assert np.abs(a1 - a2).max() < 1e-13 * scale
    assert np.abs(r1 - r2).max() < 1e-13 * max(np.abs(r1).max(), 1e-30)
    assert np.abs(s1 - s2).max() < 1e-13 * scale


def test_backend_selection_env(monkeypatch):
    assert kernels.backend_name() in ("python", "cython")
    assert kernels.get_backend("python") is pyk
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
