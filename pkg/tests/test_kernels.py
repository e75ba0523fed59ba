import numpy as np
import pytest

from tmfun import kernels
from tmfun.datamodel import SparseAdjacency

from oracles import dense_propagate


def _random_csr(rng, n_rows, n_cols, density=0.2):
    dense = rng.random((n_rows, n_cols)) * (rng.random((n_rows, n_cols)) < density)
    return SparseAdjacency.from_scipy(__import__("scipy.sparse").sparse.csr_matrix(dense)), dense.astype(np.float32)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_spmm_matches_dense(backend, dtype):
    rng = np.random.default_rng(0)
    g, dense = _random_csr(rng, 40, 30)
    x = rng.normal(size=(30, 7)).astype(dtype)
    out = backend.spmm(g.row_offsets, g.col_indices, g.weights, x)
    assert out.dtype == dtype
    np.testing.assert_allclose(out, dense.astype(np.float64) @ x.astype(np.float64), rtol=1e-5, atol=1e-6)


def test_spmm_empty_rows(backend):
    g = SparseAdjacency(3, 3, [0, 0, 1, 1], [2], [2.0])
    out = backend.spmm(g.row_offsets, g.col_indices, g.weights, np.ones((3, 2)))
    np.testing.assert_array_equal(out, [[0, 0], [2, 2], [0, 0]])


def test_topn_select_matches_sort(backend):
    rng = np.random.default_rng(1)
    sims = np.round(rng.normal(size=(25, 25)), 1)  # coarse values force ties
    self_index = np.arange(25, dtype=np.int64)
    for t in (1, 3, 24, 50):
        got = backend.topn_select(sims, self_index, t)
        for r in range(25):
            expected = sorted((j for j in range(25) if j != r), key=lambda j: (-sims[r, j], j))[: min(t, 24)]
            assert got[r].tolist() == expected


def test_scatter_add_rows(backend):
    rng = np.random.default_rng(2)
    out = np.zeros((5, 3))
    idx = np.array([0, 4, 0, 2], dtype=np.int64)
    vals = rng.normal(size=(4, 3))
    backend.scatter_add_rows(out, idx, vals)
    expected = np.zeros((5, 3))
    for i, v in zip(idx, vals):
        expected[i] += v
    np.testing.assert_array_equal(out, expected)


def test_backends_agree_bitwise():
    compiled = pytest.importorskip("tmfun._kernels")
    from tmfun import _fallback

    rng = np.random.default_rng(4)
    g, _ = _random_csr(rng, 60, 60)
    x = rng.normal(size=(60, 16)).astype(np.float32)
    a = compiled.spmm(g.row_offsets, g.col_indices, g.weights, x)
    b = _fallback.spmm(g.row_offsets, g.col_indices, g.weights, x)
    np.testing.assert_allclose(a, b, rtol=1e-6, atol=1e-7)
    sims = rng.normal(size=(10, 60))
    idx = np.arange(10, dtype=np.int64)
    np.testing.assert_array_equal(compiled.topn_select(sims, idx, 7), _fallback.topn_select(sims, idx, 7))


def test_selector_accepts_strided_inputs():
    rng = np.random.default_rng(5)
    g, dense = _random_csr(rng, 10, 10)
    x = rng.normal(size=(10, 8))[:, ::2]
    np.testing.assert_allclose(kernels.spmm(g.row_offsets, g.col_indices, g.weights, x), dense_propagate(dense, x, 1) * 2 - x, rtol=1e-5, atol=1e-6)
    out = np.zeros((4, 2))
    kernels.scatter_add_rows(out, np.array([[1, 3], [2, 0]])[:, 0], np.ones((2, 4))[:, ::2])
    assert out[1].tolist() == [1, 1] and out[2].tolist() == [1, 1]
    with pytest.raises(TypeError):
        kernels.scatter_add_rows(np.zeros((4, 2), dtype=np.float32), [0], np.ones((1, 2)))


def test_environment_selects_fallback():
    import os
    import subprocess
    import sys

    env = dict(os.environ, TMFUN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from tmfun import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
