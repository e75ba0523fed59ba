import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from tmfun.datamodel import Dataset, Hyperparams, SparseAdjacency
from tmfun.errors import InvalidInput
from tmfun.graph import build_bundle, build_interaction_graph, normalize_sym
from tmfun.propagation import forward_all, project_features, propagate_bipartite, propagate_item_graph
from tmfun.trainer import init_params

from conftest import toy_dataset
from oracles import dense_propagate, naive_matmul


def _random_graph(rng, n, density=0.2):
    a = rng.random((n, n)) * (rng.random((n, n)) < density)
    return normalize_sym(SparseAdjacency.from_scipy(sp.csr_matrix(a)))


def test_project_examples():
    rng = np.random.default_rng(0)
    raw = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(project_features(raw, np.eye(4)), raw)
    assert not project_features(raw, np.zeros((4, 2))).any()
    proj = rng.normal(size=(4, 2))
    np.testing.assert_allclose(project_features(raw, proj), naive_matmul(raw, proj), atol=1e-6)
    with pytest.raises(InvalidInput):
        project_features(raw, np.zeros((3, 2)))


def test_bipartite_single_pair():
    g = build_interaction_graph(Dataset(1, 1, [(0, 0)], [], []))
    xu, xi = np.array([[1.0, 2.0]]), np.array([[3.0, -1.0]])
    u0, i0 = propagate_bipartite(g, xu, xi, 0)
    np.testing.assert_array_equal(u0, xu)
    np.testing.assert_array_equal(i0, xi)
    u1, _ = propagate_bipartite(g, xu, xi, 1)
    np.testing.assert_allclose(u1, (xu + xi) / 2)


@pytest.mark.parametrize("n_layers", [0, 1, 2, 3])
def test_bipartite_dense_oracle(n_layers):
    ds = toy_dataset(seed=n_layers, n_users=20, n_items=30, per_user=4)
    g = build_interaction_graph(ds)
    rng = np.random.default_rng(n_layers)
    xu, xi = rng.normal(size=(20, 6)), rng.normal(size=(30, 6))
    u, i = propagate_bipartite(g, xu, xi, n_layers)
    expected = dense_propagate(g.to_dense(), np.vstack([xu, xi]), n_layers)
    np.testing.assert_allclose(np.vstack([u, i]), expected, rtol=1e-5, atol=1e-9)


def test_item_graph_examples():
    x = np.arange(6, dtype=np.float64).reshape(3, 2)
    empty = SparseAdjacency.empty(3, 3)
    np.testing.assert_array_equal(propagate_item_graph(empty, x, 0), x)
    # only layer 0 is non-zero, and the mean runs over all layers
    np.testing.assert_array_equal(propagate_item_graph(empty, x, 3), x / 4)
    g = SparseAdjacency(2, 2, [0, 1, 2], [1, 0], [1.0, 1.0])
    x = np.array([[1.0, 0.0], [0.0, 3.0]])
    np.testing.assert_allclose(propagate_item_graph(g, x, 1), [[0.5, 1.5], [0.5, 1.5]])


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 100), layers=st.integers(0, 3), d=st.integers(1, 8), seed=st.integers(0, 10**6),
       dtype=st.sampled_from([np.float32, np.float64]))
def test_item_graph_dense_oracle(n, layers, d, seed, dtype):
    rng = np.random.default_rng(seed)
    g = _random_graph(rng, n)
    x = rng.normal(size=(n, d)).astype(dtype)
    out = propagate_item_graph(g, x, layers)
    assert out.dtype == dtype
    expected = dense_propagate(g.to_dense(), x, layers)
    np.testing.assert_allclose(out, expected, rtol=1e-5, atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), layers=st.integers(0, 3))
def test_propagation_is_linear(seed, layers):
    rng = np.random.default_rng(seed)
    g = _random_graph(rng, 20)
    x = rng.normal(size=(20, 4))
    np.testing.assert_allclose(propagate_item_graph(g, 2 * x, layers), 2 * propagate_item_graph(g, x, layers),
                               rtol=1e-12)


def _toy_model(**changes):
    ds = toy_dataset()
    rng = np.random.default_rng(1)
    fv, ft = rng.normal(size=(8, 6)), rng.normal(size=(8, 5))
    hp = Hyperparams(d=4, top_n=3, **changes)
    bundle = build_bundle(ds, fv, ft, hp.top_n, hp.lambda_)
    params = init_params(5, 8, 6, 5, 4, rng, np.float64)
    return params, bundle, fv, ft, hp


def test_forward_all_shapes():
    params, bundle, fv, ft, hp = _toy_model()
    emb = forward_all(params, bundle, fv, ft, hp)
    assert emb.xu_tilde.shape == (5, 4)
    for x in (emb.xi_tilde, emb.xv_tilde, emb.xt_tilde, emb.xm_tilde):
        assert x.shape == (8, 4) and np.isfinite(x).all()


def test_forward_all_mf_bypass():
    params, bundle, fv, ft, hp = _toy_model(cf_model="mf")
    emb = forward_all(params, bundle, fv, ft, hp)
    np.testing.assert_array_equal(emb.xu_tilde, params.user_emb)
    np.testing.assert_array_equal(emb.xi_tilde, params.item_emb)


def test_forward_all_no_item_layers():
    params, bundle, fv, ft, hp = _toy_model(n_layers_item=0)
    emb = forward_all(params, bundle, fv, ft, hp)
    np.testing.assert_allclose(emb.xv_tilde, fv @ params.proj_v, rtol=1e-12)
    np.testing.assert_allclose(emb.xm_tilde, (fv @ params.proj_v + ft @ params.proj_t) / 2, rtol=1e-12)
