import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tmfun import fileio
from tmfun.datamodel import Hyperparams, remap_ids
from tmfun.errors import FormatError, IoError, ParseError
from tmfun.graph import build_bundle
from tmfun.trainer import init_params

from conftest import toy_dataset


def test_load_interactions_examples(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("u1 i1\nu1 i2\n")
    assert fileio.load_interactions(p) == [("u1", "i1"), ("u1", "i2")]
    p.write_text("# header\n\nu1\ti1 4.0 2014\n")
    assert fileio.load_interactions(p) == [("u1", "i1")]
    p.write_text("u1\n")
    with pytest.raises(ParseError, match="line 1"):
        fileio.load_interactions(p)
    with pytest.raises(IoError):
        fileio.load_interactions(tmp_path / "missing.txt")


def _split_counts(counts, seed=0):
    raw = [(f"u{u}", f"i{k}") for u, n in enumerate(counts) for k in range(n)]
    ds = fileio.split_dataset(remap_ids(raw), np.random.default_rng(seed))
    return [tuple(len(ds.items_by_user(s)[u]) for s in ("train", "val", "test")) for u in range(len(counts))], ds


def test_split_ratios():
    sizes, _ = _split_counts([10, 2, 3, 1, 25])
    assert sizes[0] == (8, 1, 1)
    assert sizes[1] == (2, 0, 0)
    assert sizes[3] == (1, 0, 0)
    assert sizes[4] == (21, 2, 2)
    assert all(t >= 1 for t, _, _ in sizes)


def test_split_deterministic_and_disjoint():
    _, a = _split_counts([7, 12, 4], seed=3)
    _, b = _split_counts([7, 12, 4], seed=3)
    for s in ("train", "val", "test"):
        np.testing.assert_array_equal(a.split(s), b.split(s))
    codes = [set(map(tuple, a.split(s).tolist())) for s in ("train", "val", "test")]
    assert not (codes[0] & codes[1]) and not (codes[0] & codes[2]) and not (codes[1] & codes[2])
    assert sum(map(len, codes)) == 23


def test_config_round_trip(tmp_path):
    hp = Hyperparams(d=8, lambda_=0.3, use_attention=False, cf_model="mf", tau=0.5)
    p = tmp_path / "c.txt"
    p.write_text(fileio.dump_config(hp))
    assert fileio.load_config(p) == hp
    assert fileio.parse_config("# only comments\n\n") == Hyperparams()
    assert fileio.parse_config("lambda = 0.25\n").lambda_ == 0.25


@pytest.mark.parametrize("text", ["nope = 1\n", "d = abc\n", "use_attention = maybe\n", "justakey\n", "d = 0\n"])
def test_config_rejects(text):
    with pytest.raises(Exception) as exc:
        fileio.parse_config(text)
    assert isinstance(exc.value, (ParseError, ValueError))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 20), st.integers(1, 9)), elements=st.floats(width=32, allow_nan=False)))
def test_features_round_trip(x):
    data = fileio.features_to_bytes(x)
    assert len(data) == 12 + 4 * x.size
    assert data[:4] == b"MMF1" and struct.unpack("<II", data[4:12]) == x.shape
    assert fileio.features_from_bytes(data).tobytes() == x.tobytes()


def test_features_bad_files(tmp_path):
    data = fileio.features_to_bytes(np.ones((3, 2), dtype=np.float32))
    with pytest.raises(FormatError):
        fileio.features_from_bytes(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        fileio.features_from_bytes(data[:-1])
    p = tmp_path / "f.tsv"
    p.write_text("1 2\n3 4\n")
    np.testing.assert_array_equal(fileio.read_features(p), [[1, 2], [3, 4]])
    p.write_text("1 2\n3\n")
    with pytest.raises(ParseError):
        fileio.read_features(p)


def _bundle():
    ds = toy_dataset()
    rng = np.random.default_rng(0)
    fv, ft = rng.normal(size=(8, 3)), rng.normal(size=(8, 4))
    return build_bundle(ds, fv, ft, 3, 0.4), fv, ft, ds


def test_graph_round_trip_and_layout():
    bundle, *_ = _bundle()
    for g in (bundle.g_visual, bundle.g_item, bundle.g_interaction):
        data = fileio.graph_to_bytes(g)
        assert len(data) == 4 + 4 + 8 + 8 * (g.n_rows + 1) + 4 * g.nnz + 4 * g.nnz
        assert fileio.graph_from_bytes(data).same_as(g)
        assert fileio.graph_to_bytes(fileio.graph_from_bytes(data)) == data
        with pytest.raises(FormatError):
            fileio.graph_from_bytes(data[:-3])
        with pytest.raises(FormatError):
            fileio.graph_from_bytes(b"XXXX" + data[4:])


def test_bundle_reload_refuses_with_new_lambda(tmp_path):
    bundle, fv, ft, ds = _bundle()
    fileio.save_bundle(bundle, tmp_path)
    assert fileio.load_bundle(tmp_path).g_item.same_as(bundle.g_item)
    other = fileio.load_bundle(tmp_path, lam=1.0)
    assert other.g_item.same_as(bundle.g_visual)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_params_round_trip(tmp_path, dtype):
    params = init_params(5, 8, 3, 4, 6, np.random.default_rng(0), dtype)
    data = fileio.params_to_bytes(params)
    back = fileio.params_from_bytes(data)
    assert back.dtype == dtype
    assert fileio.params_to_bytes(back) == data
    fileio.save_params(tmp_path / "p.mmp", params)
    assert (tmp_path / "p.mmp").read_bytes() == data
    with pytest.raises(FormatError):
        fileio.params_from_bytes(data[:-1])
    with pytest.raises(FormatError):
        fileio.params_from_bytes(b"XXXX" + data[4:])


def test_metrics_lines(tmp_path):
    records = [{"epoch": e, "loss_total": 0.5, "loss_bpr": 0.4, "loss_mmbpr": 0.3, "loss_c": 0.2, "recall": 0.1,
                "ndcg": 0.05} for e in (1, 2, 3)]
    p = tmp_path / "m.jsonl"
    fileio.atomic_write(p, fileio.metrics_lines(records))
    lines = p.read_text().splitlines()
    assert len(lines) == 3 and [json.loads(x) for x in lines] == records
    assert fileio.read_metrics(p) == records


def test_atomic_write_leaves_no_temp_files(tmp_path):
    fileio.atomic_write(tmp_path / "x.bin", b"abc")
    fileio.atomic_write(tmp_path / "x.bin", b"def")
    assert [p.name for p in tmp_path.iterdir()] == ["x.bin"]
    assert (tmp_path / "x.bin").read_bytes() == b"def"


def test_dataset_round_trip(tmp_path):
    ds = toy_dataset(with_holdout=True)
    fileio.save_dataset(ds, tmp_path)
    back = fileio.load_dataset(tmp_path)
    assert (back.n_users, back.n_items) == (ds.n_users, ds.n_items)
    for s in ("train", "val", "test"):
        np.testing.assert_array_equal(back.split(s), ds.split(s))
