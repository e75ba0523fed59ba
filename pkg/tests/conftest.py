import numpy as np
import pytest

from tmfun import _fallback
from tmfun.datamodel import Dataset, Hyperparams
from tmfun.graph import build_bundle
from tmfun.trainer import init_params, sample_negatives

try:
    from tmfun import _kernels
except ImportError:  # extension not built
    _kernels = None

BACKENDS = [pytest.param(_fallback, id="python")]
BACKENDS.append(
    pytest.param(_kernels, id="cython", marks=pytest.mark.skipif(_kernels is None, reason="extension not built"))
)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def toy_dataset(seed=0, n_users=5, n_items=8, per_user=3, with_holdout=False):
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for u in range(n_users):
        items = rng.choice(n_items, per_user + (2 if with_holdout else 0), replace=False)
        train += [(u, int(i)) for i in items[:per_user]]
        if with_holdout:
            val.append((u, int(items[per_user])))
            test.append((u, int(items[per_user + 1])))
    return Dataset(n_users, n_items, train, val, test)


def gradient_instance(seed, dim_v=6, dim_t=5, d=4, batch=6, **hp_changes):
    """5-user / 8-item float64 instance with a fixed triplet batch."""
    rng = np.random.default_rng(seed)
    ds = toy_dataset(seed)
    fv = rng.normal(size=(ds.n_items, dim_v))
    ft = rng.normal(size=(ds.n_items, dim_t))
    hp = Hyperparams(**{**dict(d=d, top_n=3, alpha=0.5, beta=0.5), **hp_changes})
    bundle = build_bundle(ds, fv, ft, hp.top_n, hp.lambda_)
    params = init_params(ds.n_users, ds.n_items, dim_v, dim_t, d, rng, np.float64)
    for arr in params.as_dict().values():
        # larger than Xavier so every loss term has a non-trivial gradient
        arr *= 4.0
    pairs = ds.train[rng.permutation(len(ds.train))[:batch]]
    triples = sample_negatives(ds, pairs, rng)
    return ds, fv, ft, hp, bundle, params, triples


def gradient_errors(seed, term="total", **hp_changes):
    """Relative error between analytic and central-difference gradients, per parameter.

    ``term`` selects the objective: "total", or one of "bpr", "mmbpr", "contrastive"
    with the other weighted terms switched off.
    """
    from tmfun.losses import forward_batch, loss_and_grad

    from oracles import finite_difference_grads, relative_error

    coeffs = {"total": {}, "bpr": dict(alpha=0.0, beta=0.0), "mmbpr": dict(alpha=1.0, beta=0.0),
              "contrastive": dict(alpha=0.0, beta=1.0)}[term]
    ds, fv, ft, hp, bundle, params, triples = gradient_instance(seed, **{**hp_changes, **coeffs})
    _, grads = loss_and_grad(params, bundle, fv, ft, hp, triples)
    if term in ("mmbpr", "contrastive"):
        # isolate the weighted term: remove the BPR part of the analytic gradient
        _, base = loss_and_grad(params, bundle, fv, ft, hp.replace(alpha=0.0, beta=0.0), triples)
        grads = {k: grads[k] - base[k] for k in grads}
        field = term

        def objective():
            return getattr(forward_batch(params, bundle, fv, ft, hp, triples).loss, field)
    else:
        def objective():
            return forward_batch(params, bundle, fv, ft, hp, triples).loss.total
    fd = finite_difference_grads(objective, params.as_dict(), step=1e-3)
    return {name: relative_error(grads[name], fd[name]) for name in fd}


# ---------------------------------------------------------------- acceptance summary

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or report.outcome != "passed":
        entry = _ACCEPTANCE.setdefault(props["criterion"], {"title": props["title"], "ok": True, "detail": ""})
        entry["ok"] = entry["ok"] and report.outcome == "passed"
        entry["detail"] = props.get("detail", entry["detail"])
        entry["seconds"] = entry.get("seconds", 0.0) + report.duration


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        status = "PASS" if e["ok"] else "FAIL"
        line = f"[{status}] criterion {number}: {e['title']} ({e.get('seconds', 0.0):.1f}s)"
        if e["detail"]:
            line += f" - {e['detail']}"
        terminalreporter.write_line(line)
