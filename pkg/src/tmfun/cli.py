"""Command line entry point: prepare, train, evaluate, recommend.

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .datamodel import Hyperparams, remap_ids, validate_dataset
from .errors import InvalidInput, IoError, TmfunError
from .evaluation import evaluate, recommend
from .graph import build_bundle
from .trainer import fit

log = logging.getLogger("tmfun")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_hp(path) -> Hyperparams:
    return fileio.load_config(path) if path else Hyperparams()


def _require_dir(path, what) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise IoError(f"{what} directory {p} does not exist")
    return p


def _load_data(data_dir: Path):
    ds = fileio.load_dataset(data_dir)
    fv = fileio.read_features(data_dir / "visual.mmf")
    ft = fileio.read_features(data_dir / "textual.mmf")
    validate_dataset(ds, fv, ft)
    return ds, fv, ft


def cmd_prepare(args) -> int:
    hp = _load_hp(args.config)
    remapped = remap_ids(fileio.load_interactions(args.interactions))
    fv = fileio.read_features(args.visual)
    ft = fileio.read_features(args.textual)
    ds = fileio.split_dataset(remapped, np.random.default_rng(hp.seed))
    validate_dataset(ds, fv, ft)
    bundle = build_bundle(ds, fv, ft, hp.top_n, hp.lambda_)
    out = Path(args.out)
    fileio.save_dataset(ds, out)
    fileio.write_features(out / "visual.mmf", fv)
    fileio.write_features(out / "textual.mmf", ft)
    fileio.save_bundle(bundle, out)
    fileio.atomic_write(out / "config.txt", fileio.dump_config(hp).encode())
    log.info(
        "prepared %d users, %d items (%d/%d/%d train/val/test) in %s",
        ds.n_users, ds.n_items, len(ds.train), len(ds.val), len(ds.test), out,
    )
    return 0


def _bundle_for(data_dir: Path, ds, fv, ft, hp: Hyperparams):
    prepared = fileio.load_config(data_dir / "config.txt")
    if prepared.top_n != hp.top_n:
        log.info("top_n changed from %d to %d, rebuilding kNN graphs", prepared.top_n, hp.top_n)
        return build_bundle(ds, fv, ft, hp.top_n, hp.lambda_)
    return fileio.load_bundle(data_dir, lam=hp.lambda_)


def cmd_train(args) -> int:
    data_dir = _require_dir(args.data, "data")
    hp = fileio.load_config(args.config)
    ds, fv, ft = _load_data(data_dir)
    bundle = _bundle_for(data_dir, ds, fv, ft, hp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []

    def on_epoch(rec):
        records.append(rec.as_json())
        fileio.atomic_write(out / "metrics.jsonl", fileio.metrics_lines(records))
        log.info("epoch %d loss %.5f val recall@%d %.5f", rec.epoch, rec.loss.total, hp.k_eval, rec.recall)

    params, report = fit(ds, bundle, fv, ft, hp, on_epoch=on_epoch)
    fileio.atomic_write(out / "metrics.jsonl", fileio.metrics_lines(records))
    fileio.save_params(out / "params.mmp", params)
    fileio.atomic_write(out / "config.txt", fileio.dump_config(hp).encode())
    fileio.atomic_write(out / "report.json", (json.dumps(report.summary()) + "\n").encode())
    return 0


def _load_model(args):
    data_dir = _require_dir(args.data, "data")
    model_dir = _require_dir(args.model, "model")
    hp = fileio.load_config(model_dir / "config.txt")
    params = fileio.load_params(model_dir / "params.mmp")
    ds, fv, ft = _load_data(data_dir)
    params.check(ds.n_users, ds.n_items, fv.shape[1], ft.shape[1])
    return hp, params, ds, fv, ft, _bundle_for(data_dir, ds, fv, ft, hp)


def cmd_evaluate(args) -> int:
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    hp, params, ds, fv, ft, bundle = _load_model(args)
    report = evaluate(params, bundle, fv, ft, ds, hp, split=args.split, k=args.k)
    print(json.dumps(report.as_json()))
    return 0


def cmd_recommend(args) -> int:
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    hp, params, ds, fv, ft, bundle = _load_model(args)
    user = ds.user_index.get(args.user)
    if user is None:
        raise InvalidInput(f"unknown user token {args.user!r}")
    items, scores = recommend(params, bundle, fv, ft, ds, hp, user, args.k)
    for rank, (item, s) in enumerate(zip(items, scores), start=1):
        print(json.dumps({"rank": rank, "item": ds.item_tokens[item], "score": float(s)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tmfun", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="remap ids, split, build and cache graphs")
    p.add_argument("--interactions", required=True)
    p.add_argument("--visual", required=True)
    p.add_argument("--textual", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="fit a model and write the best checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="print Recall@K / NDCG@K as JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("recommend", help="print top-K items for one user as JSON lines")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_recommend)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tmfun: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TmfunError, OSError) as exc:
        print(f"tmfun: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
