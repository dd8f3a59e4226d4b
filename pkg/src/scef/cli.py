"""Command-line interface: ``scef <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.
Diagnostics go to standard error.
"""
from __future__ import annotations

import argparse
import csv
import glob
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .complexity import network_summary
from .compressor import compress_network
from .data import load_cifar10, synthetic_bars
from .errors import NumericError, ParameterError, ScefError
from .layers import init_scef
from .network import NetworkConfig, build_network, tinynet
from .rank_analysis import RobustnessCheckConfig, analyze_network, rank_trajectory, verify_robustness_bound
from .schedules import DEFAULT_GAMMA
from .training import TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except ValueError as exc:
        raise ScefError(f"{path}: invalid JSON ({exc})") from exc


def _network_config(doc: dict, rank_decay: str | None) -> NetworkConfig:
    """Network from ``{"network": {...}}``, ``{"tinynet": {...}}`` or a bare network dict."""
    if "tinynet" in doc:
        kw = dict(doc["tinynet"])
        if "input_shape" in kw:
            kw["input_shape"] = tuple(kw["input_shape"])
        cfg = tinynet(**kw)
    else:
        cfg = NetworkConfig.from_dict(doc.get("network", doc))
    if rank_decay is not None:
        cfg.rank_decay = rank_decay
    return cfg


def cmd_analyze(args) -> int:
    reports = analyze_network(args.weights, args.gamma)
    if args.format == "json":
        _emit(_dump({"schema": 1, "gamma": args.gamma, "layers": [r.as_dict() for r in reports]}), args.out)
        return EXIT_OK
    width = max((len(r.histogram) for r in reports), default=0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["depth", "layer_index", "layer_rank"] + [f"hist_{k}" for k in range(1, width + 1)])
    for r in reports:
        hist = [repr(float(v)) for v in r.histogram] + [""] * (width - len(r.histogram))
        w.writerow([r.layer_depth, r.layer_index, r.layer_rank] + hist)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    doc = _read_json(args.config)
    net_cfg = _network_config(doc, args.rank_decay)
    tcfg = dict(doc.get("train", {}))
    if args.seed is not None:
        tcfg["seed"] = args.seed
    if args.epochs is not None:
        tcfg["epochs"] = args.epochs
    tc = TrainConfig(**tcfg)
    ds = dict(doc.get("dataset", {"kind": "synthetic_bars"}))
    kind = ds.pop("kind", "synthetic_bars")
    if kind == "synthetic_bars":
        ds.setdefault("seed", tc.seed)
        data = synthetic_bars(**ds)
    elif kind == "cifar10_subset":
        data = load_cifar10(ds["dir"], ds.get("subset_size", 2000), ds.get("seed", tc.seed))
    else:
        raise ParameterError(f"unknown dataset kind {kind!r}")
    net = build_network(net_cfg, tc.seed)
    res = train(net, tc, data, out_dir=args.out)
    last = res.metrics[-1] if res.metrics else {}
    print(_dump({"checkpoints": [str(p) for p in res.checkpoints], "final": last,
                 "trainable_params": net.n_trainable()}), end="")
    return EXIT_OK


def cmd_compress(args) -> int:
    net, manifest = load_checkpoint(args.weights)
    new, reports = compress_network(net, rank=args.rank, rank_decay=args.rank_decay, error_budget=args.error_budget)
    save_checkpoint(args.out, new, manifest.get("epoch", 0), {"compressed_from": str(args.weights)},
                    manifest.get("seed"))
    text = _dump({"schema": 1, "layers": reports, "trainable_params_before": net.n_trainable(),
                  "trainable_params_after": new.n_trainable()})
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_complexity(args) -> int:
    cfg = _network_config(_read_json(args.config), args.rank_decay)
    summary = network_summary(cfg, mult_add=args.mult_add)
    text = {"json": lambda: _dump(summary.as_dict()), "csv": summary.to_csv,
            "text": lambda: summary.to_text() + "\n"}[args.format]()
    _emit(text, args.out)
    return EXIT_OK


def cmd_verify_bound(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.weights:
        net, _ = load_checkpoint(args.weights)
        layers = dict(net.scef_layers())
        if args.layer not in layers:
            raise ParameterError(f"layer {args.layer} is not an SCEF layer (SCEF layers: {sorted(layers)})")
        params = layers[args.layer]
    else:
        params = init_scef(args.c_in, args.c_out, args.h, args.rank, rng)
        # rescale every coefficient vector onto the epsilon-ball
        a = params.coefficients
        norms = np.linalg.norm(a, axis=2, keepdims=True)
        params.coefficients = a / np.where(norms > 0, norms, 1.0) * args.epsilon * rng.uniform(0, 1, norms.shape)
    eps = args.epsilon
    if args.weights and args.epsilon_from_weights:
        eps = float(np.linalg.norm(params.coefficients, axis=2).max())
    cfg = RobustnessCheckConfig(eps, args.trials, args.perturbation_scale, tuple(args.image_size))
    report = verify_robustness_bound(params, cfg, args.seed)
    _emit(_dump({"schema": 1, **report, "rank": params.r, "h": params.h, "c_in": params.c_in}), args.out)
    return EXIT_OK if report["violations"] == 0 else EXIT_NUMERIC


def cmd_trajectory(args) -> int:
    paths = sorted(glob.glob(args.checkpoints))
    if not paths:
        raise ScefError(f"no checkpoints match {args.checkpoints!r}")
    traj = rank_trajectory(paths, args.gamma)
    _emit(_dump(traj.as_dict()) if args.format == "json" else traj.to_csv(), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    p = _Parser(prog="scef", description="Separable convolutional eigen-filter tools.", parents=[verbose])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **kw: _add(*a, parents=[verbose], **kw)

    def common(sp, fmt=("json", "csv"), default="json"):
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--format", choices=fmt, default=default)

    sp = sub.add_parser("analyze", help="effective ranks of a checkpoint's filter banks")
    sp.add_argument("weights")
    sp.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("train", help="train a network from a JSON config")
    sp.add_argument("config")
    sp.add_argument("--out", required=True, help="directory for checkpoints and metrics.csv")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--rank-decay", choices=("none", "linear", "log", "logarithmic"))
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("compress", help="convert Conv2D layers of a checkpoint to SCEF")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report", help="write the JSON report here instead of stdout")
    mode = sp.add_mutually_exclusive_group(required=True)
    mode.add_argument("--rank", type=int)
    mode.add_argument("--rank-decay", choices=("linear", "log", "logarithmic"))
    mode.add_argument("--error-budget", type=float)
    sp.set_defaults(func=cmd_compress)

    sp = sub.add_parser("complexity", help="parameter and FLOP table for a network config")
    sp.add_argument("config")
    sp.add_argument("--rank-decay", choices=("none", "linear", "log", "logarithmic"))
    sp.add_argument("--mult-add", action="store_true", help="count multiplies and adds separately")
    common(sp, ("text", "json", "csv"), "text")
    sp.set_defaults(func=cmd_complexity)

    sp = sub.add_parser("verify-bound", help="Monte-Carlo check of the perturbation bound")
    sp.add_argument("--weights", help="checkpoint; otherwise a random orthonormal layer is drawn")
    sp.add_argument("--layer", type=int, default=0, help="SCEF layer index within --weights")
    sp.add_argument("--epsilon", type=float, default=1.0)
    sp.add_argument("--epsilon-from-weights", action="store_true",
                    help="use the largest coefficient norm of the layer as epsilon")
    sp.add_argument("--c-in", type=int, default=3)
    sp.add_argument("--c-out", type=int, default=4)
    sp.add_argument("--h", type=int, default=3)
    sp.add_argument("--rank", type=int, default=4)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--perturbation-scale", type=float, default=1.0)
    sp.add_argument("--image-size", type=int, nargs=2, default=[8, 8])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_verify_bound)

    sp = sub.add_parser("trajectory", help="layer ranks across a series of checkpoints")
    sp.add_argument("checkpoints", help="glob pattern, e.g. 'run/ckpt_epoch*.zip'")
    sp.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    common(sp, ("csv", "json"), "csv")
    sp.set_defaults(func=cmd_trajectory)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"scef {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ScefError, OSError, KeyError, TypeError) as exc:
        print(f"scef {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
