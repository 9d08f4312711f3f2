"""Command-line front end: training, attacks, fingerprinting, serving,
verification, and experiment sweeps."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from ..attacks import badnet_attack, finetune, prune_weights, retrain_from_scratch
from ..autodiff import checkpoint_hash
from ..data import SplitSpec, render_digits, split
from ..models import (PerceptualMetric, TrainConfig, VaeConfig,
                      load_classifier, load_vae, save_classifier, save_vae,
                      train_classifier, train_vae)
from ..fingerprint import (FingerprintPool, PoolBuilder, grow_pool,
                           select_references)
from ..verifyd import (ConfigError, client_verify, load_config, serve_model,
                       serve_verification, token_list)
from .experiments import ExperimentConfig, ExperimentRunner, MetricsTable

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3


def _say(msg):
    print(msg, flush=True)


def _datasets(args):
    full = render_digits(args.train_size, seed=args.seed)
    test = render_digits(args.test_size, seed=args.seed + 1000)
    ae_set, model_set = split(full, SplitSpec(args.split, seed=args.seed))
    return ae_set, model_set, test




# ---------------------------------------------------------------------------
# commands


def cmd_train(args):
    ae_set, model_set, test = _datasets(args)
    handle = train_classifier(model_set,
                              TrainConfig(epochs=args.epochs, lr=args.lr,
                                          batch_size=64, seed=args.seed),
                              test_set=test)
    acc = handle.metadata["test_accuracy"]
    _say(f"classifier test accuracy {acc:.4f}")
    os.makedirs(args.out_dir, exist_ok=True)
    save_classifier(handle.require_model(),
                    os.path.join(args.out_dir, "classifier.ckpt"),
                    extra={"test_accuracy": acc})
    vae = train_vae(ae_set, VaeConfig(seed=args.seed,
                                      tc_weight=args.tc_weight))
    save_vae(vae, os.path.join(args.out_dir, "vae.ckpt"))
    _say(f"artifacts written to {args.out_dir}")
    return EXIT_OK


def cmd_attack(args):
    clf, _ = load_classifier(args.model)
    handle = clf.handle("licensed", access="white-box")
    _, model_set, test = _datasets(args)
    if args.attack == "badnet":
        attacked, report = badnet_attack(
            handle, model_set, test, rate=args.rate,
            config=TrainConfig(epochs=args.epochs, lr=args.lr, batch_size=64))
    elif args.attack == "prune":
        attacked, report = prune_weights(
            handle, args.fraction, retrain_set=model_set, test_set=test,
            retrain_config=TrainConfig(epochs=args.epochs, lr=args.lr,
                                       batch_size=64))
    elif args.attack == "finetune":
        attacked, report = finetune(handle, model_set, epochs=args.epochs,
                                    lr=args.lr, test_set=test)
    elif args.attack == "retrain":
        attacked, report = retrain_from_scratch(
            model_set, TrainConfig(epochs=args.epochs, lr=args.lr,
                                   batch_size=64, seed=args.seed + 777),
            test_set=test)
    else:
        raise ConfigError(f"unknown attack {args.attack!r}")
    save_classifier(attacked.require_model(), args.out,
                    extra={"attack": json.loads(report.to_json())})
    _say(report.to_json())
    return EXIT_OK


def _builder(args, clf_path, vae_path):
    clf, meta = load_classifier(clf_path)
    vae, _ = load_vae(vae_path)
    handle = clf.handle("licensed", access="black-box")
    _, model_set, _ = _datasets(args)
    metric = PerceptualMetric(model_set.images.shape[1:], seed=args.seed)
    refs = select_references(handle, model_set, metric,
                             per_class=args.references_per_class,
                             seed=args.seed)
    return PoolBuilder(handle, vae, refs, metric=metric, sigma=args.sigma,
                       method=args.method, seed=args.seed), clf


def cmd_fingerprint(args):
    builder, clf = _builder(args, args.model, args.vae)
    pool = builder.build(args.count,
                         model_hash=checkpoint_hash(clf.state_dict()))
    pool.save(args.out)
    _say(f"pool of {len(pool)} pairs written to {args.out}")
    return EXIT_OK


def cmd_pool_grow(args):
    pool = FingerprintPool.load(args.pool)
    builder, _ = _builder(args, args.model, args.vae)
    grow_pool(pool, args.strategy, args.count, builder)
    pool.save(args.pool)
    _say(f"pool grown by {args.count} via {args.strategy}; "
         f"now {len(pool)} pairs ({pool.remaining()} unconsumed)")
    return EXIT_OK


def cmd_serve(args):
    config = load_config(args.config) if args.config else {}
    tokens = token_list(config) if config else ["public"]
    servers = []
    if args.role in ("model", "both"):
        clf, _ = load_classifier(args.model)
        host = config.get("model_host", "127.0.0.1") if config else "127.0.0.1"
        port = int(config.get("model_port", args.model_port)) if config \
            else args.model_port
        server = serve_model(clf.handle("deployed"), (host, port))
        _say(f"model server on {server.address[0]}:{server.address[1]}")
        servers.append(server)
    if args.role in ("verify", "both"):
        pool = FingerprintPool.load(args.pool)
        host = config.get("verify_host", "127.0.0.1") if config else "127.0.0.1"
        port = int(config.get("verify_port", args.verify_port)) if config \
            else args.verify_port
        max_v = int(config.get("max_v", 10)) if config else 10
        server = serve_verification(pool, tokens, (host, port), max_v=max_v)
        _say(f"verification server on {server.address[0]}:{server.address[1]}")
        servers.append(server)
    if not servers:
        raise ConfigError(f"unknown serve role {args.role!r}")
    try:
        import threading
        threading.Event().wait(args.duration if args.duration else None)
    except KeyboardInterrupt:
        pass
    finally:
        for s in servers:
            s.shutdown()
    return EXIT_OK


def _addr(text):
    host, _, port = text.rpartition(":")
    return (host or "127.0.0.1", int(port))


def cmd_verify(args):
    result = client_verify(_addr(args.verify_addr), _addr(args.model_addr),
                           args.v, args.token)
    _say(json.dumps({"verdict": result.verdict,
                     "queries_used": result.queries_used,
                     "mismatches": [{"index": e.index, "expected": e.expected,
                                     "observed": e.observed}
                                    for e in result.mismatches]}))
    return EXIT_OK


def _experiment_overrides(path):
    """key=value config file entries mapped onto ExperimentConfig fields."""
    import dataclasses
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    overrides = {}
    for key, raw in load_config(path).items():
        if key not in fields:
            raise ConfigError(f"unknown experiment setting {key!r}")
        default = getattr(ExperimentConfig, key)
        if isinstance(default, bool):
            overrides[key] = raw.lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            overrides[key] = int(raw)
        elif isinstance(default, float):
            overrides[key] = float(raw)
        elif isinstance(default, tuple):
            elem = float if key == "sigmas" else (int if key != "attacks"
                                                  else str)
            overrides[key] = tuple(elem(v) for v in raw.split(",") if v)
        else:
            overrides[key] = raw
    return overrides


def cmd_experiment(args):
    sigmas = tuple(float(s) for s in args.sweep.split("=", 1)[1].split(",")) \
        if args.sweep else (args.sigma,)
    settings = dict(
        train_size=args.train_size, test_size=args.test_size,
        autoencoder_fraction=args.split,
        sigmas=sigmas, v_range=tuple(args.v_range),
        classes=tuple(args.classes) if args.classes else (),
        attacks=tuple(args.attack), trials=args.trials, seed=args.seed,
        pool_size=args.pool_size, screen=not args.no_screen)
    if args.config:
        settings.update(_experiment_overrides(args.config))
    config = ExperimentConfig(**settings)
    runner = ExperimentRunner(config, progress=_say)
    table = MetricsTable()
    if args.baseline == "random-samples":
        runner.baseline_random(table)
    else:
        runner.sweep(table)
        runner.false_positive(table)
    csv_path = args.out + ".csv"
    with open(csv_path, "w") as fh:
        fh.write(table.to_csv())
    with open(args.out + ".json", "w") as fh:
        fh.write(table.to_json())
    with open(args.out + "_timing.csv", "w") as fh:
        fh.write(runner.timing_csv(sigmas[0]))
    _say(table.to_csv())
    _say(f"reports written to {args.out}.csv / .json / _timing.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring


def _add_data_args(p):
    p.add_argument("--dataset", default="digits", choices=["digits"])
    p.add_argument("--train-size", type=int, default=6000)
    p.add_argument("--test-size", type=int, default=500)
    p.add_argument("--split", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="encyst",
        description="Model-integrity fingerprinting with encysted samples")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the classifier and autoencoder")
    _add_data_args(p)
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--tc-weight", type=float, default=VaeConfig().tc_weight)
    p.add_argument("--out-dir", default="artifacts")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("attack", help="produce a modified model variant")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--attack", required=True,
                   choices=["badnet", "prune", "finetune", "retrain"])
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--fraction", type=float, default=0.15)
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("fingerprint", help="build a fingerprint pool")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--count", type=int, default=40)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--method", default="nes", choices=["nes", "bisect"])
    p.add_argument("--references-per-class", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fingerprint)

    p = sub.add_parser("pool-grow", help="boost an existing pool")
    _add_data_args(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--strategy", required=True,
                   choices=["resample", "new-reference", "n-code",
                            "uniform-distribution"])
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--method", default="nes", choices=["nes", "bisect"])
    p.add_argument("--references-per-class", type=int, default=5)
    p.set_defaults(fn=cmd_pool_grow)

    p = sub.add_parser("serve", help="run the model and/or verification server")
    p.add_argument("--role", default="both",
                   choices=["model", "verify", "both"])
    p.add_argument("--model")
    p.add_argument("--pool")
    p.add_argument("--config")
    p.add_argument("--model-port", type=int, default=0)
    p.add_argument("--verify-port", type=int, default=0)
    p.add_argument("--duration", type=float, default=0.0,
                   help="seconds to serve (0 = forever)")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("verify", help="verify a deployed model")
    p.add_argument("--verify-addr", required=True)
    p.add_argument("--model-addr", required=True)
    p.add_argument("--v", type=int, default=7)
    p.add_argument("--token", default="public")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("experiment", help="detection-rate sweeps")
    _add_data_args(p)
    p.add_argument("--sweep", help="e.g. sigma=0.01,0.05,0.5")
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--v-range", type=int, nargs="+", default=[1, 2, 3, 5, 7])
    p.add_argument("--classes", type=int, nargs="*")
    p.add_argument("--attack", nargs="+", default=["badnet", "prune"])
    p.add_argument("--baseline", choices=["random-samples"])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--pool-size", type=int, default=40)
    p.add_argument("--no-screen", action="store_true",
                   help="skip screening the pool against simulated attacks")
    p.add_argument("--config", help="key=value file of experiment settings")
    p.add_argument("--out", default="experiment")
    p.set_defaults(fn=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        _say(f"error: {exc}")
        return EXIT_MISSING
    except (ConfigError, ValueError) as exc:
        _say(f"error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
