"""Command-line pipeline: generate, train, attack, evaluate, verify, report.

Flag precedence: built-in defaults < values from ``--config`` (a JSON
object keyed by the flag names, kebab- or snake-case) < flags given on
the command line. Every run writes its fully resolved configuration as
JSON next to its primary output.

Exit codes: 0 success, 2 configuration error, 3 data/format error,
4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from cgat.attack import AdvConfig, attack_loss, pgd
from cgat.center import batch_center_codes
from cgat.dataio import Dataset, GenSpec, generate, load_dataset, save_dataset
from cgat.model import hash_codes, init_model, load_model, save_model
from cgat.retrieval import build_index, evaluate
from cgat.serial import FormatError, atomic_write
from cgat.train import TrainConfig, pretrain_baseline, train_cgat
from cgat.verify import chcm_check, grad_check

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_VERIFY = 4


class VerificationFailure(Exception):
    pass


def _resolve(args, defaults):
    """defaults < config file < explicit flags; returns a plain dict."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        try:
            with open(args.config) as f:
                loaded = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ValueError(f"cannot read config file {args.config}: {e}")
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key not in resolved:
                raise ValueError(f"unknown config key {key!r}")
            resolved[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _echo_config(cfg: dict, anchor_path: str):
    atomic_write(anchor_path + ".config.json", (json.dumps(cfg, indent=2, sort_keys=True) + "\n").encode())


def _parse_hidden_dims(value) -> list[int]:
    """Accept '128,64' from flags or [128, 64] from a JSON config."""
    if isinstance(value, (list, tuple)):
        dims = [int(v) for v in value]
    else:
        dims = [int(tok) for tok in str(value).split(",") if tok.strip()]
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"hidden dims must be positive integers, got {value!r}")
    return dims


def _add_common_train_flags(p):
    p.add_argument("--bits", type=int)
    p.add_argument("--hidden-dims", help="comma-separated hidden layer widths, e.g. 128,64")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--seed", type=int)


_TRAIN_DEFAULTS = {
    "bits": 16,
    "hidden_dims": "128,64",
    "epochs": 30,
    "batch_size": 32,
    "learning_rate": 0.01,
    "momentum": 0.9,
    "weight_decay": 5e-4,
    "seed": 0,
}


def cmd_gen_data(args):
    defaults = {
        "classes": 8, "dim": 32, "train": 2000, "database": 4000, "query": 200,
        "noise": 0.05, "p_multi": 0.3, "spread": 0.09, "seed": 7,
    }
    cfg = _resolve(args, defaults)
    spec = GenSpec(
        n_classes=cfg["classes"], dim=cfg["dim"], n_train=cfg["train"],
        n_database=cfg["database"], n_query=cfg["query"], noise=cfg["noise"],
        p_multilabel=cfg["p_multi"], prototype_spread=cfg["spread"], seed=cfg["seed"],
    )
    save_dataset(generate(spec), args.out)
    _echo_config(cfg, args.out)
    print(f"wrote dataset to {args.out}")
    return EXIT_OK


def _train(args, adversarial: bool):
    defaults = dict(_TRAIN_DEFAULTS)
    if adversarial:
        defaults.update({
            "lam": 1.0, "epsilon": 8 / 255, "alpha": 2 / 255,
            "attack_steps": 7, "pretrain_epochs": 30,
        })
    cfg = _resolve(args, defaults)
    ds = load_dataset(args.data)
    x_train, y_train = ds.split("train")
    hidden = _parse_hidden_dims(cfg["hidden_dims"])
    model = init_model([ds.dim, *hidden, cfg["bits"]], seed=cfg["seed"])
    base_cfg = TrainConfig(
        epochs=cfg["epochs"], batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"], momentum=cfg["momentum"],
        weight_decay=cfg["weight_decay"], seed=cfg["seed"],
        lam=cfg.get("lam", 0.0),
        adv=AdvConfig(
            epsilon=cfg.get("epsilon", 8 / 255),
            alpha=cfg.get("alpha", 2 / 255),
            steps=cfg.get("attack_steps", 7),
        ),
    )
    if adversarial:
        if cfg["pretrain_epochs"]:
            pre_cfg = TrainConfig(
                epochs=cfg["pretrain_epochs"], batch_size=cfg["batch_size"],
                learning_rate=cfg["learning_rate"], momentum=cfg["momentum"],
                weight_decay=cfg["weight_decay"], seed=cfg["seed"], lam=0.0,
            )
            pretrain_baseline(model, x_train, y_train, pre_cfg)
        log = train_cgat(model, x_train, y_train, base_cfg)
    else:
        log = pretrain_baseline(model, x_train, y_train, base_cfg)
    save_model(model, args.out)
    log.to_csv(args.log or args.out + ".log.csv")
    _echo_config(cfg, args.out)
    means = log.epoch_means()
    if means:
        last = max(means)
        print(f"trained {cfg['epochs']} epochs; final mean L_cat {means[last]:.4f}")
    print(f"wrote checkpoint to {args.out}")
    return EXIT_OK


def cmd_train_baseline(args):
    return _train(args, adversarial=False)


def cmd_train_cgat(args):
    return _train(args, adversarial=True)


def cmd_attack(args):
    defaults = {"epsilon": 8 / 255, "alpha": 1 / 255, "attack_steps": 100, "seed": 0}
    cfg = _resolve(args, defaults)
    ds = load_dataset(args.data)
    model = load_model(args.checkpoint)
    adv_cfg = AdvConfig(epsilon=cfg["epsilon"], alpha=cfg["alpha"], steps=cfg["attack_steps"])

    x_query, y_query = ds.split("query")
    codebook = hash_codes(model, ds.features[ds.train_ids])
    centers = batch_center_codes(codebook, ds.labels[ds.train_ids], y_query)
    loss_before = attack_loss(model, x_query, centers) / max(len(x_query), 1)
    x_adv = pgd(model, x_query, centers, adv_cfg)
    loss_after = attack_loss(model, x_adv, centers) / max(len(x_query), 1)

    features = ds.features.copy()
    features[ds.query_ids] = x_adv
    save_dataset(Dataset(features, ds.labels, ds.train_ids, ds.database_ids, ds.query_ids), args.out)
    _echo_config(cfg, args.out)

    linf = float(np.abs(x_adv - x_query).max(initial=0.0))
    stats_path = args.stats or args.out + ".stats.csv"
    rows = [["queries", len(x_query)], ["mean_loss_before", repr(loss_before)],
            ["mean_loss_after", repr(loss_after)], ["max_linf", repr(linf)]]
    atomic_write(stats_path, ("\n".join(",".join(str(v) for v in r) for r in rows) + "\n").encode())
    print(f"attacked {len(x_query)} queries: mean loss {loss_before:.4f} -> {loss_after:.4f}, "
          f"max Linf {linf:.5f}")
    return EXIT_OK


def cmd_evaluate(args):
    defaults = {"top_n": 500, "workers": 1, "ap_denominator": "in_top_n"}
    cfg = _resolve(args, defaults)
    ds = load_dataset(args.data)
    model = load_model(args.checkpoint)
    db_codes = hash_codes(model, ds.features[ds.database_ids])
    index = build_index(db_codes, ds.labels[ds.database_ids])
    x_query, y_query = ds.split("query")
    report = evaluate(
        index, hash_codes(model, x_query), y_query,
        top_n=cfg["top_n"], denominator=cfg["ap_denominator"], workers=cfg["workers"],
    )
    report.to_csv(args.out_prefix + ".metrics.csv")
    atomic_write(args.out_prefix + ".summary.txt", (report.summary() + "\n").encode())
    _echo_config(cfg, args.out_prefix)
    print(report.summary())
    return EXIT_OK


def cmd_chcm_check(args):
    cfg = _resolve(args, {"instances": 200, "seed": 0})
    result = chcm_check(n_instances=cfg["instances"], seed=cfg["seed"])
    print(f"{result.passed}/{result.total} exact")
    if not result.ok:
        raise VerificationFailure(f"closed-form center mismatched oracle on {len(result.failures)} instances")
    return EXIT_OK


def cmd_grad_check(args):
    cfg = _resolve(args, {"models": 5, "seed": 0})
    result = grad_check(n_models=cfg["models"], seed=cfg["seed"])
    print(f"{result.passed}/{result.total} gradient checks passed")
    if not result.ok:
        raise VerificationFailure(f"finite-difference mismatch: {result.failures}")
    return EXIT_OK


def _read_metrics_csv(path):
    summary = {}
    curves = []
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["metric", "x", "y"]:
        raise FormatError(f"{path} is not a metrics CSV")
    for metric, x, y in rows[1:]:
        if metric == "map":
            summary["map"] = float(y)
            summary["top_n"] = int(x)
        elif metric == "query_count":
            summary["query_count"] = int(y)
        else:
            curves.append((metric, float(x), float(y)))
    return summary, curves


def cmd_report(args):
    entries = []
    for spec in args.entries:
        if "=" not in spec:
            raise ValueError(f"report entries look like label=path, got {spec!r}")
        label, path = spec.split("=", 1)
        entries.append((label, *_read_metrics_csv(path)))

    width = max(len(label) for label, _, _ in entries)
    print(f"{'run'.ljust(width)}  map@top_n  queries")
    lines = [["label", "map", "top_n", "query_count"]]
    curve_lines = [["label", "metric", "x", "y"]]
    for label, summary, curves in entries:
        print(f"{label.ljust(width)}  {summary['map']:.6f}   {summary.get('query_count', '')}")
        lines.append([label, repr(summary["map"]), summary.get("top_n", ""), summary.get("query_count", "")])
        for metric, x, y in curves:
            curve_lines.append([label, metric, repr(x), repr(y)])
    atomic_write(args.out, ("\n".join(",".join(str(v) for v in r) for r in lines) + "\n").encode())
    curves_path = os.path.splitext(args.out)[0] + ".curves.csv"
    atomic_write(curves_path, ("\n".join(",".join(str(v) for v in r) for r in curve_lines) + "\n").encode())
    print(f"wrote {args.out} and {curves_path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="cgat", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config file; flags override it")
        p.set_defaults(fn=fn)
        return p

    p = command("gen-data", cmd_gen_data, "generate a synthetic dataset file")
    p.add_argument("--out", required=True)
    for flag, typ in [("--classes", int), ("--dim", int), ("--train", int),
                      ("--database", int), ("--query", int), ("--noise", float),
                      ("--p-multi", float), ("--spread", float), ("--seed", int)]:
        p.add_argument(flag, type=typ)

    for name, fn, help_ in [
        ("train-baseline", cmd_train_baseline, "train the undefended model"),
        ("train-cgat", cmd_train_cgat, "adversarially train with center guidance"),
    ]:
        p = command(name, fn, help_)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--log")
        _add_common_train_flags(p)
        if name == "train-cgat":
            p.add_argument("--lam", type=float)
            p.add_argument("--epsilon", type=float)
            p.add_argument("--alpha", type=float)
            p.add_argument("--attack-steps", type=int)
            p.add_argument("--pretrain-epochs", type=int)

    p = command("attack", cmd_attack, "perturb the query split against a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stats")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--attack-steps", type=int)
    p.add_argument("--seed", type=int)

    p = command("evaluate", cmd_evaluate, "retrieval metrics for a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--top-n", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--ap-denominator", choices=["in_top_n", "min_full"])

    p = command("chcm-check", cmd_chcm_check, "closed-form centers vs exhaustive oracle")
    p.add_argument("--instances", type=int)
    p.add_argument("--seed", type=int)

    p = command("grad-check", cmd_grad_check, "analytic gradients vs finite differences")
    p.add_argument("--models", type=int)
    p.add_argument("--seed", type=int)

    p = command("report", cmd_report, "combine evaluation CSVs into one table")
    p.add_argument("--out", required=True)
    p.add_argument("entries", nargs="+", metavar="label=metrics.csv")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except VerificationFailure as e:
        print(f"verification failed: {e}", file=sys.stderr)
        return EXIT_VERIFY
    except FormatError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
