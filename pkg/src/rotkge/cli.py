"""Command-line entry point.

Subcommands: train, eval, bench, sweep, export.  Option precedence is
defaults < --config file < explicit flags, and the resolved run
configuration is always written into the output directory.  Exit codes:
0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np
import torch

from . import data as data_mod
from . import evaluation, plotting, training
from .models import KGEModel, MODEL_KINDS, ALPHA_MODES, create_model

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DATA_ROOT_ENV = "ROTKGE_DATA_ROOT"

DEFAULTS = {
    "model": "rotl",
    "dim": 32,
    "lr": 0.001,
    "batch": 500,
    "neg": 50,
    "gamma": 0.5,
    "adv_temp": 1.0,
    "epochs": 100,
    "seed": 1,
    "threads": 1,
    "reciprocal": "on",
    "alpha_mode": "shared-vector",
    "use_phi": "on",
    "out": "runs/latest",
    "eval_every": 5,
    "patience": 10,
    "dims": "8,16,32,64,128",
    "bench_epochs": 5,
}


class UsageError(Exception):
    pass


class NumericError(Exception):
    pass


def build_parser():
    p = argparse.ArgumentParser(prog="rotkge",
                                description="Lightweight rotation-based "
                                "knowledge graph embedding toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    for name, doc in (("train", "train a model and write checkpoint + log"),
                      ("eval", "evaluate a checkpoint (filtered ranking)"),
                      ("bench", "per-epoch timing benchmark across models"),
                      ("sweep", "train/evaluate across embedding dimensions"),
                      ("export", "dump embeddings as flat f64 arrays")):
        sp = sub.add_parser(name, help=doc)
        _add_common(sp)
        if name in ("eval", "export"):
            sp.add_argument("--checkpoint", help="checkpoint directory")
    return p


def _add_common(sp):
    sp.add_argument("--config", help="JSON config file (flags override it)")
    sp.add_argument("--model", choices=MODEL_KINDS)
    sp.add_argument("--dataset", help="dataset directory (train/valid/test.txt)")
    sp.add_argument("--dim", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--neg", type=int)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--adv-temp", dest="adv_temp", type=float)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--reciprocal", choices=("on", "off"))
    sp.add_argument("--alpha-mode", dest="alpha_mode", choices=ALPHA_MODES)
    sp.add_argument("--use-phi", dest="use_phi", choices=("on", "off"),
                    help="off replaces the x*exp(x) distance with a plain "
                         "squared norm (ablation switch)")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--eval-every", dest="eval_every", type=int)
    sp.add_argument("--patience", type=int)
    sp.add_argument("--dims", help="comma-separated dimension list (sweep)")
    sp.add_argument("--bench-epochs", dest="bench_epochs", type=int)


def resolve_config(args):
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg.update(json.load(fh))
        except OSError as e:
            raise UsageError(f"cannot read config file: {e}")
        except json.JSONDecodeError as e:
            raise UsageError(f"invalid config file: {e}")
    for key in set(cfg) | {"dataset", "checkpoint"}:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    if cfg.get("dataset") is None:
        root = os.environ.get(DATA_ROOT_ENV)
        if root:
            cfg["dataset"] = root
    if cfg["dim"] % 2 != 0:
        raise UsageError("dimension must be even")
    if cfg["model"] not in MODEL_KINDS:
        raise UsageError(f"invalid model kind {cfg['model']!r}")
    return cfg


def _load(cfg):
    if not cfg.get("dataset"):
        raise data_mod.DataError(
            f"no dataset given (use --dataset or ${DATA_ROOT_ENV})")
    return data_mod.load_dataset(cfg["dataset"], reciprocal=cfg["reciprocal"] == "on")


def _train_config(cfg):
    return training.TrainConfig(
        lr=cfg["lr"], batch_size=cfg["batch"], negatives=cfg["neg"],
        epochs=cfg["epochs"], dim=cfg["dim"], gamma=cfg["gamma"],
        adv_temperature=cfg["adv_temp"], seed=cfg["seed"],
        patience=cfg["patience"], eval_every=cfg["eval_every"])


def _make_model(cfg, n_ent, n_rel, dim=None):
    return create_model(cfg["model"], n_ent, n_rel, dim or cfg["dim"],
                        gamma=cfg["gamma"], alpha_mode=cfg["alpha_mode"],
                        use_phi=cfg["use_phi"] == "on", seed=cfg["seed"])


def _prepare_out(cfg):
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "run_config.json"), "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def cmd_train(cfg):
    dictionary, store, index = _load(cfg)
    out = _prepare_out(cfg)
    model = _make_model(cfg, dictionary.n_ent, dictionary.n_rel)
    tconf = _train_config(cfg)

    def validate(m):
        return evaluation.quick_validation(m, store, index, max_queries=2000,
                                           seed=cfg["seed"])

    def progress(rec):
        msg = f"epoch {rec['epoch']:4d}  loss {rec['loss']:.4f}  {rec['seconds']:.2f}s"
        if rec.get("val_mrr") is not None:
            msg += f"  val_mrr {rec['val_mrr']:.4f}  val_hits10 {rec['val_hits10']:.4f}"
        print(msg)

    model, tlog = training.train(model, store, tconf, validate=validate,
                                 progress=progress)
    model.save_checkpoint(os.path.join(out, "checkpoint"), dictionary=dictionary)
    tlog.write_tsv(os.path.join(out, "train_log.tsv"))
    plotting.plot_training_curve(tlog, os.path.join(out, "training_curve.png"))
    print(f"best validation MRR {tlog.best_val_mrr:.4f} at epoch {tlog.best_epoch}")
    return 0


def cmd_eval(cfg):
    dictionary, store, index = _load(cfg)
    out = _prepare_out(cfg)
    ckpt = cfg.get("checkpoint") or os.path.join(out, "checkpoint")
    if not os.path.isdir(ckpt):
        raise UsageError(f"checkpoint directory not found: {ckpt}")
    model, _ = KGEModel.load_checkpoint(ckpt)
    if model.n_ent != dictionary.n_ent or model.n_rel != dictionary.n_rel:
        raise data_mod.DataError("checkpoint does not match dataset dictionaries")
    report = evaluation.evaluate(model, store, index,
                                 relation_names=dictionary.relation_names())
    report.write_tsv(os.path.join(out, "metrics.tsv"))
    report.write_per_relation_tsv(os.path.join(out, "per_relation.tsv"))
    print(f"MRR {report.mrr:.4f}  " +
          "  ".join(f"Hits@{k} {v:.4f}" for k, v in sorted(report.hits.items())))
    return 0


def cmd_bench(cfg):
    dictionary, store, index = _load(cfg)
    out = _prepare_out(cfg)
    tconf = _train_config(cfg)

    def factory(kind):
        return create_model(kind, dictionary.n_ent, dictionary.n_rel, cfg["dim"],
                            gamma=cfg["gamma"], alpha_mode=cfg["alpha_mode"],
                            seed=cfg["seed"])

    bench = training.benchmark_epoch_time(factory, store, tconf,
                                          epochs=cfg["bench_epochs"])
    with open(os.path.join(out, "epoch_times.tsv"), "w") as fh:
        fh.write("model\tseconds_per_epoch\n")
        for kind, secs in bench["seconds"].items():
            fh.write(f"{kind}\t{secs:.4f}\n")
        for name, ratio in bench["ratios"].items():
            fh.write(f"ratio:{name}\t{ratio:.4f}\n")
    plotting.plot_epoch_times(bench, os.path.join(out, "epoch_times.png"))
    for kind, secs in bench["seconds"].items():
        print(f"{kind}: {secs:.3f}s/epoch")
    for name, ratio in bench["ratios"].items():
        print(f"{name}: {ratio:.3f}")
    return 0


def cmd_sweep(cfg):
    dictionary, store, index = _load(cfg)
    out = _prepare_out(cfg)
    dims = [int(d) for d in str(cfg["dims"]).split(",")]
    for d in dims:
        if d % 2 != 0:
            raise UsageError("dimension must be even")
    tconf = _train_config(cfg)

    def factory(kind, dim):
        return create_model(kind, dictionary.n_ent, dictionary.n_rel, dim,
                            gamma=cfg["gamma"], alpha_mode=cfg["alpha_mode"],
                            seed=cfg["seed"])

    def train_fn(model):
        model, _ = training.train(model, store, tconf)
        return model

    rows = evaluation.dimension_sweep(factory, dims, store, index, train_fn)
    evaluation.write_sweep_csv(rows, os.path.join(out, "dimension_sweep.csv"))
    plotting.plot_dimension_sweep(rows, os.path.join(out, "dimension_sweep.png"))
    for row in rows:
        print(f"{row['kind']} d={row['dim']}: MRR {row['mrr']:.4f} "
              f"Hits@10 {row['hits@10']:.4f}")
    return 0


def cmd_export(cfg):
    out = _prepare_out(cfg)
    ckpt = cfg.get("checkpoint") or os.path.join(out, "checkpoint")
    if not os.path.isdir(ckpt):
        raise UsageError(f"checkpoint directory not found: {ckpt}")
    model, manifest = KGEModel.load_checkpoint(ckpt)
    export_dir = os.path.join(out, "export")
    os.makedirs(export_dir, exist_ok=True)
    names = {}
    for name, tensor in model.trainable_tensors().items():
        fname = f"{name}.f64"
        tensor.detach().numpy().astype("<f8").tofile(os.path.join(export_dir, fname))
        names[name] = {"file": fname, "shape": list(tensor.shape)}
    manifest = dict(manifest)
    manifest["tensors"] = names
    with open(os.path.join(export_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"exported {len(names)} tensors to {export_dir}")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "bench": cmd_bench,
            "sweep": cmd_sweep, "export": cmd_export}


def run(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    try:
        cfg = resolve_config(args)
        torch.set_num_threads(cfg["threads"])
        torch.manual_seed(cfg["seed"])
        np.random.seed(cfg["seed"])
        return COMMANDS[args.command](cfg)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except data_mod.DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, NumericError) as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
