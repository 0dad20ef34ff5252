"""Command-line interface.

Subcommands: gen-toy, train, eval, sweep-beam, unsup. Every command is
deterministic given its flags: reruns with the same arguments produce
byte-identical files and stdout. A JSON config file (--config) may supply any
optional flag by its destination name; explicit flags win, unknown keys are
rejected.
"""

import argparse
import json
import os
import sys
from types import SimpleNamespace

import numpy as np

from .constraints import parse_dimacs, serialize_dimacs
from .data import (
    LabeledSet,
    ToySpec,
    dataset_to_csv,
    gen_toy,
    parse_arff_lite,
    parse_csv_dataset,
    split,
    split_unsupervised,
)
from .errors import ContractError, SeqLabelError
from .inference import DEFAULT_BEAM_WIDTH
from .model import BaseSeqModel, SeqOnlyModel, load_bundle, save_bundle
from .nnet import DenseNet, TrainConfig
from .pipeline import (
    DecoderSpec,
    SWEEP_WIDTHS,
    TRAIN_BEAM_WIDTH,
    base_train_config,
    evaluate,
    history_to_csv,
    seq_train_config,
    sweep_beam,
    sweep_to_csv,
    train_base_stage,
    train_seq_stage,
    train_with_constraint_loss,
    train_with_pseudo_labels,
)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError:
        raise ContractError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError:
        raise ContractError(f"expected comma-separated numbers, got {text!r}") from None


def _labels_arg(text: str):
    text = str(text).strip()
    if text.replace("-", "").isdigit():
        return int(text)
    return [name.strip() for name in text.split(",") if name.strip()]


def _load_dataset(path: str, labels):
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    if path.lower().endswith(".arff"):
        return parse_arff_lite(text, labels)
    if not isinstance(labels, int):
        raise ContractError("CSV datasets take a label count, not label names")
    return parse_csv_dataset(text, labels)


def _print_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_text(path: str, text: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def _train_config(args, prefix: str, factory) -> TrainConfig:
    return factory(
        learning_rate=getattr(args, f"{prefix}_lr"),
        weight_decay=getattr(args, f"{prefix}_weight_decay"),
        dropout_rate=getattr(args, f"{prefix}_dropout"),
        batch_size=getattr(args, f"{prefix}_batch_size"),
        max_epochs=args.max_epochs,
        patience=args.patience,
        rng_seed=args.seed,
    )


def _split_from_args(args, ds):
    sd = split(ds, _float_list(args.split), args.seed)
    return sd


def _train_model(args, sd, n, m):
    """Run the configured stages; returns (model, histories dict)."""
    label_order = (
        np.asarray(_int_list(args.label_order))
        if args.label_order is not None
        else np.arange(n, dtype=np.int64)
    )
    seq_cfg = _train_config(args, "seq", seq_train_config)
    hidden = _int_list(args.hidden)
    histories = {}
    rng = np.random.default_rng(args.seed + 1)
    if args.mode == "base-seq":
        base_cfg = _train_config(args, "base", base_train_config)
        base, histories["base"] = train_base_stage(sd, _int_list(args.base_hidden), base_cfg)
        cond = DenseNet.init([3 * n, *hidden, 1], rng)
        model = BaseSeqModel(base, cond, label_order)
    else:
        cond = DenseNet.init([m + 2 * n, *hidden, 1], rng)
        model = SeqOnlyModel(cond, n, label_order)
    model, histories["seq"] = train_seq_stage(sd, model, seq_cfg)
    return model, histories


def _write_histories(args, histories) -> None:
    if args.history_dir is None:
        return
    for stage, history in histories.items():
        _write_text(os.path.join(args.history_dir, f"{stage}_history.csv"), history_to_csv(history))


def cmd_gen_toy(args) -> int:
    spec = ToySpec(
        scenario=args.scenario,
        n_samples=args.n,
        seed=args.seed,
        rect1=tuple(_float_list(args.rect1)) if args.rect1 is not None else None,
        rect2=tuple(_float_list(args.rect2)) if args.rect2 is not None else None,
    )
    ds, cs = gen_toy(spec)
    data_path = os.path.join(args.out, "data.csv")
    cnf_path = os.path.join(args.out, "constraints.cnf")
    _write_text(data_path, dataset_to_csv(ds))
    _write_text(cnf_path, serialize_dimacs(cs))
    _print_json(
        {
            "constraints": cnf_path,
            "data": data_path,
            "rows": len(ds),
            "scenario": args.scenario,
            "seed": args.seed,
        }
    )
    return 0


def cmd_train(args) -> int:
    ds = _load_dataset(args.data, _labels_arg(args.labels))
    sd = _split_from_args(args, ds)
    model, histories = _train_model(args, sd, ds.n_labels, ds.n_features)
    parent = os.path.dirname(args.out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_bundle(model, args.out)
    _write_histories(args, histories)
    summary = {
        "bundle": args.out,
        "mode": args.mode,
        "n_labels": ds.n_labels,
        "n_features": ds.n_features,
        "rows": {"train": len(sd.train_supervised), "validation": len(sd.validation), "test": len(sd.test)},
        "seed": args.seed,
    }
    for stage, history in histories.items():
        summary[f"{stage}_epochs"] = len(history)
        summary[f"{stage}_best_valid_loss"] = min(e.valid_loss for e in history) if history else None
    _print_json(summary)
    return 0


def _eval_args_common(args, model):
    ds = _load_dataset(args.data, _labels_arg(args.labels))
    if args.split is not None:
        test = _split_from_args(args, ds).test
    else:
        test = None
    cs = None
    if args.constraints is not None:
        with open(args.constraints, "r", encoding="utf-8") as f:
            cs = parse_dimacs(f.read())
        if cs.n_vars != model.n:
            raise ContractError(
                f"constraint set covers {cs.n_vars} variables, model has {model.n} labels"
            )
    if test is None:
        test = LabeledSet(ds.X, ds.Y)
    return test, cs


def cmd_eval(args) -> int:
    model = load_bundle(args.model)
    test, cs = _eval_args_common(args, model)
    decoder = DecoderSpec(args.decoder, args.k)
    ks = _int_list(args.topk) if args.topk is not None else None
    report = evaluate(model, cs, test, decoder, ks=ks, seed=args.seed)
    text = report.to_json()
    sys.stdout.write(text)
    if args.out is not None:
        _write_text(args.out, text)
    return 0


def cmd_sweep_beam(args) -> int:
    model = load_bundle(args.model)
    test, cs = _eval_args_common(args, model)
    rows = sweep_beam(model, cs, test, widths=_int_list(args.widths), seed=args.seed)
    text = sweep_to_csv(rows)
    sys.stdout.write(text)
    if args.out is not None:
        _write_text(args.out, text)
    return 0


def cmd_unsup(args) -> int:
    ds = _load_dataset(args.data, _labels_arg(args.labels))
    with open(args.constraints, "r", encoding="utf-8") as f:
        cs = parse_dimacs(f.read())
    if cs.n_vars != ds.n_labels:
        raise ContractError(
            f"constraint set covers {cs.n_vars} variables, dataset has {ds.n_labels} labels"
        )
    sd = _split_from_args(args, ds)
    sd = split_unsupervised(sd, args.ratio, args.seed)
    model, histories = _train_model(args, sd, ds.n_labels, ds.n_features)
    decoder = DecoderSpec(args.decoder, args.k)
    before = evaluate(model, cs, sd.test, decoder, seed=args.seed)
    seq_cfg = _train_config(args, "seq", seq_train_config)
    retained = None
    if args.method == "pseudo":
        model2, history, pl = train_with_pseudo_labels(sd, model, cs, seq_cfg, args.beam_width)
        retained = len(pl)
        histories["round2"] = history
    else:
        model2, history = train_with_constraint_loss(
            sd, model, cs, seq_cfg, args.lam, args.beam_width
        )
        histories["round2"] = history
    after = evaluate(model2, cs, sd.test, decoder, seed=args.seed)
    if args.out is not None:
        parent = os.path.dirname(args.out)
        if parent:
            os.makedirs(parent, exist_ok=True)
        save_bundle(model2, args.out)
    _write_histories(args, histories)
    summary = {
        "method": args.method,
        "ratio": args.ratio,
        "unsupervised_rows": int(len(sd.train_unsupervised)),
        "retained": retained,
        "lambda": args.lam if args.method == "constraint" else None,
        "supervised": before.to_dict(),
        "retrained": after.to_dict(),
        "seed": args.seed,
    }
    _print_json(summary)
    return 0


def _add_common_train_flags(p, defaults):
    names = {
        "seed": ("--seed", int, "RNG seed for splits, init, and training"),
        "split": ("--split", str, "train,validation,test fractions"),
        "mode": ("--mode", str, "base-seq or seq-only"),
        "hidden": ("--hidden", str, "conditioning net hidden sizes"),
        "base_hidden": ("--base-hidden", str, "marginal net hidden sizes"),
        "label_order": ("--label-order", str, "decode positions as dataset columns, e.g. 2,0,1"),
        "max_epochs": ("--max-epochs", int, "epoch cap per stage"),
        "patience": ("--patience", int, "early-stopping patience"),
        "base_lr": ("--base-lr", float, "marginal net learning rate"),
        "base_weight_decay": ("--base-weight-decay", float, "marginal net weight decay"),
        "base_dropout": ("--base-dropout", float, "marginal net dropout rate"),
        "base_batch_size": ("--base-batch-size", int, "marginal net batch size"),
        "seq_lr": ("--seq-lr", float, "conditioning net learning rate"),
        "seq_weight_decay": ("--seq-weight-decay", float, "conditioning net weight decay"),
        "seq_dropout": ("--seq-dropout", float, "conditioning net dropout rate"),
        "seq_batch_size": ("--seq-batch-size", int, "conditioning net batch size"),
        "history_dir": ("--history-dir", str, "write per-stage training history CSVs here"),
    }
    for dest, (flag, typ, help_text) in names.items():
        if dest in defaults:
            p.add_argument(flag, dest=dest, type=typ, default=argparse.SUPPRESS, help=help_text)


TRAIN_DEFAULTS = {
    "seed": 0,
    "split": "0.35,0.15,0.5",
    "mode": "base-seq",
    "hidden": "300,300",
    "base_hidden": "64,64",
    "label_order": None,
    "max_epochs": 200,
    "patience": 20,
    "base_lr": 1e-4,
    "base_weight_decay": 1e-4,
    "base_dropout": 0.8,
    "base_batch_size": 4,
    "seq_lr": 1e-3,
    "seq_weight_decay": 1e-3,
    "seq_dropout": 0.1,
    "seq_batch_size": 16,
    "history_dir": None,
}

EVAL_DEFAULTS = {
    "seed": 0,
    "split": None,
    "constraints": None,
    "decoder": "beam",
    "k": DEFAULT_BEAM_WIDTH,
    "topk": None,
    "out": None,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqlabel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    defaults_by_cmd = {}

    p = sub.add_parser("gen-toy", help="generate the synthetic rectangle dataset")
    p.add_argument("--scenario", required=True, choices=["complete", "partial", "disjoint"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, default=argparse.SUPPRESS, help="sample count")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--rect1", type=str, default=argparse.SUPPRESS, help="x0,x1,y0,y1")
    p.add_argument("--rect2", type=str, default=argparse.SUPPRESS, help="x0,x1,y0,y1")
    p.add_argument("--config", type=str, default=argparse.SUPPRESS, help="JSON file of flag values")
    p.set_defaults(func=cmd_gen_toy)
    defaults_by_cmd["gen-toy"] = {"n": 10000, "seed": 0, "rect1": None, "rect2": None}

    p = sub.add_parser("train", help="train a model on a labeled dataset")
    p.add_argument("--data", required=True, help="dataset file (.csv or .arff)")
    p.add_argument("--labels", required=True, help="label count or comma-separated names")
    p.add_argument("--out", required=True, help="model bundle path")
    p.add_argument("--config", type=str, default=argparse.SUPPRESS, help="JSON file of flag values")
    _add_common_train_flags(p, TRAIN_DEFAULTS)
    p.set_defaults(func=cmd_train)
    defaults_by_cmd["train"] = dict(TRAIN_DEFAULTS)

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--model", required=True, help="model bundle path")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--config", type=str, default=argparse.SUPPRESS)
    p.add_argument("--split", type=str, default=argparse.SUPPRESS, help="evaluate the test part of this split")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--constraints", type=str, default=argparse.SUPPRESS, help="DIMACS CNF file")
    p.add_argument("--decoder", type=str, default=argparse.SUPPRESS, choices=["beam", "beam-sat", "exact", "greedy", "base"])
    p.add_argument("--k", type=int, default=argparse.SUPPRESS, help="beam width / candidate count")
    p.add_argument("--topk", type=str, default=argparse.SUPPRESS, help="comma-separated k values to report")
    p.add_argument("--out", type=str, default=argparse.SUPPRESS, help="also write the report here")
    p.set_defaults(func=cmd_eval)
    defaults_by_cmd["eval"] = dict(EVAL_DEFAULTS)

    p = sub.add_parser("sweep-beam", help="evaluate the beam decoder at several widths")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--config", type=str, default=argparse.SUPPRESS)
    p.add_argument("--split", type=str, default=argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--constraints", type=str, default=argparse.SUPPRESS)
    p.add_argument("--widths", type=str, default=argparse.SUPPRESS, help="comma-separated beam widths")
    p.add_argument("--out", type=str, default=argparse.SUPPRESS, help="also write the CSV here")
    p.set_defaults(func=cmd_sweep_beam)
    defaults_by_cmd["sweep-beam"] = {
        "seed": 0,
        "split": None,
        "constraints": None,
        "widths": ",".join(str(w) for w in SWEEP_WIDTHS),
        "out": None,
    }

    p = sub.add_parser("unsup", help="weak supervision: pseudo-labels or constraint loss")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--constraints", required=True, help="DIMACS CNF file")
    p.add_argument("--ratio", type=float, required=True, help="fraction of training rows left unlabeled")
    p.add_argument("--method", required=True, choices=["pseudo", "constraint"])
    p.add_argument("--config", type=str, default=argparse.SUPPRESS)
    p.add_argument("--lambda", dest="lam", type=float, default=argparse.SUPPRESS, help="constraint loss weight")
    p.add_argument("--beam-width", type=int, default=argparse.SUPPRESS, help="beam width during training")
    p.add_argument("--decoder", type=str, default=argparse.SUPPRESS, choices=["beam", "beam-sat", "exact", "greedy", "base"])
    p.add_argument("--k", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out", type=str, default=argparse.SUPPRESS, help="save the retrained bundle here")
    _add_common_train_flags(p, TRAIN_DEFAULTS)
    p.set_defaults(func=cmd_unsup)
    defaults_by_cmd["unsup"] = dict(
        TRAIN_DEFAULTS,
        lam=1.0,
        beam_width=TRAIN_BEAM_WIDTH,
        decoder="beam",
        k=DEFAULT_BEAM_WIDTH,
        out=None,
    )

    parser.set_defaults(_defaults_by_cmd=defaults_by_cmd)
    return parser


def _merge_config(args: argparse.Namespace) -> SimpleNamespace:
    ns = vars(args).copy()
    defaults = ns.pop("_defaults_by_cmd")[ns["command"]]
    merged = dict(defaults)
    config_path = ns.pop("config", None)
    if config_path is not None:
        with open(config_path, "r", encoding="utf-8") as f:
            try:
                loaded = json.load(f)
            except json.JSONDecodeError as exc:
                raise ContractError(f"bad config file: {exc}") from None
        if not isinstance(loaded, dict):
            raise ContractError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise ContractError(f"unknown config keys: {unknown}")
        merged.update(loaded)
    merged.update({k: v for k, v in ns.items() if k not in ("func", "command")})
    merged["func"] = ns["func"]
    merged["command"] = ns["command"]
    return SimpleNamespace(**merged)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        merged = _merge_config(args)
        return merged.func(merged)
    except (SeqLabelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
