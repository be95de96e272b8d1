"""Command-line entry point: ``fcncd simulate|train|eval|diagnose|bench``.

Exit status is 0 on success, 2 for bad input (missing files, invalid
datasets or configs, incompatible checkpoints) and 1 for anything else.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import BaselineKind, make_baseline
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import DatasetError, load_dataset
from .model import VARIANTS, build_variant
from .simulator import SimConfig, write_simulation
from .training import PROFILES, make_split

logger = logging.getLogger("fcncd")

MODEL_KINDS = ["fcncd"] + [k.value for k in BaselineKind]
HYPERPARAMS = ("lam", "batch_size", "lr", "max_epochs", "patience", "train_fraction", "split", "weight_decay")


class UserError(Exception):
    """Bad input; reported without a traceback and exit status 2."""


def make_model(kind: str, variant: str = "full", seed: int = 0, profile: str | None = None, **overrides):
    """Estimator for a model name such as ``fcncd``, ``fcncd-mo`` or ``ncdm-r``."""
    if kind.startswith("fcncd-"):
        kind, variant = "fcncd", kind[len("fcncd-"):]
    kw = dict(PROFILES[profile]) if profile else {}
    kw.update({k: v for k, v in overrides.items() if v is not None})
    kw["seed"] = seed
    if kind == "fcncd":
        if variant not in VARIANTS:
            raise UserError(f"unknown variant {variant!r}; choose from {', '.join(sorted(VARIANTS))}")
        return build_variant(variant, **kw)
    if variant != "full":
        raise UserError("--variant applies to fcncd only")
    try:
        return make_baseline(kind, **kw)
    except ValueError:
        raise UserError(f"unknown model {kind!r}; choose from {', '.join(MODEL_KINDS)}") from None


def _load(path):
    try:
        return load_dataset(path)
    except FileNotFoundError as exc:
        raise UserError(str(exc)) from None


def _check_shapes(model, dataset):
    if (dataset.n_participants, dataset.n_dims, dataset.n_items) != (
            model.n_participants_, model.n_dims_, model.n_items_):
        raise UserError(
            f"checkpoint was fitted on N={model.n_participants_}, K={model.n_dims_}, M={model.n_items_}; "
            f"dataset has N={dataset.n_participants}, K={dataset.n_dims}, M={dataset.n_items}")


def _write_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _report(model, dataset, held_out: bool, per_block: bool = False):
    """EvalReport on the held-out split (or all records); DOA always uses every record."""
    target = dataset.subset(~make_split(dataset, model.train_config())) if held_out else dataset
    return model.evaluate(target, doa_dataset=dataset, per_block=per_block)


# --------------------------------------------------------------------------


def cmd_simulate(args):
    try:
        config = SimConfig.from_json(args.config) if args.config else SimConfig()
    except FileNotFoundError as exc:
        raise UserError(f"config file not found: {exc.filename}") from None
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    manifest = write_simulation(config, args.out)
    man = json.loads(manifest.read_text())
    print(f"participants={man['n_participants']} items={man['n_items']} blocks={man['n_blocks']} "
          f"dimensions={man['n_dims']} items_per_block={man['items_per_block']} "
          f"block_type={man['block_type']} responses={man['n_records']}")
    print(f"manifest: {manifest}")


def cmd_train(args):
    dataset = _load(args.dataset)
    model = make_model(args.model, args.variant, args.seed, args.profile,
                       **{k: getattr(args, k) for k in HYPERPARAMS})
    model.fit(dataset)
    out = Path(args.out)
    save_checkpoint(model, out)
    history = Path(args.history) if args.history else out.with_suffix(".history.csv")
    with open(history, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "pra", "lra"])
        for row in model.history_:
            w.writerow([row["epoch"], repr(row["loss"]), repr(row["pra"]), repr(row["lra"])])
    report = _report(model, dataset, held_out=True)
    _write_json(report.to_dict(), args.report or out.with_suffix(".report.json"))
    print(f"best epoch {getattr(model, 'best_epoch_', 0)}: held-out pra={report.pra:.4f} lra={report.lra:.4f}"
          + (f" doa={report.doa:.4f}" if report.doa is not None else ""))


def cmd_eval(args):
    model = load_checkpoint(args.checkpoint)
    dataset = _load(args.dataset)
    _check_shapes(model, dataset)
    report = _report(model, dataset, args.held_out, per_block=bool(args.per_block))
    if args.per_block:
        with open(args.per_block, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["participant_id", "block_id", "pair_accuracy", "exact"])
            for row in report.per_block:
                w.writerow([row["participant_id"], row["block_id"], repr(row["pair_accuracy"]), int(row["exact"])])
    _write_json(report.to_dict(), args.out)


def cmd_diagnose(args):
    model = load_checkpoint(args.checkpoint)
    dataset = _load(args.dataset)
    _check_shapes(model, dataset)
    if not model.interpretable:
        raise UserError(f"{type(model).__name__} has no per-dimension abilities")
    for p in args.participants:
        if not 0 <= p < dataset.n_participants:
            raise UserError(f"unknown participant {p} (dataset has ids 0..{dataset.n_participants - 1})")
    abilities = model.transform()
    scores = model.decision_function(dataset)
    predicted = model.predict(dataset)
    items = dataset.record_items()
    report = []
    for p in args.participants:
        rows = np.flatnonzero(dataset.participants == p)
        report.append({
            "participant_id": p,
            "abilities": [float(x) for x in abilities[p]],
            "blocks": [
                {
                    "block_id": int(dataset.block_ids[r]),
                    "items": items[r].tolist(),
                    "scores": [float(s) for s in scores[r]],
                    "predicted": predicted[r].tolist(),
                    "actual": dataset.ranks[r].tolist(),
                }
                for r in rows
            ],
        })
    _write_json({"model": type(model).__name__, "participants": report}, args.out)


def cmd_bench(args):
    dataset = _load(args.dataset)
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    for name in models:
        make_model(name)  # reject unknown names before any training
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "pra", "lra", "doa", "seed_count"])
        fh.flush()
        for name in models:
            runs = []
            for r in range(args.repeats):
                model = make_model(name, seed=args.seed + r, profile=args.profile, max_epochs=args.max_epochs)
                model.fit(dataset)
                runs.append(_report(model, dataset, held_out=True))
                logger.info("%s seed %d: pra %.4f lra %.4f", name, args.seed + r, runs[-1].pra, runs[-1].lra)
            doas = [x.doa for x in runs if x.doa is not None]
            w.writerow([
                name,
                f"{np.mean([x.pra for x in runs]):.6f}",
                f"{np.mean([x.lra for x in runs]):.6f}",
                f"{np.mean(doas):.6f}" if doas else "",
                len(runs),
            ])
            fh.flush()
    print(out.read_text(), end="")


# --------------------------------------------------------------------------


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcncd", description="Forced-choice cognitive diagnosis.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a simulated MOLE/RANK dataset with ground truth")
    p.add_argument("--config", help="JSON simulation config (defaults to N=1000, K=24, M=480, L=120, t=4, MOLE)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit a model and write checkpoint, history and report")
    p.add_argument("--dataset", required=True, help="dataset manifest.json")
    p.add_argument("--model", default="fcncd", help=f"one of {', '.join(MODEL_KINDS)}")
    p.add_argument("--variant", default="full", choices=sorted(VARIANTS))
    p.add_argument("--profile", choices=sorted(PROFILES), help="preset lambda, batch size and learning rate")
    p.add_argument("--lam", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=_positive_int)
    p.add_argument("--lr", type=float)
    p.add_argument("--max-epochs", dest="max_epochs", type=_positive_int)
    p.add_argument("--patience", type=_positive_int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--split", choices=["response", "block"])
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="per-epoch CSV (default: <out>.history.csv)")
    p.add_argument("--report", help="held-out EvalReport JSON (default: <out>.report.json)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PRA/LRA/DOA of a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--held-out", action="store_true", help="score only the records held out during training")
    p.add_argument("--per-block", help="write per-record diagnostics CSV here")
    p.add_argument("--out", help="report path (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diagnose", help="ability profiles and block rankings for participants")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--participants", required=True, type=int, nargs="+")
    p.add_argument("--out", help="report path (default: stdout)")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("bench", help="leaderboard of several models averaged over seeds")
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", default="random,mf,ranknet,ncdm-r,mupp-2pl,fcncd",
                   help="comma-separated model names; fcncd-<variant> selects an ablation")
    p.add_argument("--repeats", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=0, help="first seed; repeat r uses seed + r")
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--max-epochs", dest="max_epochs", type=_positive_int)
    p.add_argument("--out", required=True, help="leaderboard CSV")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (UserError, DatasetError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # invalid configs and datasets surface as ValueError from validation
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
