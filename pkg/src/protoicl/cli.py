"""Command-line entry point: ``protoicl <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, dump_config, load_config
from .data import generate_synthetic, load_dataset, save_dataset
from .errors import ProtoICLError
from .fsutil import atomic_write_text

log = logging.getLogger("protoicl")


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(train={"seed": args.seed})
    if getattr(args, "class_order", None):
        cfg = cfg.replace(data={"class_order": args.class_order})
    return cfg


def _datasets(cfg: RunConfig):
    if cfg.data.train_path is None:
        return generate_synthetic(cfg.synth)
    train = load_dataset(cfg.data.train_path, "train")
    test = load_dataset(cfg.data.test_path, "test", num_classes=train.num_classes)
    if train.dim != test.dim:
        raise ProtoICLError("train and test embeddings have different dimensions")
    return train, test


def _write_json(path: Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2) + "\n")


def metrics_csv(metrics) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["session_index", "alpha_base", "alpha_new", "alpha_all"])
    for row in metrics.trace():
        w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    return buf.getvalue()


def cmd_gen_synth(args) -> int:
    cfg = _load_cfg(args)
    train, test = generate_synthetic(cfg.synth)
    out = Path(args.out)
    ext = ".csv" if args.format == "csv" else ".picl"
    save_dataset(train, out / f"train{ext}")
    save_dataset(test, out / f"test{ext}")
    print(f"wrote {len(train)} train / {len(test)} test samples ({train.dim}-D, {train.num_classes} classes) to {out}")
    return 0


def cmd_joint(args) -> int:
    from .trainer import train_joint

    cfg = _load_cfg(args)
    train, test = _datasets(cfg)
    alpha = train_joint(train, test, cfg)
    if args.out:
        _write_json(Path(args.out) / "joint.json", {"alpha_ideal": alpha})
    print(f"alpha_ideal {alpha:.6f}")
    return 0


def cmd_run(args) -> int:
    from .trainer import run_stream, train_joint

    cfg = _load_cfg(args)
    out = Path(args.out)
    atomic_write_text(out / "config.toml", dump_config(cfg))
    train, test = _datasets(cfg)
    alpha_ideal = cfg.eval.alpha_ideal
    if alpha_ideal is None:
        alpha_ideal = train_joint(train, test, cfg)
        log.info("measured alpha_ideal = %.4f", alpha_ideal)
    ckdir = out / "checkpoints" if args.checkpoints else None

    def report(rec):
        log.info("session %d: base %.4f new %.4f all %.4f", rec.session_index,
                 rec.alpha_base, rec.alpha_new, rec.alpha_all)

    metrics = run_stream(train, test, cfg, checkpoint_dir=ckdir, resume_from=args.resume, on_session=report)
    atomic_write_text(out / "metrics.csv", metrics_csv(metrics))
    summary = metrics.to_dict(alpha_ideal)
    _write_json(out / "metrics.json", summary)
    if metrics.records:
        print(f"T={summary['T']} psi_base {summary['psi_base']:.4f} psi_new {summary['psi_new']:.4f} "
              f"psi_all {summary['psi_all']:.4f} (alpha_ideal {alpha_ideal:.4f})")
    return 0


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .metrics import accuracy
    from .prototypes import encode_in_batches, predict_batch

    cfg = _load_cfg(args)
    _, test = _datasets(cfg)
    ck = load_checkpoint(args.checkpoint)
    seen = ck.store.class_ids
    xs, ys = test.of_classes(seen)
    preds = predict_batch(ck.store, encode_in_batches(ck.net, xs))
    result = {"classes": seen, "accuracy_all_seen": accuracy(preds, ys),
              "per_class": {str(c): accuracy(preds[ys == c], ys[ys == c]) for c in seen}}
    if args.out:
        _write_json(Path(args.out) / "eval.json", result)
    print(json.dumps(result, indent=2))
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    reports = run_suite(seed=args.seed or 0, tol=args.tol)
    ok = True
    for name, rep in reports.items():
        ok &= rep.passed
        print(f"{'PASS' if rep.passed else 'FAIL'} {name:12s} max rel err {rep.max_rel_error:.3e} "
              f"({rep.n_checked} params)")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="protoicl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="TOML run configuration")
        sp.add_argument("--seed", type=int, help="override train.seed")
        sp.add_argument("--class-order", help="'ascending' or 'shuffled:<seed>'")

    sp = sub.add_parser("gen-synth", help="write a synthetic embedding dataset")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", choices=("picl", "csv"), default="picl")
    sp.set_defaults(func=cmd_gen_synth)

    sp = sub.add_parser("run", help="train and evaluate a full continual stream")
    common(sp, config_required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--checkpoints", action="store_true", help="save a checkpoint after every task")
    sp.add_argument("--resume", help="checkpoint to resume from")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("joint", help="offline joint training; prints alpha_ideal")
    common(sp, config_required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_joint)

    sp = sub.add_parser("eval", help="re-evaluate a checkpoint on the test split")
    common(sp, config_required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every loss gradient")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ProtoICLError as exc:
        print(f"protoicl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
