"""Command-line entry point: ``corrattack {train,attack,sweep-midpoint,nacf,report}``."""

import argparse
import logging
from pathlib import Path
import sys

from . import harness
from .data import load_ucr
from .errors import CorrAttackError

log = logging.getLogger("corrattack")


def _common(p):
    p.add_argument("config", help="experiment config file (INI)")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--eps", type=float, help="override eps for every attack")
    p.add_argument("--budget", type=int, help="override the iteration budget for every attack")


def _config(args):
    cfg = harness.load_config(args.config)
    return cfg.with_overrides(
        seed=args.seed,
        out_dir=args.out,
        eps=args.eps,
        budget=args.budget,
        workers=getattr(args, "workers", None),
        checkpoint=getattr(args, "checkpoint", None),
    )


def cmd_train(args):
    cfg = _config(args)
    model, history, test_acc = harness.train_only(cfg)
    log.info("trained %s: final loss %.6g, test accuracy %.4f -> %s", cfg.arch, history.loss[-1], test_acc, cfg.out_dir)


def cmd_attack(args):
    cfg = _config(args)
    if not cfg.attacks:
        raise CorrAttackError("config has no [attack.N] sections")
    out = harness.run_experiment(cfg)
    log.info("test accuracy %.4f", out.test_accuracy)
    for row in out.summary_rows:
        log.info("%-8s eligible=%s asr=%s msd=%s", row["attack"], row["eligible"], row["asr"], row["msd"])
    log.info("wrote %d files to %s", len(out.files), cfg.out_dir)


def cmd_sweep(args):
    cfg = _config(args)
    _, text = harness.run_sweep(cfg, num_points=args.points)
    sys.stdout.write(text)


def cmd_nacf(args):
    if args.ucr:
        series = load_ucr(args.ucr).series[args.index]
        out_dir = args.out or "out"
        seed = args.seed or 0
    else:
        cfg = _config(args)
        data = harness.build_dataset(cfg)
        series = (data.test if args.split == "test" else data.train)[args.index]
        out_dir, seed = cfg.out_dir, cfg.seed
    bundle = harness.emit_nacf_dump(series, args.sigma, seed, (args.fit_lo, args.fit_hi), out_dir=out_dir)
    sys.stdout.write(bundle["nacf_fit.csv"])


def cmd_report(args):
    rows_a = harness.read_summary(args.a)
    rows_b = harness.read_summary(args.b or args.a)
    if args.attack_a:
        rows_a = [r for r in rows_a if r["attack"] == args.attack_a]
    if args.attack_b:
        rows_b = [r for r in rows_b if r["attack"] == args.attack_b]
    text = harness.emit_scatter(rows_a, rows_b, args.metric)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser():
    parser = argparse.ArgumentParser(prog="corrattack", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and save model.npz")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="train (or load) a model and run every configured attack")
    _common(p)
    p.add_argument("--workers", type=int, help="parallel attack workers")
    p.add_argument("--checkpoint", help="attack this saved model instead of training")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sweep-midpoint", help="ASR of the wcs attack over log-spaced midpoints")
    _common(p)
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--workers", type=int)
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("nacf", help="dump NACF diagnostics for one series and a noisy copy")
    p.add_argument("config", nargs="?", help="experiment config (dataset section is used)")
    p.add_argument("--ucr", help="read the series from a UCR file instead of a config")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--sigma", type=float, default=0.1, help="white-noise std for the noisy copy")
    p.add_argument("--fit-lo", type=int, default=1)
    p.add_argument("--fit-hi", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--eps", type=float, help=argparse.SUPPRESS)
    p.add_argument("--budget", type=int, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_nacf)

    p = sub.add_parser("report", help="pair two summary CSVs into scatter data")
    p.add_argument("--a", required=True, help="summary.csv for the x axis")
    p.add_argument("--b", help="summary.csv for the y axis (defaults to --a)")
    p.add_argument("--attack-a", help="keep only this attack from A")
    p.add_argument("--attack-b", help="keep only this attack from B")
    p.add_argument("--metric", choices=("asr", "msd"), default="asr")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    if args.command == "nacf" and not (args.config or args.ucr):
        parser.error("nacf needs a config file or --ucr")
    try:
        args.func(args)
    except CorrAttackError as exc:
        log.error("error: %s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
