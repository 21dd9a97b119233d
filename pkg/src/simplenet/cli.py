"""Command-line entry point: ``simplenet {train,eval,stats,lint,bench}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import bench as bench_mod
from . import lint as lint_mod
from . import stats as stats_mod
from .archspec import ArchError, load_arch
from .checkpoint import CheckpointError, load_ckpt, save_ckpt
from .data import AugmentConfig, DataError, compute_norm_stats, inputs, load_dataset, with_norm
from .network import build, evaluate
from .optim import TrainConfig, fit
from .tensor import NonFiniteError

log = logging.getLogger("simplenet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _shape(text):
    parts = text.lower().split("x")
    if len(parts) != 3 or not all(p.isdigit() and int(p) > 0 for p in parts):
        raise argparse.ArgumentTypeError(f"expected CxHxW, got {text!r}")
    return tuple(int(p) for p in parts)


def _augment(text):
    if text == "none":
        return None
    opts = set(text.split(","))
    if not opts <= {"pad-crop", "mirror"}:
        raise argparse.ArgumentTypeError(f"expected 'pad-crop,mirror' or 'none', got {text!r}")
    return opts


def _data_dir(args):
    if args.data:
        return args.data
    root = os.environ.get("SIMPLENET_DATA", "data")
    return os.path.join(root, args.dataset)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simplenet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_flags(p):
        p.add_argument("--dataset", required=True, choices=("mnist", "cifar10", "cifar100"))
        p.add_argument("--data", help="dataset directory (default $SIMPLENET_DATA/<dataset> or data/<dataset>)")
        p.add_argument("--batch", type=int, default=128, help="batch size")

    p = sub.add_parser("train", help="train a network and write checkpoint + CSV log")
    p.add_argument("--arch", required=True, help="preset name or architecture file")
    data_flags(p)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--lr", type=float, default=0.1, help="initial learning rate")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--wd", type=float, default=0.005, help="weight decay")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--augment", type=_augment, default=None,
                   help="'pad-crop,mirror' (any subset) or 'none' (default: none for mnist, both for cifar)")
    p.add_argument("--out", default="simplenet.ckpt", help="checkpoint path")
    p.add_argument("--log", default="train_log.csv", help="per-epoch CSV log path")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--ckpt", required=True, help="checkpoint written by train")
    data_flags(p)

    p = sub.add_parser("stats", help="analytic cost report")
    p.add_argument("--arch", required=True, action="append", help="preset or file; repeat to compare")
    p.add_argument("--input", type=_shape, help="override input shape CxHxW")
    p.add_argument("--format", choices=("table", "csv"), default="table")

    p = sub.add_parser("lint", help="check design rules P1-P6")
    p.add_argument("--arch", required=True, help="preset name or architecture file")
    p.add_argument("--format", choices=("table", "csv"), default="table")
    defaults = lint_mod.LintConfig()
    p.add_argument("--budget", type=int, default=defaults.param_budget, help="P6 parameter budget")
    p.add_argument("--max-widths", type=int, default=defaults.max_distinct_widths, help="P2 distinct widths")
    p.add_argument("--max-singletons", type=float, default=defaults.max_singleton_fraction,
                   help="P2 fraction of convs in singleton groups")
    p.add_argument("--early-1x1", type=float, default=defaults.early_1x1_fraction,
                   help="P3 early-depth fraction")
    p.add_argument("--min-convs-before-pool", type=int, default=defaults.min_convs_before_pool, help="P4")
    p.add_argument("--max-early-downsample", type=int, default=defaults.max_early_downsample, help="P4")
    p.add_argument("--large-kernel", type=int, default=defaults.large_kernel, help="P5 warn threshold")

    p = sub.add_parser("bench", help="CPU kernel-size throughput table")
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--size", type=int, default=32, help="spatial extent")
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load_data(args):
    train, test = load_dataset(args.dataset, _data_dir(args))
    mean, std = compute_norm_stats(train)
    return with_norm(train, mean, std), with_norm(test, mean, std)


def cmd_train(args, out):
    spec = load_arch(args.arch)
    train, test = _load_data(args)
    if tuple(train.images.shape[1:]) != tuple(spec.input):
        raise UsageError(f"architecture expects input {spec.input}, dataset has {train.images.shape[1:]}")
    augment = args.augment
    if augment is None and args.dataset != "mnist":
        augment = {"pad-crop", "mirror"}
    aug_cfg = None
    if augment:
        size = spec.input[1]
        aug_cfg = AugmentConfig(pad=4 if "pad-crop" in augment else 0, crop=size, mirror="mirror" in augment)
    cfg = TrainConfig(lr0=args.lr, momentum=args.momentum, weight_decay=args.wd, batch=args.batch,
                      epochs=args.epochs, seed=args.seed, augment=aug_cfg)
    net = build(spec, args.seed)
    print("epoch,lr,train_loss,train_acc,test_acc,seconds", file=out)
    fit(net, train, test, cfg, log_path=args.log,
        on_epoch=lambda row: print(",".join(str(v) for v in row.values()), file=out, flush=True))
    save_ckpt(net, args.out)
    log.info("wrote %s and %s", args.out, args.log)


def cmd_eval(args, out):
    net = load_ckpt(args.ckpt)
    _, test = _load_data(args)
    acc, loss = evaluate(net, inputs(test), test.labels, args.batch)
    print(f"top1_accuracy,{acc!r}\nmean_loss,{loss!r}", file=out)


def cmd_stats(args, out):
    reports = [stats_mod.analyze(load_arch(ref), args.input) for ref in args.arch]
    out.write(stats_mod.compare(reports, args.format))


def cmd_lint(args, out):
    cfg = lint_mod.LintConfig(
        max_distinct_widths=args.max_widths, max_singleton_fraction=args.max_singletons,
        early_1x1_fraction=args.early_1x1, min_convs_before_pool=args.min_convs_before_pool,
        max_early_downsample=args.max_early_downsample, large_kernel=args.large_kernel,
        param_budget=args.budget,
    )
    report = lint_mod.lint(load_arch(args.arch), cfg)
    render = lint_mod.render_csv if args.format == "csv" else lint_mod.render_table
    out.write(render(report))


def cmd_bench(args, out):
    rows = bench_mod.run_bench(args.channels, args.size, args.batch, args.reps, args.seed)
    out.write(bench_mod.render(rows))


COMMANDS = dict(train=cmd_train, eval=cmd_eval, stats=cmd_stats, lint=cmd_lint, bench=cmd_bench)


def run(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = make_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args, out)
    except (UsageError, ArchError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main():
    sys.exit(run())
