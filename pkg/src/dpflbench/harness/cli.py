"""Command line entry point.

Exit codes: 0 success, 1 validation/usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from ..data import PartitionSpec, load_corpus, partition, split_train_test, synth_corpus
from ..dp.accountant import DEFAULT_ORDERS, calibrate_sigma, epsilon_spent, DpConfig
from ..dp.verify import load_fixture, verify_dp_enumeration
from ..errors import BenchError, ValidationError
from .config import load_config
from .experiment import aggregate, run_experiment
from .report import format_table, read_raw

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _float(text: str) -> float:
    return math.inf if text.strip().lower() in ("inf", "infinity") else float(text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpflbench", description="Benchmark DP training, federated learning and DP-FL on text classification.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run an experiment grid and write result files")
    p.add_argument("--config", required=True, help="config file, or 'demo' / 'full_protocol'")
    p.add_argument("--output-dir", help="overrides experiment.output_dir")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("table", help="re-aggregate a raw accuracy log into a table")
    p.add_argument("--raw", required=True, help="raw_accuracies.csv from a run")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--output", help="write here instead of stdout")

    p = sub.add_parser("calibrate", help="noise multiplier for a target epsilon")
    p.add_argument("--epsilon", type=_float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--q", type=float, required=True, help="Poisson sampling rate")
    p.add_argument("--steps", type=int, required=True)

    p = sub.add_parser("partition-stats", help="per-client shard sizes and label histograms")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="delimited text file")
    src.add_argument("--synth", type=int, metavar="N", help="synthetic corpus with N examples")
    p.add_argument("--categories", type=int, default=2, help="categories of the synthetic corpus")
    p.add_argument("--text-column", default="text")
    p.add_argument("--label-column", default="label")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--train-fraction", type=float, help="partition only the train split")
    p.add_argument("--mode", choices=("iid", "noniid"), default="iid")
    p.add_argument("--clients", type=int, default=10)
    p.add_argument("--num-shards", type=int, default=10)
    p.add_argument("--shard-size", type=int, default=240)
    p.add_argument("--shards-per-client", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("verify-dp", help="enumerate the DP inequality for a discrete mechanism")
    p.add_argument("--fixture", required=True, help="JSON mechanism fixture")
    p.add_argument("--epsilon", type=_float, help="overrides the fixture's epsilon")
    p.add_argument("--delta", type=float, help="overrides the fixture's delta")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.output_dir or cfg.experiment.output_dir)
    result = run_experiment(cfg, out, workers=args.workers)
    print(format_table(result.rows, "markdown", cfg.digest), end="")
    print(f"wrote {len(result.rows)} rows to {out}")
    return EXIT_OK


def _cmd_table(args) -> int:
    raw, digest, delta = read_raw(args.raw)
    if not raw:
        raise ValidationError(f"{args.raw}: no records")
    text = format_table(aggregate(raw, delta if delta is not None else math.nan), args.format, digest)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8", newline="\n")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    sigma = calibrate_sigma(args.epsilon, args.delta, args.q, args.steps)
    if sigma == 0:
        print("sigma,order,epsilon")
        print("0.0,,inf")
        return EXIT_OK
    spent = epsilon_spent(DpConfig(sigma, args.q, args.steps, args.delta, 1.0, args.epsilon), DEFAULT_ORDERS)
    print("sigma,order,epsilon")
    print(f"{sigma!r},{spent.order:g},{spent.epsilon!r}")
    return EXIT_OK


def _cmd_partition_stats(args) -> int:
    if args.corpus:
        corpus = load_corpus(args.corpus, args.text_column, args.label_column, args.delimiter)
    else:
        corpus = synth_corpus(args.synth, args.categories, 8, 1.0, args.seed)
    if args.train_fraction is not None:
        corpus, _ = split_train_test(corpus, args.train_fraction, args.seed)
    spec = PartitionSpec(args.mode, args.clients, args.num_shards, args.shard_size, args.shards_per_client, args.seed)
    shards = partition(corpus, spec)
    print("client,size," + ",".join(f"label_{name}" for name in corpus.label_names))
    for shard in shards:
        counts = corpus.subset(shard.indices).label_counts()
        print(f"{shard.client_id},{len(shard)}," + ",".join(map(str, counts)))
    return EXIT_OK


def _cmd_verify_dp(args) -> int:
    mech, eps, delta = load_fixture(args.fixture)
    eps = eps if args.epsilon is None else args.epsilon
    delta = delta if args.delta is None else args.delta
    result = verify_dp_enumeration(mech, eps, delta)
    w = result.witness
    print(f"holds={str(result.holds).lower()} epsilon={eps:g} delta={delta:g}")
    print(f"worst pair={w.pair[0]}->{w.pair[1]} outcomes={list(w.outcomes)} violation={w.violation:.6g}")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "table": _cmd_table,
    "calibrate": _cmd_calibrate,
    "partition-stats": _cmd_partition_stats,
    "verify-dp": _cmd_verify_dp,
}


def cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (BenchError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
