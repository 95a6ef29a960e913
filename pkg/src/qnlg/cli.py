"""Command-line entry point: ``qnlg gen-dataset | train | generate | benchmark``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from importlib import resources
from pathlib import Path

from .compiler import ParameterStore, QubitBudget
from .generate import ALGORITHMS, SEARCHES, AnnealConfig, TopicObjective, benchmark
from .grammar import (
    GrammarError,
    LabeledDataset,
    as_lexicon,
    format_dataset,
    generate_dataset,
    parse_dataset,
    parse_lexicon,
)
from .train import Model, SpsaConfig, fit, format_model, parse_model

log = logging.getLogger("qnlg")

BUNDLED = {"food_it", "headlines"}


class UsageError(Exception):
    pass


def read_grammar_text(source: str) -> str:
    path = Path(source)
    if path.exists():
        return path.read_text(encoding="utf-8")
    if source in BUNDLED:
        return (resources.files("qnlg") / "data" / f"{source}.grammar").read_text(encoding="utf-8")
    raise UsageError(f"grammar {source!r} is neither a file nor one of {sorted(BUNDLED)}")


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _load_model(path: str) -> Model:
    try:
        return parse_model(_read(path))
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


# --------------------------------------------------------------------------
# commands


def cmd_gen_dataset(args: argparse.Namespace) -> int:
    cfg, entries = parse_lexicon(read_grammar_text(args.grammar))
    dataset = generate_dataset(cfg, entries, args.count, args.seed, max_depth=args.max_depth)
    _write(args.dataset, format_dataset(dataset.items))
    counts = Counter(dataset.labels)
    for topic in range(dataset.k):
        print(f"topic {topic}: {counts[topic]} sentences")
    print(f"wrote {len(dataset)} sentences to {args.dataset}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg, entries = parse_lexicon(read_grammar_text(args.grammar))
    lexicon = as_lexicon(entries)
    items = parse_dataset(_read(args.dataset), lexicon)
    if not items:
        raise UsageError("dataset is empty")
    k = args.k or max(cfg.n_topics, max(t for _, t in items) + 1)
    if any(not 0 <= t < k for _, t in items):
        raise UsageError(f"dataset topics must lie in 0..{k - 1}")
    dataset = LabeledDataset(items, k, entries)
    budget = QubitBudget.for_topics(k)
    keys = {(w, lexicon[w]) for sentence, _ in items for w in sentence}
    store = ParameterStore.random(keys, budget, args.depth, args.seed)
    config = SpsaConfig(iterations=args.iterations, a=args.spsa_a, c=args.spsa_c, A=args.spsa_A,
                        first_step=args.spsa_first_step, seed=args.seed)
    log.info("training %d parameters on %d sentences, k=%d", len(store), len(items), k)
    report = fit(store, dataset, config, shots=args.shots, threads=args.threads,
                 log=lambda i, v: log.debug("iteration %d loss %.6f", i, v))
    _write(args.model, format_model(Model(report.store, k, args.seed)))
    if args.report:
        _write(args.report, json.dumps(report.to_dict(), indent=2) + "\n")
    print(f"initial loss {report.initial_loss:.4f}  final loss {report.losses[-1]:.4f}")
    print(f"training accuracy {report.accuracy:.4f}")
    print(f"wrote model to {args.model}")
    return 0


def _anneal_config(args: argparse.Namespace) -> AnnealConfig:
    return AnnealConfig(t_init=args.t_init, tau=args.tau, max_guesses=args.max_guesses,
                        shots=args.shots, min_len=args.min_len, max_len=args.max_len,
                        seed=args.seed)


def _check_topic(topic: int, k: int) -> None:
    if not 0 <= topic < k:
        raise UsageError(f"topic {topic} outside 0..{k - 1}")


def cmd_generate(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    _check_topic(args.topic, model.k)
    config = _anneal_config(args)
    result = SEARCHES[args.algo](args.topic, model.store, model.k, config)
    if args.trace:
        lines = ["step\tcandidate\tf\taccepted\tfresh\n"]
        lines += [f"{i}\t{' '.join(s.candidate)}\t{s.f:.6f}\t{int(s.accepted)}\t{int(s.fresh)}\n"
                  for i, s in enumerate(result.trace)]
        _write(args.trace, "".join(lines))
    if result.timed_out:
        print("TIMEOUT")
        print(f"guesses {result.guesses}  timed_out 1")
    else:
        f = TopicObjective(args.topic, model.store, model.k).exact(result.sentence)
        print(" ".join(result.sentence))
        print(f"guesses {result.guesses}  timed_out 0  f_exact {f:.6f}")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    topics = args.topics or [0]
    for topic in topics:
        _check_topic(topic, model.k)
    report = benchmark(topics, model.store, model.k, _anneal_config(args), args.runs,
                       algorithms=args.algos, threads=args.threads)
    if args.report:
        _write(args.report, report.format())
    print(report.summary(), end="")
    return 0


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnlg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--grammar", default="food_it",
                        help="grammar file, or a bundled name (food_it, headlines)")
    shared.add_argument("--dataset", default="dataset.tsv")
    shared.add_argument("--model", default="model.txt")
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--k", type=positive_int, default=None, help="topic count (default: inferred)")
    shared.add_argument("--shots", type=positive_int, default=None,
                        help="estimate probabilities from N shots (default: exact)")
    shared.add_argument("--threads", type=positive_int, default=1)

    gen_flags = argparse.ArgumentParser(add_help=False)
    gen_flags.add_argument("--tau", type=float, default=None,
                           help="success threshold (default 0.6 for k=2, 0.5 otherwise)")
    gen_flags.add_argument("--t-init", type=float, default=0.1)
    gen_flags.add_argument("--max-guesses", type=non_negative_int, default=500)
    gen_flags.add_argument("--min-len", type=positive_int, default=2)
    gen_flags.add_argument("--max-len", type=positive_int, default=6)

    p = sub.add_parser("gen-dataset", parents=[shared], help="sample a labeled dataset from a grammar")
    p.add_argument("--count", type=non_negative_int, default=130)
    p.add_argument("--max-depth", type=positive_int, default=8)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", parents=[shared], help="fit the classifier with SPSA")
    p.add_argument("--iterations", type=positive_int, default=400)
    p.add_argument("--depth", type=positive_int, default=1, help="IQP layers for multi-qubit words")
    p.add_argument("--spsa-a", type=float, default=None)
    p.add_argument("--spsa-c", type=float, default=0.1)
    p.add_argument("--spsa-A", type=float, default=None)
    p.add_argument("--spsa-first-step", type=float, default=SpsaConfig.first_step,
                   help="first gain a_0 when --spsa-a is not given")
    p.add_argument("--report", default=None, help="write a JSON training report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", parents=[shared, gen_flags], help="generate one sentence of a topic")
    p.add_argument("--topic", type=int, default=0)
    p.add_argument("--algo", choices=sorted(SEARCHES), default="sa")
    p.add_argument("--trace", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("benchmark", parents=[shared, gen_flags], help="compare SA against RGT")
    p.add_argument("--topics", type=int, nargs="+", default=None)
    p.add_argument("--runs", type=positive_int, default=30)
    p.add_argument("--algos", nargs="+", choices=ALGORITHMS, default=list(ALGORITHMS))
    p.add_argument("--report", default="benchmark.tsv")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, GrammarError, ValueError) as exc:
        print(f"qnlg: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"qnlg: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
