"""Topic-conditioned sentence generation by simulated annealing and by random guessing."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .compiler import ParameterStore, circuit_probs, compile_sentence
from .grammar import Lexicon, is_grammatical
from .qsim import DegenerateState, sample_shots

ALGORITHMS = ("rgt", "sa")

# proposals allowed per guess before a run that keeps revisiting known sentences gives up
PROPOSALS_PER_GUESS = 100


def default_tau(k: int) -> float:
    return 0.6 if k <= 2 else 0.5


@dataclass
class AnnealConfig:
    t_init: float = 0.1
    tau: float | None = None  # None: default_tau(k)
    max_guesses: int = 500
    shots: int | None = None
    min_len: int = 2
    max_len: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.t_init <= 0:
            raise ValueError("t_init must be positive")
        # tau = 1 is allowed: an unreachable threshold, useful for timeouts
        if self.tau is not None and not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.max_guesses < 0:
            raise ValueError("max_guesses must be non-negative")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1")

    def threshold(self, k: int) -> float:
        return default_tau(k) if self.tau is None else self.tau


@dataclass
class TraceStep:
    candidate: tuple[str, ...]
    f: float
    accepted: bool
    fresh: bool = True  # False when f came from the cache and cost no guess


@dataclass
class GenResult:
    sentence: tuple[str, ...] | None
    guesses: int
    timed_out: bool
    trace: list[TraceStep] = field(default_factory=list)


class TopicObjective:
    """f(S) = P(topic | S) under a trained store; 0 for sentences that do not parse.

    Values are cached per token sequence, so in shot mode the first estimate
    for a sentence is the one every later comparison sees. ``evaluations``
    counts cache misses, i.e. guesses.
    """

    def __init__(self, topic: int, store: ParameterStore, k: int, lexicon: Lexicon | None = None,
                 shots: int | None = None, rng: np.random.Generator | None = None):
        if not 0 <= topic < k:
            raise ValueError(f"topic {topic} outside 0..{k - 1}")
        if shots is not None and rng is None:
            raise ValueError("shot mode needs an rng")
        self.topic = topic
        self.store = store
        self.k = k
        self.lexicon = lexicon if lexicon is not None else store.lexicon
        self.shots = shots
        self.rng = rng
        self.bindings = store.bindings()
        self.cache: dict[tuple[str, ...], float] = {}

    @property
    def evaluations(self) -> int:
        return len(self.cache)

    def seen(self, sentence: Sequence[str]) -> bool:
        return tuple(sentence) in self.cache

    def exact(self, sentence: Sequence[str]) -> float:
        return self._probability(tuple(sentence), shots=None)

    def _probability(self, sentence: tuple[str, ...], shots: int | None) -> float:
        if not is_grammatical(sentence, self.lexicon):
            return 0.0
        if any((w, self.lexicon[w]) not in self.store for w in sentence):
            return 0.0
        circuit = compile_sentence(sentence, self.lexicon, self.store.budget)
        try:
            p = circuit_probs(circuit, self.bindings, self.k)
        except DegenerateState:
            return 0.0
        if shots is not None:
            p = sample_shots(p, shots, self.rng)
        return float(p[self.topic])

    def __call__(self, sentence: Sequence[str]) -> float:
        key = tuple(sentence)
        if key not in self.cache:
            self.cache[key] = self._probability(key, self.shots)
        return self.cache[key]


def objective(sentence: Sequence[str], topic: int, store: ParameterStore, k: int,
              lexicon: Lexicon | None = None, shots: int | None = None,
              rng: np.random.Generator | None = None) -> float:
    return TopicObjective(topic, store, k, lexicon, shots, rng)(sentence)


# --------------------------------------------------------------------------
# neighbourhood and acceptance


def insert(sentence: Sequence[str], j: int, word: str) -> list[str]:
    return [*sentence[:j], word, *sentence[j:]]


def delete(sentence: Sequence[str], j: int) -> list[str]:
    return [*sentence[:j], *sentence[j + 1:]]


def replace_word(sentence: Sequence[str], j: int, word: str) -> list[str]:
    return [*sentence[:j], word, *sentence[j + 1:]]


def edit(sentence: Sequence[str], vocabulary: Sequence[str], rng: np.random.Generator,
         min_len: int = 1, max_len: int = 6) -> list[str]:
    """One uniformly chosen Insert, Delete or Replace that respects the length bounds."""
    n = len(sentence)
    if not min_len <= n <= max_len:
        raise ValueError(f"sentence length {n} outside [{min_len}, {max_len}]")
    while True:
        op = int(rng.integers(3))
        if op == 0 and n < max_len:
            j = int(rng.integers(n + 1))
            return insert(sentence, j, vocabulary[int(rng.integers(len(vocabulary)))])
        if op == 1 and n > min_len:
            return delete(sentence, int(rng.integers(n)))
        if op == 2:
            j = int(rng.integers(n))
            return replace_word(sentence, j, vocabulary[int(rng.integers(len(vocabulary)))])


def accept(f_new: float, f_cur: float, temperature: float, rng: np.random.Generator) -> bool:
    """Metropolis rule for maximisation."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if f_new > f_cur:
        return True
    return bool(rng.random() < math.exp((f_new - f_cur) / temperature))


def temperature(t_init: float, t: int) -> float:
    return t_init / (t + 1)


def random_sentence(vocabulary: Sequence[str], rng: np.random.Generator, min_len: int,
                    max_len: int) -> list[str]:
    length = int(rng.integers(min_len, max_len + 1))
    return [vocabulary[int(rng.integers(len(vocabulary)))] for _ in range(length)]


# --------------------------------------------------------------------------
# search


def _setup(topic: int, store: ParameterStore, k: int, lexicon: Lexicon | None, config: AnnealConfig):
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    rng, shot_rng = (np.random.default_rng(s) for s in seeds)
    f = TopicObjective(topic, store, k, lexicon, config.shots, shot_rng)
    vocabulary = sorted(f.lexicon)
    return rng, f, vocabulary


def anneal(topic: int, store: ParameterStore, k: int, config: AnnealConfig,
           lexicon: Lexicon | None = None) -> GenResult:
    """Fast simulated annealing over word edits until f exceeds the threshold.

    Every proposal is one annealing step, but only sentences not evaluated
    before in this run cost a guess.
    """
    rng, f, vocab = _setup(topic, store, k, lexicon, config)
    tau = config.threshold(k)
    if config.max_guesses == 0:
        return GenResult(None, 0, True)
    current = random_sentence(vocab, rng, config.min_len, config.max_len)
    f_cur = f(current)
    trace = [TraceStep(tuple(current), f_cur, True)]
    if f_cur > tau:
        return GenResult(tuple(current), f.evaluations, False, trace)
    t = 0
    while f.evaluations < config.max_guesses and t < PROPOSALS_PER_GUESS * config.max_guesses:
        candidate = edit(current, vocab, rng, config.min_len, config.max_len)
        fresh = not f.seen(candidate)
        f_new = f(candidate)
        if f_new > tau:
            trace.append(TraceStep(tuple(candidate), f_new, True, fresh))
            return GenResult(tuple(candidate), f.evaluations, False, trace)
        ok = accept(f_new, f_cur, temperature(config.t_init, t), rng)
        trace.append(TraceStep(tuple(candidate), f_new, ok, fresh))
        if ok:
            current, f_cur = candidate, f_new
        t += 1
    return GenResult(None, config.max_guesses, True, trace)


def rgt(topic: int, store: ParameterStore, k: int, config: AnnealConfig,
        lexicon: Lexicon | None = None) -> GenResult:
    """Random generation and testing: independent random sentences until one passes."""
    rng, f, vocab = _setup(topic, store, k, lexicon, config)
    tau = config.threshold(k)
    trace = []
    draws = 0
    while f.evaluations < config.max_guesses and draws < PROPOSALS_PER_GUESS * config.max_guesses:
        candidate = random_sentence(vocab, rng, config.min_len, config.max_len)
        fresh = not f.seen(candidate)
        value = f(candidate)
        passed = value > tau
        trace.append(TraceStep(tuple(candidate), value, passed, fresh))
        draws += 1
        if passed:
            return GenResult(tuple(candidate), f.evaluations, False, trace)
    return GenResult(None, config.max_guesses, True, trace)


SEARCHES = {"sa": anneal, "rgt": rgt}


# --------------------------------------------------------------------------
# benchmark


@dataclass
class RunRecord:
    algorithm: str
    seed: int
    topic: int
    guesses: int
    timed_out: bool
    sentence: tuple[str, ...] | None
    f_exact: float | None


@dataclass
class BenchmarkReport:
    records: list[RunRecord]
    max_guesses: int

    def rows(self, algorithm: str, topic: int | None = None) -> list[RunRecord]:
        return [r for r in self.records
                if r.algorithm == algorithm and (topic is None or r.topic == topic)]

    def timeouts(self, algorithm: str, topic: int | None = None) -> int:
        return sum(r.timed_out for r in self.rows(algorithm, topic))

    def mean_guesses(self, algorithm: str, topic: int | None = None) -> float:
        # timed-out runs already carry guesses == max_guesses
        rows = self.rows(algorithm, topic)
        return sum(r.guesses for r in rows) / len(rows)

    @property
    def algorithms(self) -> list[str]:
        return sorted({r.algorithm for r in self.records}, key=ALGORITHMS.index)

    @property
    def topics(self) -> list[int]:
        return sorted({r.topic for r in self.records})

    def summary(self) -> str:
        algos = self.algorithms
        lines = []
        for topic in self.topics:
            lines.append(f"# topic {topic}\t" + "\t".join(a.upper() for a in algos))
            lines.append("# Timeouts\t" + "\t".join(str(self.timeouts(a, topic)) for a in algos))
            lines.append("# Avg No. of guesses\t"
                         + "\t".join(f"{self.mean_guesses(a, topic):.2f}" for a in algos))
        return "\n".join(lines) + "\n"

    def format(self) -> str:
        header = "algorithm\tseed\ttopic\tguesses\ttimed_out\tsentence\tf_exact\n"
        body = "".join(
            f"{r.algorithm}\t{r.seed}\t{r.topic}\t{r.guesses}\t{int(r.timed_out)}\t"
            f"{' '.join(r.sentence) if r.sentence else 'TIMEOUT'}\t"
            f"{'' if r.f_exact is None else f'{r.f_exact:.6f}'}\n"
            for r in self.records)
        return header + body + "\n" + self.summary()


def benchmark(topics: Iterable[int], store: ParameterStore, k: int, config: AnnealConfig, runs: int,
              lexicon: Lexicon | None = None, algorithms: Sequence[str] = ALGORITHMS,
              threads: int = 1) -> BenchmarkReport:
    """Run each algorithm ``runs`` times per topic on seeds config.seed, config.seed + 1, ..."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    jobs = [(algo, topic, config.seed + r) for topic in topics for algo in algorithms
            for r in range(runs)]

    def one(job) -> RunRecord:
        algo, topic, seed = job
        result = SEARCHES[algo](topic, store, k, replace(config, seed=seed), lexicon)
        f_exact = None
        if result.sentence is not None:
            f_exact = TopicObjective(topic, store, k, lexicon).exact(result.sentence)
        return RunRecord(algo, seed, topic, result.guesses, result.timed_out, result.sentence, f_exact)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            records = list(pool.map(one, jobs))
    else:
        records = [one(job) for job in jobs]
    return BenchmarkReport(records, config.max_guesses)
