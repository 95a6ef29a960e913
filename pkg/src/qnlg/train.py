"""SPSA training of the topic classifier, prediction and model files."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .compiler import ParameterStore, QubitBudget, circuit_probs, compile_sentence
from .grammar import LabeledDataset, Lexicon, PregroupType
from .qsim import DegenerateState, ParamCircuit, sample_shots

PROB_FLOOR = 1e-9


@dataclass
class SpsaConfig:
    """SPSA gains: a_k = a / (A + k + 1)**alpha, c_k = c / (k + 1)**gamma.

    ``a=None`` picks a so that the first gain a_0 equals ``first_step``;
    ``A=None`` uses 1% of the iteration budget.
    """

    iterations: int = 400
    a: float | None = None
    c: float = 0.1
    A: float | None = None
    alpha: float = 0.602
    gamma: float = 0.101
    first_step: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.a is not None and self.a < 0:
            raise ValueError("a must be non-negative")
        if self.first_step <= 0:
            raise ValueError("first_step must be positive")
        if not 0 < self.gamma < self.alpha <= 1:
            raise ValueError("need 0 < gamma < alpha <= 1")

    @property
    def stability(self) -> float:
        return 0.01 * self.iterations if self.A is None else self.A

    @property
    def step_scale(self) -> float:
        if self.a is not None:
            return self.a
        return self.first_step * (self.stability + 1) ** self.alpha

    def gains(self, k: int) -> tuple[float, float]:
        a_k = self.step_scale / (self.stability + k + 1) ** self.alpha
        c_k = self.c / (k + 1) ** self.gamma
        return a_k, c_k


class DatasetLoss:
    """Negative log-likelihood of a labeled dataset as a function of the flat parameters."""

    def __init__(self, store: ParameterStore, dataset: LabeledDataset | Sequence[tuple[Sequence[str], int]],
                 k: int | None = None, lexicon: Lexicon | None = None, shots: int | None = None,
                 threads: int = 1):
        items = dataset.items if isinstance(dataset, LabeledDataset) else list(dataset)
        if k is None:
            k = dataset.k if isinstance(dataset, LabeledDataset) else max(t for _, t in items) + 1
        self.store = store
        self.k = k
        self.shots = shots
        self.threads = threads
        self.labels = np.array([t for _, t in items], dtype=int)
        lex = lexicon if lexicon is not None else store.lexicon
        self.circuits = [compile_sentence(s, lex, store.budget, store) for s, _ in items]

    def _one(self, circuit: ParamCircuit, bindings) -> np.ndarray:
        try:
            return circuit_probs(circuit, bindings, self.k)
        except DegenerateState:
            return np.full(self.k, PROB_FLOOR)

    def probs(self, values: np.ndarray | None = None) -> np.ndarray:
        """Exact per-sentence topic probabilities, shape (len(dataset), k)."""
        bindings = self.store.bindings(values)
        if self.threads > 1 and len(self.circuits) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                rows = list(pool.map(lambda c: self._one(c, bindings), self.circuits))
        else:
            rows = [self._one(c, bindings) for c in self.circuits]
        return np.array(rows).reshape(len(self.circuits), self.k)

    def __call__(self, values: np.ndarray | None = None, rng: np.random.Generator | None = None) -> float:
        p = self.probs(values)
        if self.shots is not None:
            if rng is None:
                raise ValueError("shot-based loss needs an rng")
            p = np.array([sample_shots(row / row.sum(), self.shots, rng) for row in p])
        picked = p[np.arange(len(p)), self.labels]
        return float(-np.log(np.maximum(picked, PROB_FLOOR)).sum())

    def accuracy(self, values: np.ndarray | None = None) -> float:
        if len(self.labels) == 0:
            return 0.0
        return float((self.probs(values).argmax(axis=1) == self.labels).mean())


def loss(store: ParameterStore, dataset: LabeledDataset, shots: int | None = None,
         rng: np.random.Generator | None = None) -> float:
    return DatasetLoss(store, dataset, shots=shots)(rng=rng)


Objective = Callable[[np.ndarray], float]


def spsa_update(values: np.ndarray, objective: Objective, config: SpsaConfig, k: int,
                rng: np.random.Generator) -> np.ndarray:
    a_k, c_k = config.gains(k)
    delta = rng.integers(0, 2, size=values.shape) * 2 - 1
    plus = objective(values + c_k * delta)
    minus = objective(values - c_k * delta)
    g = (plus - minus) / (2 * c_k)
    return values - a_k * g * delta


def spsa_step(store: ParameterStore, objective: LabeledDataset | Objective, config: SpsaConfig,
              k: int, rng: np.random.Generator) -> ParameterStore:
    if isinstance(objective, LabeledDataset):
        objective = DatasetLoss(store, objective)
    return store.with_values(spsa_update(store.values, objective, config, k, rng))


@dataclass
class TrainReport:
    losses: list[float]
    accuracy: float
    elapsed: float
    config: SpsaConfig
    initial_loss: float
    store: ParameterStore | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "initial_loss": self.initial_loss,
            "final_loss": self.losses[-1],
            "accuracy": self.accuracy,
            "elapsed_seconds": round(self.elapsed, 3),
            "config": asdict(self.config),
            "losses": self.losses,
        }


def fit(store: ParameterStore, dataset: LabeledDataset, config: SpsaConfig, shots: int | None = None,
        threads: int = 1, log: Callable[[int, float], None] | None = None) -> TrainReport:
    """Run ``config.iterations`` SPSA steps; the exact loss is recorded after each."""
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    exact = DatasetLoss(store, dataset, threads=threads)
    noisy = DatasetLoss(store, dataset, shots=shots, threads=threads) if shots else exact
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    rng, shot_rng = (np.random.default_rng(s) for s in seeds)
    objective = (lambda v: noisy(v, shot_rng)) if shots else exact

    start = time.perf_counter()
    values = store.values.copy()
    initial = exact(values)
    losses = []
    for k in range(config.iterations):
        values = spsa_update(values, objective, config, k, rng)
        losses.append(exact(values))
        if log is not None:
            log(k, losses[-1])
    trained = store.with_values(values)
    return TrainReport(losses, exact.accuracy(values), time.perf_counter() - start, config,
                       initial, trained)


def predict(store: ParameterStore, sentence: Sequence[str], k: int, lexicon: Lexicon | None = None,
            shots: int | None = None, rng: np.random.Generator | None = None) -> int:
    """Most likely topic; ties go to the lowest index."""
    lex = lexicon if lexicon is not None else store.lexicon
    circuit = compile_sentence(sentence, lex, store.budget, store)
    p = circuit_probs(circuit, store.bindings(), k)
    if shots is not None:
        if rng is None:
            raise ValueError("shot-based prediction needs an rng")
        p = sample_shots(p, shots, rng)
    return int(np.argmax(p))


# --------------------------------------------------------------------------
# model file


@dataclass
class Model:
    store: ParameterStore
    k: int
    seed: int = 0


def format_model(model: Model) -> str:
    store = model.store
    lines = [
        "# qnlg model",
        f"@k {model.k}",
        f"@depth {store.depth}",
        f"@q_n {store.budget.q_n}",
        f"@q_s {store.budget.q_s}",
        f"@seed {model.seed}",
    ]
    for word, t in store.keys:
        angles = " ".join(f"{v:.17g}" for v in store[(word, t)])
        lines.append(f"{word}\t{t}\t{angles}")
    return "\n".join(lines) + "\n"


def parse_model(text: str) -> Model:
    header: dict[str, int] = {}
    rows: list[tuple[str, PregroupType, list[float]]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            if line.startswith("@"):
                key, value = line[1:].split()
                header[key] = int(value)
                continue
            word, type_text, angle_text = line.split("\t")
            rows.append((word, PregroupType.parse(type_text), [float(x) for x in angle_text.split()]))
        except ValueError as exc:
            raise ValueError(f"model line {lineno}: {exc}") from None
    missing = {"k", "depth", "q_n", "q_s"} - header.keys()
    if missing:
        raise ValueError(f"model header lacks {sorted(missing)}")
    budget = QubitBudget(header["q_n"], header["q_s"])
    store = ParameterStore([(w, t) for w, t, _ in rows], budget, header["depth"])
    values = store.values.copy()
    for word, t, angles in rows:
        sl = store.offsets[(word, t)]
        if sl.stop - sl.start != len(angles):
            raise ValueError(f"{word!r} expects {sl.stop - sl.start} angles, got {len(angles)}")
        values[sl] = angles
    return Model(store.with_values(values), header["k"], header.get("seed", 0))
