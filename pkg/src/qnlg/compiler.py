"""Sentence diagrams, IQP word circuits and the shared parameter store."""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, log2, pi
from typing import Iterable, Mapping, Sequence

import numpy as np

from .grammar import (
    S,
    Lexicon,
    PregroupType,
    SimpleType,
    reduce_factors,
    sentence_types,
)
from .qsim import Gate, ParamCircuit, register_probs, run, run_gates


class UngrammaticalError(ValueError):
    pass


@dataclass(frozen=True)
class QubitBudget:
    q_n: int = 1
    q_s: int = 1

    @classmethod
    def for_topics(cls, k: int) -> QubitBudget:
        if k < 1:
            raise ValueError("k must be >= 1")
        return cls(1, max(1, ceil(log2(k))))

    def wire_width(self, t: SimpleType) -> int:
        return self.q_n if t.base == "n" else self.q_s


def word_width(type_: PregroupType, budget: QubitBudget) -> int:
    return sum(budget.wire_width(f) for f in type_)


def n_word_params(width: int, depth: int) -> int:
    return 3 if width == 1 else depth * (width - 1)


def symbol(word: str, type_: PregroupType, position: int) -> str:
    return f"{word}|{type_}|{position}"


class ParameterStore:
    """Angles for every (word, type), stored flat so optimizers can work on one vector."""

    def __init__(self, keys: Iterable[tuple[str, PregroupType]], budget: QubitBudget,
                 depth: int = 1, values: np.ndarray | None = None):
        self.keys = sorted(set(keys), key=lambda kt: (kt[0], str(kt[1])))
        self.budget = budget
        self.depth = depth
        self.offsets: dict[tuple[str, PregroupType], slice] = {}
        pos = 0
        for key in self.keys:
            size = n_word_params(word_width(key[1], budget), depth)
            self.offsets[key] = slice(pos, pos + size)
            pos += size
        if values is None:
            values = np.zeros(pos)
        values = np.asarray(values, dtype=float)
        if values.shape != (pos,):
            raise ValueError(f"expected {pos} parameters, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("parameters must be finite")
        self.values = values
        self._names = [symbol(w, t, j) for (w, t) in self.keys
                       for j in range(self.offsets[(w, t)].stop - self.offsets[(w, t)].start)]

    @classmethod
    def random(cls, keys: Iterable[tuple[str, PregroupType]], budget: QubitBudget, depth: int,
               seed: int) -> ParameterStore:
        store = cls(keys, budget, depth)
        rng = np.random.default_rng(seed)
        store.values = rng.uniform(0.0, 2 * pi, size=store.values.shape)
        return store

    def __contains__(self, key: tuple[str, PregroupType]) -> bool:
        return key in self.offsets

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, key: tuple[str, PregroupType]) -> np.ndarray:
        return self.values[self.offsets[key]]

    @property
    def entries(self) -> dict[tuple[str, PregroupType], np.ndarray]:
        return {key: self[key] for key in self.keys}

    @property
    def lexicon(self) -> dict[str, PregroupType]:
        return {w: t for w, t in self.keys}

    def with_values(self, values: np.ndarray) -> ParameterStore:
        return ParameterStore(self.keys, self.budget, self.depth, values)

    def bindings(self, values: np.ndarray | None = None) -> dict[str, float]:
        vals = self.values if values is None else values
        return dict(zip(self._names, vals.tolist()))


# --------------------------------------------------------------------------
# diagrams


@dataclass(frozen=True)
class Diagram:
    boxes: tuple[tuple[str, PregroupType], ...]
    wires: tuple[tuple[int, SimpleType], ...]  # (box index, wire type), in planar order
    cups: tuple[tuple[int, int], ...]
    open: tuple[int, ...]


def build_diagram(sentence: Sequence[str], lexicon: Lexicon) -> Diagram:
    types = sentence_types(sentence, lexicon)
    if types is None:
        missing = [w for w in sentence if w not in lexicon]
        raise UngrammaticalError(f"unknown words {missing}")
    wires = tuple((i, f) for i, t in enumerate(types) for f in t)
    red = reduce_factors([f for _, f in wires])
    if [wires[i][1] for i in red.kept] != [S]:
        raise UngrammaticalError(f"{' '.join(sentence)!r} reduces to {red.normal_form}, not s")
    return Diagram(tuple(zip(sentence, types)), wires, red.cups, red.kept)


# --------------------------------------------------------------------------
# circuits


def iqp_word_circuit(word: str, type_: PregroupType, budget: QubitBudget,
                     store: ParameterStore | None = None, depth: int | None = None,
                     qubits: Sequence[int] | None = None) -> list[Gate]:
    """IQP state preparation for one word box.

    One-qubit words get Rx·Rz·Rx; wider words a Hadamard layer then ``depth``
    ladders of CRz on neighbouring qubits. Passing ``store=None`` skips the
    store lookup (used while the store is being built).
    """
    if store is not None:
        if (word, type_) not in store:
            raise KeyError(f"no parameters for {word!r} :: {type_}")
        depth = store.depth
    depth = 1 if depth is None else depth
    width = word_width(type_, budget)
    qs = list(range(width)) if qubits is None else list(qubits)
    if len(qs) != width:
        raise ValueError(f"{word!r} needs {width} qubits, got {len(qs)}")
    if width == 1:
        q = qs[0]
        return [Gate("Rx", (q,), symbol(word, type_, 0)),
                Gate("Rz", (q,), symbol(word, type_, 1)),
                Gate("Rx", (q,), symbol(word, type_, 2))]
    gates = [Gate("H", (q,)) for q in qs]
    j = 0
    for _ in range(depth):
        for a, b in zip(qs, qs[1:]):
            gates.append(Gate("CRz", (a, b), symbol(word, type_, j)))
            j += 1
    return gates


def _wire_qubits(diagram: Diagram, budget: QubitBudget) -> list[list[int]]:
    out, pos = [], 0
    for _, t in diagram.wires:
        w = budget.wire_width(t)
        out.append(list(range(pos, pos + w)))
        pos += w
    return out


def cup_pairs(left: Sequence[int], right: Sequence[int]) -> list[tuple[int, int]]:
    """Nested (planar) qubit pairing for a cup between two multi-qubit wires."""
    if len(left) != len(right):
        raise ValueError("cup joins wires of different widths")
    return [(left[-1 - j], right[j]) for j in range(len(left))]


def compile_diagram(diagram: Diagram, budget: QubitBudget, store: ParameterStore | None = None,
                    depth: int | None = None) -> ParamCircuit:
    wq = _wire_qubits(diagram, budget)
    gates: list[Gate] = []
    for i, (word, t) in enumerate(diagram.boxes):
        qs = [q for wire, (box, _) in enumerate(diagram.wires) if box == i for q in wq[wire]]
        gates.extend(iqp_word_circuit(word, t, budget, store, depth, qs))
    post: list[int] = []
    for a, b in diagram.cups:
        for left, right in cup_pairs(wq[a], wq[b]):
            gates.append(Gate("CX", (left, right)))
            gates.append(Gate("H", (left,)))
            post.extend((left, right))
    (s_wire,) = diagram.open
    n = sum(len(q) for q in wq)
    return ParamCircuit(n, gates, tuple(wq[s_wire]), tuple(post))


def compile_sentence(sentence: Sequence[str], lexicon: Lexicon, budget: QubitBudget,
                     store: ParameterStore | None = None) -> ParamCircuit:
    return compile_diagram(build_diagram(sentence, lexicon), budget, store)


def circuit_probs(circuit: ParamCircuit, bindings: Mapping[str, float], k: int) -> np.ndarray:
    state = run(circuit, bindings)
    return register_probs(state.amplitudes.reshape((2,) * state.n), circuit.out_qubits, k)


def eval_probs(sentence: Sequence[str], lexicon: Lexicon, budget: QubitBudget,
               store: ParameterStore, k: int) -> np.ndarray:
    circuit = compile_sentence(sentence, lexicon, budget, store)
    return circuit_probs(circuit, store.bindings(), k)


def contract_oracle(sentence: Sequence[str], lexicon: Lexicon, budget: QubitBudget,
                    store: ParameterStore, k: int) -> np.ndarray:
    """Topic probabilities by contracting word states along the cups directly."""
    diagram = build_diagram(sentence, lexicon)
    bindings = store.bindings()
    wq = _wire_qubits(diagram, budget)
    label = list(range(sum(len(q) for q in wq)))
    for a, b in diagram.cups:
        for left, right in cup_pairs(wq[a], wq[b]):
            label[right] = label[left]
    operands: list = []
    for i, (word, t) in enumerate(diagram.boxes):
        qs = [q for wire, (box, _) in enumerate(diagram.wires) if box == i for q in wq[wire]]
        local = iqp_word_circuit(word, t, budget, store)
        operands.append(run_gates(len(qs), local, bindings))
        operands.append([label[q] for q in qs])
    (s_wire,) = diagram.open
    out = np.einsum(*operands, [label[q] for q in wq[s_wire]])
    return register_probs(out, list(range(out.ndim)), k)
