"""Pregroup lexicons, a small CFG sampler and labeled dataset generation.

Grammar files are plain UTF-8 text::

    # comment
    @topic 0 FOOD
    S -> FOOD | IT
    FOOD -> NP FV FNP
    man :: n
    cooks :: n.r s n.l

A line with ``::`` is a lexicon entry, a line with ``->`` is a rule (the first
rule's left-hand side is the start symbol) and ``@topic`` attaches a topic
index to a nonterminal. A sentence takes the topic of the first tagged
nonterminal met in a pre-order walk of its derivation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

ATOMS = ("n", "s")


class GrammarError(ValueError):
    """Malformed grammar/dataset text, or a request the grammar cannot satisfy."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True, order=True)
class SimpleType:
    base: str
    z: int = 0

    def __post_init__(self):
        if self.base not in ATOMS:
            raise GrammarError(f"unknown atomic type {self.base!r}")

    def __str__(self) -> str:
        suffix = ".l" * -self.z if self.z < 0 else ".r" * self.z
        return self.base + suffix

    @classmethod
    def parse(cls, text: str) -> SimpleType:
        base, *adjoints = text.split(".")
        z = 0
        for a in adjoints:
            if a == "l":
                z -= 1
            elif a == "r":
                z += 1
            else:
                raise GrammarError(f"bad adjoint marker in {text!r}")
        return cls(base, z)

    def cancels(self, right: SimpleType) -> bool:
        """True when ``self · right`` contracts to the unit."""
        return self.base == right.base and right.z == self.z + 1


@dataclass(frozen=True)
class PregroupType:
    factors: tuple[SimpleType, ...] = ()

    def __add__(self, other: PregroupType) -> PregroupType:
        return PregroupType(self.factors + other.factors)

    def __len__(self) -> int:
        return len(self.factors)

    def __iter__(self) -> Iterator[SimpleType]:
        return iter(self.factors)

    def __str__(self) -> str:
        return " ".join(map(str, self.factors))

    @classmethod
    def parse(cls, text: str) -> PregroupType:
        parts = text.split()
        if not parts:
            raise GrammarError("empty pregroup type")
        return cls(tuple(SimpleType.parse(p) for p in parts))


N = SimpleType("n")
S = SimpleType("s")
SENTENCE = PregroupType((S,))


@dataclass(frozen=True)
class LexiconEntry:
    word: str
    type: PregroupType

    def __post_init__(self):
        if not self.word or any(c.isspace() for c in self.word):
            raise GrammarError(f"invalid word {self.word!r}")


@dataclass
class Cfg:
    start: str
    rules: dict[str, list[tuple[str, ...]]]
    topics: dict[str, int] = field(default_factory=dict)

    @property
    def n_topics(self) -> int:
        return max(self.topics.values()) + 1 if self.topics else 0


Lexicon = Mapping[str, PregroupType]


def as_lexicon(entries: Iterable[LexiconEntry] | Lexicon) -> dict[str, PregroupType]:
    if isinstance(entries, Mapping):
        return dict(entries)
    return {e.word: e.type for e in entries}


# --------------------------------------------------------------------------
# grammar file format


def parse_lexicon(text: str) -> tuple[Cfg, list[LexiconEntry]]:
    """Parse grammar-file content into a CFG and its lexicon."""
    entries: dict[str, LexiconEntry] = {}
    rules: dict[str, list[tuple[str, ...]]] = {}
    rule_lines: dict[str, int] = {}
    topic_lines: list[tuple[int, int, str]] = []
    start = None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("@"):
            parts = line.split()
            if parts[0] != "@topic" or len(parts) != 3:
                raise GrammarError(f"bad directive {line!r}", lineno)
            try:
                index = int(parts[1])
            except ValueError:
                raise GrammarError(f"topic index must be an integer, got {parts[1]!r}", lineno) from None
            if index < 0:
                raise GrammarError("topic index must be non-negative", lineno)
            topic_lines.append((lineno, index, parts[2]))
        elif "::" in line:
            word, _, type_text = line.partition("::")
            word = word.strip()
            try:
                entry = LexiconEntry(word, PregroupType.parse(type_text))
            except GrammarError as exc:
                raise GrammarError(str(exc), lineno) from None
            if word in entries and entries[word].type != entry.type:
                raise GrammarError(
                    f"word {word!r} declared with conflicting types "
                    f"{entries[word].type} and {entry.type}", lineno)
            entries.setdefault(word, entry)
        elif "->" in line:
            lhs, _, rhs = line.partition("->")
            lhs = lhs.strip()
            if not lhs or len(lhs.split()) != 1:
                raise GrammarError("rule needs a single nonterminal on the left", lineno)
            alternatives = [tuple(alt.split()) for alt in rhs.split("|")]
            if any(not alt for alt in alternatives):
                raise GrammarError("empty rule alternative", lineno)
            if start is None:
                start = lhs
            rules.setdefault(lhs, []).extend(alternatives)
            rule_lines.setdefault(lhs, lineno)
        else:
            raise GrammarError(f"cannot parse {line!r}", lineno)

    if start is None:
        raise GrammarError("grammar has no rules")
    for lhs, alternatives in rules.items():
        for alt in alternatives:
            for sym in alt:
                if sym not in rules and sym not in entries:
                    raise GrammarError(f"undefined terminal {sym!r}", rule_lines[lhs])
    topics = {}
    for lineno, index, nt in topic_lines:
        if nt not in rules:
            raise GrammarError(f"topic tag {nt!r} is not a nonterminal", lineno)
        topics[nt] = index
    if topics and sorted(set(topics.values())) != list(range(max(topics.values()) + 1)):
        raise GrammarError("topic indices must cover 0..k-1")
    return Cfg(start, rules, topics), list(entries.values())


def serialize_grammar(cfg: Cfg, entries: Iterable[LexiconEntry]) -> str:
    lines = [f"@topic {index} {nt}" for nt, index in cfg.topics.items()]
    ordered = [cfg.start] + [nt for nt in cfg.rules if nt != cfg.start]
    for nt in ordered:
        alts = " | ".join(" ".join(alt) for alt in cfg.rules[nt])
        lines.append(f"{nt} -> {alts}")
    lines.extend(f"{e.word} :: {e.type}" for e in entries)
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# pregroup reduction


@dataclass(frozen=True)
class Reduction:
    """Outcome of reducing a flat factor sequence.

    ``cups`` holds index pairs (left, right) into the input sequence that were
    contracted; ``kept`` lists the surviving indices in order.
    """

    factors: tuple[SimpleType, ...]
    kept: tuple[int, ...]
    cups: tuple[tuple[int, int], ...]

    @property
    def normal_form(self) -> PregroupType:
        return PregroupType(tuple(self.factors[i] for i in self.kept))


def _empty_table(fs: Sequence[SimpleType]) -> list[list[int]]:
    # split[i][j]: for the segment fs[i:j], the partner m of fs[i] in a
    # full contraction of the segment, 0 if the segment is already empty,
    # -1 if no full contraction exists.
    n = len(fs)
    split = [[-1] * (n + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        split[i][i] = 0
    for length in range(2, n + 1, 2):
        for i in range(n - length + 1):
            j = i + length
            for m in range(i + 1, j, 2):
                if fs[i].cancels(fs[m]) and split[i + 1][m] >= 0 and split[m + 1][j] >= 0:
                    split[i][j] = m
                    break
    return split


def _collect_cups(split, i: int, j: int, out: list[tuple[int, int]]) -> None:
    while i < j:
        m = split[i][j]
        out.append((i, m))
        _collect_cups(split, i + 1, m, out)
        i = m + 1


def reduce_factors(factors: Sequence[SimpleType]) -> Reduction:
    """Contract adjacent ``(p, z)(p, z+1)`` pairs as far as possible.

    Contraction order matters in general (``n.l n n.r`` has two normal forms),
    so this searches every planar contraction: if a single ``s`` can be left
    standing that result wins, otherwise the shortest normal form is returned
    with ties resolved toward contracting the leftmost segment.
    """
    fs = tuple(factors)
    n = len(fs)
    split = _empty_table(fs)

    for t, f in enumerate(fs):
        if f == S and split[0][t] >= 0 and split[t + 1][n] >= 0:
            cups: list[tuple[int, int]] = []
            _collect_cups(split, 0, t, cups)
            _collect_cups(split, t + 1, n, cups)
            return Reduction(fs, (t,), tuple(sorted(cups)))

    # best[j]: fewest survivors for fs[:j]; back[j]: start of the contracted
    # segment ending at j, or None when fs[j-1] survives
    best = [0] + [n + 1] * n
    back: list[int | None] = [None] * (n + 1)
    for j in range(1, n + 1):
        for i in range(j - 2, -1, -2):
            if split[i][j] >= 0 and best[i] <= best[j]:
                best[j], back[j] = best[i], i
        if best[j - 1] + 1 < best[j]:
            best[j], back[j] = best[j - 1] + 1, None
    kept: list[int] = []
    cups = []
    j = n
    while j > 0:
        i = back[j]
        if i is None:
            kept.append(j - 1)
            j -= 1
        else:
            _collect_cups(split, i, j, cups)
            j = i
    return Reduction(fs, tuple(reversed(kept)), tuple(sorted(cups)))


def reduce(types: Sequence[PregroupType]) -> PregroupType:
    """Normal form of the concatenation of ``types``."""
    return reduce_factors([f for t in types for f in t]).normal_form


def sentence_types(sentence: Sequence[str], lexicon: Lexicon) -> list[PregroupType] | None:
    try:
        return [lexicon[w] for w in sentence]
    except KeyError:
        return None


def is_grammatical(sentence: Sequence[str], lexicon: Lexicon) -> bool:
    types = sentence_types(sentence, lexicon)
    return types is not None and reduce(types) == SENTENCE


# --------------------------------------------------------------------------
# sampling and enumeration


class _DepthExceeded(Exception):
    pass


def _derive(cfg: Cfg, rng: np.random.Generator, sym: str, depth: int, max_depth: int,
            tokens: list[str], nts: list[str]) -> None:
    if sym not in cfg.rules:
        tokens.append(sym)
        return
    if depth > max_depth:
        raise _DepthExceeded
    nts.append(sym)
    alts = cfg.rules[sym]
    for child in alts[int(rng.integers(len(alts)))]:
        _derive(cfg, rng, child, depth + 1, max_depth, tokens, nts)


def sample_derivation(cfg: Cfg, rng: np.random.Generator, max_depth: int = 8,
                      retries: int = 100) -> tuple[list[str], list[str]]:
    """Random derivation as (tokens, nonterminals in pre-order)."""
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    for _ in range(retries):
        tokens: list[str] = []
        nts: list[str] = []
        try:
            _derive(cfg, rng, cfg.start, 1, max_depth, tokens, nts)
        except _DepthExceeded:
            continue
        return tokens, nts
    raise GrammarError(f"no derivation within depth {max_depth} after {retries} attempts")


def sample_sentence(cfg: Cfg, rng: np.random.Generator, max_depth: int = 8) -> list[str]:
    return sample_derivation(cfg, rng, max_depth)[0]


def enumerate_derivations(cfg: Cfg, max_depth: int = 8) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Every derivation of depth <= max_depth as (tokens, pre-order nonterminals)."""
    memo: dict[tuple[str, int], list] = {}

    def expand(sym: str, depth: int) -> list:
        if sym not in cfg.rules:
            return [((sym,), ())]
        if depth > max_depth:
            return []
        key = (sym, depth)
        if key not in memo:
            out = []
            for alt in cfg.rules[sym]:
                for parts in itertools.product(*(expand(c, depth + 1) for c in alt)):
                    tokens = tuple(t for p in parts for t in p[0])
                    nts = (sym,) + tuple(nt for p in parts for nt in p[1])
                    out.append((tokens, nts))
            memo[key] = out
        return memo[key]

    return expand(cfg.start, 1)


Labeler = Callable[[Sequence[str], Sequence[str]], int]


def topic_labeler(cfg: Cfg) -> Labeler:
    """Label a derivation by the first ``@topic``-tagged nonterminal it uses."""

    def label(tokens: Sequence[str], nts: Sequence[str]) -> int:
        for nt in nts:
            if nt in cfg.topics:
                return cfg.topics[nt]
        raise GrammarError(f"sentence {' '.join(tokens)!r} has no topic-tagged nonterminal")

    return label


@dataclass
class LabeledDataset:
    items: list[tuple[tuple[str, ...], int]]
    k: int
    vocabulary: list[LexiconEntry]

    def __len__(self) -> int:
        return len(self.items)

    @property
    def sentences(self) -> list[tuple[str, ...]]:
        return [s for s, _ in self.items]

    @property
    def labels(self) -> list[int]:
        return [t for _, t in self.items]


def labeled_pool(cfg: Cfg, lexicon: Lexicon, labeler: Labeler | None = None,
                 max_depth: int = 8) -> dict[tuple[str, ...], int]:
    """All distinct grammatical sentences the grammar derives, with labels."""
    labeler = labeler or topic_labeler(cfg)
    pool: dict[tuple[str, ...], int] = {}
    for tokens, nts in enumerate_derivations(cfg, max_depth):
        if not is_grammatical(tokens, lexicon):
            continue
        topic = labeler(tokens, nts)
        if pool.setdefault(tokens, topic) != topic:
            raise GrammarError(f"sentence {' '.join(tokens)!r} derivable under topics "
                               f"{pool[tokens]} and {topic}")
    return pool


def generate_dataset(cfg: Cfg, lexicon: Iterable[LexiconEntry] | Lexicon, count: int, seed: int,
                     labeler: Labeler | None = None, max_depth: int = 8) -> LabeledDataset:
    """Draw ``count`` distinct labeled sentences, balanced across topics.

    Topics are visited round-robin so every topic appears once count >= k.
    """
    entries = (list(lexicon) if not isinstance(lexicon, Mapping)
               else [LexiconEntry(w, t) for w, t in lexicon.items()])
    lex = as_lexicon(entries)
    pool = labeled_pool(cfg, lex, labeler, max_depth)
    k = max(cfg.n_topics, max(pool.values(), default=-1) + 1)
    if count > len(pool):
        raise GrammarError(f"only {len(pool)} distinct sentences derivable, {count} requested")
    if count < 0:
        raise ValueError("count must be non-negative")

    rng = np.random.default_rng(seed)
    by_topic: list[list[tuple[str, ...]]] = [[] for _ in range(k)]
    for sentence in sorted(pool):
        by_topic[pool[sentence]].append(sentence)
    queues = []
    for bucket in by_topic:
        order = rng.permutation(len(bucket))
        queues.append([bucket[i] for i in order])

    chosen: list[tuple[tuple[str, ...], int]] = []
    cursor = [0] * k
    while len(chosen) < count:
        for topic in range(k):
            if len(chosen) == count:
                break
            if cursor[topic] < len(queues[topic]):
                chosen.append((queues[topic][cursor[topic]], topic))
                cursor[topic] += 1
    order = rng.permutation(len(chosen))
    items = [chosen[i] for i in order]
    return LabeledDataset(items, k, entries)


# --------------------------------------------------------------------------
# dataset file format: ``topic<TAB>token token token``


def format_dataset(items: Iterable[tuple[Sequence[str], int]]) -> str:
    return "".join(f"{topic}\t{' '.join(sentence)}\n" for sentence, topic in items)


def parse_dataset(text: str, lexicon: Lexicon | None = None) -> list[tuple[tuple[str, ...], int]]:
    """Read dataset text; with a lexicon, also reject ungrammatical lines."""
    items = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        topic_text, sep, sentence_text = line.partition("\t")
        if not sep:
            raise GrammarError("expected topic<TAB>sentence", lineno)
        try:
            topic = int(topic_text)
        except ValueError:
            raise GrammarError(f"bad topic {topic_text!r}", lineno) from None
        sentence = tuple(sentence_text.split())
        if not sentence:
            raise GrammarError("empty sentence", lineno)
        if lexicon is not None and not is_grammatical(sentence, lexicon):
            raise GrammarError(f"ungrammatical sentence {sentence_text!r}", lineno)
        items.append((sentence, topic))
    return items
