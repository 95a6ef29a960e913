"""Exact statevector simulation for the small circuits sentences compile to.

Qubit 0 is the most significant bit of a basis index, so ``|b0 b1 ... b_{n-1}>``
has index ``sum(b_q << (n - 1 - q))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import cos, sin
from typing import Mapping, Sequence

import numpy as np

GATE_ARITY = {"H": 1, "Rx": 1, "Rz": 1, "CRz": 2, "CX": 2}
PARAMETRIC = {"Rx", "Rz", "CRz"}

_SQRT1_2 = 1 / np.sqrt(2)
_H = np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT1_2
_X = np.array([[0, 1], [1, 0]], dtype=complex)

# below this squared norm a postselected state counts as annihilated
DEGENERATE_NORM = 1e-24


class DegenerateState(ArithmeticError):
    """Postselection left (numerically) nothing to measure."""


class UnboundParameter(KeyError):
    pass


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    param: str | float | None = None

    def __post_init__(self):
        if self.kind not in GATE_ARITY:
            raise ValueError(f"unknown gate {self.kind!r}")
        if len(self.targets) != GATE_ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {GATE_ARITY[self.kind]} target(s), got {self.targets}")
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"{self.kind} targets must be distinct")
        if (self.kind in PARAMETRIC) != (self.param is not None):
            raise ValueError(f"{self.kind} parameter mismatch: {self.param!r}")

    def angle(self, bindings: Mapping[str, float] | None = None) -> float:
        if isinstance(self.param, str):
            try:
                return float(bindings[self.param])  # type: ignore[index]
            except (KeyError, TypeError):
                raise UnboundParameter(self.param) from None
        return float(self.param)


def rx(theta: float) -> np.ndarray:
    c, s = cos(theta / 2), sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def rz(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex)


def gate_matrix(kind: str, theta: float | None = None) -> np.ndarray:
    """Unitary of a gate kind; two-qubit matrices are ordered (control, target)."""
    if kind == "H":
        return _H.copy()
    if kind == "Rx":
        return rx(theta)
    if kind == "Rz":
        return rz(theta)
    if kind == "CX":
        m = np.eye(4, dtype=complex)
        m[2:, 2:] = _X
        return m
    if kind == "CRz":
        m = np.eye(4, dtype=complex)
        m[2:, 2:] = rz(theta)
        return m
    raise ValueError(f"unknown gate {kind!r}")


@dataclass
class StateVector:
    amplitudes: np.ndarray
    n: int

    @classmethod
    def zero(cls, n: int) -> StateVector:
        amps = np.zeros(2**n, dtype=complex)
        amps[0] = 1.0
        return cls(amps, n)

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @property
    def is_normalized(self) -> bool:
        return abs(self.norm2 - 1.0) <= 1e-10


@dataclass
class ParamCircuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)
    out_qubits: tuple[int, ...] = ()
    postselect: tuple[int, ...] = ()

    def __post_init__(self):
        for g in self.gates:
            if max(g.targets, default=-1) >= self.n_qubits or min(g.targets, default=0) < 0:
                raise ValueError(f"gate {g} out of range for {self.n_qubits} qubits")
        used = set(self.out_qubits) | set(self.postselect)
        if any(q >= self.n_qubits or q < 0 for q in used):
            raise ValueError("register index out of range")
        if set(self.out_qubits) & set(self.postselect):
            raise ValueError("out_qubits and postselect overlap")

    @property
    def symbols(self) -> set[str]:
        return {g.param for g in self.gates if isinstance(g.param, str)}


def _apply_inplace(psi: np.ndarray, gate: Gate, bindings: Mapping[str, float] | None) -> np.ndarray:
    # psi has shape (2,) * n and is updated in place through basic-slice views
    kind = gate.kind
    if kind in ("H", "Rx", "Rz"):
        (q,) = gate.targets
        lead = (slice(None),) * q
        i0, i1 = lead + (0,), lead + (1,)
        if kind == "Rz":
            theta = gate.angle(bindings)
            psi[i0] *= np.exp(-0.5j * theta)
            psi[i1] *= np.exp(0.5j * theta)
            return psi
        a0 = psi[i0].copy()
        a1 = psi[i1]
        if kind == "H":
            psi[i0] = (a0 + a1) * _SQRT1_2
            psi[i1] = (a0 - a1) * _SQRT1_2
        else:
            theta = gate.angle(bindings)
            c, s = cos(theta / 2), sin(theta / 2)
            psi[i0] = c * a0 - 1j * s * a1
            psi[i1] = c * a1 - 1j * s * a0
        return psi
    c, t = gate.targets
    i0, i1 = _controlled(c, t, 0), _controlled(c, t, 1)
    if kind == "CX":
        a0 = psi[i0].copy()
        psi[i0] = psi[i1]
        psi[i1] = a0
        return psi
    theta = gate.angle(bindings)
    psi[i0] *= np.exp(-0.5j * theta)
    psi[i1] *= np.exp(0.5j * theta)
    return psi


def _controlled(control: int, target: int, value: int) -> tuple:
    # basic index selecting control=1, target=value
    idx: list = [slice(None)] * (max(control, target) + 1)
    idx[control] = 1
    idx[target] = value
    return tuple(idx)


def _check(gate: Gate, n: int) -> None:
    if any(q < 0 or q >= n for q in gate.targets):
        raise IndexError(f"gate {gate} out of range for {n} qubits")


def apply(state: StateVector, gate: Gate, bindings: Mapping[str, float] | None = None) -> StateVector:
    """Apply one gate; the input state is left untouched."""
    _check(gate, state.n)
    psi = state.amplitudes.reshape((2,) * state.n).copy()
    psi = _apply_inplace(psi, gate, bindings)
    return StateVector(np.ascontiguousarray(psi).reshape(-1), state.n)


def run_gates(n: int, gates: Sequence[Gate], bindings: Mapping[str, float] | None = None) -> np.ndarray:
    """Final amplitude tensor, shape (2,) * n, of ``gates`` applied to |0...0>."""
    psi = np.zeros((2,) * n, dtype=complex)
    psi[(0,) * n] = 1.0
    for g in gates:
        _check(g, n)
        psi = _apply_inplace(psi, g, bindings)
    return psi


def run(circuit: ParamCircuit, bindings: Mapping[str, float] | None = None) -> StateVector:
    """Run from |0...0> and project postselected qubits onto 0 (no renormalization)."""
    psi = run_gates(circuit.n_qubits, circuit.gates, bindings)
    for q in circuit.postselect:
        idx = [slice(None)] * circuit.n_qubits
        idx[q] = 1
        psi[tuple(idx)] = 0
    return StateVector(np.ascontiguousarray(psi).reshape(-1), circuit.n_qubits)


def register_probs(psi: np.ndarray, out_qubits: Sequence[int], k: int) -> np.ndarray:
    """Renormalized probabilities of the first k outcomes on ``out_qubits``.

    ``psi`` is an amplitude tensor of shape (2,) * n.
    """
    if k < 1 or 2 ** len(out_qubits) < k:
        raise ValueError(f"{len(out_qubits)} output qubits cannot encode {k} outcomes")
    p = np.abs(psi) ** 2
    rest = tuple(q for q in range(psi.ndim) if q not in out_qubits)
    marginal = p.sum(axis=rest) if rest else p
    # remaining axes are in ascending qubit order; reorder to out_qubits order
    ranked = sorted(out_qubits)
    marginal = np.transpose(marginal, [ranked.index(q) for q in out_qubits]).reshape(-1)[:k]
    total = marginal.sum()
    if not np.isfinite(total) or total <= DEGENERATE_NORM:
        raise DegenerateState(f"outcome mass {total:.3g} after postselection")
    return marginal / total


def outcome_probs(state: StateVector, out_qubits: Sequence[int], k: int) -> np.ndarray:
    return register_probs(state.amplitudes.reshape((2,) * state.n), out_qubits, k)


def sample_shots(probs: Sequence[float], shots: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical frequencies of ``shots`` independent measurements."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = np.asarray(probs, dtype=float)
    if abs(p.sum() - 1.0) > 1e-9 or (p < 0).any():
        raise ValueError("probs must be a distribution")
    counts = rng.multinomial(shots, p / p.sum())
    return counts / shots
