"""GHZ states, their stabiliser generators and single-copy stabiliser tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .qcore import (
    HADAMARD,
    I2,
    X,
    Y,
    Z,
    QuantumState,
    QuantumStateError,
    apply_operator,
    kron_all,
    resolve_rng,
)

_LETTER_MATRIX = {"I": I2, "X": X, "Y": Y, "Z": Z}


@dataclass(frozen=True)
class PauliString:
    """Signed tensor product of single-qubit Paulis, e.g. ``-YYXX``."""

    sign: int
    letters: str

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        if not self.letters or set(self.letters) - set("IXYZ"):
            raise ValueError(f"bad Pauli letters {self.letters!r}")

    @classmethod
    def parse(cls, text: str) -> "PauliString":
        text = text.strip()
        sign = 1
        if text[:1] in "+-":
            sign = -1 if text[0] == "-" else 1
            text = text[1:]
        return cls(sign, text.upper())

    def __str__(self) -> str:
        return ("-" if self.sign < 0 else "+") + self.letters

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @property
    def masks(self) -> tuple[int, int, complex]:
        """``(xmask, zmask, phase)`` so that ``P|x> = phase (-1)^{|x & z|} |x ^ xmask>``."""
        n = self.n_qubits
        xm = zm = 0
        n_y = 0
        for q, c in enumerate(self.letters):
            bit = 1 << (n - 1 - q)
            if c in "XY":
                xm |= bit
            if c in "ZY":
                zm |= bit
            if c == "Y":
                n_y += 1
        return xm, zm, complex(self.sign * (1j ** n_y))

    def matrix(self) -> np.ndarray:
        return self.sign * kron_all([_LETTER_MATRIX[c] for c in self.letters])

    def expectation(self, state: QuantumState) -> float:
        if state.n_qubits != self.n_qubits:
            raise QuantumStateError(
                f"{self.n_qubits}-qubit Pauli string on a {state.n_qubits}-qubit state"
            )
        xm, zm, ph = self.masks
        if state.is_pure:
            val = _kernels.pauli_expectation_pure(state.data, xm, zm, ph)
        else:
            val = _kernels.pauli_expectation_mixed(state.data, xm, zm, ph)
        return float(np.real(val))

    def conjugate_by_x(self, qubits: Sequence[int]) -> "PauliString":
        """``X_S P X_S``: Y and Z letters on the flipped qubits change sign."""
        flips = sum(1 for q in qubits if self.letters[q] in "YZ")
        return PauliString(self.sign * (-1) ** flips, self.letters)

    def commutes_with(self, other: "PauliString") -> bool:
        anti = sum(
            1 for a, b in zip(self.letters, other.letters) if a != "I" and b != "I" and a != b
        )
        return anti % 2 == 0


@dataclass(frozen=True)
class StabilizerSet:
    n: int
    generators: tuple[PauliString, ...]

    def __iter__(self):
        return iter(self.generators)

    def __len__(self) -> int:
        return len(self.generators)

    def __getitem__(self, i: int) -> PauliString:
        return self.generators[i]

    def conjugate_by_x(self, qubits: Sequence[int]) -> "StabilizerSet":
        return StabilizerSet(self.n, tuple(g.conjugate_by_x(qubits) for g in self.generators))


def ghz_state(n: int) -> QuantumState:
    if n < 1:
        raise ValueError("GHZ state needs n >= 1")
    v = np.zeros(1 << n, dtype=np.complex128)
    v[0] = v[-1] = 1.0 / np.sqrt(2.0)
    return QuantumState(v)


def stabilizer_generators(n: int) -> StabilizerSet:
    """The n GHZ generators: sliding ``-YY`` pairs, the wrap row ``-Y...Y`` and ``+X...X``.

    Y pairs sit on qubits (j, j+1) for j = 0..n-3, the wrap row puts them on
    (0, n-1).  For n = 2 this gives ``{-YY, +XX}``.
    """
    if n < 2:
        raise ValueError("stabilizer generators need n >= 2")
    gens = []
    pairs = [(j, j + 1) for j in range(n - 2)] + [(0, n - 1)]
    for a, b in pairs:
        letters = ["X"] * n
        letters[a] = letters[b] = "Y"
        gens.append(PauliString(-1, "".join(letters)))
    gens.append(PauliString(1, "X" * n))
    return StabilizerSet(n, tuple(gens))


def failure_probability(state: QuantumState, k: PauliString) -> float:
    """Probability that measuring ``k`` on ``state`` returns -1."""
    return float(min(1.0, max(0.0, 0.5 * (1.0 - k.expectation(state)))))


def run_single_test(state: QuantumState, k: PauliString, rng_seed) -> bool:
    """One destructive stabiliser test.  Returns True on pass (+1 outcome)."""
    p = failure_probability(state, k)
    rng = resolve_rng(rng_seed)
    return not (rng.random() < p)


def local_outcome_distribution(state: QuantumState, k: PauliString) -> np.ndarray:
    """Joint distribution of the per-qubit +-1 outcomes when each qubit measures its letter.

    Index ``s`` encodes the outcomes bitwise (bit set = -1 on that qubit,
    qubit 0 most significant).  The stabiliser outcome is
    ``k.sign * (-1)^{popcount(s)}``.  Identity letters always read +1.
    """
    n = state.n_qubits
    data = state.data
    sdg = np.diag([1.0, -1j])
    for q, c in enumerate(k.letters):
        if c == "X":
            data = apply_operator(data, HADAMARD, [q], n)
        elif c == "Y":
            data = apply_operator(data, HADAMARD @ sdg, [q], n)
    if data.ndim == 1:
        probs = np.abs(data) ** 2
    else:
        probs = np.real(np.diag(data)).copy()
    # identity letters are not measured: fold their bits to +1
    id_mask = 0
    for q, c in enumerate(k.letters):
        if c == "I":
            id_mask |= 1 << (n - 1 - q)
    if id_mask:
        folded = np.zeros_like(probs)
        np.add.at(folded, np.arange(probs.shape[0]) & ~id_mask, probs)
        probs = folded
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()
