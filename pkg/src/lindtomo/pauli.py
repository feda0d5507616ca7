"""Exact algebra of n-qubit Pauli strings.

A string is stored as a packed base-4 integer, two bits per site with the
most significant pair belonging to site 0.  Letter codes are I=0, X=1, Y=2,
Z=3, so the packed code of a string equals its rank in lexicographic order
(I < X < Y < Z, leftmost site most significant).  That rank is used as the
canonical index of the string everywhere downstream.

Products are evaluated sitewise: the result string is the XOR of the packed
codes and the phase is a power of i accumulated from a 16-entry table.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import CapacityError, DimensionError

LETTERS = "IXYZ"

#: Default cap on dense-matrix realization (32-dim Hilbert space).
DENSE_QUBIT_CAP = 5

# Exponent of i in the product of two single-site Paulis, indexed [a][b].
# E.g. X*Y = iZ -> exponent 1, Y*X = -iZ -> exponent 3.
_PHASE_EXP = (
    (0, 0, 0, 0),
    (0, 0, 1, 3),
    (0, 3, 0, 1),
    (0, 1, 3, 0),
)

_I_POWERS = (1 + 0j, 1j, -1 + 0j, -1j)

_SINGLE_QUBIT = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass(frozen=True, order=True)
class PauliString:
    """Immutable n-site tensor product of {I, X, Y, Z}.

    Ordering compares (n, code), which for equal n is the lexicographic
    letter order used for all basis enumeration.
    """

    n: int
    code: int

    def __post_init__(self):
        if self.n < 1:
            raise DimensionError(f"need at least one site, got n={self.n}")
        if not 0 <= self.code < 4**self.n:
            raise ValueError(f"code {self.code} out of range for n={self.n}")

    @classmethod
    def from_string(cls, text: str) -> "PauliString":
        """Parse the textual format, e.g. ``"XIZ"`` (site 0 leftmost)."""
        code = 0
        for ch in text:
            try:
                code = (code << 2) | LETTERS.index(ch)
            except ValueError:
                raise ValueError(f"invalid Pauli letter {ch!r} in {text!r}") from None
        return cls(len(text), code)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0)

    @classmethod
    def from_letters(cls, codes: Sequence[int]) -> "PauliString":
        code = 0
        for c in codes:
            code = (code << 2) | int(c)
        return cls(len(codes), code)

    def letter(self, site: int) -> int:
        """Letter code (0..3) at the given site."""
        return (self.code >> (2 * (self.n - 1 - site))) & 3

    @property
    def letters(self) -> tuple[int, ...]:
        return tuple(self.letter(k) for k in range(self.n))

    @property
    def support(self) -> tuple[int, ...]:
        """Sites where the letter is not I."""
        return tuple(k for k in range(self.n) if self.letter(k) != 0)

    @property
    def weight(self) -> int:
        return len(self.support)

    @property
    def is_identity(self) -> bool:
        return self.code == 0

    def __str__(self) -> str:
        return "".join(LETTERS[c] for c in self.letters)

    def __repr__(self) -> str:
        return f"PauliString({str(self)!r})"

    def __iter__(self) -> Iterator[int]:
        return iter(self.letters)


@dataclass(frozen=True)
class PhasedPauli:
    """A Pauli string with a phase in {1, i, -1, -i}, closed under products."""

    phase: complex
    string: PauliString

    def __mul__(self, other: "PhasedPauli") -> "PhasedPauli":
        prod = multiply(self.string, other.string)
        return PhasedPauli(self.phase * other.phase * prod.phase, prod.string)

    def to_matrix(self) -> np.ndarray:
        return self.phase * to_matrix(self.string)


def enumerate_strings(n: int, include_identity: bool = True) -> list[PauliString]:
    """All strings of ``n`` sites in canonical (packed-code) order."""
    start = 0 if include_identity else 1
    return [PauliString(n, code) for code in range(start, 4**n)]


def phase_exponent(a: PauliString, b: PauliString) -> int:
    """Exponent of i in the product a*b, accumulated sitewise, mod 4."""
    if a.n != b.n:
        raise DimensionError(f"site-count mismatch: {a.n} vs {b.n}")
    exp = 0
    ca, cb = a.code, b.code
    for _ in range(a.n):
        exp += _PHASE_EXP[ca & 3][cb & 3]
        ca >>= 2
        cb >>= 2
    return exp & 3


def multiply(a: PauliString, b: PauliString) -> PhasedPauli:
    """Exact product a*b with the accumulated single-site phases."""
    exp = phase_exponent(a, b)
    return PhasedPauli(_I_POWERS[exp], PauliString(a.n, a.code ^ b.code))


def commutes(a: PauliString, b: PauliString) -> bool:
    """True iff the strings commute (even number of anticommuting sites)."""
    if a.n != b.n:
        raise DimensionError(f"site-count mismatch: {a.n} vs {b.n}")
    odd = 0
    ca, cb = a.code, b.code
    for _ in range(a.n):
        la, lb = ca & 3, cb & 3
        if la != 0 and lb != 0 and la != lb:
            odd ^= 1
        ca >>= 2
        cb >>= 2
    return odd == 0


def weight(p: PauliString) -> int:
    return p.weight


@functools.lru_cache(maxsize=8192)
def _dense(n: int, code: int) -> np.ndarray:
    if n == 1:
        return _SINGLE_QUBIT[code]
    m = _dense(n - 1, code >> 2)
    out = np.kron(m, _SINGLE_QUBIT[code & 3])
    out.setflags(write=False)
    return out


def to_matrix(p: PauliString, cap: int = DENSE_QUBIT_CAP) -> np.ndarray:
    """Dense 2^n x 2^n realization; refuses n above ``cap``."""
    if p.n > cap:
        raise CapacityError(f"dense realization capped at n={cap}, got n={p.n}")
    return _dense(p.n, p.code)


def hilbert_schmidt(p: PauliString, m: np.ndarray) -> complex:
    """Normalized overlap (1/2^n) Tr(P m)."""
    dim = 2**p.n
    m = np.asarray(m)
    if m.shape != (dim, dim):
        raise DimensionError(f"matrix shape {m.shape} does not match n={p.n}")
    return complex(np.trace(to_matrix(p) @ m)) / dim


def eigenstate(letter: int, sign: int) -> np.ndarray:
    """Single-qubit density matrix (I + sign*letter)/2."""
    if letter not in (1, 2, 3):
        raise ValueError(f"eigenstate needs a non-identity letter, got {letter}")
    if sign not in (+1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    return 0.5 * (_SINGLE_QUBIT[0] + sign * _SINGLE_QUBIT[letter])


def product_state(letters: Sequence[int], signs: Sequence[int]) -> np.ndarray:
    """Density matrix of a product of single-qubit Pauli eigenstates."""
    if len(letters) != len(signs):
        raise DimensionError("letters and signs must have equal length")
    rho = np.array([[1.0 + 0j]])
    for letter, sign in zip(letters, signs):
        rho = np.kron(rho, eigenstate(letter, sign))
    return rho


def pauli_vector_of_product_state(letters: Sequence[int], signs: Sequence[int],
                                  damping: Sequence[float] | None = None) -> np.ndarray:
    """Pauli expectation vector of a product eigenstate, in canonical order.

    ``damping`` optionally shrinks each site's polarization toward zero
    (entry d_k multiplies the non-identity component by 1 - 2*d_k), which is
    how residual thermal preparation error enters the exact pipelines.
    """
    n = len(letters)
    vec = np.array([1.0])
    for k, (letter, sign) in enumerate(zip(letters, signs)):
        site = np.zeros(4)
        site[0] = 1.0
        pol = float(sign)
        if damping is not None:
            pol *= 1.0 - 2.0 * damping[k]
        site[letter] = pol
        vec = np.kron(vec, site)
    assert vec.shape == (4**n,)
    return vec
