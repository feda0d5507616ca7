"""Exact Lindblad propagation, expectation oracles, and shot simulation.

Two equivalent propagation routes are provided:

* a dense superoperator acting on row-major vectorized operators, built term
  by term from the generator (the transparent oracle used in tests), and
* a real Pauli-space propagator exp(t G) with G[r, q] = (1/2^n) Tr(P_r L(P_q)),
  built from the exact string algebra.  This is the fast route used by the
  acquisition pipelines; both are matrix exponentials of the same map in
  different operator bases.

Shot simulation follows the physical sequence: prepare a product Pauli
eigenstate (with optional thermal misprepartion), idle under the generator,
rotate each qubit into its measurement basis, sample the 2^n-outcome Born
distribution, then misassign outcomes through per-qubit confusion matrices.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm, hadamard

from .errors import CapacityError, ContractError, DimensionError
from .model import LindbladModel
from .pauli import (
    DENSE_QUBIT_CAP,
    PauliString,
    pauli_vector_of_product_state,
    product_state,
    to_matrix,
)

_SQRT2 = np.sqrt(2.0)

# Rotations mapping the +-1 eigenbasis of each letter to the computational
# basis: measuring letter b equals applying _BASIS_ROT[b] then measuring Z.
_BASIS_ROT = {
    1: np.array([[1, 1], [1, -1]], dtype=complex) / _SQRT2,
    2: np.array([[1, -1j], [1, 1j]], dtype=complex) / _SQRT2,
    3: np.eye(2, dtype=complex),
}


def vec(op: np.ndarray) -> np.ndarray:
    """Row-major vectorization: vec(A X B) = (A kron B.T) vec(X)."""
    return np.asarray(op).reshape(-1)


def unvec(v: np.ndarray) -> np.ndarray:
    dim = int(round(np.sqrt(v.size)))
    return np.asarray(v).reshape(dim, dim)


@dataclass
class Superoperator:
    """Dense matrix acting on vectorized 2^n x 2^n operators."""

    n: int
    matrix: np.ndarray


def build_superoperator(model: LindbladModel,
                        cap: int = DENSE_QUBIT_CAP) -> Superoperator:
    """Vectorize the generator; agrees with apply_generator to 1e-12."""
    n = model.n
    if n > cap:
        raise CapacityError(f"superoperator capped at n={cap}, got n={n}")
    dim = 2**n
    eye = np.eye(dim, dtype=complex)
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for coeff, p in zip(model.a, model.template.coherent_terms):
        if coeff == 0.0:
            continue
        pm = to_matrix(p)
        out += -1j * coeff * (np.kron(pm, eye) - np.kron(eye, pm.T))
    t = model.template
    for i, pi in enumerate(t.d_basis):
        for j, pj in enumerate(t.d_basis):
            d = model.D[i, j]
            if d == 0.0:
                continue
            mi, mj = to_matrix(pi), to_matrix(pj)
            qp = mj @ mi
            out += d * (np.kron(mi, mj.T)
                        - 0.5 * (np.kron(qp, eye) + np.kron(eye, qp.T)))
    return Superoperator(n, out)


class Propagator:
    """Caches exp(t L) in the vectorized-operator representation."""

    def __init__(self, model: LindbladModel):
        self.model = model
        self.superoperator = build_superoperator(model)
        self._cache: dict[float, np.ndarray] = {}

    def matrix(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError(f"idle time must be nonnegative, got {t}")
        key = float(t)
        if key not in self._cache:
            self._cache[key] = expm(self.superoperator.matrix * key)
        return self._cache[key]

    def apply(self, op: np.ndarray, t: float) -> np.ndarray:
        return unvec(self.matrix(t) @ vec(op))


class PauliPropagator:
    """Caches exp(t G) for the real Pauli-space generator G."""

    def __init__(self, model: LindbladModel):
        self.model = model
        self.generator = ptm_generator_matrix(model)
        self._cache: dict[float, np.ndarray] = {}

    def matrix(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError(f"idle time must be nonnegative, got {t}")
        key = float(t)
        if key not in self._cache:
            self._cache[key] = expm(self.generator * key)
        return self._cache[key]


def ptm_generator_matrix(model: LindbladModel) -> np.ndarray:
    """Real 4^n x 4^n matrix with entries (1/2^n) Tr(P_r L(P_q))."""
    n = model.n
    dim = 4**n
    g = np.zeros((dim, dim))
    params = model.parameter_vector()
    for coeff, entries in zip(params, model.template.action_table()):
        if coeff == 0.0:
            continue
        for q_code, (r_code, c) in entries.items():
            g[r_code, q_code] += coeff * c
    return g


_PROPAGATORS: "weakref.WeakKeyDictionary[LindbladModel, Propagator]" = (
    weakref.WeakKeyDictionary())
_PAULI_PROPAGATORS: "weakref.WeakKeyDictionary[LindbladModel, PauliPropagator]" = (
    weakref.WeakKeyDictionary())


def get_propagator(model: LindbladModel) -> Propagator:
    prop = _PROPAGATORS.get(model)
    if prop is None:
        prop = Propagator(model)
        _PROPAGATORS[model] = prop
    return prop


def get_pauli_propagator(model: LindbladModel) -> PauliPropagator:
    prop = _PAULI_PROPAGATORS.get(model)
    if prop is None:
        prop = PauliPropagator(model)
        _PAULI_PROPAGATORS[model] = prop
    return prop


def propagate(model: LindbladModel, rho0: np.ndarray, t: float,
              state_tol: float = 1e-8) -> np.ndarray:
    """Evolve a density matrix for time t via the superoperator exponential."""
    dim = 2**model.n
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (dim, dim):
        raise DimensionError(f"state shape {rho0.shape} does not match n={model.n}")
    if t < 0:
        raise ValueError(f"idle time must be nonnegative, got {t}")
    if np.max(np.abs(rho0 - rho0.conj().T)) > state_tol:
        raise ContractError("initial state must be Hermitian")
    if abs(np.trace(rho0) - 1.0) > state_tol:
        raise ContractError("initial state must have unit trace")
    if np.linalg.eigvalsh(rho0).min() < -state_tol:
        raise ContractError("initial state must be positive semidefinite")
    return get_propagator(model).apply(rho0, t)


def exact_ptm_element(model: LindbladModel, p: PauliString, q: PauliString,
                      t: float) -> float:
    """(1/2^n) Tr(P exp(tL)(Q)), by propagating Q as an operator."""
    if p.n != model.n or q.n != model.n:
        raise DimensionError("observable site count does not match the model")
    if t < 0:
        raise ValueError(f"idle time must be nonnegative, got {t}")
    evolved = get_propagator(model).apply(to_matrix(q), t)
    return float(np.real(np.trace(to_matrix(p) @ evolved))) / 2**model.n


# ---------------------------------------------------------------------------
# SPAM noise model
# ---------------------------------------------------------------------------

@dataclass
class NoiseModel:
    """Per-qubit confusion matrices and thermal preparation error.

    ``confusion[k][true, reported]`` is row stochastic.  ``thermal[k]`` is
    the probability that qubit k is prepared in the eigenstate orthogonal to
    the intended one.
    """

    confusion: np.ndarray  # (n, 2, 2)
    thermal: np.ndarray    # (n,)

    def __post_init__(self):
        self.confusion = np.asarray(self.confusion, dtype=float)
        self.thermal = np.asarray(self.thermal, dtype=float)
        n = self.thermal.shape[0]
        if self.confusion.shape != (n, 2, 2):
            raise DimensionError("confusion must have shape (n, 2, 2)")
        if np.any(np.abs(self.confusion.sum(axis=2) - 1.0) > 1e-12):
            raise ContractError("confusion rows must sum to 1")
        if np.any(self.confusion < -1e-15) or np.any(self.confusion > 1 + 1e-15):
            raise ContractError("confusion entries must lie in [0, 1]")
        if np.any(self.thermal < 0) or np.any(self.thermal >= 0.5):
            raise ContractError("thermal population must lie in [0, 0.5)")

    @property
    def n(self) -> int:
        return self.thermal.shape[0]

    @classmethod
    def ideal(cls, n: int) -> "NoiseModel":
        conf = np.tile(np.eye(2), (n, 1, 1))
        return cls(conf, np.zeros(n))

    @classmethod
    def uniform(cls, n: int, p10: float = 0.0, p01: float = 0.0,
                thermal: float = 0.0) -> "NoiseModel":
        """Same (p(1|0), p(0|1), thermal) on every qubit."""
        conf = np.tile(np.array([[1 - p10, p10], [p01, 1 - p01]]), (n, 1, 1))
        return cls(conf, np.full(n, thermal))

    def contraction(self, qubit: int) -> tuple[float, float]:
        """Affine map (alpha, beta) with E_reported[m] = alpha m + beta."""
        c = self.confusion[qubit]
        alpha = 1.0 - c[0, 1] - c[1, 0]
        beta = c[1, 0] - c[0, 1]
        return float(alpha), float(beta)

    @property
    def is_ideal(self) -> bool:
        return (np.allclose(self.confusion, np.eye(2)[None, :, :])
                and not self.thermal.any())


def apply_spam_to_expectation(noise: NoiseModel, qubit: int, value: float) -> float:
    """Forward confusion model on a single-qubit expectation value."""
    if not -1.0 <= value <= 1.0:
        raise ValueError(f"expectation must lie in [-1, 1], got {value}")
    alpha, beta = noise.contraction(qubit)
    return alpha * value + beta


def invert_spam_on_expectation(noise: NoiseModel, qubit: int, value: float) -> float:
    """Deconvolve measurement confusion; valid when the matrix is well conditioned."""
    alpha, beta = noise.contraction(qubit)
    if abs(alpha) < 1e-12:
        raise ContractError("confusion matrix is singular; cannot invert")
    return (value - beta) / alpha


def measurement_transform(noise: NoiseModel) -> np.ndarray:
    """Per-site 4x4 maps turning true Pauli expectations into reported ones.

    Site transform (components I, X, Y, Z): identity row unchanged, every
    non-identity component scaled by alpha with a beta leak from identity.
    Returned with shape (n, 4, 4).
    """
    out = np.zeros((noise.n, 4, 4))
    for k in range(noise.n):
        alpha, beta = noise.contraction(k)
        m = np.eye(4) * alpha
        m[0, 0] = 1.0
        m[1:, 0] = beta
        out[k] = m
    return out


def apply_sitewise(vecs: np.ndarray, site_mats: np.ndarray) -> np.ndarray:
    """Apply one 4x4 matrix per site to Pauli vectors of shape (..., 4^n)."""
    n = site_mats.shape[0]
    shape = vecs.shape
    work = vecs.reshape(shape[:-1] + (4,) * n)
    for k in range(n):
        axis = len(shape) - 1 + k
        work = np.moveaxis(np.tensordot(work, site_mats[k], axes=([axis], [1])),
                           -1, axis)
    return work.reshape(shape)


# ---------------------------------------------------------------------------
# Shot simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShotOutcome:
    """Per-qubit measurement results; signs[k] = +1 iff bits[k] = 0."""

    bits: tuple[int, ...]

    @property
    def signs(self) -> tuple[int, ...]:
        return tuple(1 - 2 * b for b in self.bits)


def sample_shot(model: LindbladModel, init: Sequence[tuple[int, int]], t: float,
                basis: Sequence[int], noise: NoiseModel,
                rng: np.random.Generator) -> ShotOutcome:
    """Simulate one experiment through the full physical sequence.

    ``init`` is a per-qubit (letter, sign) list with letters in {1,2,3} for
    X, Y, Z; ``basis`` a per-qubit letter list.  Deterministic given the rng
    stream state.
    """
    n = model.n
    if len(init) != n or len(basis) != n:
        raise DimensionError("init and basis must list every qubit")
    for b in basis:
        if b not in (1, 2, 3):
            raise ValueError(f"invalid basis letter code {b}")
    letters = [l for l, _ in init]
    signs = []
    for k, (_, sign) in enumerate(init):
        if sign not in (+1, -1):
            raise ValueError(f"invalid eigenvalue sign {sign}")
        flip = rng.random() < noise.thermal[k]
        signs.append(-sign if flip else sign)
    rho = product_state(letters, signs)
    evolved = get_propagator(model).apply(rho, t)
    rot = np.array([[1.0 + 0j]])
    for b in basis:
        rot = np.kron(rot, _BASIS_ROT[b])
    probs = np.real(np.diag(rot @ evolved @ rot.conj().T))
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    outcome = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    bits = [(outcome >> (n - 1 - k)) & 1 for k in range(n)]
    reported = []
    for k, bit in enumerate(bits):
        flip_prob = noise.confusion[k, bit, 1 - bit]
        reported.append(1 - bit if rng.random() < flip_prob else bit)
    return ShotOutcome(tuple(reported))


# ---------------------------------------------------------------------------
# Exact batched distributions (used by the acquisition pipelines)
# ---------------------------------------------------------------------------

def subset_index_table(n: int, basis: Sequence[int]) -> np.ndarray:
    """Pauli-string index of each qubit subset measured in the given basis.

    Entry S (bitmask, bit k = qubit k, qubit 0 most significant) is the
    canonical index of the string with basis[k] on the sites in S.
    """
    out = np.zeros(2**n, dtype=np.int64)
    for s in range(2**n):
        code = 0
        for k in range(n):
            letter = basis[k] if (s >> (n - 1 - k)) & 1 else 0
            code = (code << 2) | letter
        out[s] = code
    return out


def outcome_distribution(model: LindbladModel, init: Sequence[tuple[int, int]],
                         t: float, basis: Sequence[int],
                         noise: NoiseModel) -> np.ndarray:
    """Exact reported-outcome distribution for one configuration.

    Thermal misprepartion and measurement confusion are folded in exactly,
    so this equals the law of :func:`sample_shot` marginalized over its
    internal randomness.
    """
    n = model.n
    letters = [l for l, _ in init]
    signs = [s for _, s in init]
    r0 = pauli_vector_of_product_state(letters, signs, damping=noise.thermal)
    r = get_pauli_propagator(model).matrix(t) @ r0
    r = apply_sitewise(r, measurement_transform(noise))
    q = r[subset_index_table(n, basis)]
    probs = hadamard(2**n) @ q / 2**n
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def expectation_of_subsets(counts_or_probs: np.ndarray) -> np.ndarray:
    """Sign-product means for every qubit subset from a 2^n outcome vector."""
    dim = counts_or_probs.shape[-1]
    total = counts_or_probs.sum(axis=-1, keepdims=True)
    return (counts_or_probs @ hadamard(dim)) / total
