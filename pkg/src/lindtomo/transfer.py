"""Probe transfer matrices, learnability analysis, inversion, transforms.

A probe pairs an input (a prepared product eigenstate, or a Pauli string in
the randomized protocol) with an output Pauli observable.  The transfer
matrix entry for probe i and basis generator j is

    M[i, j] = norm_i * Tr(B_i L_j(A_i)),

with norm 1 for state probes and 1/2^n for Pauli-Pauli probes (the PTM
convention).  Every entry is evaluated through the exact string algebra;
state inputs are expanded over their 2^|support-ish| Pauli components.  With
the real parameterization all entries are real.

The left inverse N with N M = 1 turns measured expectation series E(t) into
transformed series P(t) = N E(t) whose slopes at t = 0 are the Lindblad
parameters.  Error propagation treats probe errors as independent (diagonal
covariance); for the randomized protocol, which reuses shots across
elements, this ignores cross-element correlations and is flagged as such in
report headers.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, LearnabilityError
from .model import ModelTemplate
from .pauli import PauliString

COND_WARN = 1e6
COND_FAIL = 1e10


@dataclass(frozen=True)
class Probe:
    """One (input, output observable) configuration.

    ``state_letters``/``state_signs`` describe a product eigenstate input;
    ``input_pauli`` a Pauli-string input.  Exactly one input kind is set.
    """

    output: PauliString
    state_letters: tuple[int, ...] | None = None
    state_signs: tuple[int, ...] | None = None
    input_pauli: PauliString | None = None

    @classmethod
    def from_state(cls, letters: Sequence[int], signs: Sequence[int],
                   output: PauliString) -> "Probe":
        if len(letters) != output.n or len(signs) != output.n:
            raise DimensionError("state labels must cover every qubit")
        return cls(output, tuple(int(l) for l in letters),
                   tuple(int(s) for s in signs), None)

    @classmethod
    def from_pauli_pair(cls, output: PauliString, input_pauli: PauliString) -> "Probe":
        if input_pauli.n != output.n:
            raise DimensionError("probe input and output must act on the same n")
        return cls(output, None, None, input_pauli)

    @property
    def n(self) -> int:
        return self.output.n

    @property
    def is_state_probe(self) -> bool:
        return self.state_letters is not None

    @property
    def normalization(self) -> float:
        return 1.0 if self.is_state_probe else 0.5**self.n

    @property
    def label(self) -> str:
        if self.is_state_probe:
            state = "".join(
                f"{'+' if s > 0 else '-'}{'IXYZ'[l]}"
                for l, s in zip(self.state_letters, self.state_signs))
            return f"{state}>{self.output}"
        return f"({self.output}|{self.input_pauli})"

    def input_components(self) -> list[tuple[float, int]]:
        """Input decomposed over Pauli strings: list of (weight, code).

        For a product eigenstate rho = prod (I + s_k L_k)/2 the component on
        the string with letters L on subset T carries weight prod_{k in T} s_k
        (the 1/2^n cancels against the trace normalization).
        """
        if not self.is_state_probe:
            return [(1.0, self.input_pauli.code)]
        n = self.n
        comps = []
        for subset in range(2**n):
            code = 0
            w = 1.0
            for k in range(n):
                if (subset >> (n - 1 - k)) & 1:
                    code = (code << 2) | self.state_letters[k]
                    w *= self.state_signs[k]
                else:
                    code <<= 2
            comps.append((w, code))
        return comps


@dataclass
class TransferMatrix:
    matrix: np.ndarray  # (n_probes, n_params), real
    probes: tuple[Probe, ...]
    template: ModelTemplate

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass
class LearnabilityReport:
    rank: int
    condition_number: float
    singular_values: np.ndarray
    unlearnable: list[dict] = field(default_factory=list)

    @property
    def full_column_rank(self) -> bool:
        return not self.unlearnable


@dataclass
class InversionMap:
    N: np.ndarray  # (n_params, n_probes)
    condition_number: float
    rank: int
    strategy: str


def build_transfer_matrix(template: ModelTemplate,
                          probes: Sequence[Probe]) -> TransferMatrix:
    """Assemble M over the given probes via the exact string algebra."""
    if not probes:
        raise ValueError("probe list must be non-empty")
    for probe in probes:
        if probe.n != template.n:
            raise DimensionError("probe and template qubit counts differ")
    # invert the per-parameter action table into a per-input-string view
    by_q: dict[int, list[tuple[int, int, float]]] = {}
    for j, entries in enumerate(template.action_table()):
        for q_code, (r_code, c) in entries.items():
            by_q.setdefault(q_code, []).append((j, r_code, c))
    m = np.zeros((len(probes), template.param_count))
    # The action table stores c with L_j(Q) = c R, so c equals the PTM pair
    # entry (1/2^n) Tr(R L_j(Q)); the state expansion's 1/2^n cancels the
    # trace normalization, leaving the bare sign weights.
    for i, probe in enumerate(probes):
        out_code = probe.output.code
        for w, q_code in probe.input_components():
            for j, r_code, c in by_q.get(q_code, ()):
                if r_code == out_code:
                    m[i, j] += w * c
    return TransferMatrix(m, tuple(probes), template)


def learnability_report(tm: TransferMatrix,
                        threshold_ratio: float = 1e-10) -> LearnabilityReport:
    """Singular-value analysis of column rank and conditioning."""
    u, s, vt = np.linalg.svd(tm.matrix, full_matrices=False)
    smax = s[0] if s.size else 0.0
    cutoff = threshold_ratio * smax
    rank = int(np.sum(s > cutoff))
    n_params = tm.matrix.shape[1]
    cond = float(smax / s[rank - 1]) if rank else np.inf
    unlearnable = []
    labels = [lab.text for lab in tm.template.labels]
    for idx in range(rank, n_params):
        direction = vt[idx] if idx < vt.shape[0] else np.zeros(n_params)
        sv = float(s[idx]) if idx < s.size else 0.0
        order = np.argsort(np.abs(direction))[::-1]
        dominant = [(labels[k], float(direction[k]))
                    for k in order[:4] if abs(direction[k]) > 1e-6]
        unlearnable.append({"singular_value": sv, "direction": direction,
                            "dominant": dominant})
    return LearnabilityReport(rank, cond, s, unlearnable)


def invert(tm: TransferMatrix, strategy: str = "pinv",
           sv_cutoff_ratio: float = 1e-10) -> InversionMap:
    """Left inverse N with N M = 1 on parameter space.

    ``pinv`` is the min-norm pseudo-inverse (unique inverse when M is
    square); ``sparse`` solves per-parameter local systems so each row of N
    touches only a few probes, cross-checked against the N M = 1 contract.
    """
    report = learnability_report(tm, sv_cutoff_ratio)
    n_params = tm.matrix.shape[1]
    if report.rank < n_params:
        names = ["; ".join(f"{lab} ({w:+.3f})" for lab, w in d["dominant"])
                 for d in report.unlearnable]
        raise LearnabilityError(
            f"transfer matrix rank {report.rank} < {n_params} parameters; "
            f"unlearnable directions: {names}",
            null_directions=report.unlearnable)
    if report.condition_number > COND_FAIL:
        raise LearnabilityError(
            f"condition number {report.condition_number:.3e} exceeds hard "
            f"threshold {COND_FAIL:.0e}")
    if report.condition_number > COND_WARN:
        warnings.warn(
            f"transfer matrix condition number {report.condition_number:.3e} "
            "exceeds the stability warning threshold", stacklevel=2)
    if strategy == "pinv":
        u, s, vt = np.linalg.svd(tm.matrix, full_matrices=False)
        keep = s > sv_cutoff_ratio * s[0]
        n = (vt[keep].T / s[keep]) @ u[:, keep].T
    elif strategy == "sparse":
        n = _sparse_left_inverse(tm.matrix)
    else:
        raise ValueError(f"unknown inversion strategy {strategy!r}")
    defect = np.max(np.abs(n @ tm.matrix - np.eye(n_params)))
    if defect > 1e-9:
        raise LearnabilityError(
            f"left-inverse verification failed: |NM - 1| = {defect:.3e}")
    return InversionMap(n, report.condition_number, report.rank, strategy)


def _sparse_left_inverse(m: np.ndarray, tol: float = 1e-11) -> np.ndarray:
    """Per-parameter local solves using only the rows a parameter touches.

    Starting from the rows where column j is nonzero, the row set is grown
    by support overlap until e_j lies in the span of M[rows].T; the min-norm
    solution over that row set forms row j of N.
    """
    n_rows, n_params = m.shape
    nonzero = np.abs(m) > tol * max(1.0, np.max(np.abs(m)))
    n = np.zeros((n_params, n_rows))
    for j in range(n_params):
        rows = np.flatnonzero(nonzero[:, j])
        if rows.size == 0:
            raise LearnabilityError(f"parameter column {j} is identically zero")
        for _ in range(n_params):
            sub = m[rows]
            target = np.zeros(n_params)
            target[j] = 1.0
            x, *_ = np.linalg.lstsq(sub.T, target, rcond=None)
            if np.max(np.abs(sub.T @ x - target)) < 1e-9:
                n[j, rows] = x
                break
            cols = np.flatnonzero(nonzero[rows].any(axis=0))
            grown = np.flatnonzero(nonzero[:, cols].any(axis=1))
            if grown.size == rows.size:
                raise LearnabilityError(
                    f"no local row set solves parameter column {j}")
            rows = grown
        else:
            raise LearnabilityError(f"local inversion did not converge for {j}")
    return n


def transform_signal(inv: InversionMap, values: np.ndarray,
                     sigmas: np.ndarray | None = None
                     ) -> tuple[np.ndarray, np.ndarray | None]:
    """Apply P(t) = N E(t) per time row, propagating independent errors.

    ``values`` has shape (n_times, n_probes).  Propagated standard errors
    come from the diagonal of N diag(sigma^2) N^T.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[1] != inv.N.shape[1]:
        raise DimensionError(
            f"expectation vectors of length {values.shape[1]} do not match "
            f"{inv.N.shape[1]} probes")
    transformed = values @ inv.N.T
    if sigmas is None:
        return transformed, None
    sigmas = np.atleast_2d(np.asarray(sigmas, dtype=float))
    if sigmas.shape != values.shape:
        raise DimensionError("sigmas must match the shape of values")
    variances = (sigmas**2) @ (inv.N.T**2)
    return transformed, np.sqrt(variances)


def needed_probe_indices(inv: InversionMap, rel_tol: float = 1e-12) -> np.ndarray:
    """Probe columns that actually enter the inversion (nonzero in N)."""
    scale = np.max(np.abs(inv.N))
    if scale == 0.0:
        return np.arange(0)
    return np.flatnonzero(np.max(np.abs(inv.N), axis=0) > rel_tol * scale)


def pauli_pairs_for_template(template: ModelTemplate) -> list[tuple[PauliString, PauliString]]:
    """Candidate (output P, input Q) pairs covering the template's supports.

    For every distinct term support S the pairs with supp(P) and supp(Q)
    inside S are included (P non-identity; Q may be the identity, whose
    element tracks the non-unital part of the dynamics).
    """
    n = template.n
    pairs: set[tuple[int, int]] = set()
    for support in template.term_supports:
        sites = sorted(support)
        local = [PauliString(n, 0)]
        for r in range(1, len(sites) + 1):
            for chosen in itertools.combinations(sites, r):
                for letters in itertools.product((1, 2, 3), repeat=r):
                    code = 0
                    for k in range(n):
                        if k in chosen:
                            code = (code << 2) | letters[chosen.index(k)]
                        else:
                            code <<= 2
                    local.append(PauliString(n, code))
        for p in local:
            if p.is_identity:
                continue
            for q in local:
                pairs.add((p.code, q.code))
    return [(PauliString(n, pc), PauliString(n, qc))
            for pc, qc in sorted(pairs)]
