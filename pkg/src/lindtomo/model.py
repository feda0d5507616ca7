"""Pauli-basis parameterization of time-independent Lindblad generators.

The generator acting on an operator ``op`` is

    L(op) = -i sum_P a_P [P, op]
            + sum_{P,Q} D_{P,Q} (P op Q - (QP op + op QP)/2)

with real coherent coefficients ``a_P`` (angular frequency, rad/us) and a
Hermitian dissipation matrix ``D`` (rates, 1/us) indexed by non-identity
Pauli strings.  A :class:`ModelTemplate` fixes which terms are free; a
:class:`LindbladModel` carries their values.

The real parameter vector is laid out as: coherent coefficients first (in
template order), then the diagonal of D, then for each off-diagonal pair
(P, Q) with P < Q the real part followed by the imaginary part.  This order
defines the indexing of transfer matrices and fit outputs everywhere.

Unit convention: hbar = 1, times in microseconds.  Reports convert to kHz
via value / (2 pi) * 1e3; the conversion is stated in report headers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError
from .pauli import (
    PauliString,
    commutes,
    enumerate_strings,
    phase_exponent,
    to_matrix,
)

_I_POW = (1 + 0j, 1j, -1 + 0j, -1j)


@dataclass(frozen=True)
class ParamLabel:
    """One real degree of freedom of a model template."""

    kind: str  # "a" | "Ddiag" | "Dre" | "Dim"
    first: PauliString
    second: PauliString | None = None

    @property
    def text(self) -> str:
        if self.kind == "a":
            return f"a[{self.first}]"
        if self.kind == "Ddiag":
            return f"D[{self.first}|{self.first}]"
        prefix = "Re" if self.kind == "Dre" else "Im"
        return f"{prefix}D[{self.first}|{self.second}]"

    @property
    def group(self) -> tuple:
        """Key shared by the components of one (possibly complex) parameter."""
        if self.kind == "a":
            return ("a", self.first.code)
        if self.kind == "Ddiag":
            return ("D", self.first.code, self.first.code)
        return ("D", self.first.code, self.second.code)


class ModelTemplate:
    """Index set of free Lindblad terms with a locality structure.

    Identity strings never appear: the identity component of H is a global
    phase and jump operators are traceless.  The dissipative pair set is
    closed under transposition so that Hermiticity of D is expressible.
    """

    def __init__(self, n: int, coherent_terms: Sequence[PauliString],
                 dissipative_pairs: Sequence[tuple[PauliString, PauliString]]):
        self.n = n
        self.coherent_terms = tuple(coherent_terms)
        for p in self.coherent_terms:
            if p.n != n:
                raise DimensionError(f"coherent term {p} has wrong site count")
            if p.is_identity:
                raise ContractError("identity is not a valid coherent term")

        basis: list[PauliString] = []
        seen: set[int] = set()
        pair_set: set[tuple[int, int]] = set()
        for p, q in dissipative_pairs:
            if p.n != n or q.n != n:
                raise DimensionError("dissipative pair has wrong site count")
            if p.is_identity or q.is_identity:
                raise ContractError("identity is not a valid jump-operator term")
            for s in (p, q):
                if s.code not in seen:
                    seen.add(s.code)
                    basis.append(s)
            pair_set.add((p.code, q.code))
            pair_set.add((q.code, p.code))
        basis.sort(key=lambda s: s.code)
        self.d_basis = tuple(basis)
        self._d_index = {s.code: i for i, s in enumerate(self.d_basis)}
        for s in self.d_basis:
            if (s.code, s.code) not in pair_set:
                # Diagonals carry the rates; a template without them cannot
                # express a PSD dissipator on that string.
                pair_set.add((s.code, s.code))
        self._pair_codes = frozenset(pair_set)
        self.offdiag_pairs = tuple(
            (self.d_basis[i], self.d_basis[j])
            for i, j in itertools.combinations(range(len(self.d_basis)), 2)
            if (self.d_basis[i].code, self.d_basis[j].code) in self._pair_codes
        )
        self._labels: tuple[ParamLabel, ...] | None = None
        self._action_table: list[dict[int, tuple[int, float]]] | None = None

    # -- constructors -----------------------------------------------------

    @classmethod
    def full(cls, n: int) -> "ModelTemplate":
        """Every non-identity term: 4^n - 1 coherent, (4^n - 1)^2 dissipative reals."""
        strings = enumerate_strings(n, include_identity=False)
        pairs = [(p, q) for p in strings for q in strings]
        return cls(n, strings, pairs)

    @classmethod
    def on_site_k_local(cls, n: int, k: int) -> "ModelTemplate":
        """On-site dissipation plus coherent terms of weight at most k."""
        if not 1 <= k <= 3:
            raise ValueError(f"k must be 1, 2 or 3, got {k}")
        coherent = [p for p in enumerate_strings(n, include_identity=False)
                    if p.weight <= k]
        pairs = []
        for site in range(n):
            site_strings = [_single_site(n, site, letter) for letter in (1, 2, 3)]
            pairs.extend((p, q) for p in site_strings for q in site_strings)
        return cls(n, coherent, pairs)

    # -- bookkeeping -------------------------------------------------------

    def d_index(self, p: PauliString) -> int:
        return self._d_index[p.code]

    def allows_pair(self, p: PauliString, q: PauliString) -> bool:
        return (p.code, q.code) in self._pair_codes

    @property
    def labels(self) -> tuple[ParamLabel, ...]:
        if self._labels is None:
            out = [ParamLabel("a", p) for p in self.coherent_terms]
            out.extend(ParamLabel("Ddiag", p) for p in self.d_basis)
            for p, q in self.offdiag_pairs:
                out.append(ParamLabel("Dre", p, q))
                out.append(ParamLabel("Dim", p, q))
            self._labels = tuple(out)
        return self._labels

    @property
    def param_count(self) -> int:
        return len(self.labels)

    @property
    def term_supports(self) -> tuple[frozenset[int], ...]:
        """Distinct qubit supports spanned by the template's terms."""
        supports = {frozenset(p.support) for p in self.coherent_terms}
        for p, q in self.offdiag_pairs:
            supports.add(frozenset(p.support) | frozenset(q.support))
        supports.update(frozenset(p.support) for p in self.d_basis)
        return tuple(sorted(supports, key=lambda s: (len(s), sorted(s))))

    def __eq__(self, other) -> bool:
        return (isinstance(other, ModelTemplate)
                and self.n == other.n
                and self.coherent_terms == other.coherent_terms
                and self.d_basis == other.d_basis
                and self._pair_codes == other._pair_codes)

    def __repr__(self) -> str:
        return (f"ModelTemplate(n={self.n}, coherent={len(self.coherent_terms)}, "
                f"d_basis={len(self.d_basis)}, params={self.param_count})")

    # -- exact action on basis strings --------------------------------------

    def action_table(self) -> list[dict[int, tuple[int, float]]]:
        """Per parameter j, the map Q -> (R, c) with L_j(Q) = c * R.

        Every basis generator sends a Pauli string to a single Pauli string
        with a real coefficient; this table is the exact algebraic core used
        for transfer matrices and Pauli-space propagation.
        """
        if self._action_table is None:
            all_q = enumerate_strings(self.n, include_identity=True)
            table: list[dict[int, tuple[int, float]]] = []
            for label in self.labels:
                entries: dict[int, tuple[int, float]] = {}
                for q in all_q:
                    rc = _label_action(label, q)
                    if rc is not None:
                        entries[q.code] = rc
                table.append(entries)
            self._action_table = table
        return self._action_table


def _single_site(n: int, site: int, letter: int) -> PauliString:
    return PauliString(n, letter << (2 * (n - 1 - site)))


def _sandwich_coeff(a: PauliString, b: PauliString, q: PauliString) -> complex:
    """Coefficient c in  A Q B - (BA Q + Q BA)/2 = c * (A xor Q xor B)."""
    e1 = phase_exponent(a, q) + phase_exponent(
        PauliString(a.n, a.code ^ q.code), b)
    eba = phase_exponent(b, a)
    s = PauliString(a.n, a.code ^ b.code)
    e2 = eba + phase_exponent(s, q)
    e3 = eba + phase_exponent(q, s)
    return _I_POW[e1 & 3] - 0.5 * (_I_POW[e2 & 3] + _I_POW[e3 & 3])


def _label_action(label: ParamLabel, q: PauliString) -> tuple[int, float] | None:
    """Action of one basis generator on Q, or None when it annihilates Q."""
    a = label.first
    if label.kind == "a":
        # -i [A, Q] = -2i A Q when A and Q anticommute, else 0.
        if commutes(a, q):
            return None
        coeff = -2j * _I_POW[phase_exponent(a, q) & 3]
        return (a.code ^ q.code, float(coeff.real))
    b = label.second if label.second is not None else a
    r_code = a.code ^ b.code ^ q.code
    c_ab = _sandwich_coeff(a, b, q)
    if label.kind == "Ddiag":
        coeff = c_ab
    elif label.kind == "Dre":
        coeff = c_ab + _sandwich_coeff(b, a, q)
    else:  # Dim
        coeff = 1j * (c_ab - _sandwich_coeff(b, a, q))
    if abs(coeff) < 1e-15:
        return None
    return (r_code, float(coeff.real))


class LindbladModel:
    """Values for a template: coherent vector ``a`` and Hermitian ``D``.

    Ground-truth models used for simulation should have PSD ``D`` (complete
    positivity); reconstructed models may not, and are reported as-is.
    """

    def __init__(self, template: ModelTemplate, a: np.ndarray, D: np.ndarray):
        nd = len(template.d_basis)
        a = np.asarray(a, dtype=float)
        D = np.asarray(D, dtype=complex)
        if a.shape != (len(template.coherent_terms),):
            raise DimensionError(f"coherent vector has shape {a.shape}")
        if D.shape != (nd, nd):
            raise DimensionError(f"dissipation matrix has shape {D.shape}")
        if nd and np.max(np.abs(D - D.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(D))):
            raise ContractError("dissipation matrix must be Hermitian")
        self.template = template
        self.a = a
        self.D = 0.5 * (D + D.conj().T)  # scrub float-level asymmetry

    @property
    def n(self) -> int:
        return self.template.n

    @classmethod
    def zero(cls, template: ModelTemplate) -> "LindbladModel":
        nd = len(template.d_basis)
        return cls(template, np.zeros(len(template.coherent_terms)),
                   np.zeros((nd, nd), dtype=complex))

    # -- parameter vector round trip ----------------------------------------

    def parameter_vector(self) -> np.ndarray:
        t = self.template
        out = np.empty(t.param_count)
        c = len(t.coherent_terms)
        out[:c] = self.a
        nd = len(t.d_basis)
        out[c:c + nd] = self.D.diagonal().real
        pos = c + nd
        for p, q in t.offdiag_pairs:
            entry = self.D[t.d_index(p), t.d_index(q)]
            out[pos] = entry.real
            out[pos + 1] = entry.imag
            pos += 2
        return out

    @classmethod
    def from_parameter_vector(cls, template: ModelTemplate,
                              values: np.ndarray) -> "LindbladModel":
        values = np.asarray(values, dtype=float)
        if values.shape != (template.param_count,):
            raise DimensionError(
                f"expected {template.param_count} parameters, got {values.shape}")
        c = len(template.coherent_terms)
        nd = len(template.d_basis)
        a = values[:c].copy()
        D = np.zeros((nd, nd), dtype=complex)
        D[np.diag_indices(nd)] = values[c:c + nd]
        pos = c + nd
        for p, q in template.offdiag_pairs:
            i, j = template.d_index(p), template.d_index(q)
            D[i, j] = values[pos] + 1j * values[pos + 1]
            D[j, i] = values[pos] - 1j * values[pos + 1]
            pos += 2
        return cls(template, a, D)

    # -- dense generator -----------------------------------------------------

    def apply_generator(self, op: np.ndarray) -> np.ndarray:
        """Evaluate L(op) densely.  Trace-annihilating by construction."""
        dim = 2**self.n
        op = np.asarray(op, dtype=complex)
        if op.shape != (dim, dim):
            raise DimensionError(f"operator shape {op.shape} does not match n={self.n}")
        out = np.zeros_like(op)
        for coeff, p in zip(self.a, self.template.coherent_terms):
            if coeff == 0.0:
                continue
            pm = to_matrix(p)
            out += -1j * coeff * (pm @ op - op @ pm)
        t = self.template
        nd = len(t.d_basis)
        for i in range(nd):
            for j in range(nd):
                d = self.D[i, j]
                if d == 0.0:
                    continue
                pi = to_matrix(t.d_basis[i])
                pj = to_matrix(t.d_basis[j])
                qp = pj @ pi
                out += d * (pi @ op @ pj - 0.5 * (qp @ op + op @ qp))
        return out

    def dissipator(self, op: np.ndarray) -> np.ndarray:
        """Dissipative part only (coherent coefficients ignored)."""
        saved = self.a
        try:
            self.a = np.zeros_like(saved)
            return self.apply_generator(op)
        finally:
            self.a = saved

    # -- physicality ---------------------------------------------------------

    def validate_physical(self, tol: float = 1e-9) -> "PhysicalityReport":
        if len(self.template.d_basis) == 0:
            return PhysicalityReport(0.0, True)
        eigvals = np.linalg.eigvalsh(self.D)
        mn = float(eigvals.min()) if eigvals.size else 0.0
        return PhysicalityReport(mn, mn >= -tol)

    def jump_decomposition(self, tol: float = 1e-12) -> list["JumpChannel"]:
        """Diagonalize D into rate/jump-operator channels.

        Channels with |rate| below ``tol`` times the largest rate are
        dropped.  Negative rates are kept and flagged: a reconstructed model
        may violate complete positivity and that is reported, not hidden.
        """
        t = self.template
        if len(t.d_basis) == 0:
            return []
        if np.max(np.abs(self.D - self.D.conj().T)) > 1e-9 * max(1.0, np.max(np.abs(self.D))):
            raise ContractError("jump decomposition requires Hermitian D")
        rates, vecs = np.linalg.eigh(self.D)
        scale = float(np.max(np.abs(rates))) if rates.size else 0.0
        channels = []
        for k in np.argsort(rates)[::-1]:
            rate = float(rates[k])
            if scale == 0.0 or abs(rate) <= tol * scale:
                continue
            coeffs = vecs[:, k]
            op = np.zeros((2**self.n, 2**self.n), dtype=complex)
            for amp, p in zip(coeffs, t.d_basis):
                op += amp * to_matrix(p)
            channels.append(JumpChannel(rate, op, coeffs.copy(), rate < 0.0))
        return channels


@dataclass(frozen=True)
class PhysicalityReport:
    min_eigenvalue: float
    passed: bool


@dataclass
class JumpChannel:
    rate: float
    operator: np.ndarray
    coefficients: np.ndarray
    negative: bool


def basis_generators(template: ModelTemplate) -> list[Callable[[np.ndarray], np.ndarray]]:
    """Dense evaluators L_j, one per real parameter, in vector layout order.

    For any model m on the template,  m.apply_generator(op) equals
    sum_j p_j L_j(op) with p = m.parameter_vector().
    """
    evaluators = []
    for label in template.labels:
        evaluators.append(_label_evaluator(label))
    return evaluators


def _label_evaluator(label: ParamLabel) -> Callable[[np.ndarray], np.ndarray]:
    a = to_matrix(label.first)
    if label.kind == "a":
        return lambda op: -1j * (a @ op - op @ a)
    b = to_matrix(label.second) if label.second is not None else a

    def sandwich(x, y, op):
        yx = y @ x
        return x @ op @ y - 0.5 * (yx @ op + op @ yx)

    if label.kind == "Ddiag":
        return lambda op: sandwich(a, a, op)
    if label.kind == "Dre":
        return lambda op: sandwich(a, b, op) + sandwich(b, a, op)
    return lambda op: 1j * (sandwich(a, b, op) - sandwich(b, a, op))


def param_count(template: ModelTemplate) -> int:
    return template.param_count


def random_model(template: ModelTemplate, rng: np.random.Generator,
                 coherent_scale: float = 0.05,
                 dissipation_scale: float = 0.02) -> LindbladModel:
    """Random physical (PSD) ground-truth model for simulation studies.

    D is assembled blockwise over the connected components of the template's
    pair graph so the structural zeros are respected while each block stays
    positive semidefinite.
    """
    a = rng.normal(scale=coherent_scale, size=len(template.coherent_terms))
    nd = len(template.d_basis)
    D = np.zeros((nd, nd), dtype=complex)
    for block in _pair_blocks(template):
        m = len(block)
        g = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
        blk = g @ g.conj().T
        blk *= dissipation_scale / max(1.0, np.max(np.abs(blk.diagonal().real)))
        D[np.ix_(block, block)] = blk
    return LindbladModel(template, a, D)


def _pair_blocks(template: ModelTemplate) -> list[list[int]]:
    nd = len(template.d_basis)
    parent = list(range(nd))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p, q in template.offdiag_pairs:
        i, j = template.d_index(p), template.d_index(q)
        parent[find(i)] = find(j)
    blocks: dict[int, list[int]] = {}
    for i in range(nd):
        blocks.setdefault(find(i), []).append(i)
    return list(blocks.values())
