"""Local operations as Choi matrices and the generalized Born rule.

The Choi matrix of a map ``M`` from input factors to output factors is

    sum_ij |i><j| (x) M(|i><j|)

with the input factors first and no global transposition. With this
convention the Born rule reads ``p = Tr[(M_A (x) M_B ...) W^T]``. A POVM effect
``E`` (output trivial) has Choi matrix ``E^T``, and a preparation of ``rho``
(input trivial) has Choi matrix ``rho``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import unitary_group

from .tensorspace import (
    DEFAULT_TOL,
    FactorLabel,
    LabeledOperator,
    kron,
    partial_trace,
    reorder_factors,
    trace_norm,
)


def _dim(factors: Sequence[FactorLabel]) -> int:
    return int(np.prod([f.dim for f in factors], dtype=np.int64)) if factors else 1


def choi_matrix(kraus: Sequence[np.ndarray], d_in: int, d_out: int) -> np.ndarray:
    """Unlabeled Choi matrix ``sum_ij |i><j| (x) sum_k K_k |i><j| K_k^dagger``."""
    choi = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for k in kraus:
        k = np.asarray(k, dtype=complex)
        if k.shape != (d_out, d_in):
            raise ValueError(f"Kraus operator has shape {k.shape}, expected {(d_out, d_in)}")
        # sum_i |i> (x) K|i>, flattened with the input index first
        v = k.T.reshape(-1)
        choi += np.outer(v, v.conj())
    return choi


def choi_from_kraus(
    kraus: Sequence[np.ndarray],
    in_factors: Sequence[FactorLabel],
    out_factors: Sequence[FactorLabel],
) -> LabeledOperator:
    """Choi matrix of the map with the given Kraus operators, on ``in + out`` factors."""
    d_in, d_out = _dim(in_factors), _dim(out_factors)
    return LabeledOperator(tuple(in_factors) + tuple(out_factors), choi_matrix(kraus, d_in, d_out))


@dataclass(frozen=True)
class Instrument:
    """A party's Choi matrices ``M_{a|x}`` keyed by ``(outcome, setting)``."""

    party: str
    in_factors: tuple[FactorLabel, ...]
    out_factors: tuple[FactorLabel, ...]
    elements: Mapping[tuple[int, int], LabeledOperator] = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "in_factors", tuple(self.in_factors))
        object.__setattr__(self, "out_factors", tuple(self.out_factors))
        target = self.in_factors + self.out_factors
        elems = {}
        for key, op in dict(self.elements).items():
            a, x = key
            elems[(int(a), int(x))] = reorder_factors(op, target)
        object.__setattr__(self, "elements", elems)

    @property
    def settings(self) -> list[int]:
        return sorted({x for _, x in self.elements})

    def outcomes(self, setting: int) -> list[int]:
        return sorted(a for a, x in self.elements if x == setting)

    @classmethod
    def from_kraus(cls, party, in_factors, out_factors, kraus_sets: Mapping[tuple[int, int], Sequence[np.ndarray]]):
        elements = {
            key: choi_from_kraus(kraus, in_factors, out_factors) for key, kraus in kraus_sets.items()
        }
        return cls(party, in_factors, out_factors, elements)


@dataclass
class InstrumentReport:
    min_eigenvalues: dict
    tp_residuals: dict
    tol: float

    @property
    def cp(self) -> bool:
        return all(v >= -self.tol for v in self.min_eigenvalues.values())

    @property
    def tp(self) -> bool:
        return all(v <= self.tol for v in self.tp_residuals.values())

    @property
    def passed(self) -> bool:
        return self.cp and self.tp

    def __str__(self):
        lines = [f"instrument {'PASS' if self.passed else 'FAIL'} (tol {self.tol:g})"]
        for (a, x), v in sorted(self.min_eigenvalues.items()):
            lines.append(f"  M[a={a}|x={x}] min eigenvalue {v:+.3e}")
        for x, r in sorted(self.tp_residuals.items()):
            lines.append(f"  setting {x}: trace-preservation residual {r:.3e}")
        return "\n".join(lines)


def validate_instrument(inst: Instrument, tol: float = DEFAULT_TOL) -> InstrumentReport:
    """CP check per element, TP check per setting (residual in trace norm)."""
    mins = {}
    for key, op in inst.elements.items():
        h = (op.entries + op.entries.conj().T) / 2
        herm = float(np.max(np.abs(op.entries - op.entries.conj().T), initial=0.0))
        # a non-Hermitian element is not CP; report its deviation as negativity
        mins[key] = float(np.linalg.eigvalsh(h)[0]) - herm
    tps = {}
    d_in = _dim(inst.in_factors)
    for x in inst.settings:
        total = None
        for a in inst.outcomes(x):
            total = inst.elements[(a, x)] if total is None else total + inst.elements[(a, x)]
        reduced = partial_trace(total, inst.out_factors) if inst.out_factors else total
        tps[x] = trace_norm(reduced.entries - np.eye(d_in))
    return InstrumentReport(mins, tps, tol)


def _ops_list(ops) -> list[LabeledOperator]:
    if isinstance(ops, LabeledOperator):
        return [ops]
    if isinstance(ops, Mapping):
        return list(ops.values())
    return list(ops)


def born_probability(W, ops, tol: float = DEFAULT_TOL) -> float:
    """``Tr[(M_1 (x) M_2 ...) W^T]`` for one chosen element per party.

    ``W`` is a :class:`~procmat.processes.ProcessMatrix` or a bare
    :class:`LabeledOperator`; ``ops`` a sequence or mapping of Choi matrices whose
    factors jointly cover ``W``'s factors.
    """
    w = getattr(W, "op", W)
    local = kron(_ops_list(ops))
    if {f.key for f in local.factors} != {f.key for f in w.factors}:
        raise ValueError(
            "operation factors "
            f"{sorted(f.name for f in local.factors)} do not match process factors "
            f"{sorted(f.name for f in w.factors)}"
        )
    local = reorder_factors(local, w.factors)
    # Tr[M W^T] = sum_ij M_ij W_ij
    p = complex(np.sum(local.entries * w.entries))
    if abs(p.imag) > tol:
        raise ValueError(f"probability has imaginary part {p.imag:.3e}; inputs are not Hermitian")
    return p.real


def probability_table(W, *instruments: Instrument, tol: float = DEFAULT_TOL) -> dict:
    """All ``p(a, b, ... | x, y, ...)``, keyed ``(outcomes..., settings...)``."""
    table = {}
    for settings in itertools.product(*(inst.settings for inst in instruments)):
        outcome_lists = [inst.outcomes(x) for inst, x in zip(instruments, settings)]
        for outcomes in itertools.product(*outcome_lists):
            ops = [inst.elements[(a, x)] for inst, a, x in zip(instruments, outcomes, settings)]
            table[tuple(outcomes) + tuple(settings)] = born_probability(W, ops, tol)
    return table


def setting_sums(table: Mapping[tuple, float], n_parties: int) -> dict:
    """``sum over outcomes of p(outcomes | settings)`` for each settings tuple."""
    sums: dict = {}
    for key, p in table.items():
        s = key[n_parties:]
        sums[s] = sums.get(s, 0.0) + p
    return sums


def signaling(table: Mapping[tuple, float]) -> dict:
    """Largest change of each party's marginal under a change of the other's setting.

    Bipartite tables only. Returns ``{"B->A": ..., "A->B": ...}``; ``"B->A"``
    measures how much Bob's setting moves Alice's marginal.
    """
    marg_a: dict = {}
    marg_b: dict = {}
    for (a, b, x, y), p in table.items():
        marg_a[(a, x, y)] = marg_a.get((a, x, y), 0.0) + p
        marg_b[(b, x, y)] = marg_b.get((b, x, y), 0.0) + p
    b_to_a = 0.0
    for (a, x, y), p in marg_a.items():
        for (a2, x2, y2), q in marg_a.items():
            if a2 == a and x2 == x and y2 != y:
                b_to_a = max(b_to_a, abs(p - q))
    a_to_b = 0.0
    for (b, x, y), p in marg_b.items():
        for (b2, x2, y2), q in marg_b.items():
            if b2 == b and y2 == y and x2 != x:
                a_to_b = max(a_to_b, abs(p - q))
    return {"B->A": b_to_a, "A->B": a_to_b}


def random_instrument(
    party: str,
    in_factors: Sequence[FactorLabel],
    out_factors: Sequence[FactorLabel],
    n_outcomes: int = 2,
    n_settings: int = 2,
    rng=None,
) -> Instrument:
    """Haar-random isometry into output (x) ancilla, ancilla measured in the computational basis."""
    rng = np.random.default_rng(rng)
    d_in, d_out = _dim(in_factors), _dim(out_factors)
    big = d_out * n_outcomes
    if big < d_in:
        raise ValueError(f"output (x) ancilla dimension {big} is smaller than input dimension {d_in}")
    kraus_sets = {}
    for x in range(n_settings):
        u = unitary_group.rvs(big, random_state=rng) if big > 1 else np.ones((1, 1))
        v = np.asarray(u)[:, :d_in].reshape(d_out, n_outcomes, d_in)
        for a in range(n_outcomes):
            kraus_sets[(a, x)] = [v[:, a, :]]
    return Instrument.from_kraus(party, in_factors, out_factors, kraus_sets)


def deterministic_instrument(party, in_factors, out_factors, kraus: Sequence[np.ndarray]) -> Instrument:
    """Single outcome, single setting: the CPTP map with the given Kraus operators."""
    return Instrument.from_kraus(party, in_factors, out_factors, {(0, 0): kraus})


def measure_prepare_instrument(party, in_factors, out_factors) -> Instrument:
    """Measure the input in the computational basis, prepare ``|0>`` on the output.

    Outcomes are the basis indices of the input; one setting.
    """
    d_in, d_out = _dim(in_factors), _dim(out_factors)
    kraus_sets = {}
    for a in range(d_in):
        k = np.zeros((d_out, d_in))
        k[0, a] = 1.0
        kraus_sets[(a, 0)] = [k]
    return Instrument.from_kraus(party, in_factors, out_factors, kraus_sets)
