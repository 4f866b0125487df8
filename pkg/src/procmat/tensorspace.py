"""Dense operators over named tensor factors.

Every operator carries an ordered list of :class:`FactorLabel` objects. The
matrix entries are indexed row-major by mixed-radix digits in factor order, so
for factors ``(f0, f1, ..., fn)`` with dimensions ``(d0, ..., dn)`` the row
index of ``|i0 i1 ... in>`` is ``((i0 * d1 + i1) * d2 + i2) ...``.

Composite operators use the canonical order ``A_I, A_O, A'_I, A'_O, B_I, B_O,
B'_I, B'_O`` (party, then copy, then input before output); see
:func:`canonical_order`.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TOL = 1e-9
MAX_DIM = 1024


class Port(enum.Enum):
    INPUT = "I"
    OUTPUT = "O"


@dataclass(frozen=True)
class FactorLabel:
    """One tensor factor: a party's input or output port, on a given copy."""

    party: str
    port: Port
    copy: int = 0
    dim: int = 2

    def __post_init__(self):
        if not isinstance(self.port, Port):
            object.__setattr__(self, "port", Port(self.port))
        if int(self.dim) < 1:
            raise ValueError(f"factor {self.name} has dimension {self.dim} < 1")
        if int(self.copy) < 0:
            raise ValueError(f"negative copy index {self.copy}")

    @property
    def key(self) -> tuple:
        """Identity of the factor, ignoring its dimension."""
        return (self.party, self.port, self.copy)

    @property
    def name(self) -> str:
        return f"{self.party}{chr(39) * self.copy}_{self.port.value}"

    def sort_key(self) -> tuple:
        return (self.party, self.copy, 0 if self.port is Port.INPUT else 1)

    def with_copy(self, copy: int) -> "FactorLabel":
        return FactorLabel(self.party, self.port, copy, self.dim)

    def __str__(self):
        return self.name


_NAME = re.compile(r"^([A-Za-z][A-Za-z0-9]*)('*)_([IO])$")


def factor(name: str, dim: int = 2) -> FactorLabel:
    """Build a label from a name such as ``"A_I"`` or ``"B'_O"``."""
    m = _NAME.match(name.strip())
    if m is None:
        raise ValueError(f"cannot parse factor name {name!r}")
    party, primes, port = m.groups()
    return FactorLabel(party, Port(port), len(primes), dim)


def canonical_order(factors: Iterable[FactorLabel]) -> tuple[FactorLabel, ...]:
    return tuple(sorted(factors, key=FactorLabel.sort_key))


def _check_distinct(factors: Sequence[FactorLabel]):
    seen = {}
    for f in factors:
        if f.key in seen:
            raise ValueError(f"duplicate factor label {f.name}")
        seen[f.key] = f


@dataclass(frozen=True, eq=False)
class LabeledOperator:
    """Immutable dense complex matrix over an ordered list of factors."""

    factors: tuple[FactorLabel, ...]
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        factors = tuple(self.factors)
        _check_distinct(factors)
        dim = int(np.prod([f.dim for f in factors], dtype=np.int64)) if factors else 1
        if dim > MAX_DIM:
            raise ValueError(f"total dimension {dim} exceeds the dense guard {MAX_DIM}")
        entries = np.array(self.entries, dtype=complex)
        if entries.shape != (dim, dim):
            raise ValueError(f"entries have shape {entries.shape}, factors require {(dim, dim)}")
        entries.setflags(write=False)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "entries", entries)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def hermitian_deviation(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0))

    def is_hermitian(self, tol: float = DEFAULT_TOL) -> bool:
        return self.hermitian_deviation() <= tol

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def dag(self) -> "LabeledOperator":
        return LabeledOperator(self.factors, self.entries.conj().T)

    def relabel(self, mapping: dict) -> "LabeledOperator":
        """Rename factors; ``mapping`` maps old labels (or keys) to new labels."""
        new = []
        for f in self.factors:
            g = mapping.get(f, mapping.get(f.key, f))
            if g.dim != f.dim:
                raise ValueError(f"relabel changes dimension of {f.name}")
            new.append(g)
        return LabeledOperator(tuple(new), self.entries)

    def with_copy(self, copy: int) -> "LabeledOperator":
        return LabeledOperator(tuple(f.with_copy(copy) for f in self.factors), self.entries)

    def _aligned(self, other: "LabeledOperator") -> np.ndarray:
        if other.factors == self.factors:
            return other.entries
        return reorder_factors(other, self.factors).entries

    def __add__(self, other):
        if not isinstance(other, LabeledOperator):
            return NotImplemented
        return LabeledOperator(self.factors, self.entries + self._aligned(other))

    def __sub__(self, other):
        if not isinstance(other, LabeledOperator):
            return NotImplemented
        return LabeledOperator(self.factors, self.entries - self._aligned(other))

    def __mul__(self, scalar):
        if isinstance(scalar, LabeledOperator):
            return NotImplemented
        return LabeledOperator(self.factors, self.entries * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return LabeledOperator(self.factors, self.entries / scalar)

    def __neg__(self):
        return LabeledOperator(self.factors, -self.entries)

    def __matmul__(self, other):
        if not isinstance(other, LabeledOperator):
            return NotImplemented
        return LabeledOperator(self.factors, self.entries @ self._aligned(other))

    def allclose(self, other: "LabeledOperator", tol: float = DEFAULT_TOL) -> bool:
        if {f.key for f in other.factors} != {f.key for f in self.factors}:
            return False
        return bool(np.max(np.abs(self.entries - self._aligned(other)), initial=0.0) <= tol)

    def __repr__(self):
        names = ", ".join(f"{f.name}:{f.dim}" for f in self.factors)
        return f"LabeledOperator([{names}])"


def identity(factors: Sequence[FactorLabel]) -> LabeledOperator:
    dim = int(np.prod([f.dim for f in factors], dtype=np.int64)) if factors else 1
    return LabeledOperator(tuple(factors), np.eye(dim))


def zeros(factors: Sequence[FactorLabel]) -> LabeledOperator:
    dim = int(np.prod([f.dim for f in factors], dtype=np.int64)) if factors else 1
    return LabeledOperator(tuple(factors), np.zeros((dim, dim)))


# -- raw array kernels; all accept leading batch axes -------------------------


def permute_array(a: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Permute tensor factors of ``a`` (shape ``(..., D, D)``): new factor k is old ``perm[k]``."""
    n = len(dims)
    batch = a.shape[:-2]
    nb = len(batch)
    t = a.reshape(*batch, *dims, *dims)
    axes = list(range(nb)) + [nb + p for p in perm] + [nb + n + p for p in perm]
    return t.transpose(axes).reshape(a.shape)


def partial_trace_array(a: np.ndarray, dims: Sequence[int], traced: Iterable[int]) -> np.ndarray:
    n = len(dims)
    traced = sorted(set(traced))
    batch = a.shape[:-2]
    nb = len(batch)
    t = a.reshape(*batch, *dims, *dims)
    # trace from the highest position down so earlier axis numbers stay valid
    remaining = n
    for p in reversed(traced):
        t = np.trace(t, axis1=nb + p, axis2=nb + remaining + p)
        remaining -= 1
    kept = [d for i, d in enumerate(dims) if i not in traced]
    size = int(np.prod(kept, dtype=np.int64)) if kept else 1
    return t.reshape(*batch, size, size)


def trace_replace_array(a: np.ndarray, dims: Sequence[int], positions: Iterable[int]) -> np.ndarray:
    """``(1/d_X) I_X (x) Tr_X a`` kept in the original factor order."""
    n = len(dims)
    batch = a.shape[:-2]
    nb = len(batch)
    t = a.reshape(*batch, *dims, *dims)
    for p in sorted(set(positions)):
        d = dims[p]
        tr = np.trace(t, axis1=nb + p, axis2=nb + n + p)
        tr = np.expand_dims(tr, (nb + p, nb + n + p))
        shape = [1] * (nb + 2 * n)
        shape[nb + p] = d
        shape[nb + n + p] = d
        t = tr * (np.eye(d) / d).reshape(shape)
    return t.reshape(a.shape)


# -- labeled operations -------------------------------------------------------


def kron(ops: Sequence[LabeledOperator]) -> LabeledOperator:
    """Kronecker product; the factor list is the concatenation of the inputs'."""
    ops = list(ops)
    if not ops:
        raise ValueError("kron of an empty list")
    factors = tuple(f for op in ops for f in op.factors)
    _check_distinct(factors)
    entries = ops[0].entries
    for op in ops[1:]:
        entries = np.kron(entries, op.entries)
    return LabeledOperator(factors, entries)


def _positions(op: LabeledOperator, labels: Iterable[FactorLabel]) -> list[int]:
    index = {f.key: i for i, f in enumerate(op.factors)}
    out = []
    for lab in labels:
        if lab.key not in index:
            raise ValueError(f"factor {lab.name} is not a factor of {op!r}")
        out.append(index[lab.key])
    return out


def reorder_factors(op: LabeledOperator, target: Sequence[FactorLabel]) -> LabeledOperator:
    target = tuple(target)
    if len(target) != len(op.factors) or {f.key for f in target} != {f.key for f in op.factors}:
        raise ValueError(
            f"target {[f.name for f in target]} is not a permutation of {[f.name for f in op.factors]}"
        )
    perm = _positions(op, target)
    factors = tuple(op.factors[p] for p in perm)
    if perm == list(range(len(perm))):
        return LabeledOperator(factors, op.entries)
    return LabeledOperator(factors, permute_array(op.entries, op.dims, perm))


def to_canonical(op: LabeledOperator) -> LabeledOperator:
    return reorder_factors(op, canonical_order(op.factors))


def partial_trace(op: LabeledOperator, traced: Iterable[FactorLabel]) -> LabeledOperator:
    pos = _positions(op, traced)
    kept = tuple(f for i, f in enumerate(op.factors) if i not in pos)
    return LabeledOperator(kept, partial_trace_array(op.entries, op.dims, pos))


def trace_and_replace(op: LabeledOperator, traced: Iterable[FactorLabel]) -> LabeledOperator:
    """Replace the factors ``traced`` by their normalized identity."""
    pos = _positions(op, traced)
    return LabeledOperator(op.factors, trace_replace_array(op.entries, op.dims, pos))


def embed(op: LabeledOperator, factors: Sequence[FactorLabel]) -> LabeledOperator:
    """Tensor ``op`` with identities on the missing ``factors`` and order as ``factors``."""
    have = {f.key for f in op.factors}
    missing = [f for f in factors if f.key not in have]
    full = kron([op, identity(missing)]) if missing else op
    return reorder_factors(full, factors)


def transpose(op: LabeledOperator) -> LabeledOperator:
    return LabeledOperator(op.factors, op.entries.T)


def trace_inner(a: LabeledOperator, b: LabeledOperator) -> complex:
    """``Tr(a^dagger b)``; ``b`` is aligned to ``a``'s factor order first."""
    if a.dim != b.dim or {f.key for f in a.factors} != {f.key for f in b.factors}:
        raise ValueError(f"shape mismatch in trace_inner: {a!r} vs {b!r}")
    return complex(np.vdot(a.entries, a._aligned(b)))


def eig_hermitian(op: LabeledOperator, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and column eigenvectors of a Hermitian operator."""
    dev = op.hermitian_deviation()
    if dev > tol:
        raise ValueError(f"operator is not Hermitian (max |A - A^dagger| = {dev:.3e})")
    h = (op.entries + op.entries.conj().T) / 2
    return np.linalg.eigh(h)


def op_norm(op: LabeledOperator, tol: float = DEFAULT_TOL) -> float:
    vals, _ = eig_hermitian(op, tol)
    return float(np.max(np.abs(vals), initial=0.0))


def min_eigenvalue(op: LabeledOperator, tol: float = DEFAULT_TOL) -> float:
    vals, _ = eig_hermitian(op, tol)
    return float(vals[0])


def trace_norm(a: np.ndarray | LabeledOperator) -> float:
    m = a.entries if isinstance(a, LabeledOperator) else np.asarray(a)
    if np.allclose(m, m.conj().T, atol=1e-12):
        return float(np.sum(np.abs(np.linalg.eigvalsh((m + m.conj().T) / 2))))
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))
