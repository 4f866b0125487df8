"""Operator bases with eigenvalues in {-1, 0, 1}.

Per factor the basis is ``{1, Z_i, X_jk, Y_jk}`` with

    Z_i  = |i><i| - |i+1><i+1|
    X_jk = |j><k| + |k><j|
    Y_jk = i(|j><k| - |k><j|)

(1-based labels in names, 0-based in arrays). For ``d = 2`` this is
``{1, sigma_z, sigma_x, -sigma_y}``. Products of these over the ports of a
process space give a basis of the full operator space; keeping only the
products that survive the valid-subspace projector gives a basis of the valid
subspace (:func:`pti_basis`).

Operators are mapped to coordinates in a product basis by inverting the
per-factor change of basis one tensor axis at a time, which never forms the
full ``D^2 x D^2`` matrix.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .processes import Party, allowed_signature, infer_parties, project_LV, project_LVN
from .tensorspace import (
    DEFAULT_TOL,
    FactorLabel,
    LabeledOperator,
    Port,
    canonical_order,
    trace_and_replace,
)


def gellmann_basis(d: int) -> list[np.ndarray]:
    """``[1, Z_1..Z_{d-1}, X_jk (j<k), Y_jk (j<k)]``, ``d**2`` Hermitian matrices."""
    if d < 2:
        raise ValueError(f"Gell-Mann basis needs d >= 2, got {d}")
    out = [np.eye(d, dtype=complex)]
    for i in range(d - 1):
        z = np.zeros((d, d), dtype=complex)
        z[i, i], z[i + 1, i + 1] = 1, -1
        out.append(z)
    pairs = list(itertools.combinations(range(d), 2))
    for j, k in pairs:
        x = np.zeros((d, d), dtype=complex)
        x[j, k] = x[k, j] = 1
        out.append(x)
    for j, k in pairs:
        y = np.zeros((d, d), dtype=complex)
        y[j, k], y[k, j] = 1j, -1j
        out.append(y)
    return out


def gellmann_names(d: int) -> list[str]:
    if d < 2:
        raise ValueError(f"Gell-Mann basis needs d >= 2, got {d}")
    pairs = list(itertools.combinations(range(1, d + 1), 2))
    return (["1"] + [f"Z{i}" for i in range(1, d)]
            + [f"X{j}{k}" for j, k in pairs] + [f"Y{j}{k}" for j, k in pairs])


@functools.lru_cache(maxsize=None)
def _basis_stack(d: int) -> np.ndarray:
    if d == 1:
        return np.ones((1, 1, 1), dtype=complex)
    return np.stack(gellmann_basis(d))


@functools.lru_cache(maxsize=None)
def _eigensystem(d: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigenvalues and eigenvector columns of basis element ``m``.

    Column ``k`` is ``|k>`` wherever that is an eigenvector; for ``X_jk`` and
    ``Y_jk`` the slots ``j`` and ``k`` hold the ``+1`` and ``-1`` eigenvectors.
    """
    vecs = np.eye(d, dtype=complex)
    if d == 1 or m == 0:
        return np.ones(d), vecs
    n_z = d - 1
    pairs = list(itertools.combinations(range(d), 2))
    if m <= n_z:
        vals = np.zeros(d)
        vals[m - 1], vals[m] = 1, -1
        return vals, vecs
    idx = m - 1 - n_z
    is_y = idx >= len(pairs)
    j, k = pairs[idx % len(pairs)]
    vals = np.zeros(d)
    vals[j], vals[k] = 1, -1
    s = 1 / np.sqrt(2)
    vecs[:, j] = 0
    vecs[:, k] = 0
    phase = -1j if is_y else 1
    vecs[j, j], vecs[k, j] = s, s * phase
    vecs[j, k], vecs[k, k] = s, -s * phase
    return vals, vecs


def gellmann_eigensystem(d: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = _eigensystem(d, m)
    return vals.copy(), vecs.copy()


@functools.lru_cache(maxsize=None)
def _change_of_basis(d: int) -> tuple[np.ndarray, np.ndarray]:
    """``(B, B^-1)`` with ``B[:, m] = vec(G_m)`` (row-major vec)."""
    b = _basis_stack(d).reshape(d * d, d * d).T
    return b, np.linalg.inv(b)


def _apply_axes(t: np.ndarray, mats: Sequence[np.ndarray], offset: int) -> np.ndarray:
    for ax, m in enumerate(mats):
        axis = offset + ax
        t = np.moveaxis(np.tensordot(m, t, axes=([1], [axis])), 0, axis)
    return t


def product_coordinates(entries: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Coordinates of ``entries`` (shape ``(..., D, D)``) in the product Gell-Mann basis.

    Returns shape ``(..., d_1**2, ..., d_n**2)``.
    """
    n = len(dims)
    batch = entries.shape[:-2]
    nb = len(batch)
    t = entries.reshape(*batch, *dims, *dims)
    axes = list(range(nb)) + [x for i in range(n) for x in (nb + i, nb + n + i)]
    t = t.transpose(axes).reshape(*batch, *[d * d for d in dims])
    return _apply_axes(t, [_change_of_basis(d)[1] for d in dims], nb)


def from_product_coordinates(coords: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    n = len(dims)
    batch = coords.shape[:coords.ndim - n]
    nb = len(batch)
    t = _apply_axes(np.asarray(coords, dtype=complex), [_change_of_basis(d)[0] for d in dims], nb)
    t = t.reshape(*batch, *[x for d in dims for x in (d, d)])
    axes = list(range(nb)) + [nb + 2 * i for i in range(n)] + [nb + 2 * i + 1 for i in range(n)]
    D = int(np.prod(dims, dtype=np.int64))
    return t.transpose(axes).reshape(*batch, D, D)


@dataclass(frozen=True)
class BasisElement:
    """Product of one Gell-Mann element per port; ``index[p]`` picks the element on port ``p``."""

    ports: tuple[FactorLabel, ...]
    index: tuple[int, ...]

    @property
    def signature(self) -> frozenset:
        return frozenset(p for p, m in zip(self.ports, self.index) if m != 0)

    @property
    def name(self) -> str:
        parts = [f"{gellmann_names(p.dim)[m] if p.dim > 1 else '1'}^{p.name}"
                 for p, m in zip(self.ports, self.index) if m != 0]
        return " ".join(parts) if parts else "1"

    def factor_matrices(self) -> list[np.ndarray]:
        return [_basis_stack(p.dim)[m] for p, m in zip(self.ports, self.index)]

    @functools.cached_property
    def operator(self) -> LabeledOperator:
        entries = np.ones((1, 1), dtype=complex)
        for m in self.factor_matrices():
            entries = np.kron(entries, m)
        return LabeledOperator(self.ports, entries)

    @property
    def eigen_meta(self) -> tuple[tuple[float, ...], ...]:
        """Per-factor eigenvalues, in the order of :meth:`factor_eigenvector`."""
        return tuple(tuple(float(v) for v in _eigensystem(p.dim, m)[0]) for p, m in zip(self.ports, self.index))

    def factor_eigenvector(self, port: int, k: int) -> np.ndarray:
        p = self.ports[port]
        return _eigensystem(p.dim, self.index[port])[1][:, k].copy()

    def normalize_eigen_index(self, k) -> tuple[int, ...]:
        dims = [p.dim for p in self.ports]
        if np.isscalar(k):
            k = np.unravel_index(int(k), dims)
        k = tuple(int(x) for x in k)
        if len(k) != len(dims) or any(not 0 <= x < d for x, d in zip(k, dims)):
            raise ValueError(f"eigenvector index {k} out of range for dims {dims}")
        return k

    def factor_eigenvalues(self, k) -> tuple[float, ...]:
        k = self.normalize_eigen_index(k)
        return tuple(meta[x] for meta, x in zip(self.eigen_meta, k))

    def eigenvalue(self, k) -> float:
        return float(np.prod(self.factor_eigenvalues(k)))

    def eigenvector(self, k) -> np.ndarray:
        k = self.normalize_eigen_index(k)
        v = np.ones(1, dtype=complex)
        for port, x in enumerate(k):
            v = np.kron(v, self.factor_eigenvector(port, x))
        return v

    def with_factor(self, port: int, matrix: np.ndarray) -> LabeledOperator:
        """The product operator with the factor on ``port`` replaced by ``matrix``."""
        entries = np.ones((1, 1), dtype=complex)
        for i, m in enumerate(self.factor_matrices()):
            entries = np.kron(entries, matrix if i == port else m)
        return LabeledOperator(self.ports, entries)


class ProductBasis:
    """A list of :class:`BasisElement` over fixed ports, with coordinate maps."""

    def __init__(self, ports: Sequence[FactorLabel], elements: Sequence[BasisElement], parties=None):
        self.ports = tuple(ports)
        self.elements = list(elements)
        self.parties = tuple(parties) if parties is not None else infer_parties(self.ports)
        self.dims = tuple(p.dim for p in self.ports)
        self.grid_shape = tuple(d * d for d in self.dims)
        self.flat_index = np.array(
            [np.ravel_multi_index(e.index, self.grid_shape) for e in self.elements], dtype=np.int64
        )
        self._position = {int(f): i for i, f in enumerate(self.flat_index)}

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i) -> BasisElement:
        return self.elements[i]

    def position(self, index: tuple[int, ...]) -> int:
        return self._position[int(np.ravel_multi_index(index, self.grid_shape))]

    def _align(self, op: LabeledOperator) -> np.ndarray:
        if op.factors == self.ports:
            return op.entries
        from .tensorspace import reorder_factors

        return reorder_factors(op, self.ports).entries

    def full_coordinates(self, op: LabeledOperator) -> np.ndarray:
        return product_coordinates(self._align(op), self.dims).reshape(-1)

    def coordinates(self, op: LabeledOperator, tol: float | None = DEFAULT_TOL) -> np.ndarray:
        """Coefficients of ``op`` on the elements; raises if ``op`` leaves the span."""
        full = self.full_coordinates(op)
        if tol is not None:
            mask = np.ones(full.shape, dtype=bool)
            mask[self.flat_index] = False
            off = float(np.max(np.abs(full[mask]), initial=0.0))
            if off > tol:
                raise ValueError(f"operator is outside the span of the basis (largest outside coordinate {off:.3e})")
        return full[self.flat_index]

    def operator(self, coords: np.ndarray) -> LabeledOperator:
        full = np.zeros(int(np.prod(self.grid_shape)), dtype=complex)
        full[self.flat_index] = coords
        return LabeledOperator(self.ports, from_product_coordinates(full.reshape(self.grid_shape), self.dims))

    def gram(self) -> np.ndarray:
        """``Tr(M_i^dagger M_j)``, as a product of per-factor traces."""
        per = {d: np.einsum("aij,bij->ab", _basis_stack(d).conj(), _basis_stack(d)) for d in set(self.dims)}
        idx = np.array([e.index for e in self.elements])
        g = np.ones((len(self), len(self)), dtype=complex)
        for p, d in enumerate(self.dims):
            g *= per[d][np.ix_(idx[:, p], idx[:, p])]
        return g


class PtiBasis(ProductBasis):
    """Product basis of the valid subspace: every factor traceless or identity."""

    def verify(self, tol: float = DEFAULT_TOL) -> dict:
        """Numerical audit of every element.

        Returns the worst projector residual, the worst one-way-order residual
        (min over the two orders, max over elements), the Gram rank and the
        worst factor-trace and eigenvalue defects.
        """
        proj = project_LV if len(self.parties) == 2 else project_LVN
        worst_proj = 0.0
        worst_order = 0.0
        worst_trace = 0.0
        worst_eig = 0.0
        for e in self.elements:
            m = e.operator
            worst_proj = max(worst_proj, float(np.max(np.abs(proj(m, self.parties).entries - m.entries))))
            worst_order = max(worst_order, one_way_order_residual(m, self.parties))
            for f, idx in zip(e.factor_matrices(), e.index):
                if idx != 0:
                    worst_trace = max(worst_trace, abs(np.trace(f)))
                    vals = np.linalg.eigvalsh(f)
                    worst_eig = max(worst_eig, float(np.max(np.min(np.abs(vals[:, None] - np.array([-1, 0, 1])), axis=1))))
        rank = int(np.linalg.matrix_rank(self.gram(), tol=1e-8))
        return {
            "projector_residual": worst_proj,
            "one_way_order_residual": worst_order,
            "gram_rank": rank,
            "factor_trace": worst_trace,
            "factor_eigenvalue_defect": worst_eig,
        }


def one_way_order_residual(m: LabeledOperator, parties: Sequence[Party]) -> float:
    """``min(||_AO M - M||, ||_BO M - M||)`` (max-abs entry norm), bipartite."""
    a, b = parties
    r_a = float(np.max(np.abs(trace_and_replace(m, a.outputs).entries - m.entries)))
    r_b = float(np.max(np.abs(trace_and_replace(m, b.outputs).entries - m.entries)))
    return min(r_a, r_b)


def port_labels(dims: Sequence[int], copy: int = 0) -> tuple[tuple[FactorLabel, ...], tuple[Party, ...]]:
    """Ports ``(A_I, A_O, B_I, B_O, C_I, ...)`` for ``dims`` listed in that order."""
    if len(dims) % 2:
        raise ValueError("need an input and an output dimension per party")
    names = "ABCDEFGH"
    ports = []
    parties = []
    for i in range(len(dims) // 2):
        fi = FactorLabel(names[i], Port.INPUT, copy, int(dims[2 * i]))
        fo = FactorLabel(names[i], Port.OUTPUT, copy, int(dims[2 * i + 1]))
        ports += [fi, fo]
        parties.append(Party(names[i] + "'" * copy, (fi,), (fo,)))
    return canonical_order(ports), tuple(parties)


def product_basis(dims: Sequence[int], copy: int = 0) -> ProductBasis:
    """All ``prod d_p**2`` products over the ports."""
    ports, parties = port_labels(dims, copy)
    ranges = [range(p.dim * p.dim) for p in ports]
    elements = [BasisElement(ports, idx) for idx in itertools.product(*ranges)]
    return ProductBasis(ports, elements, parties)


def pti_basis(dims: Sequence[int], copy: int = 0, cross_check: bool = False, tol: float = DEFAULT_TOL) -> PtiBasis:
    """Product terms allowed by the validity constraints.

    Filtering uses :func:`~procmat.processes.allowed_signature`. With
    ``cross_check`` every product term is also pushed through the projector and
    a disagreement between the two routes raises.
    """
    ports, parties = port_labels(dims, copy)
    ranges = [range(p.dim * p.dim) for p in ports]
    proj = project_LV if len(parties) == 2 else project_LVN
    elements = []
    for idx in itertools.product(*ranges):
        e = BasisElement(ports, idx)
        keep = allowed_signature(e.signature, parties)
        if cross_check:
            m = e.operator
            fixed = bool(np.max(np.abs(proj(m, parties).entries - m.entries)) <= tol)
            if fixed != keep:
                raise AssertionError(f"signature rule and projector disagree on {e.name}")
        if keep:
            elements.append(e)
    return PtiBasis(ports, elements, parties)


def signature_count(dims: Sequence[int]) -> int:
    """Number of allowed product terms, counted signature by signature."""
    ports, parties = port_labels(dims)
    total = 0
    for mask in itertools.product((False, True), repeat=len(ports)):
        sig = [p for p, on in zip(ports, mask) if on]
        if any(p.dim == 1 for p in sig):
            continue
        if allowed_signature(sig, parties):
            total += int(np.prod([p.dim ** 2 - 1 for p in sig], dtype=np.int64))
    return total
