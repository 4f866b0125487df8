"""Composing two bipartite processes into one, and why no rule can do it.

A composition rule sends ``W1`` on ``AB`` (copy 0) and ``W2`` on ``A'B'``
(copy 1) to an operator on ``AA'BB'`` where Alice holds both ``A`` and ``A'``.
Rules are handled extensionally as :class:`BilinearRule` objects: a sparse
coefficient matrix taking a pair of basis indices to the coordinates of the
output in the product Gell-Mann basis of the composite space.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .bases import (
    BasisElement,
    ProductBasis,
    PtiBasis,
    from_product_coordinates,
    one_way_order_residual,
    product_basis,
    product_coordinates,
    pti_basis,
    signature_count,
)
from .certificate import Certificate
from .processes import (
    ProcessMatrix,
    infer_parties,
    mixture,
    opposite_order_pair,
    order_residuals,
    project_LV,
    projector_rank,
    random_process,
    validate_process,
)
from .tensorspace import (
    DEFAULT_TOL,
    MAX_DIM,
    LabeledOperator,
    canonical_order,
    eig_hermitian,
    identity,
    kron,
    op_norm,
    reorder_factors,
    trace_and_replace,
    trace_norm,
)

SPARSE_ATOL = 1e-13


def _op(x) -> LabeledOperator:
    return x.op if isinstance(x, ProcessMatrix) else x


def tensor_product(a: LabeledOperator, b: LabeledOperator) -> LabeledOperator:
    """``a (x) b`` in canonical composite factor order."""
    out = kron([a, b])
    return reorder_factors(out, canonical_order(out.factors))


def tensor_compose(W1: ProcessMatrix, W2: ProcessMatrix) -> ProcessMatrix:
    """``W1 (x) W2`` regrouped so each party symbol holds all its copies. Not validated."""
    op = tensor_product(_op(W1), _op(W2))
    normalized = getattr(W1, "normalized", True) and getattr(W2, "normalized", True)
    return ProcessMatrix(op, infer_parties(op.factors), normalized)


# -- bilinear rules -----------------------------------------------------------


class SpanError(ValueError):
    """Sample inputs do not span the rule's domain; ``missing`` lists the uncovered directions."""

    def __init__(self, message, missing):
        super().__init__(message)
        self.missing = missing


class BilinearRule:
    """``mu(sum_i c_i M_i, sum_j d_j N_j) = sum_ij c_i d_j coefficient(i, j)``."""

    def __init__(self, left: ProductBasis, right: ProductBasis, coefficients, residual: float = 0.0):
        self.left = left
        self.right = right
        self.output_factors = canonical_order(left.ports + right.ports)
        if int(np.prod([f.dim for f in self.output_factors])) > MAX_DIM:
            raise ValueError("composite dimension exceeds the dense guard")
        self.output_dims = tuple(f.dim for f in self.output_factors)
        self.output_grid = tuple(d * d for d in self.output_dims)
        self.coefficients = sp.csr_array(coefficients)
        expected = (len(left) * len(right), int(np.prod(self.output_grid)))
        if self.coefficients.shape != expected:
            raise ValueError(f"coefficient matrix has shape {self.coefficients.shape}, expected {expected}")
        self.residual = float(residual)
        keys = [f.key for f in left.ports + right.ports]
        self._perm = [keys.index(f.key) for f in self.output_factors]

    @property
    def parties(self):
        return infer_parties(self.output_factors)

    @property
    def consistent(self) -> bool:
        return self.residual <= DEFAULT_TOL

    def composite_flat(self, left_flat, right_flat) -> np.ndarray:
        """Composite coordinate index of (left grid index) x (right grid index)."""
        li = np.unravel_index(np.asarray(left_flat), self.left.grid_shape)
        ri = np.unravel_index(np.asarray(right_flat), self.right.grid_shape)
        both = list(li) + list(ri)
        return np.ravel_multi_index([both[p] for p in self._perm], self.output_grid)

    def _operator(self, coords: np.ndarray) -> LabeledOperator:
        grid = np.asarray(coords).reshape(self.output_grid)
        return LabeledOperator(self.output_factors, from_product_coordinates(grid, self.output_dims))

    def coefficient(self, i: int, j: int) -> LabeledOperator:
        row = self.coefficients[[i * len(self.right) + j], :].toarray().reshape(-1)
        return self._operator(row)

    def evaluate(self, W1, W2, tol: float = DEFAULT_TOL) -> LabeledOperator:
        c = self.left.coordinates(_op(W1), tol)
        d = self.right.coordinates(_op(W2), tol)
        coords = self.coefficients.T @ np.kron(c, d)
        return self._operator(coords)

    __call__ = evaluate


def rule_from_tensor_product(left: ProductBasis, right: ProductBasis) -> BilinearRule:
    """The rule ``mu(M_i, N_j) = M_i (x) N_j``.

    Basis elements are products of per-port Gell-Mann elements, so each
    ``M_i (x) N_j`` is a single element of the composite product basis.
    """
    tmp = BilinearRule(left, right, sp.csr_array((len(left) * len(right), _grid_size(left, right))))
    rows = np.arange(len(left) * len(right))
    li = np.repeat(left.flat_index, len(right))
    ri = np.tile(right.flat_index, len(left))
    cols = tmp.composite_flat(li, ri)
    data = np.ones(len(rows), dtype=complex)
    coeffs = sp.csr_array((data, (rows, cols)), shape=tmp.coefficients.shape)
    return BilinearRule(left, right, coeffs)


def _grid_size(left, right) -> int:
    return int(np.prod(left.grid_shape)) * int(np.prod(right.grid_shape))


class _CoordCache:
    """Coordinates per operator object; basis elements cache their operators, so repeats are cheap."""

    def __init__(self, basis: ProductBasis, tol):
        self.basis = basis
        self.tol = tol
        self.full: dict = {}
        self.span: dict = {}

    def coordinates(self, x) -> np.ndarray:
        op = _op(x)
        key = id(op)
        if key not in self.span:
            self.span[key] = (op, self.basis.coordinates(op, self.tol))
        return self.span[key][1]

    def sparse_full(self, x) -> tuple[np.ndarray, np.ndarray]:
        op = _op(x)
        key = id(op)
        if key not in self.full:
            v = self.basis.full_coordinates(op)
            nz = np.flatnonzero(np.abs(v) > SPARSE_ATOL)
            self.full[key] = (op, nz, v[nz])
        return self.full[key][1], self.full[key][2]


def _output_coordinates(rule: BilinearRule, outputs: list, caches=None) -> sp.csr_array:
    """Sparse composite coordinates of the outputs, one row each.

    An output is either a :class:`LabeledOperator` on the composite factors or
    a pair ``(a, b)`` standing for ``a (x) b``; the pair form uses
    ``coords(a (x) b) = coords(a) (x) coords(b)`` and never builds the product.
    """
    left_cache, right_cache = caches or (_CoordCache(rule.left, None), _CoordCache(rule.right, None))
    K = int(np.prod(rule.output_grid))
    rows, li, ri, vals = [], [], [], []
    dense_idx = []
    for n, out in enumerate(outputs):
        if isinstance(out, tuple):
            ia, va = left_cache.sparse_full(out[0])
            ib, vb = right_cache.sparse_full(out[1])
            rows.append(np.full(len(ia) * len(ib), n, dtype=np.int64))
            li.append(np.repeat(ia, len(ib)))
            ri.append(np.tile(ib, len(ia)))
            vals.append(np.outer(va, vb).reshape(-1))
        else:
            dense_idx.append(n)
    if rows:
        r = np.concatenate(rows)
        cols = rule.composite_flat(np.concatenate(li), np.concatenate(ri))
        v = np.concatenate(vals)
    else:
        r = cols = np.zeros(0, dtype=np.int64)
        v = np.zeros(0, dtype=complex)
    out_mat = sp.csr_array((v, (r, cols)), shape=(len(outputs), K))
    if dense_idx:
        blocks = []
        for start in range(0, len(dense_idx), 16):
            chunk = dense_idx[start:start + 16]
            stack = np.stack([reorder_factors(_op(outputs[n]), rule.output_factors).entries for n in chunk])
            coords = product_coordinates(stack, rule.output_dims).reshape(len(chunk), -1)
            blocks.append(_sparse_matrix(coords))
        dense_rows = sp.vstack(blocks, format="csr")
        select = sp.csr_array((np.ones(len(dense_idx)), (np.array(dense_idx), np.arange(len(dense_idx)))),
                              shape=(len(outputs), len(dense_idx)))
        out_mat = sp.csr_array(out_mat + select @ dense_rows)
    return out_mat


def _distinct(vectors: list[np.ndarray]) -> tuple[list[int], list[np.ndarray]]:
    keys: dict = {}
    labels = []
    reps = []
    for v in vectors:
        key = (np.round(v, 10) + 0.0).tobytes()
        if key not in keys:
            keys[key] = len(reps)
            reps.append(v)
        labels.append(keys[key])
    return labels, reps


def _missing_directions(mat: np.ndarray, n: int, tol: float = 1e-8) -> list[np.ndarray]:
    if mat.shape[0] == 0:
        return [np.eye(n)[i] for i in range(n)]
    _, s, vh = np.linalg.svd(mat)
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return [vh[i].conj() for i in range(rank, n)]


def _describe_missing(basis_l, basis_r, missing, shape) -> str:
    parts = []
    for v in missing[:3]:
        idx = int(np.argmax(np.abs(v)))
        if shape is None:
            parts.append(basis_l[idx].name)
        else:
            i, j = np.unravel_index(idx, shape)
            parts.append(f"({basis_l[i].name}, {basis_r[j].name})")
    more = f" and {len(missing) - 3} more" if len(missing) > 3 else ""
    return ", ".join(parts) + more


def fit_bilinear_rule(
    samples: Iterable,
    left: ProductBasis,
    right: ProductBasis,
    tol: float = DEFAULT_TOL,
    max_dense: int = 20_000_000,
) -> BilinearRule:
    """Least-squares bilinear rule through ``(W1, W2, output)`` samples.

    When the sample inputs form a full grid (every distinct left input paired
    once with every distinct right input) the solve factorizes as
    ``pinv(D1) (x) pinv(D2)`` and stays sparse; otherwise a dense solve over the
    Khatri-Rao design matrix is used. Raises :class:`SpanError` when the inputs
    do not span both bases. The returned rule's ``residual`` is the largest
    coordinate misfit; it is ``<= tol`` exactly when the samples are consistent
    with a bilinear map.
    """
    samples = list(samples)
    if not samples:
        raise SpanError("no samples", [])
    n1, n2 = len(left), len(right)
    shell = BilinearRule(left, right, sp.csr_array((n1 * n2, _grid_size(left, right))))
    lc, rc = _CoordCache(left, tol), _CoordCache(right, tol)
    cs = [lc.coordinates(w1) for w1, _, _ in samples]
    ds = [rc.coordinates(w2) for _, w2, _ in samples]
    Y = _output_coordinates(shell, [out for _, _, out in samples], (lc, rc))
    lab_l, reps_l = _distinct(cs)
    lab_r, reps_r = _distinct(ds)
    pairs = list(zip(lab_l, lab_r))
    grid = len(set(pairs)) == len(pairs) == len(reps_l) * len(reps_r)
    if grid:
        d1, d2 = np.array(reps_l), np.array(reps_r)
        for d, n, basis, side in ((d1, n1, left, "left"), (d2, n2, right, "right")):
            missing = _missing_directions(d, n)
            if missing:
                raise SpanError(
                    f"{side} sample inputs miss {len(missing)} basis directions, e.g. "
                    + _describe_missing(basis, None, missing, None),
                    missing,
                )
        order = np.argsort([u * len(reps_r) + v for u, v in pairs], kind="stable")
        Y = Y[order]

        def sparse(m):
            return sp.csr_array(np.where(np.abs(m) > SPARSE_ATOL, m, 0))

        p1, p2 = sparse(np.linalg.pinv(d1)), sparse(np.linalg.pinv(d2))
        X = sp.csr_array(sp.kron(p1, p2, format="csr") @ Y)
        X.eliminate_zeros()
        R = Y - sp.kron(sparse(d1), sparse(d2), format="csr") @ X
        residual = float(np.max(np.abs(R.data), initial=0.0)) if R.nnz else 0.0
        return BilinearRule(left, right, X, residual)
    A = np.array([np.kron(c, d) for c, d in zip(cs, ds)])
    K = int(np.prod(shell.output_grid))
    if A.size > max_dense or len(samples) * K > max_dense:
        raise ValueError("sample set is too large for the dense solve; supply a full grid of inputs")
    missing = _missing_directions(A, n1 * n2)
    if missing:
        raise SpanError(
            f"sample inputs miss {len(missing)} directions of the pair space, e.g. "
            + _describe_missing(left, right, missing, (n1, n2)),
            missing,
        )
    Y = Y.toarray()
    X, *_ = np.linalg.lstsq(A, Y, rcond=None)
    residual = float(np.max(np.abs(A @ X - Y), initial=0.0))
    return BilinearRule(left, right, _sparse_matrix(X), residual)


def _sparse_matrix(m: np.ndarray) -> sp.csr_array:
    return sp.csr_array(np.where(np.abs(m) > SPARSE_ATOL, m, 0))


def coefficient_error(a: BilinearRule, b: BilinearRule) -> float:
    diff = a.coefficients - b.coefficients
    return float(np.max(np.abs(diff.data), initial=0.0)) if diff.nnz else 0.0


# -- requirement checks -------------------------------------------------------


def _same_order(W1, W2, tol) -> str | None:
    def orders(W):
        W = W if isinstance(W, ProcessMatrix) else ProcessMatrix(W)
        res = order_residuals(W)
        return {k for k, v in res.items() if v <= tol}

    common = orders(W1) & orders(W2)
    if not common:
        return None
    return "A<=B" if "A<=B" in common else "B<=A"


def check_R1(rule, W1, W2, tol: float = DEFAULT_TOL) -> Certificate:
    """The composite is a valid process for the bipartition (AA', BB')."""
    out = rule(W1, W2)
    W = ProcessMatrix(out, infer_parties(out.factors))
    rep = validate_process(W, tol)
    cert = Certificate("R1 validity")
    cert.add("R1.positivity", "mu(W1, W2) >= 0", max(0.0, -rep.min_eigenvalue), tol)
    cert.add("R1.trace", "Tr mu(W1, W2) = d_O", rep.trace_deviation or 0.0, tol)
    cert.add("R1.projector", "L(mu(W1, W2)) = mu(W1, W2) for (AA', BB')", rep.projector_residual, tol)
    for key, val in rep.constraints.items():
        cert.add(f"R1.{key}", rep.CONSTRAINT_TEXT[key], val, tol)
    return cert


def check_R1prime(rule, W1, W2, tol: float = DEFAULT_TOL) -> Certificate:
    out = rule(W1, W2)
    vals, _ = eig_hermitian(out, tol)
    cert = Certificate("R1' positivity")
    cert.add("R1prime.positivity", "mu(W1, W2) >= 0", max(0.0, -float(vals[0])), tol)
    return cert


def check_R2(rule, W1, W2, tol: float = DEFAULT_TOL) -> Certificate:
    """For a same-order pair the rule must return the tensor product."""
    order = _same_order(W1, W2, tol)
    if order is None:
        raise ValueError("consistency requirement applies only to pairs sharing a causal order")
    out = rule(W1, W2)
    ref = tensor_product(_op(W1), _op(W2))
    cert = Certificate("R2 consistency")
    cert.add("R2.tensor", f"mu(W1, W2) = W1 (x) W2 for a shared order {order}", trace_norm(out - ref), tol, order=order)
    return cert


def check_R3(rule, mix1: Sequence[tuple[float, object]], mix2: Sequence[tuple[float, object]], tol: float = DEFAULT_TOL) -> Certificate:
    """``mu(sum p_j W_j, sum q_k W'_k) = sum p_j q_k mu(W_j, W'_k)``."""
    w1 = None
    for p, w in mix1:
        w1 = _op(w) * p if w1 is None else w1 + _op(w) * p
    w2 = None
    for q, w in mix2:
        w2 = _op(w) * q if w2 is None else w2 + _op(w) * q
    lhs = rule(w1, w2)
    rhs = None
    for p, a in mix1:
        for q, b in mix2:
            term = rule(a, b) * (p * q)
            rhs = term if rhs is None else rhs + term
    cert = Certificate("R3 convex linearity")
    cert.add("R3.mixture", "mu(sum p W, sum q W') = sum p q mu(W, W')", trace_norm(lhs - rhs), tol)
    return cert


# -- lemma certificates -------------------------------------------------------


def _lv_residual(op: LabeledOperator, parties) -> float:
    return float(np.max(np.abs(project_LV(op, parties).entries - op.entries), initial=0.0))


def _min_eig(op: LabeledOperator) -> float:
    return float(np.linalg.eigvalsh((op.entries + op.entries.conj().T) / 2)[0])


def lemma1_certificate(A1: LabeledOperator, A2: LabeledOperator, tol: float = DEFAULT_TOL) -> Certificate:
    """Premises and tensor-product instance of the norm bound ``||mu(A1, A2)|| <= ||A1 (x) A2||``.

    The bound for an arbitrary rule cannot be evaluated; the certificate checks
    that ``lambda_i 1 +- A_i`` are valid unnormalized processes and that the
    proof's identities hold with ``mu`` the tensor product.
    """
    A1, A2 = _op(A1), _op(A2)
    p1, p2 = infer_parties(A1.factors), infer_parties(A2.factors)
    for name, a, parties in (("A1", A1, p1), ("A2", A2, p2)):
        if not a.is_hermitian(tol):
            raise ValueError(f"{name} is not Hermitian")
        r = _lv_residual(a, parties)
        if r > tol:
            raise ValueError(f"{name} is not in the valid subspace (projector residual {r:.3e})")
    l1, l2 = op_norm(A1, tol), op_norm(A2, tol)
    cert = Certificate("norm bound lemma", meta={"lambda1": l1, "lambda2": l2})
    ws = {}
    for name, a, lam, parties in (("W1", A1, l1, p1), ("W2", A2, l2, p2)):
        one = identity(a.factors)
        for sign, label in ((1, "+"), (-1, "-")):
            w = one * lam + a * sign
            ws[name + label] = w
            cert.add(f"premise.{name}{label}.positive", f"{name}{label} = lambda 1 {label} A >= 0",
                     max(0.0, -_min_eig(w)), tol)
            cert.add(f"premise.{name}{label}.valid_subspace", f"L({name}{label}) = {name}{label}",
                     _lv_residual(w, parties), tol)
    mu = tensor_product(A1, A2)
    one = identity(mu.factors)
    plus = (tensor_product(ws["W1+"], ws["W2+"]) + tensor_product(ws["W1-"], ws["W2-"])) / 2
    minus = (tensor_product(ws["W1+"], ws["W2-"]) + tensor_product(ws["W1-"], ws["W2+"])) / 2
    cert.add("identity.plus", "(mu(W1+,W2+) + mu(W1-,W2-))/2 = l1 l2 1 + mu(A1,A2)",
             float(np.max(np.abs((plus - (one * (l1 * l2) + mu)).entries), initial=0.0)), tol)
    cert.add("identity.minus", "(mu(W1+,W2-) + mu(W1-,W2+))/2 = l1 l2 1 - mu(A1,A2)",
             float(np.max(np.abs((minus - (one * (l1 * l2) - mu)).entries), initial=0.0)), tol)
    cert.add("conclusion.hermitian", "mu(A1, A2) is Hermitian", mu.hermitian_deviation(), tol)
    norm = op_norm(mu, tol)
    cert.add("conclusion.bound", "||mu(A1, A2)|| <= l1 l2", max(0.0, norm - l1 * l2), tol, norm=norm)
    cert.add("conclusion.tensor_norm", "||A1 (x) A2|| = l1 l2", abs(norm - l1 * l2), tol)
    return cert


def _projector(vec: np.ndarray, factors) -> LabeledOperator:
    return LabeledOperator(tuple(factors), np.outer(vec, vec.conj()))


def _check_element_premises(cert, tag, op: LabeledOperator, eig: float, vec: np.ndarray, parties, tol):
    w = identity(op.factors) - op * eig
    cert.add(f"{tag}.eigenvector", f"{tag} |v> = {eig:+g} |v>",
             float(np.linalg.norm(op.entries @ vec - eig * vec)), tol)
    cert.add(f"{tag}.spectrum", f"eigenvalues of {tag} lie in [-1, 1]",
             max(0.0, op_norm(op, tol) - 1.0), tol)
    cert.add(f"{tag}.input_positive", f"1 - ({eig:+g}) {tag} >= 0", max(0.0, -_min_eig(w)), tol)
    cert.add(f"{tag}.input_valid_subspace", f"L(1 - ({eig:+g}) {tag}) = 1 - ({eig:+g}) {tag}",
             _lv_residual(w, parties), tol)
    cert.add(f"{tag}.input_kills_v", f"<v| 1 - ({eig:+g}) {tag} |v> = 0",
             abs(complex(vec.conj() @ w.entries @ vec)), tol)
    cert.add(f"{tag}.one_way_order", f"_AO {tag} = {tag} or _BO {tag} = {tag}",
             one_way_order_residual(op, parties), tol)


def lemma2_certificate(M: BasisElement, N: BasisElement, k, j, tol: float = DEFAULT_TOL) -> Certificate:
    """Pinning ``mu(M, N)|k, j> = (+-1)|k, j>`` for +-1 eigenvectors of basis elements."""
    lam, eta = M.eigenvalue(k), N.eigenvalue(j)
    if abs(abs(lam) - 1) > tol or abs(abs(eta) - 1) > tol:
        raise ValueError(
            f"eigenvalues ({lam:g}, {eta:g}) are not both +-1; the zero-eigenvalue case is lemma3_certificate"
        )
    pm, pn = infer_parties(M.ports), infer_parties(N.ports)
    vk, vj = M.eigenvector(k), N.eigenvector(j)
    cert = Certificate("eigenvector pinning lemma", meta={
        "M": M.name, "N": N.name, "k": list(M.normalize_eigen_index(k)),
        "j": list(N.normalize_eigen_index(j)), "eigenvalues": [lam, eta],
    })
    _check_element_premises(cert, "M", M.operator, lam, vk, pm, tol)
    _check_element_premises(cert, "N", N.operator, eta, vj, pn, tol)
    mop, nop = M.operator, N.operator
    w1 = identity(mop.factors) - mop * lam
    w2 = identity(nop.factors) - nop * eta
    mu_w = tensor_product(w1, w2)
    one = identity(mu_w.factors)
    expansion = (one - tensor_product(mop, identity(nop.factors)) * lam
                 - tensor_product(identity(mop.factors), nop) * eta
                 + tensor_product(mop, nop) * (lam * eta))
    cert.add("expansion", "mu(W1, W2) = 1 - l M(x)1 - e 1(x)N + l e mu(M, N)",
             float(np.max(np.abs((mu_w - expansion).entries), initial=0.0)), tol)
    proj = tensor_product(_projector(vk, mop.factors), _projector(vj, nop.factors))
    cert.add("expectation", "<k,j| mu(W1, W2) |k,j> = 0",
             abs(complex(np.sum(proj.entries.T * mu_w.entries))), tol)
    mu_mn = tensor_product(mop, nop)
    pinned = (mu_mn @ proj - proj * (lam * eta))
    cert.add("pinned", "mu(M, N)|k,j> = (lambda eta)|k,j> with mu the tensor product",
             float(np.max(np.abs(pinned.entries), initial=0.0)), tol)
    return cert


def split_factor(X: np.ndarray, k_vec: np.ndarray, plus_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``X = X' + X''`` with ``X'|k> = |k>`` and ``X''|k> = -|k>`` for ``X|k> = 0``.

    ``plus_vec`` is a ``+1`` eigenvector of ``X``; choosing it (rather than an
    arbitrary vector orthogonal to ``|k>``) keeps both pieces' eigenvalues in
    ``{-1, 0, 1}``.
    """
    pk = np.outer(k_vec, k_vec.conj())
    pv = np.outer(plus_vec, plus_vec.conj())
    return X + pk - pv, pv - pk


def _spectrum_defect(m: np.ndarray) -> float:
    vals = np.linalg.eigvalsh((m + m.conj().T) / 2)
    return float(np.max(np.min(np.abs(vals[:, None] - np.array([-1.0, 0.0, 1.0])), axis=1)))


def _split_terms(cert: Certificate, tag: str, E: BasisElement, k: tuple, tol: float):
    """All +-1 pieces of ``E`` at eigenvector ``k``; returns ``[(operator, eigenvalue at k), ...]``."""
    parties = infer_parties(E.ports)
    meta = E.factor_eigenvalues(k)
    choices = []
    for p, (x, val) in enumerate(zip(k, meta)):
        X = E.factor_matrices()[p]
        kv = E.factor_eigenvector(p, x)
        if abs(val) > tol:
            choices.append([(X, val)])
            continue
        plus_idx = E.eigen_meta[p].index(1.0)
        xp, xpp = split_factor(X, kv, E.factor_eigenvector(p, plus_idx))
        port = E.ports[p].name
        cert.add(f"{tag}.split.{port}.traceless", "Tr X' = Tr X'' = 0", abs(np.trace(xp)) + abs(np.trace(xpp)), tol)
        cert.add(f"{tag}.split.{port}.sum", "X' + X'' = X", float(np.max(np.abs(xp + xpp - X))), tol)
        cert.add(f"{tag}.split.{port}.plus", "X'|k> = |k>", float(np.linalg.norm(xp @ kv - kv)), tol)
        cert.add(f"{tag}.split.{port}.minus", "X''|k> = -|k>", float(np.linalg.norm(xpp @ kv + kv)), tol)
        cert.add(f"{tag}.split.{port}.spectrum", "X', X'' have eigenvalues in {-1, 0, 1}",
                 max(_spectrum_defect(xp), _spectrum_defect(xpp)), tol)
        choices.append([(xp, 1.0), (xpp, -1.0)])
    terms = []
    for combo in itertools.product(*choices):
        entries = np.ones((1, 1), dtype=complex)
        eig = 1.0
        for mat, val in combo:
            entries = np.kron(entries, mat)
            eig *= val
        terms.append((LabeledOperator(E.ports, entries), eig))
    vec = E.eigenvector(k)
    if len(terms) > 1:
        total = terms[0][0]
        for t, _ in terms[1:]:
            total = total + t
        cert.add(f"{tag}.pieces_sum", f"pieces of {tag} sum to {tag}",
                 float(np.max(np.abs((total - E.operator).entries))), tol)
        for n, (t, eig) in enumerate(terms):
            cert.add(f"{tag}.piece{n}.valid_subspace", "piece is in the valid subspace (PTI)", _lv_residual(t, parties), tol)
            cert.add(f"{tag}.piece{n}.one_way_order", "piece is one-way ordered",
                     one_way_order_residual(t, parties), tol)
            cert.add(f"{tag}.piece{n}.eigenvector", f"piece |k> = {eig:+g}|k>",
                     float(np.linalg.norm(t.entries @ vec - eig * vec)), tol)
            cert.add(f"{tag}.piece{n}.spectrum", "piece has eigenvalues in [-1, 1]",
                     max(0.0, op_norm(t, tol) - 1.0), tol)
            w = identity(t.factors) - t * eig
            cert.add(f"{tag}.piece{n}.input_positive", "1 - (+-1) piece >= 0", max(0.0, -_min_eig(w)), tol)
    return terms


def lemma3_certificate(M: BasisElement, N: BasisElement, k, j, tol: float = DEFAULT_TOL) -> Certificate:
    """Zero-eigenvalue case: split zero factors into +-1 pieces and pin each piece pair."""
    k, j = M.normalize_eigen_index(k), N.normalize_eigen_index(j)
    zm = [v for v in M.factor_eigenvalues(k) if abs(v) <= tol]
    zn = [v for v in N.factor_eigenvalues(j) if abs(v) <= tol]
    if not zm and not zn:
        raise ValueError("no factor has eigenvalue 0 at this eigenvector; the +-1 case is lemma2_certificate")
    cert = Certificate("zero-eigenvalue lemma", meta={
        "M": M.name, "N": N.name, "k": list(k), "j": list(j),
        "zero_factors": [len(zm), len(zn)],
    })
    m_terms = _split_terms(cert, "M", M, k, tol)
    n_terms = _split_terms(cert, "N", N, j, tol)
    vk, vj = M.eigenvector(k), N.eigenvector(j)
    proj = tensor_product(_projector(vk, M.ports), _projector(vj, N.ports))
    pinned_sum = sum(a * b for _, a in m_terms for _, b in n_terms)
    acc = None
    for mt, _ in m_terms:
        for nt, _ in n_terms:
            t = tensor_product(mt, nt)
            acc = t if acc is None else acc + t
    cert.add("pieces.linearity", "sum of piece products = M (x) N",
             float(np.max(np.abs((acc - tensor_product(M.operator, N.operator)).entries))), tol)
    cert.add("pieces.pinned_sum", "sum over pieces of the pinned +-1 values = 0", abs(pinned_sum), tol,
             pieces=[len(m_terms), len(n_terms)])
    mu_mn = tensor_product(M.operator, N.operator)
    cert.add("pinned", "mu(M, N)|k,j> = 0 with mu the tensor product",
             float(np.max(np.abs((mu_mn @ proj).entries))), tol)
    return cert


# -- theorem ------------------------------------------------------------------


def mixed_order_pair(dims, copies=(0, 1)) -> tuple[ProcessMatrix, ProcessMatrix]:
    """The equal mixture of two opposite orders, on copies 0 and 1."""
    ab, ba = opposite_order_pair(dims, copy=copies[0])
    w = mixture([ab, ba], [0.5, 0.5])
    return w, w.with_copy(copies[1])


def same_order_pair(dims) -> tuple[ProcessMatrix, ProcessMatrix]:
    ab, _ = opposite_order_pair(dims)
    return ab, ab.with_copy(1)


def _pair_eigen_choice(i: int, j: int, D1: int, D2: int) -> tuple[int, int]:
    return (i + 3 * j) % D1, (7 * i + j) % D2


def theorem_certificate(
    dims: Sequence[int],
    counterexample: tuple[ProcessMatrix, ProcessMatrix] | None = None,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    n_random: int = 3,
    lemma_samples: int = 8,
) -> Certificate:
    """End-to-end record of the no-go argument at fixed port dimensions.

    1. bases of the valid subspaces of ``AB`` and ``A'B'``;
    2. premise audits for every element and every basis pair, plus full
       lemma certificates on a deterministic sample of pairs;
    3. uniqueness: the rule fitted to the pinned values is the tensor product;
    4. the tensor product of the counterexample pair is not a valid process.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4 or min(dims) < 2:
        raise ValueError("need four port dimensions, each >= 2")
    D = int(np.prod(dims))
    if D * D > MAX_DIM:
        raise ValueError(f"composite dimension {D * D} exceeds the guard {MAX_DIM}")
    rng = np.random.default_rng(seed)
    cert = Certificate(f"composition no-go at dims {dims}", meta={"dims": list(dims), "seed": seed, "tol": tol})
    cert.notes += [
        "Requirements are checked on the finite witness family the argument uses "
        "(1 +- M inputs, basis pairs, the counterexample pair) plus seeded random samples; "
        "this is not a check over the full continuum of processes.",
        "The norm bound is audited through its premises and instantiated at the tensor product; "
        "for an unknown rule it is not numerically computable.",
    ]

    # 1. bases
    left, right = pti_basis(dims, copy=0), pti_basis(dims, copy=1)
    count = signature_count(dims)
    rank = projector_rank(left.parties)
    cert.meta["basis_size"] = len(left)
    cert.meta["product_terms"] = int(np.prod([d * d for d in dims]))
    cert.add("basis.size_vs_signature_count", "basis size = allowed signature count",
             abs(len(left) - count), 0, size=len(left), signature_count=count)
    cert.add("basis.size_vs_projector_rank", "basis size = rank of the valid-subspace projector",
             abs(len(left) - rank), 0, projector_rank=rank)
    full = product_basis(dims)
    disagreements = 0
    for e in full:
        m = e.operator
        fixed = float(np.max(np.abs(project_LV(m, full.parties).entries - m.entries))) <= tol
        disagreements += fixed != _contains(left, e.index)
    cert.add("basis.filter_cross_check", "signature rule and projector select the same product terms",
             disagreements, 0)
    for side, basis in (("AB", left), ("A'B'", right)):
        audit = basis.verify(tol)
        cert.add(f"basis.{side}.projector_fixed", "every element is a fixed point of the projector",
                 audit["projector_residual"], tol)
        cert.add(f"basis.{side}.one_way_order", "every element satisfies _AO M = M or _BO M = M",
                 audit["one_way_order_residual"], tol)
        cert.add(f"basis.{side}.independent", "Gram matrix has full rank", len(basis) - audit["gram_rank"], 0)
        cert.add(f"basis.{side}.factors", "factors traceless with eigenvalues in {-1, 0, 1}",
                 max(audit["factor_trace"], audit["factor_eigenvalue_defect"]), tol)

    # 2. premises
    cache = {}
    for side, basis in (("AB", left), ("A'B'", right)):
        worst = {"eig": 0.0, "pos": 0.0, "valid": 0.0, "norm": 0.0, "split": 0.0}
        n_splits = 0
        for n, e in enumerate(basis):
            m = e.operator
            vecs = np.ones((1, 1), dtype=complex)
            for p in range(len(e.ports)):
                fv = np.stack([e.factor_eigenvector(p, x) for x in range(e.ports[p].dim)], axis=1)
                vecs = np.kron(vecs, fv)
            vals = np.ones(1)
            for meta in e.eigen_meta:
                vals = np.kron(vals, np.array(meta))
            mv = m.entries @ vecs
            cache[(side, n)] = (mv, vecs, vals)
            worst["eig"] = max(worst["eig"], float(np.max(np.abs(mv - vecs * vals))))
            worst["norm"] = max(worst["norm"], max(0.0, op_norm(m, tol) - 1.0))
            for sign in (1, -1):
                w = identity(m.factors) + m * sign
                worst["pos"] = max(worst["pos"], max(0.0, -_min_eig(w)))
                worst["valid"] = max(worst["valid"], _lv_residual(w, basis.parties))
            for p, meta in enumerate(e.eigen_meta):
                if e.index[p] == 0:
                    continue
                X = e.factor_matrices()[p]
                plus = e.factor_eigenvector(p, meta.index(1.0))
                for x, val in enumerate(meta):
                    if val != 0:
                        continue
                    kv = e.factor_eigenvector(p, x)
                    xp, xpp = split_factor(X, kv, plus)
                    n_splits += 1
                    worst["split"] = max(worst["split"], abs(np.trace(xp)), abs(np.trace(xpp)),
                                         float(np.linalg.norm(xp @ kv - kv)), float(np.linalg.norm(xpp @ kv + kv)),
                                         _spectrum_defect(xp), _spectrum_defect(xpp))
        cert.add(f"premise.{side}.eigenvectors", "M|k> = lambda_k |k> for the product eigenbasis", worst["eig"], tol)
        cert.add(f"premise.{side}.spectrum", "||M|| <= 1", worst["norm"], tol)
        cert.add(f"premise.{side}.inputs_positive", "1 +- M >= 0 for every element", worst["pos"], tol)
        cert.add(f"premise.{side}.inputs_valid", "1 +- M in the valid subspace for every element", worst["valid"], tol)
        cert.add(f"premise.{side}.zero_splits", "every zero-eigenvalue split gives +-1 pieces", worst["split"], tol,
                 splits=n_splits)
    D1 = D2 = D
    worst_pair = 0.0
    for i in range(len(left)):
        mv_l, v_l, lam_l = cache[("AB", i)]
        for j in range(len(right)):
            mv_r, v_r, lam_r = cache[("A'B'", j)]
            a, b = _pair_eigen_choice(i, j, D1, D2)
            lhs = np.kron(mv_l[:, a], mv_r[:, b])
            rhs = lam_l[a] * lam_r[b] * np.kron(v_l[:, a], v_r[:, b])
            worst_pair = max(worst_pair, float(np.max(np.abs(lhs - rhs))))
    cert.add("pairs.pinned_values", "(M_i (x) N_j)|k,j> = lambda_k eta_j |k,j> for every basis pair",
             worst_pair, tol, pairs=len(left) * len(right))
    pm1, zero = [], []
    for i in range(len(left)):
        for j in range(len(right)):
            a, b = _pair_eigen_choice(i, j, D1, D2)
            if left[i].eigenvalue(a) != 0 and right[j].eigenvalue(b) != 0:
                pm1.append((i, j, a, b))
            else:
                zero.append((i, j, a, b))
    for group, fn, label in ((pm1, lemma2_certificate, "lemma2"), (zero, lemma3_certificate, "lemma3")):
        if not group:
            continue
        picks = rng.choice(len(group), size=min(lemma_samples, len(group)), replace=False)
        for idx in sorted(picks):
            i, j, a, b = group[idx]
            sub = fn(left[i], right[j], a, b, tol)
            worst = max((c.residual for c in sub.checks if c.kind == "at_most"), default=0.0)
            cert.add(f"{label}[{i},{j}]", f"{sub.title} for ({left[i].name}, {right[j].name})",
                     worst if sub.passed else max(worst, 2 * tol + 1), tol, checks=len(sub.checks))
    for n in range(n_random):
        a1 = _random_valid_hermitian(dims, 0, rng)
        a2 = _random_valid_hermitian(dims, 1, rng)
        sub = lemma1_certificate(a1, a2, tol)
        worst = max((c.residual for c in sub.checks), default=0.0)
        cert.add(f"lemma1[random {n}]", "norm-bound premises and tensor instance", worst if sub.passed else 1.0, tol)

    # 3. uniqueness of the extension
    tensor_rule = rule_from_tensor_product(left, right)
    samples = ((M.operator, N.operator, (M.operator, N.operator)) for M in left for N in right)
    fitted = fit_bilinear_rule(samples, left, right, tol)
    cert.add("uniqueness.fit_residual", "pinned values are consistent with one bilinear rule", fitted.residual, tol,
             pair_space_dim=len(left) * len(right))
    cert.add("uniqueness.coefficients", "the fitted rule equals the tensor product on every basis pair",
             coefficient_error(fitted, tensor_rule), tol)
    worst = 0.0
    for n in range(n_random):
        w1 = random_process(dims, rng=rng)
        w2 = random_process(dims, rng=rng, copy=1)
        diff = fitted(w1, w2) - tensor_product(w1.op, w2.op)
        worst = max(worst, float(np.max(np.abs(diff.entries))))
    cert.add("uniqueness.extension", "fitted rule gives W (x) W' on random valid pairs", worst, tol, samples=n_random)

    # 4. counterexample
    if counterexample is None:
        counterexample = mixed_order_pair(dims)
    w1, w2 = counterexample
    for name, w in (("W1", w1), ("W2", w2)):
        rep = validate_process(w, tol)
        cert.add(f"counterexample.{name}_valid", f"{name} is a valid process",
                 0.0 if rep.passed else max(rep.projector_residual, -rep.min_eigenvalue, 1.0), tol)
    composite = tensor_compose(w1, w2)
    cert.add("counterexample.rule_is_tensor", "fitted rule on the pair equals W1 (x) W2",
             float(np.max(np.abs((fitted(w1, w2) - composite.op).entries))), tol)
    rep = validate_process(composite, tol)
    loop = rep.constraints["loop_free"]
    cert.meta["counterexample_loop_residual"] = loop
    cert.add("counterexample.violation", "W1 (x) W2 violates W = _BO W + _AO W - _AOBO W for (AA', BB')",
             loop, tol, kind="exceeds", projector_residual=rep.projector_residual)
    if loop <= tol:
        cert.aborted = "counterexample not exhibited"
    else:
        cert.notes.append("conclusion: the tensor product is the only rule meeting positivity, consistency and "
                          "linearity, and it yields an invalid process on the counterexample pair; "
                          "validity, consistency and convex linearity cannot hold together")
    return cert


def _contains(basis: ProductBasis, index: tuple) -> bool:
    try:
        basis.position(index)
        return True
    except KeyError:
        return False


def _random_valid_hermitian(dims, copy, rng) -> LabeledOperator:
    w = random_process(dims, rng=rng, copy=copy)
    D = w.op.dim
    return w.op - identity(w.op.factors) * (np.trace(w.op.entries).real / D)
