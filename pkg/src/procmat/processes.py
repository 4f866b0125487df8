"""Process matrices: validity, the valid-subspace projectors, causal order.

Throughout, ``_X W`` denotes :func:`~procmat.tensorspace.trace_and_replace`
of ``W`` over the factor set ``X``. A party's input and output "ports" may be
groups of several factors, e.g. Alice's output ``A_O A'_O`` when two copies
are shared.

State processes are ``rho (x) 1`` *without* a transpose: with the Choi
convention of :mod:`procmat.instruments` (no global transpose) and the Born
rule ``Tr[M W^T]``, measuring the state process with effect ``E`` returns
``Tr(rho E)``. Putting ``rho^T`` in the input slot would instead prepare
``rho^T``. ``tests/test_processes.py::test_state_process_born_rule_complex_state``
pins this down with a state that has complex coherences.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .instruments import choi_matrix
from .tensorspace import (
    DEFAULT_TOL,
    FactorLabel,
    LabeledOperator,
    Port,
    canonical_order,
    identity,
    kron,
    partial_trace,
    reorder_factors,
    trace_norm,
    trace_replace_array,
)

PARTY_NAMES = "ABCDEFGH"


@dataclass(frozen=True)
class Party:
    name: str
    inputs: tuple[FactorLabel, ...]
    outputs: tuple[FactorLabel, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))

    @property
    def factors(self) -> tuple[FactorLabel, ...]:
        return self.inputs + self.outputs

    @property
    def d_in(self) -> int:
        return int(np.prod([f.dim for f in self.inputs], dtype=np.int64))

    @property
    def d_out(self) -> int:
        return int(np.prod([f.dim for f in self.outputs], dtype=np.int64))


def infer_parties(factors: Iterable[FactorLabel], merge_copies: bool = True) -> tuple[Party, ...]:
    """Group factors into parties by party symbol (and copy, unless merged)."""
    groups: dict = {}
    for f in canonical_order(factors):
        key = f.party if merge_copies else (f.party, f.copy)
        groups.setdefault(key, ([], []))[0 if f.port is Port.INPUT else 1].append(f)
    parties = []
    for key, (ins, outs) in groups.items():
        name = key if merge_copies else key[0] + "'" * key[1]
        parties.append(Party(name, tuple(ins), tuple(outs)))
    return tuple(parties)


def _check_partition(factors: Sequence[FactorLabel], parties: Sequence[Party]):
    seen = set()
    for p in parties:
        for f in p.factors:
            if f.key in seen:
                raise ValueError(f"overlapping party factor groups: {f.name} appears twice")
            seen.add(f.key)
    have = {f.key for f in factors}
    if seen != have:
        missing = sorted(FactorLabel(*k, 1).name for k in have - seen)
        extra = sorted(FactorLabel(*k, 1).name for k in seen - have)
        raise ValueError(f"party structure does not match factors (unassigned {missing}, unknown {extra})")


@dataclass(frozen=True)
class ProcessMatrix:
    """An operator together with the party structure it is a process for.

    ``normalized`` unset marks operators valid only up to scale (``1 +- M``
    and friends); validation then skips the trace condition.
    """

    op: LabeledOperator
    parties: tuple[Party, ...] = None
    normalized: bool = True

    def __post_init__(self):
        parties = self.parties if self.parties is not None else infer_parties(self.op.factors)
        parties = tuple(parties)
        _check_partition(self.op.factors, parties)
        object.__setattr__(self, "parties", parties)

    @property
    def factors(self):
        return self.op.factors

    @property
    def d_out(self) -> int:
        return int(np.prod([p.d_out for p in self.parties], dtype=np.int64))

    def with_op(self, op: LabeledOperator, normalized: bool | None = None) -> "ProcessMatrix":
        return ProcessMatrix(op, self.parties, self.normalized if normalized is None else normalized)

    def with_copy(self, copy: int) -> "ProcessMatrix":
        parties = tuple(
            Party(p.name, tuple(f.with_copy(copy) for f in p.inputs), tuple(f.with_copy(copy) for f in p.outputs))
            for p in self.parties
        )
        return ProcessMatrix(self.op.with_copy(copy), parties, self.normalized)


# -- projectors ---------------------------------------------------------------


def _resolve(op: LabeledOperator, parties) -> tuple[Party, ...]:
    if parties is None:
        parties = infer_parties(op.factors)
    parties = tuple(parties)
    _check_partition(op.factors, parties)
    return parties


def _apply_terms(op: LabeledOperator, terms: dict) -> LabeledOperator:
    index = {f.key: i for i, f in enumerate(op.factors)}
    out = np.zeros_like(op.entries)
    for labels, coeff in terms.items():
        if coeff == 0:
            continue
        pos = [index[f.key] for f in labels]
        out += coeff * trace_replace_array(op.entries, op.dims, pos)
    return LabeledOperator(op.factors, out)


def _lv_terms(a: Party, b: Party) -> dict:
    AI, AO, BI, BO = (frozenset(g) for g in (a.inputs, a.outputs, b.inputs, b.outputs))
    return {
        AO: 1,
        BO: 1,
        AO | BO: -1,
        BI | BO: -1,
        AO | BI | BO: 1,
        AI | AO: -1,
        AI | AO | BO: 1,
    }


def project_LV(op: LabeledOperator, parties: Sequence[Party] | None = None) -> LabeledOperator:
    """Bipartite valid-subspace projector, written out term by term.

    ``L(W) = _AO W + _BO W - _AOBO W - _BIBO W + _AOBIBO W - _AIAO W + _AIAOBO W``
    """
    parties = _resolve(op, parties)
    if len(parties) != 2:
        raise ValueError(f"bipartite projector needs exactly two parties, got {len(parties)}")
    return _apply_terms(op, _lv_terms(*parties))


def lvn_polynomial(parties: Sequence[Party]) -> dict:
    """Expand ``1 - prod_i (1 - O_i + I_i O_i) + prod_i I_i O_i`` into monomials.

    Each monomial is a frozenset of factor labels (the set traced-and-replaced);
    products of monomials are unions since ``_X _Y = _(X u Y)``.
    """

    def mul(p, q):
        out: dict = {}
        for s, a in p.items():
            for t, b in q.items():
                u = s | t
                out[u] = out.get(u, 0) + a * b
        return out

    one = {frozenset(): 1}
    prod_a = one
    prod_b = one
    for party in parties:
        o = frozenset(party.outputs)
        io = frozenset(party.inputs) | o
        factor = {frozenset(): 1}
        factor[o] = factor.get(o, 0) - 1
        factor[io] = factor.get(io, 0) + 1
        prod_a = mul(prod_a, factor)
        prod_b = mul(prod_b, {io: 1})
    poly = {frozenset(): 1}
    for s, c in prod_a.items():
        poly[s] = poly.get(s, 0) - c
    for s, c in prod_b.items():
        poly[s] = poly.get(s, 0) + c
    return {s: c for s, c in poly.items() if c != 0}


def project_LVN(op: LabeledOperator, parties: Sequence[Party] | None = None) -> LabeledOperator:
    """N-party valid-subspace projector from the expanded polynomial."""
    parties = _resolve(op, parties)
    return _apply_terms(op, lvn_polynomial(parties))


def allowed_signature(nontrivial: Iterable[FactorLabel], parties: Sequence[Party]) -> bool:
    """Whether a product term with the given nontrivial factors survives the projector.

    A term survives iff it is the identity or some party has a nontrivial input
    while all its outputs are trivial.
    """
    keys = {f.key for f in nontrivial}
    if not keys:
        return True
    for p in parties:
        ins = any(f.key in keys for f in p.inputs)
        outs = any(f.key in keys for f in p.outputs)
        if ins and not outs:
            return True
    return False


def projector_rank(parties: Sequence[Party], batch: int = 4096) -> int:
    """Dimension of the valid subspace, as the trace of the projector superoperator.

    Sums ``<E_rc, L(E_rc)>`` over all matrix units, applying the projector to
    batches of matrix units at once.
    """
    factors = canonical_order(f for p in parties for f in p.factors)
    dims = tuple(f.dim for f in factors)
    D = int(np.prod(dims, dtype=np.int64))
    index = {f.key: i for i, f in enumerate(factors)}
    terms = [([index[f.key] for f in labels], c) for labels, c in lvn_polynomial(parties).items()]
    total = 0.0
    units = np.arange(D * D)
    for start in range(0, D * D, batch):
        chunk = units[start:start + batch]
        e = np.zeros((len(chunk), D, D))
        e[np.arange(len(chunk)), chunk // D, chunk % D] = 1.0
        acc = np.zeros_like(e)
        for pos, c in terms:
            acc += c * trace_replace_array(e, dims, pos)
        total += float(np.sum(acc[np.arange(len(chunk)), chunk // D, chunk % D]))
    return int(round(total))


# -- validity -----------------------------------------------------------------


@dataclass
class ProcessReport:
    min_eigenvalue: float
    hermitian_deviation: float
    trace_deviation: float | None
    projector_residual: float
    constraints: dict = field(default_factory=dict)
    tol: float = DEFAULT_TOL

    CONSTRAINT_TEXT = {
        "bob_discarded": "_{B_I B_O} W = _{A_O B_I B_O} W",
        "alice_discarded": "_{A_I A_O} W = _{A_I A_O B_O} W",
        "loop_free": "W = _{B_O} W + _{A_O} W - _{A_O B_O} W",
    }

    @property
    def positive(self) -> bool:
        return self.min_eigenvalue >= -self.tol and self.hermitian_deviation <= self.tol

    @property
    def passed(self) -> bool:
        ok = self.positive and self.projector_residual <= self.tol
        if self.trace_deviation is not None:
            ok = ok and self.trace_deviation <= self.tol
        return ok and all(v <= self.tol for v in self.constraints.values())

    def failures(self) -> list[str]:
        out = []
        if not self.positive:
            out.append("positivity")
        if self.trace_deviation is not None and self.trace_deviation > self.tol:
            out.append("trace")
        if self.projector_residual > self.tol:
            out.append("projector")
        out.extend(k for k, v in self.constraints.items() if v > self.tol)
        return out

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "min_eigenvalue": self.min_eigenvalue,
            "hermitian_deviation": self.hermitian_deviation,
            "trace_deviation": self.trace_deviation,
            "projector_residual": self.projector_residual,
            "constraints": dict(self.constraints),
        }

    def __str__(self):
        mark = lambda ok: "ok  " if ok else "FAIL"
        lines = [f"process {'VALID' if self.passed else 'INVALID'} (tol {self.tol:g})"]
        lines.append(f"  {mark(self.positive)} W >= 0               min eigenvalue {self.min_eigenvalue:+.6e}")
        if self.trace_deviation is not None:
            ok = self.trace_deviation <= self.tol
            lines.append(f"  {mark(ok)} Tr W = d_O           deviation {self.trace_deviation:.6e}")
        ok = self.projector_residual <= self.tol
        lines.append(f"  {mark(ok)} L(W) = W             residual {self.projector_residual:.6e}")
        for key, val in self.constraints.items():
            text = self.CONSTRAINT_TEXT.get(key, key)
            lines.append(f"  {mark(val <= self.tol)} {key}: {text}   residual {val:.6e}")
        return "\n".join(lines)


def _replace(op: LabeledOperator, labels) -> np.ndarray:
    index = {f.key: i for i, f in enumerate(op.factors)}
    return trace_replace_array(op.entries, op.dims, [index[f.key] for f in labels])


def validate_process(W: ProcessMatrix, tol: float = DEFAULT_TOL) -> ProcessReport:
    """Positivity, normalization and the linear constraints, each with its residual.

    Residuals are trace norms of the defect operators.
    """
    op = W.op
    herm = op.hermitian_deviation()
    h = (op.entries + op.entries.conj().T) / 2
    min_eig = float(np.linalg.eigvalsh(h)[0])
    trace_dev = abs(op.trace() - W.d_out) if W.normalized else None
    if len(W.parties) == 2:
        proj = project_LV(op, W.parties)
    else:
        proj = project_LVN(op, W.parties)
    residual = trace_norm(proj.entries - op.entries)
    constraints = {}
    if len(W.parties) == 2:
        a, b = W.parties
        AI, AO, BI, BO = a.inputs, a.outputs, b.inputs, b.outputs
        constraints["bob_discarded"] = trace_norm(_replace(op, BI + BO) - _replace(op, AO + BI + BO))
        constraints["alice_discarded"] = trace_norm(_replace(op, AI + AO) - _replace(op, AI + AO + BO))
        loop = _replace(op, BO) + _replace(op, AO) - _replace(op, AO + BO)
        constraints["loop_free"] = trace_norm(op.entries - loop)
    return ProcessReport(min_eig, herm, trace_dev, residual, constraints, tol)


class CausalClass(enum.Enum):
    NO_SIGNALING = "no-signaling"
    A_BEFORE_B = "A<=B"
    B_BEFORE_A = "B<=A"
    NO_FIXED_ORDER = "no fixed order"


def order_residuals(W: ProcessMatrix) -> dict:
    """``||_BO W - W||`` (A before B) and ``||_AO W - W||`` (B before A), trace norm."""
    if len(W.parties) != 2:
        raise ValueError("causal order is defined here for bipartite processes")
    a, b = W.parties
    return {
        "A<=B": trace_norm(_replace(W.op, b.outputs) - W.op.entries),
        "B<=A": trace_norm(_replace(W.op, a.outputs) - W.op.entries),
    }


def causal_class(W: ProcessMatrix, tol: float = DEFAULT_TOL) -> CausalClass:
    report = validate_process(W, tol)
    if not report.passed:
        raise ValueError(f"causal_class needs a valid process; failed: {', '.join(report.failures())}")
    res = order_residuals(W)
    ab, ba = res["A<=B"] <= tol, res["B<=A"] <= tol
    if ab and ba:
        return CausalClass.NO_SIGNALING
    if ab:
        return CausalClass.A_BEFORE_B
    if ba:
        return CausalClass.B_BEFORE_A
    return CausalClass.NO_FIXED_ORDER


# -- constructors -------------------------------------------------------------


def _checked(W: ProcessMatrix, tol: float = DEFAULT_TOL) -> ProcessMatrix:
    report = validate_process(W, tol)
    if not report.passed:
        raise ValueError(f"constructed process is invalid; failed sub-checks: {', '.join(report.failures())}")
    return W


def _ports(name: str, d_in: int, d_out: int, copy: int) -> Party:
    return Party(
        name + "'" * copy,
        (FactorLabel(name, Port.INPUT, copy, d_in),),
        (FactorLabel(name, Port.OUTPUT, copy, d_out),),
    )


def _is_density(rho: np.ndarray, tol: float) -> str | None:
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return f"state has shape {rho.shape}"
    if np.max(np.abs(rho - rho.conj().T), initial=0.0) > tol:
        return "state is not Hermitian"
    if np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0] < -tol:
        return "state is not positive"
    if abs(np.trace(rho) - 1) > tol:
        return f"state has trace {np.trace(rho).real:.6g}"
    return None


def state_process(
    rho,
    input_dims: Sequence[int] | None = None,
    output_dims: Sequence[int] | None = None,
    copy: int = 0,
    tol: float = DEFAULT_TOL,
) -> ProcessMatrix:
    """``rho`` shared on the parties' inputs, identity on their outputs.

    One party per entry of ``input_dims`` (default: a single party holding all
    of ``rho``). ``output_dims`` defaults to ``input_dims``.
    """
    rho = np.asarray(rho, dtype=complex)
    problem = _is_density(rho, tol)
    if problem:
        raise ValueError(f"invalid state: {problem}")
    input_dims = tuple(input_dims) if input_dims is not None else (rho.shape[0],)
    output_dims = tuple(output_dims) if output_dims is not None else input_dims
    if int(np.prod(input_dims)) != rho.shape[0]:
        raise ValueError(f"state dimension {rho.shape[0]} does not match input dims {input_dims}")
    if len(output_dims) != len(input_dims):
        raise ValueError("input_dims and output_dims must have one entry per party")
    parties = tuple(_ports(PARTY_NAMES[i], di, do, copy) for i, (di, do) in enumerate(zip(input_dims, output_dims)))
    ins = [p.inputs[0] for p in parties]
    outs = [p.outputs[0] for p in parties]
    op = kron([LabeledOperator(tuple(ins), rho), identity(outs)])
    op = reorder_factors(op, canonical_order(op.factors))
    return _checked(ProcessMatrix(op, parties), tol)


def embedding_kraus(d_in: int, d_out: int) -> list[np.ndarray]:
    """Kraus operators of the identity channel, or its nearest analogue when ``d_in != d_out``.

    Keeps the first ``min(d_in, d_out)`` levels; any input level that does not
    fit is sent to ``|0>``.
    """
    m = min(d_in, d_out)
    k0 = np.zeros((d_out, d_in))
    k0[:m, :m] = np.eye(m)
    kraus = [k0]
    for i in range(d_out, d_in):
        k = np.zeros((d_out, d_in))
        k[0, i] = 1.0
        kraus.append(k)
    return kraus


def channel_process(
    choi,
    direction: str = "A->B",
    sender_input=None,
    receiver_output_dim: int = 1,
    dims: tuple[int, int] | None = None,
    copy: int = 0,
    tol: float = DEFAULT_TOL,
) -> ProcessMatrix:
    """Channel from the sender's output to the receiver's input.

    ``choi`` is the channel's Choi matrix (input first). The sender's input
    receives ``sender_input`` (default: a trivial one-dimensional system) and
    the receiver's output is left open with dimension ``receiver_output_dim``.
    """
    choi = np.asarray(choi, dtype=complex)
    if dims is None:
        d = int(round(np.sqrt(choi.shape[0])))
        if d * d != choi.shape[0]:
            raise ValueError("pass dims=(d_in, d_out) for a non-square channel")
        dims = (d, d)
    d_in, d_out = dims
    if choi.shape != (d_in * d_out, d_in * d_out):
        raise ValueError(f"Choi matrix shape {choi.shape} does not match dims {dims}")
    reduced = partial_trace(
        LabeledOperator((FactorLabel("X", Port.INPUT, 0, d_in), FactorLabel("X", Port.OUTPUT, 0, d_out)), choi),
        [FactorLabel("X", Port.OUTPUT, 0, d_out)],
    )
    if np.max(np.abs(reduced.entries - np.eye(d_in)), initial=0.0) > tol:
        raise ValueError("Choi matrix is not trace preserving")
    if np.linalg.eigvalsh((choi + choi.conj().T) / 2)[0] < -tol:
        raise ValueError("Choi matrix is not completely positive")
    rho = np.ones((1, 1)) if sender_input is None else np.asarray(sender_input, dtype=complex)
    problem = _is_density(rho, tol)
    if problem:
        raise ValueError(f"invalid sender input: {problem}")
    if direction not in ("A->B", "B->A"):
        raise ValueError(f"direction must be 'A->B' or 'B->A', got {direction!r}")
    sender, receiver = ("A", "B") if direction == "A->B" else ("B", "A")
    s = _ports(sender, rho.shape[0], d_in, copy)
    r = _ports(receiver, d_out, receiver_output_dim, copy)
    op = kron([
        LabeledOperator(s.inputs, rho),
        LabeledOperator(s.outputs + r.inputs, choi),
        identity(r.outputs),
    ])
    op = reorder_factors(op, canonical_order(op.factors))
    parties = (s, r) if sender == "A" else (r, s)
    return _checked(ProcessMatrix(op, parties), tol)


def parallel_copies(W: ProcessMatrix, n: int, merge: bool = True, tol: float = DEFAULT_TOL) -> ProcessMatrix:
    """``n`` independent copies of ``W`` on copies ``0..n-1``.

    With ``merge`` the copies are grouped into one composite party per symbol
    (Alice holds ``A, A', ...``); otherwise each copy of each party is its own
    party.
    """
    if n < 1:
        raise ValueError("need at least one copy")
    base = W.with_copy(0) if any(f.copy for f in W.factors) else W
    copies = [base.with_copy(k) for k in range(n)]
    op = kron([c.op for c in copies])
    op = reorder_factors(op, canonical_order(op.factors))
    parties = infer_parties(op.factors, merge_copies=merge)
    return _checked(ProcessMatrix(op, parties, W.normalized), tol)


def mixture(processes: Sequence[ProcessMatrix], probs: Sequence[float], tol: float = DEFAULT_TOL) -> ProcessMatrix:
    probs = np.asarray(probs, dtype=float)
    if len(probs) != len(processes) or np.any(probs < -tol) or abs(probs.sum() - 1) > tol:
        raise ValueError(f"mixture weights {probs.tolist()} are not a probability distribution")
    first = processes[0]
    op = first.op * probs[0]
    for w, p in zip(processes[1:], probs[1:]):
        op = op + w.op * p
    return _checked(ProcessMatrix(op, first.parties, first.normalized), tol)


def opposite_order_pair(dims=2, copy: int = 0, tol: float = DEFAULT_TOL) -> tuple[ProcessMatrix, ProcessMatrix]:
    """Two processes of opposite causal order on ports ``(A_I, A_O, B_I, B_O)``.

    ``W_ab``: maximally mixed state into ``A_I``, identity-like channel
    ``A_O -> B_I``, ``B_O`` open. ``W_ba`` is the same with the parties swapped.
    """
    if np.isscalar(dims):
        dims = (int(dims),) * 4
    dai, dao, dbi, dbo = dims
    ab = channel_process(
        choi_matrix(embedding_kraus(dao, dbi), dao, dbi),
        "A->B",
        sender_input=np.eye(dai) / dai,
        receiver_output_dim=dbo,
        dims=(dao, dbi),
        copy=copy,
        tol=tol,
    )
    ba = channel_process(
        choi_matrix(embedding_kraus(dbo, dai), dbo, dai),
        "B->A",
        sender_input=np.eye(dbi) / dbi,
        receiver_output_dim=dao,
        dims=(dbo, dai),
        copy=copy,
        tol=tol,
    )
    return ab, ba


def _gue(D: int, rng) -> np.ndarray:
    g = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    return (g + g.conj().T) / 2


def random_process(
    dims=2,
    order: str | None = None,
    rng=None,
    copy: int = 0,
    strength: float | None = None,
) -> ProcessMatrix:
    """Random valid bipartite process on ports ``(A_I, A_O, B_I, B_O)``.

    ``(d_O / D) (1 + t X / ||X||)`` with ``X`` a random traceless element of the
    valid subspace (restricted to ``_BO X = X`` for ``order="A<=B"`` or
    ``_AO X = X`` for ``"B<=A"``) and ``t`` in ``[0.2, 0.95)`` unless given.
    """
    rng = np.random.default_rng(rng)
    if np.isscalar(dims):
        dims = (int(dims),) * 4
    a = _ports("A", dims[0], dims[1], copy)
    b = _ports("B", dims[2], dims[3], copy)
    factors = canonical_order(a.factors + b.factors)
    D = int(np.prod(dims))
    op = LabeledOperator(factors, _gue(D, rng))
    x = project_LV(op, (a, b))
    if order == "A<=B":
        x = LabeledOperator(factors, _replace(x, b.outputs))
    elif order == "B<=A":
        x = LabeledOperator(factors, _replace(x, a.outputs))
    elif order is not None:
        raise ValueError(f"order must be None, 'A<=B' or 'B<=A', got {order!r}")
    m = x.entries - np.trace(x.entries) / D * np.eye(D)
    norm = np.max(np.abs(np.linalg.eigvalsh((m + m.conj().T) / 2)))
    t = rng.uniform(0.2, 0.95) if strength is None else strength
    d_o = dims[1] * dims[3]
    entries = d_o / D * (np.eye(D) + t * m / norm)
    return ProcessMatrix(LabeledOperator(factors, entries), (a, b))
