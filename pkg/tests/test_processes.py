import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procmat.instruments import born_probability, choi_from_kraus
from procmat.processes import (
    CausalClass,
    Party,
    ProcessMatrix,
    causal_class,
    channel_process,
    infer_parties,
    lvn_polynomial,
    mixture,
    opposite_order_pair,
    order_residuals,
    parallel_copies,
    project_LV,
    project_LVN,
    projector_rank,
    random_process,
    state_process,
    validate_process,
)
from procmat.instruments import choi_matrix
from procmat.tensorspace import LabeledOperator, factor, identity, kron, reorder_factors, trace_inner

PAULI = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0])]
PORTS = ("A_I", "A_O", "B_I", "B_O")
FS = tuple(factor(n) for n in PORTS)
# product-term signatures that survive the bipartite constraints, written out by hand
ALLOWED = [set(), {"A_I"}, {"B_I"}, {"A_I", "B_I"}, {"A_O", "B_I"}, {"A_I", "A_O", "B_I"},
           {"A_I", "B_O"}, {"A_I", "B_I", "B_O"}]


def rand_herm(d, rng):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (g + g.conj().T) / 2


def pauli_oracle_projection(m):
    """Keep only Pauli-product components with an allowed signature."""
    out = np.zeros_like(m, dtype=complex)
    for idx in itertools.product(range(4), repeat=4):
        sig = {PORTS[i] for i in range(4) if idx[i]}
        if sig not in ALLOWED:
            continue
        p = PAULI[idx[0]]
        for i in idx[1:]:
            p = np.kron(p, PAULI[i])
        out += np.trace(p.conj().T @ m) / 16 * p
    return out


def term(**paulis):
    """Product operator on (A_I, A_O, B_I, B_O) with given Pauli indices."""
    m = np.ones((1, 1))
    for n in PORTS:
        m = np.kron(m, PAULI[paulis.get(n, 0)])
    return LabeledOperator(FS, m)


# -- the state convention -----------------------------------------------------


def test_state_process_born_rule_complex_state():
    rho = np.array([[0.6, 0.1 - 0.35j], [0.1 + 0.35j, 0.4]])
    W = state_process(rho, output_dims=(1,))
    v = np.array([1, 1j]) / np.sqrt(2)
    e = np.outer(v, v.conj())
    # an effect E (trivial output) has Choi matrix E^T
    effect = LabeledOperator((factor("A_I"), factor("A_O", 1)), e.T)
    p = born_probability(W, [effect])
    assert p == pytest.approx(np.trace(rho @ e).real, abs=1e-12)
    assert abs(np.trace(rho @ e) - np.trace(rho.T @ e)) > 0.1  # the test distinguishes rho from rho^T


def test_state_process_preparation_roundtrip():
    # Alice measures the state and forwards nothing; Bob trivial; oracle Tr(rho P_a)
    rho = np.array([[0.25, 0.2j], [-0.2j, 0.75]])
    W = state_process(rho)
    for a in range(2):
        k = np.zeros((2, 2))
        k[0, a] = 1
        c = choi_from_kraus([k], [factor("A_I")], [factor("A_O")])
        assert born_probability(W, [c]) == pytest.approx(rho[a, a].real, abs=1e-12)


# -- projectors ---------------------------------------------------------------


def test_project_LV_matches_pauli_oracle():
    rng = np.random.default_rng(0)
    for _ in range(10):
        m = rand_herm(16, rng)
        got = project_LV(LabeledOperator(FS, m))
        assert np.allclose(got.entries, pauli_oracle_projection(m), atol=1e-12)


def test_project_LV_examples():
    W = state_process(np.eye(4) / 4, input_dims=(2, 2))
    assert np.allclose(project_LV(W.op, W.parties).entries, W.op.entries, atol=1e-15)
    assert np.allclose(project_LV(term(A_O=3)).entries, 0)
    t = term(A_O=3, B_I=3)
    assert np.allclose(project_LV(t).entries, t.entries)


def test_project_LV_seven_terms():
    from procmat.processes import _lv_terms

    a, b = infer_parties(FS)
    assert len(_lv_terms(a, b)) == 7


def test_project_LV_projector_properties():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = LabeledOperator(FS, rand_herm(16, rng))
        y = LabeledOperator(FS, rand_herm(16, rng))
        px = project_LV(x)
        assert np.allclose(project_LV(px).entries, px.entries, atol=1e-9)
        assert abs(trace_inner(px, y) - trace_inner(x, project_LV(y))) <= 1e-9


def test_project_LVN_single_party():
    rho = np.array([[0.5, 0.1j], [-0.1j, 0.5]])
    fs = (factor("A_I"), factor("A_O"))
    party = (Party("A", fs[:1], fs[1:]),)
    op = LabeledOperator(fs, np.kron(rho, np.eye(2)))
    assert np.allclose(project_LVN(op, party).entries, op.entries)
    bad = LabeledOperator(fs, np.kron(np.eye(2), PAULI[3]))
    assert np.allclose(project_LVN(bad, party).entries, 0)
    assert lvn_polynomial(party) == {frozenset(fs[1:]): 1}


def test_project_LVN_matches_LV_at_two_parties():
    rng = np.random.default_rng(2)
    for _ in range(100):
        op = LabeledOperator(FS, rand_herm(16, rng))
        assert np.max(np.abs(project_LVN(op).entries - project_LV(op).entries)) <= 1e-12


def test_project_LVN_overlap_rejected():
    a = Party("A", (factor("A_I"),), (factor("A_O"),))
    b = Party("B", (factor("A_I"),), (factor("B_O"),))
    with pytest.raises(ValueError, match="overlapping"):
        project_LVN(identity(FS), [a, b])


def test_project_LV_needs_two_parties():
    fs = tuple(factor(n) for n in ("A_I", "A_O", "B_I", "B_O", "C_I", "C_O"))
    with pytest.raises(ValueError):
        project_LV(identity(fs))


def test_projector_rank_matches_signature_count():
    # 1 + 3 + 3 + 9 + 9 + 27 + 9 + 27
    assert projector_rank(infer_parties(FS)) == 88
    assert sum(3 ** len(s) for s in ALLOWED) == 88


def test_tensor_factorization_of_constraints():
    rng = np.random.default_rng(3)
    w1 = random_process(2, rng=rng)
    w2 = random_process(2, rng=rng, copy=1)
    prod = kron([w1.op, w2.op])
    four = infer_parties(prod.factors, merge_copies=False)
    assert len(four) == 4
    assert np.allclose(project_LVN(prod, four).entries, prod.entries, atol=1e-9)
    broken = LabeledOperator(w1.op.factors, w1.op.entries + 0.1 * term(A_O=3).entries)
    prod_bad = kron([broken, w2.op])
    assert np.max(np.abs(project_LVN(prod_bad, four).entries - prod_bad.entries)) > 1e-3


# -- validation ---------------------------------------------------------------


def test_validate_state_process():
    rep = validate_process(state_process(np.diag([1.0, 0.0])))
    assert rep.passed


def test_validate_negativity_offset():
    W = state_process(np.diag([1.0, 0.0]))
    support = W.op.entries.real.copy()  # projector onto |0> (x) C^2, trace 2
    shifted = W.op.entries - 0.1 * np.eye(4) + 0.1 * 4 / 2 * support
    rep = validate_process(W.with_op(LabeledOperator(W.op.factors, shifted)))
    assert rep.trace_deviation == pytest.approx(0, abs=1e-12)
    assert rep.min_eigenvalue == pytest.approx(-0.1, abs=1e-12)
    assert not rep.passed and rep.failures() == ["positivity"]


def test_validate_reports_each_constraint():
    ab, _ = opposite_order_pair(2)
    # a term violating only the loop constraint: sigma_z on A_O and B_O
    bad = ab.with_op(ab.op + term(A_O=3, B_O=3) * 0.05)
    rep = validate_process(bad)
    assert rep.constraints["loop_free"] > 0.1
    assert rep.constraints["bob_discarded"] <= 1e-12 and rep.constraints["alice_discarded"] <= 1e-12
    bad2 = ab.with_op(ab.op + term(A_O=3) * 0.05)
    rep2 = validate_process(bad2)
    assert rep2.constraints["bob_discarded"] > 0.1


def test_unnormalized_skips_trace():
    ab, _ = opposite_order_pair(2)
    rep = validate_process(ProcessMatrix(ab.op * 3, ab.parties, normalized=False))
    assert rep.passed and rep.trace_deviation is None


# -- causal order -------------------------------------------------------------


def test_causal_classes():
    ab, ba = opposite_order_pair(2)
    assert causal_class(state_process(np.eye(4) / 4, input_dims=(2, 2))) is CausalClass.NO_SIGNALING
    assert causal_class(ab) is CausalClass.A_BEFORE_B
    assert causal_class(ba) is CausalClass.B_BEFORE_A
    mix = mixture([ab, ba], [0.5, 0.5])
    assert causal_class(mix) is CausalClass.NO_FIXED_ORDER
    res = order_residuals(mix)
    assert res["A<=B"] > 0.1 and res["B<=A"] > 0.1


def test_causal_class_rejects_invalid():
    ab, _ = opposite_order_pair(2)
    with pytest.raises(ValueError, match="valid"):
        causal_class(ab.with_op(ab.op * 2))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_state_processes_are_no_signaling(seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    assert causal_class(state_process(rho, input_dims=(2, 2))) is CausalClass.NO_SIGNALING


# -- constructors -------------------------------------------------------------


def test_channel_process_direction():
    c = choi_matrix([np.eye(2)], 2, 2)
    assert causal_class(channel_process(c, "A->B")) is CausalClass.A_BEFORE_B
    assert causal_class(channel_process(c, "B->A")) is CausalClass.B_BEFORE_A


def test_channel_process_rejects_bad_choi():
    with pytest.raises(ValueError, match="trace preserving"):
        channel_process(2 * choi_matrix([np.eye(2)], 2, 2))
    with pytest.raises(ValueError, match="direction"):
        channel_process(choi_matrix([np.eye(2)], 2, 2), "A->C")


def test_state_process_rejects_bad_state():
    with pytest.raises(ValueError, match="trace"):
        state_process(np.eye(2))
    with pytest.raises(ValueError, match="positive"):
        state_process(np.diag([1.5, -0.5]))


def test_parallel_copies_of_channel():
    ab, _ = opposite_order_pair(2)
    two = parallel_copies(ab, 2)
    assert [p.name for p in two.parties] == ["A", "B"]
    assert causal_class(two) is CausalClass.A_BEFORE_B
    four = parallel_copies(ab, 2, merge=False)
    assert len(four.parties) == 4 and validate_process(four).passed


def test_mixture_rejects_bad_weights():
    ab, ba = opposite_order_pair(2)
    with pytest.raises(ValueError):
        mixture([ab, ba], [0.7, 0.7])


@pytest.mark.parametrize("dims", [2, (3, 2, 2, 2), (2, 3, 3, 2), (2, 2, 3, 3)])
def test_opposite_order_pair_dims(dims):
    ab, ba = opposite_order_pair(dims)
    assert causal_class(ab) is CausalClass.A_BEFORE_B
    assert causal_class(ba) is CausalClass.B_BEFORE_A
    assert ab.op.trace() == pytest.approx(ab.d_out)


@pytest.mark.parametrize("order", [None, "A<=B", "B<=A"])
def test_random_process_valid(order):
    rng = np.random.default_rng(4)
    for _ in range(5):
        W = random_process(2, order=order, rng=rng)
        assert validate_process(W).passed
        if order:
            assert order_residuals(W)[order] <= 1e-9


def test_process_with_copy_relabels():
    ab, _ = opposite_order_pair(2)
    p = ab.with_copy(1)
    assert {f.copy for f in p.factors} == {1}
    assert reorder_factors(p.op, p.op.factors).entries is not None
    assert validate_process(p).passed
