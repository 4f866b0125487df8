import numpy as np
import pytest

from procmat import fixtures
from procmat.bases import BasisElement, ProductBasis, port_labels, pti_basis
from procmat.certificate import Certificate
from procmat.composition import (
    BilinearRule,
    SpanError,
    check_R1,
    check_R1prime,
    check_R2,
    check_R3,
    coefficient_error,
    fit_bilinear_rule,
    lemma1_certificate,
    lemma2_certificate,
    lemma3_certificate,
    mixed_order_pair,
    rule_from_tensor_product,
    same_order_pair,
    split_factor,
    tensor_compose,
    tensor_product,
    theorem_certificate,
)
from procmat.instruments import born_probability
from procmat.processes import (
    CausalClass,
    causal_class,
    opposite_order_pair,
    random_process,
    state_process,
    validate_process,
)
from procmat.tensorspace import LabeledOperator, kron, reorder_factors

# loop-constraint residual (trace norm) of the mixed-order composite, frozen at first build
MIXED_ORDER_LOOP_RESIDUAL = 13.5


@pytest.fixture(scope="module")
def qubit_bases():
    return pti_basis((2, 2, 2, 2)), pti_basis((2, 2, 2, 2), copy=1)


@pytest.fixture(scope="module")
def tensor_rule(qubit_bases):
    return rule_from_tensor_product(*qubit_bases)


def element(dims, index, copy=0):
    ports, _ = port_labels(dims, copy)
    return BasisElement(ports, tuple(index))


def zero_index(e: BasisElement, port: int) -> int:
    return e.eigen_meta[port].index(0.0)


# -- tensor composition -------------------------------------------------------


def test_compose_same_order_channels():
    ab, _ = opposite_order_pair(2)
    W = tensor_compose(ab, ab.with_copy(1))
    assert [p.name for p in W.parties] == ["A", "B"]
    assert [f.name for f in W.factors] == ["A_I", "A_O", "A'_I", "A'_O", "B_I", "B_O", "B'_I", "B'_O"]
    assert causal_class(W) is CausalClass.A_BEFORE_B


def test_compose_mixed_order_violates_loop_constraint():
    W = tensor_compose(*mixed_order_pair(2))
    rep = validate_process(W)
    assert not rep.passed
    assert rep.min_eigenvalue >= -1e-9 and rep.trace_deviation <= 1e-9
    assert rep.constraints["loop_free"] == pytest.approx(MIXED_ORDER_LOOP_RESIDUAL, abs=1e-9)
    assert rep.constraints["bob_discarded"] <= 1e-9 and rep.constraints["alice_discarded"] <= 1e-9


def test_compose_loop_pair_zero_probability():
    W = fixtures.loop_composite()
    assert not validate_process(W).passed
    ops = [fixtures.loop_alice().elements[(0, 0)], fixtures.loop_bob().elements[(0, 0)]]
    assert abs(born_probability(W, ops)) <= 1e-9
    # the same deterministic wiring on a same-order composite gives probability one
    zero = np.diag([1.0, 0.0])
    from procmat.instruments import choi_matrix
    from procmat.processes import channel_process

    c = choi_matrix([np.eye(2)], 2, 2)
    w1 = channel_process(c, "A->B", sender_input=zero, receiver_output_dim=2)
    ordered = tensor_compose(w1, w1.with_copy(1))
    assert born_probability(ordered, ops) == pytest.approx(1, abs=1e-9)


def test_compose_collision_rejected():
    ab, _ = opposite_order_pair(2)
    with pytest.raises(ValueError, match="duplicate"):
        tensor_compose(ab, ab)


def test_compose_states_no_signaling():
    W = tensor_compose(fixtures.bipartite_state(), fixtures.bipartite_state(1))
    assert causal_class(W) is CausalClass.NO_SIGNALING


# -- rules --------------------------------------------------------------------


def test_tensor_rule_on_states(tensor_rule):
    w1 = state_process(np.diag([0.1, 0.2, 0.3, 0.4]), input_dims=(2, 2))
    w2 = state_process(np.eye(4) / 4, input_dims=(2, 2), copy=1)
    out = tensor_rule(w1, w2)
    assert np.allclose(out.entries, tensor_compose(w1, w2).op.entries, atol=1e-12)


def test_tensor_rule_coefficients_numeric_cross_check(qubit_bases, tensor_rule):
    left, right = qubit_bases
    rng = np.random.default_rng(0)
    for i, j in zip(rng.integers(0, 88, 25), rng.integers(0, 88, 25)):
        direct = reorder_factors(kron([left[i].operator, right[j].operator]), tensor_rule.output_factors)
        assert np.array_equal(tensor_rule.coefficient(i, j).entries, direct.entries)


def test_tensor_rule_reproduces_violation(tensor_rule):
    w1, w2 = mixed_order_pair(2)
    cert = check_R1(tensor_rule, w1, w2)
    assert not cert.passed
    assert cert["R1.loop_free"].residual == pytest.approx(MIXED_ORDER_LOOP_RESIDUAL, abs=1e-9)


@pytest.mark.parametrize("order", ["A<=B", "B<=A"])
def test_requirements_on_same_order_pairs(tensor_rule, order):
    rng = np.random.default_rng(1)
    for _ in range(3):
        w1 = random_process(2, order=order, rng=rng)
        w2 = random_process(2, order=order, rng=rng, copy=1)
        assert check_R1(tensor_rule, w1, w2).passed
        assert check_R1prime(tensor_rule, w1, w2).passed
        r2 = check_R2(tensor_rule, w1, w2)
        assert r2.passed and r2["R2.tensor"].residual <= 1e-12
        assert r2["R2.tensor"].inputs["order"] == order


def test_R2_rejects_mixed_orders(tensor_rule):
    ab, ba = opposite_order_pair(2)
    with pytest.raises(ValueError, match="sharing a causal order"):
        check_R2(tensor_rule, ab, ba.with_copy(1))


def test_R2_detects_a_wrong_rule(qubit_bases, tensor_rule):
    left, right = qubit_bases
    halved = BilinearRule(left, right, tensor_rule.coefficients * 0.5)
    ab, _ = opposite_order_pair(2)
    assert not check_R2(halved, ab, ab.with_copy(1)).passed


def test_R3_identically_true_for_bilinear_rules(qubit_bases, tensor_rule):
    left, right = qubit_bases
    rng = np.random.default_rng(2)
    coeffs = tensor_rule.coefficients.copy()
    coeffs.data = coeffs.data * rng.normal(size=coeffs.data.shape)
    other = BilinearRule(left, right, coeffs)
    mix1 = [(p, random_process(2, rng=rng)) for p in (0.3, 0.7)]
    mix2 = [(q, random_process(2, rng=rng, copy=1)) for q in (0.2, 0.5, 0.3)]
    for rule in (tensor_rule, other):
        cert = check_R3(rule, mix1, mix2)
        assert cert["R3.mixture"].residual <= 1e-12


# -- fitting ------------------------------------------------------------------


def test_fit_recovers_tensor_rule(qubit_bases, tensor_rule):
    left, right = qubit_bases
    samples = [(m.operator, n.operator, (m.operator, n.operator)) for m in left for n in right]
    fitted = fit_bilinear_rule(samples, left, right)
    assert fitted.consistent
    assert coefficient_error(fitted, tensor_rule) <= 1e-9


def test_fit_flags_perturbed_sample():
    left, right = pti_basis((2, 2)), pti_basis((2, 2), copy=1)
    samples = [(m.operator, n.operator, (m.operator, n.operator)) for m in left for n in right]
    assert fit_bilinear_rule(samples, left, right).residual <= 1e-12
    m, n = left[2].operator, right[3].operator
    samples.append((m, n, tensor_product(m, n) * 1.01))
    fitted = fit_bilinear_rule(samples, left, right)
    assert fitted.residual > 1e-9 and not fitted.consistent


def test_fit_dense_path_random_inputs():
    left, right = pti_basis((2, 2)), pti_basis((2, 2), copy=1)
    rng = np.random.default_rng(3)
    samples = []
    for _ in range(30):
        a = left.operator(rng.normal(size=len(left)))
        b = right.operator(rng.normal(size=len(right)))
        samples.append((a, b, tensor_product(a, b)))
    fitted = fit_bilinear_rule(samples, left, right)
    assert fitted.residual <= 1e-9
    assert coefficient_error(fitted, rule_from_tensor_product(left, right)) <= 1e-9


def test_fit_single_sample_one_dimensional_span():
    ports_l, parties_l = port_labels((2, 2))
    ports_r, parties_r = port_labels((2, 2), copy=1)
    left = ProductBasis(ports_l, [BasisElement(ports_l, (1, 0))], parties_l)
    right = ProductBasis(ports_r, [BasisElement(ports_r, (0, 0))], parties_r)
    a, b = left[0].operator * 2, right[0].operator
    fitted = fit_bilinear_rule([(a, b, tensor_product(a, b))], left, right)
    assert fitted.residual <= 1e-12
    assert np.allclose(fitted.coefficient(0, 0).entries, tensor_product(left[0].operator, b).entries)


def test_fit_rejects_deficient_span(qubit_bases):
    left, right = qubit_bases
    samples = [(m.operator, n.operator, (m.operator, n.operator)) for m in left[:-1] for n in right]
    with pytest.raises(SpanError, match="miss 1") as info:
        fit_bilinear_rule(samples, left, right)
    assert len(info.value.missing) == 1


# -- lemma certificates -------------------------------------------------------


def test_lemma1_example():
    a1 = element((2, 2, 2, 2), (0, 1, 1, 0)).operator
    a2 = element((2, 2, 2, 2), (1, 0, 0, 1), copy=1).operator
    cert = lemma1_certificate(a1, a2)
    assert cert.passed
    assert cert["conclusion.bound"].inputs["norm"] == pytest.approx(1)


def test_lemma1_zero_operator():
    a1 = element((2, 2, 2, 2), (0, 0, 0, 0)).operator * 0
    a2 = element((2, 2, 2, 2), (1, 0, 0, 1), copy=1).operator
    cert = lemma1_certificate(a1, a2)
    assert cert.passed and cert.meta["lambda1"] == 0


def test_lemma1_rejects_outside_subspace():
    bad = element((2, 2, 2, 2), (0, 1, 0, 0)).operator
    ok = element((2, 2, 2, 2), (1, 0, 0, 1), copy=1).operator
    with pytest.raises(ValueError, match="valid subspace"):
        lemma1_certificate(bad, ok)


def test_lemma1_random_valid_operators():
    rng = np.random.default_rng(4)
    w1, w2 = random_process(2, rng=rng), random_process(2, rng=rng, copy=1)
    assert lemma1_certificate(w1.op, w2.op).passed


def test_lemma2_example():
    m = element((2, 2, 2, 2), (0, 1, 1, 0))
    n = element((2, 2, 2, 2), (1, 0, 0, 1), copy=1)
    for k in range(16):
        for j in (0, 5, 15):
            assert lemma2_certificate(m, n, k, j).passed


def test_lemma2_qutrit_minus_one():
    m = element((3, 2, 2, 2), (1, 0, 1, 0))  # Z_1 on the qutrit A_I
    n = element((2, 2, 2, 2), (0, 1, 1, 0), copy=1)
    minus = m.eigen_meta[0].index(-1.0)
    k = (minus, 0, 0, 0)
    assert m.eigenvalue(k) == -1
    cert = lemma2_certificate(m, n, k, 0)
    assert cert.passed


def test_lemma2_rejects_zero_eigenvalue():
    m = element((3, 2, 2, 2), (1, 0, 1, 0))
    n = element((2, 2, 2, 2), (0, 1, 1, 0), copy=1)
    with pytest.raises(ValueError, match="lemma3"):
        lemma2_certificate(m, n, (zero_index(m, 0), 0, 0, 0), 0)


def test_lemma3_qutrit_zero():
    m = element((3, 2, 2, 2), (1, 0, 1, 0))
    n = element((2, 2, 2, 2), (0, 1, 1, 0), copy=1)
    cert = lemma3_certificate(m, n, (zero_index(m, 0), 0, 1, 0), 3)
    assert cert.passed, cert.summary()
    assert cert.meta["zero_factors"] == [1, 0]


def test_lemma3_both_sides_zero():
    m = element((3, 2, 2, 2), (1, 0, 1, 0))  # Z_1 on A_I, Z on B_I
    n = element((3, 2, 2, 2), (2, 0, 0, 3), copy=1)  # Z_2 on A'_I, Y on B'_O
    k = (zero_index(m, 0), 0, 1, 0)
    j = (zero_index(n, 0), 1, 0, 1)
    cert = lemma3_certificate(m, n, k, j)
    assert cert.passed, cert.summary()
    assert cert.meta["zero_factors"] == [1, 1]


def test_lemma3_rejects_all_nonzero():
    m = element((2, 2, 2, 2), (0, 1, 1, 0))
    n = element((2, 2, 2, 2), (1, 0, 0, 1), copy=1)
    with pytest.raises(ValueError, match="lemma2"):
        lemma3_certificate(m, n, 0, 0)


def test_split_factor_pieces():
    from procmat.bases import gellmann_basis, gellmann_eigensystem

    for d in (3, 4):
        for idx in range(1, d * d):
            vals, vecs = gellmann_eigensystem(d, idx)
            x = gellmann_basis(d)[idx]
            plus = vecs[:, list(vals).index(1.0)]
            for z in np.flatnonzero(vals == 0):
                k = vecs[:, z]
                xp, xpp = split_factor(x, k, plus)
                assert np.allclose(xp + xpp, x)
                assert np.allclose(xp @ k, k) and np.allclose(xpp @ k, -k)
                for piece in (xp, xpp):
                    ev = np.linalg.eigvalsh(piece)
                    assert np.all(np.min(np.abs(ev[:, None] - np.array([-1, 0, 1])), axis=1) <= 1e-12)


# -- theorem ------------------------------------------------------------------


@pytest.fixture(scope="module")
def qubit_certificate():
    return theorem_certificate((2, 2, 2, 2))


def test_theorem_qubits_passes(qubit_certificate):
    cert = qubit_certificate
    assert cert.passed, cert.summary()
    assert cert.meta["basis_size"] == 88 and cert.meta["product_terms"] == 256
    step4 = cert["counterexample.violation"]
    assert step4.kind == "exceeds" and step4.residual > 0.1
    assert step4.residual == pytest.approx(MIXED_ORDER_LOOP_RESIDUAL, abs=1e-9)


def test_theorem_certificate_document_roundtrip(qubit_certificate):
    again = Certificate.from_dict(qubit_certificate.as_dict())
    assert again.as_dict() == qubit_certificate.as_dict()


def test_theorem_control_aborts():
    cert = theorem_certificate((2, 2, 2, 2), counterexample=same_order_pair((2, 2, 2, 2)))
    assert cert.aborted == "counterexample not exhibited"
    assert not cert.passed


def test_theorem_qutrit_port():
    cert = theorem_certificate((3, 2, 2, 2), lemma_samples=4, n_random=1)
    assert cert.passed, cert.summary()
    assert cert.meta["basis_size"] == 213
    assert any(c.name.startswith("lemma3[") for c in cert.checks)


def test_theorem_guard():
    with pytest.raises(ValueError, match="guard"):
        theorem_certificate((3, 3, 3, 3))
    with pytest.raises(ValueError):
        theorem_certificate((2, 2, 2))
