import itertools

import numpy as np
import pytest

from procmat.bases import (
    BasisElement,
    from_product_coordinates,
    gellmann_basis,
    gellmann_eigensystem,
    one_way_order_residual,
    port_labels,
    product_basis,
    product_coordinates,
    pti_basis,
    signature_count,
)
from procmat.processes import project_LV, projector_rank
from procmat.tensorspace import LabeledOperator, trace_and_replace

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0, -1.0]).astype(complex)


def rand_herm(d, rng):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (g + g.conj().T) / 2


def brute_signature_count(dims):
    """Count allowed product terms by enumerating every signature of the four ports."""
    d_ai, d_ao, d_bi, d_bo = dims
    sizes = {"A_I": d_ai ** 2 - 1, "A_O": d_ao ** 2 - 1, "B_I": d_bi ** 2 - 1, "B_O": d_bo ** 2 - 1}
    total = 0
    for r in range(5):
        for sig in itertools.combinations(sizes, r):
            s = set(sig)
            last_a = "A_I" in s and "A_O" not in s
            last_b = "B_I" in s and "B_O" not in s
            if not s or last_a or last_b:
                total += int(np.prod([sizes[p] for p in s]))
    return total


# -- Gell-Mann ----------------------------------------------------------------


def test_gellmann_qubit():
    b = gellmann_basis(2)
    assert np.array_equal(b[0], np.eye(2))
    assert np.array_equal(b[1], SZ)
    assert np.array_equal(b[2], SX)
    # Y_12 = i(|1><2| - |2><1|)
    assert np.array_equal(b[3], -SY)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_gellmann_properties(d):
    b = gellmann_basis(d)
    assert len(b) == d * d
    for m in b[1:]:
        assert abs(np.trace(m)) <= 1e-15
        assert np.array_equal(m, m.conj().T)
        vals = np.linalg.eigvalsh(m)
        assert np.all(np.min(np.abs(vals[:, None] - np.array([-1, 0, 1])), axis=1) <= 1e-12)
    gram = np.array([[np.trace(x.conj().T @ y) for y in b] for x in b])
    assert np.linalg.matrix_rank(gram) == d * d


def test_gellmann_qutrit_z_spectra():
    b = gellmann_basis(3)
    for z in b[1:3]:
        assert sorted(np.round(np.linalg.eigvalsh(z), 12)) == [-1, 0, 1]


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_gellmann_completeness_last_projector(d):
    b = gellmann_basis(d)
    zs = b[1:d]
    rebuilt = np.eye(d) / d - sum((j + 1) * z for j, z in enumerate(zs)) / d
    target = np.zeros((d, d))
    target[-1, -1] = 1
    assert np.allclose(rebuilt, target, atol=1e-14)


def test_gellmann_rejects_small():
    with pytest.raises(ValueError):
        gellmann_basis(1)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_closed_form_eigensystem(d):
    for m, mat in enumerate(gellmann_basis(d)):
        vals, vecs = gellmann_eigensystem(d, m)
        assert np.allclose(mat @ vecs, vecs * vals, atol=1e-14)
        assert np.allclose(vecs.conj().T @ vecs, np.eye(d), atol=1e-14)


# -- coordinates --------------------------------------------------------------


def test_product_coordinates_roundtrip_and_oracle():
    rng = np.random.default_rng(0)
    dims = (3, 2, 2)
    m = rand_herm(12, rng)
    coords = product_coordinates(m, dims)
    assert coords.shape == (9, 4, 4)
    assert np.allclose(from_product_coordinates(coords, dims), m, atol=1e-12)
    # oracle: coordinates through an explicit dual-basis solve
    elems = []
    for idx in itertools.product(range(9), range(4), range(4)):
        e = gellmann_basis(3)[idx[0]]
        for d, i in zip(dims[1:], idx[1:]):
            e = np.kron(e, gellmann_basis(d)[i])
        elems.append(e.reshape(-1))
    sol = np.linalg.solve(np.array(elems).T, m.reshape(-1))
    assert np.allclose(coords.reshape(-1), sol, atol=1e-10)


def test_coordinates_reject_outside_span():
    basis = pti_basis((2, 2, 2, 2))
    op = basis[5].operator
    c = basis.coordinates(op)
    assert np.count_nonzero(np.abs(c) > 1e-12) == 1
    outside = product_basis((2, 2, 2, 2))
    bad = [e for e in outside if e.index == (0, 1, 0, 0)][0].operator
    with pytest.raises(ValueError, match="outside the span"):
        basis.coordinates(bad)


# -- valid-subspace basis -----------------------------------------------------


def test_pti_qubit_count():
    basis = pti_basis((2, 2, 2, 2), cross_check=True)
    assert len(basis) == 88
    assert len(product_basis((2, 2, 2, 2))) == 256
    assert len(basis) == projector_rank(basis.parties) == brute_signature_count((2, 2, 2, 2))


@pytest.mark.parametrize("dims", [(3, 2, 2, 2), (2, 3, 2, 2), (2, 2, 3, 2), (3, 3, 2, 2)])
def test_signature_count_oracle(dims):
    assert signature_count(dims) == brute_signature_count(dims)


def test_pti_mixed_dims_cross_check():
    basis = pti_basis((3, 2, 2, 2), cross_check=True)
    assert len(basis) == 213 == brute_signature_count((3, 2, 2, 2))


def test_pti_single_party():
    basis = pti_basis((2, 2))
    assert len(basis) == 4
    assert {e.index for e in basis} == {(0, 0), (1, 0), (2, 0), (3, 0)}


@pytest.mark.parametrize("dims", [(2, 2, 2, 2), (3, 2, 2, 2)])
def test_pti_elements_exhaustive(dims):
    basis = pti_basis(dims)
    a, b = basis.parties
    for e in basis:
        m = e.operator
        assert np.max(np.abs(project_LV(m, basis.parties).entries - m.entries)) <= 1e-9
        ra = np.max(np.abs(trace_and_replace(m, a.outputs).entries - m.entries))
        rb = np.max(np.abs(trace_and_replace(m, b.outputs).entries - m.entries))
        assert min(ra, rb) <= 1e-9
    audit = basis.verify()
    assert audit["gram_rank"] == len(basis)
    assert audit["projector_residual"] <= 1e-9 and audit["one_way_order_residual"] <= 1e-9


def test_pti_qutrit_ports_verify():
    basis = pti_basis((3, 3, 3, 3))
    assert len(basis) == brute_signature_count((3, 3, 3, 3))
    audit = basis.verify()
    assert audit["gram_rank"] == len(basis)
    assert max(audit["projector_residual"], audit["one_way_order_residual"],
               audit["factor_trace"], audit["factor_eigenvalue_defect"]) <= 1e-9


def test_port_labels_primes():
    ports, parties = port_labels((2, 2, 2, 2), copy=1)
    assert [p.name for p in ports] == ["A'_I", "A'_O", "B'_I", "B'_O"]
    assert [p.name for p in parties] == ["A'", "B'"]


# -- elements -----------------------------------------------------------------


def test_basis_element_eigen_data():
    ports, _ = port_labels((3, 2, 2, 2))
    e = BasisElement(ports, (1, 0, 1, 0))  # Z_1 on A_I, Z on B_I
    assert e.name == "Z1^A_I Z1^B_I"
    for k in range(24):
        v = e.eigenvector(k)
        assert np.allclose(e.operator.entries @ v, e.eigenvalue(k) * v, atol=1e-14)
    vals = sorted(e.eigenvalue(k) for k in range(24))
    assert vals == sorted(np.round(np.linalg.eigvalsh(e.operator.entries), 12))
    with pytest.raises(ValueError):
        e.normalize_eigen_index((0, 0, 0))


def test_one_way_order_residual_detects_two_way_term():
    ports, parties = port_labels((2, 2, 2, 2))
    two_way = BasisElement(ports, (0, 1, 0, 1)).operator  # A_O and B_O both nontrivial
    assert one_way_order_residual(two_way, parties) > 0.5
    assert one_way_order_residual(BasisElement(ports, (0, 1, 1, 0)).operator, parties) == 0
