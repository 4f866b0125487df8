"""
A machine-checkable no-go certificate
=====================================

Chain the premise audits, the basis pinning and the counterexample into one
certificate, then serialize it.
"""

import tempfile
from pathlib import Path

from procmat import io
from procmat.bases import BasisElement, port_labels
from procmat.composition import (
    lemma1_certificate,
    lemma2_certificate,
    lemma3_certificate,
    same_order_pair,
    theorem_certificate,
)

ports, _ = port_labels((2, 2, 2, 2))
ports1, _ = port_labels((2, 2, 2, 2), copy=1)
M = BasisElement(ports, (0, 1, 1, 0))  # Z on A_O and B_I
N = BasisElement(ports1, (1, 0, 0, 1))  # Z on A'_I and B'_O

# the norm bound on a pair of valid-subspace operators
print(lemma1_certificate(M.operator, N.operator).summary())

# +-1 eigenvectors pin the coefficient of M (x) N
print(lemma2_certificate(M, N, 0, 3).summary())

# a qutrit Z_1 has a zero eigenvalue; the factor is split into two pieces
qports, _ = port_labels((3, 2, 2, 2))
Q = BasisElement(qports, (1, 0, 1, 0))
k = (Q.eigen_meta[0].index(0.0), 0, 1, 0)
print(lemma3_certificate(Q, N, k, 3).summary())

# the full chain at qubit dimensions
cert = theorem_certificate((2, 2, 2, 2))
print(cert.summary())

# the same chain with two same-order processes has nothing to refute
control = theorem_certificate((2, 2, 2, 2), counterexample=same_order_pair((2, 2, 2, 2)))
print("control:", control.aborted)

with tempfile.TemporaryDirectory() as tmp:
    path = io.save(cert, Path(tmp) / "certificate.json")
    print("round trip equal:", io.load(path).as_dict() == cert.as_dict())
