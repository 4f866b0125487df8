"""
The valid subspace and its product basis
========================================

Valid processes live in the fixed-point space of a projector. Products of
Gell-Mann matrices that the projector keeps form a basis of that space.
"""

import numpy as np

from procmat.bases import gellmann_basis, one_way_order_residual, pti_basis, signature_count
from procmat.processes import infer_parties, project_LV, project_LVN, projector_rank
from procmat.tensorspace import LabeledOperator, canonical_order, factor

factors = canonical_order([factor(n) for n in ("A_I", "A_O", "B_I", "B_O")])
parties = infer_parties(factors)

# the projector is idempotent, and its polynomial form agrees with the direct one
rng = np.random.default_rng(0)
g = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
x = LabeledOperator(factors, (g + g.conj().T) / 2)
px = project_LV(x, parties)
print("idempotence:", np.max(np.abs(project_LV(px, parties).entries - px.entries)))
print("polynomial form:", np.max(np.abs(project_LVN(x, parties).entries - px.entries)))

# Gell-Mann matrices: identity, diagonal Z_k, then X_jk and Y_jk
for m in gellmann_basis(3):
    print(np.round(np.linalg.eigvalsh(m), 3))

# 88 of the 256 qubit product terms survive; that is the projector rank
basis = pti_basis((2, 2, 2, 2))
print(len(basis), "elements; rank", projector_rank(parties), "; signature count", signature_count((2, 2, 2, 2)))
print("qutrit on A_I:", signature_count((3, 2, 2, 2)))

# each survivor has a one-way causal order
print("worst one-way residual:", max(one_way_order_residual(e.operator, basis.parties) for e in basis))
print("a few elements:", [e.name for e in basis][:8])
