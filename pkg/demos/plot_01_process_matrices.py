"""
Process matrices and causal classes
===================================

Build a few bipartite processes, validate them and classify their causal order.
"""

import numpy as np

from procmat.instruments import choi_matrix
from procmat.processes import (
    ProcessMatrix,
    causal_class,
    channel_process,
    mixture,
    state_process,
    validate_process,
)

# a shared two-qubit state: neither party can signal to the other
rho = np.diag([0.4, 0.1, 0.1, 0.4])
W_state = state_process(rho, input_dims=(2, 2))
print(validate_process(W_state))
print("class:", causal_class(W_state).value)

# an identity channel from Alice's output to Bob's input, |0> fed to Alice
identity = choi_matrix([np.eye(2)], 2, 2)
zero = np.diag([1.0, 0.0])
W_ab = channel_process(identity, "A->B", sender_input=zero, receiver_output_dim=2)
W_ba = channel_process(identity, "B->A", sender_input=zero, receiver_output_dim=2)
print("A->B channel:", causal_class(W_ab).value)
print("B->A channel:", causal_class(W_ba).value)

# an equal mixture of the two orders is still a valid process,
# but it has no definite causal order
W_mix = mixture([W_ab, W_ba], [0.5, 0.5])
rep = validate_process(W_mix)
print("mixture valid:", rep.passed, " class:", causal_class(W_mix).value)

# doubling an entry breaks the trace condition, and the report says which check failed
broken = W_state.op * 2
rep = validate_process(ProcessMatrix(broken, W_state.parties))
print("doubled state fails:", rep.failures())
