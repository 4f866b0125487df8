"""
Composing processes with a tensor product
=========================================

Two processes shared by the same parties can be combined by a tensor product.
This works when both have the same causal order and fails for a mixture of orders.
"""

from procmat import fixtures
from procmat.composition import tensor_compose
from procmat.instruments import born_probability
from procmat.processes import causal_class, opposite_order_pair, validate_process

ab, ba = opposite_order_pair(2)

# same order: the composite is valid and keeps the order
W = tensor_compose(ab, ab.with_copy(1))
print("same order:", validate_process(W).passed, causal_class(W).value)

# an equal mixture of both orders, composed with itself
W = tensor_compose(fixtures.mixed_order(), fixtures.mixed_order(copy=1))
rep = validate_process(W)
print(rep)
print("failed constraints:", rep.failures())

# deterministic local operations that close a causal loop:
# Alice swaps and flips her two systems, Bob swaps his
ops = [fixtures.loop_alice().elements[(0, 0)], fixtures.loop_bob().elements[(0, 0)]]
ordered = tensor_compose(fixtures.channel("A->B"), fixtures.channel("A->B", copy=1))
print("p on a valid composite:", round(born_probability(ordered, ops), 12))
print("p on the loop composite:", round(born_probability(fixtures.loop_composite(), ops), 12))
print("p on the mixed-order composite:", round(born_probability(fixtures.mixed_order_composite(), ops), 12))
