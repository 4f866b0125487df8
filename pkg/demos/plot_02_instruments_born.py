"""
Instruments and the Born rule
=============================

Local operations are instruments: families of CP maps indexed by outcome and
setting. A process turns one instrument per party into a probability table.
"""

import numpy as np

from procmat import fixtures
from procmat.instruments import probability_table, random_instrument, setting_sums, signaling, validate_instrument
from procmat.processes import random_process

# Alice prepares |0>, the channel carries it to Bob, Bob measures Z (setting 0) or X (setting 1)
W = fixtures.identity_channel()
alice, bob = fixtures.prepare_zero(), fixtures.measure_z_or_x()
print(validate_instrument(bob))

table = probability_table(W, alice, bob)
for (a, b, x, y), p in table.items():
    print(f"p({a},{b} | {x},{y}) = {p:.3f}")

# probabilities sum to one for every choice of settings
print(setting_sums(table, 2))

# random valid process, random instruments: the table is still normalized,
# and a process with a definite order only signals one way
rng = np.random.default_rng(7)
W = random_process(2, order="A<=B", rng=rng)
insts = [random_instrument(p.name, p.inputs, p.outputs, rng=rng) for p in W.parties]
table = probability_table(W, *insts)
print("sums:", [round(s, 12) for s in setting_sums(table, 2).values()])
print("signaling:", signaling(table))
