"""Reference processes and instruments, built in code and bundled as JSON.

The bundled files under ``procmat/data`` are generated by :func:`write_all`;
tests check that they agree with the builders here.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .composition import mixed_order_pair, tensor_compose
from .instruments import Instrument, choi_matrix
from .processes import channel_process, opposite_order_pair, state_process
from .tensorspace import FactorLabel, Port

X = np.array([[0, 1], [1, 0]], dtype=complex)
SWAP = np.eye(4)[[0, 2, 1, 3]]

# a qubit state with complex coherences, so the transposition convention matters
STATE = np.array([[0.7, 0.2 - 0.3j], [0.2 + 0.3j, 0.3]], dtype=complex)


def _f(name, port, copy=0, dim=2):
    return FactorLabel(name, Port(port), copy, dim)


def state():
    return state_process(STATE)


def bipartite_state(copy=0):
    rho = np.kron(STATE, np.diag([0.25, 0.75]))
    return state_process(rho, input_dims=(2, 2), copy=copy)


def channel(direction="A->B", copy=0):
    ab, ba = opposite_order_pair(2, copy=copy)
    return ab if direction == "A->B" else ba


def mixed_order(copy=0):
    w, _ = mixed_order_pair(2, copies=(copy, copy + 1))
    return w


def mixed_order_composite():
    w1, w2 = mixed_order_pair(2)
    return tensor_compose(w1, w2)


def loop_composite():
    """``|0><0|`` fed through A -> B on the unprimed copy and B' -> A' on the primed one."""
    zero = np.diag([1.0, 0.0])
    ident = choi_matrix([np.eye(2)], 2, 2)
    w1 = channel_process(ident, "A->B", sender_input=zero, receiver_output_dim=2)
    w2 = channel_process(ident, "B->A", sender_input=zero, receiver_output_dim=2, copy=1)
    return tensor_compose(w1, w2)


def loop_alice():
    """Deterministic: ``A'_I`` through ``X`` into ``A_O``, ``A_I`` through ``X`` into ``A'_O``."""
    ins = (_f("A", "I"), _f("A", "I", 1))
    outs = (_f("A", "O"), _f("A", "O", 1))
    return Instrument.from_kraus("A", ins, outs, {(0, 0): [np.kron(X, X) @ SWAP]})


def loop_bob():
    """Deterministic: ``B_I`` wired to ``B'_O`` and ``B'_I`` to ``B_O``."""
    ins = (_f("B", "I"), _f("B", "I", 1))
    outs = (_f("B", "O"), _f("B", "O", 1))
    return Instrument.from_kraus("B", ins, outs, {(0, 0): [SWAP]})


def identity_channel():
    """Identity channel from ``A_O`` to ``B_I``; ``A_I`` and ``B_O`` trivial."""
    return channel_process(choi_matrix([np.eye(2)], 2, 2), "A->B")


def prepare_zero():
    return Instrument.from_kraus("A", (_f("A", "I", dim=1),), (_f("A", "O"),), {(0, 0): [np.array([[1.0], [0.0]])]})


def measure_z_or_x():
    """Setting 0 measures Z, setting 1 measures X; outcome ``a`` is the ``a``-th basis vector."""
    plus = np.array([1, 1]) / np.sqrt(2)
    minus = np.array([1, -1]) / np.sqrt(2)
    kraus = {
        (0, 0): [np.array([[1.0, 0.0]])],
        (1, 0): [np.array([[0.0, 1.0]])],
        (0, 1): [plus.reshape(1, 2)],
        (1, 1): [minus.reshape(1, 2)],
    }
    return Instrument.from_kraus("B", (_f("B", "I"),), (_f("B", "O", dim=1),), kraus)


BUILDERS = {
    "state": state,
    "bipartite_state": bipartite_state,
    "bipartite_state_copy1": lambda: bipartite_state(1),
    "channel_ab": channel,
    "channel_ab_copy1": lambda: channel("A->B", 1),
    "channel_ba": lambda: channel("B->A"),
    "channel_ba_copy1": lambda: channel("B->A", 1),
    "mixed_order": mixed_order,
    "mixed_order_copy1": lambda: mixed_order(1),
    "mixed_order_composite": mixed_order_composite,
    "loop_composite": loop_composite,
    "loop_alice": loop_alice,
    "loop_bob": loop_bob,
    "identity_channel": identity_channel,
    "prepare_zero": prepare_zero,
    "measure_z_or_x": measure_z_or_x,
}


def path(name: str) -> Path:
    if name not in BUILDERS:
        raise KeyError(f"unknown fixture {name!r}; known: {', '.join(sorted(BUILDERS))}")
    return Path(str(resources.files("procmat") / "data" / f"{name}.json"))


def load(name: str):
    from . import io

    return io.load(path(name))


def write_all(directory=None) -> list[Path]:
    from . import io

    directory = Path(directory) if directory is not None else path("state").parent
    directory.mkdir(parents=True, exist_ok=True)
    return [io.save(build(), directory / f"{name}.json") for name, build in BUILDERS.items()]
