"""Versioned JSON documents for operators, processes, instruments and certificates.

Complex entries are stored row-major as ``[re, im]`` pairs. Floats are written
with Python's shortest round-trip repr, so ``load(dump(x))`` is bit-exact for
finite values.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .certificate import Certificate
from .instruments import Instrument
from .processes import Party, ProcessMatrix
from .tensorspace import FactorLabel, LabeledOperator, Port

FORMAT = "procmat"
VERSION = 1
KINDS = ("operator", "process", "instrument", "certificate")


class DocumentError(ValueError):
    """A document that cannot be parsed; ``location`` points at the offending spot."""

    def __init__(self, message: str, location: str = "$"):
        super().__init__(f"{location}: {message}")
        self.message = message
        self.location = location


# -- encoding -----------------------------------------------------------------


def _factor_doc(f: FactorLabel) -> dict:
    return {"party": f.party, "port": f.port.value, "copy": f.copy, "dim": f.dim}


def _entries_doc(a: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(a, dtype=complex)]


def _operator_body(op: LabeledOperator) -> dict:
    return {"factors": [_factor_doc(f) for f in op.factors], "entries": _entries_doc(op.entries)}


def _party_doc(p: Party) -> dict:
    return {"name": p.name, "inputs": [_factor_doc(f) for f in p.inputs], "outputs": [_factor_doc(f) for f in p.outputs]}


def to_document(obj) -> dict:
    head = {"format": FORMAT, "version": VERSION}
    if isinstance(obj, LabeledOperator):
        return {**head, "kind": "operator", **_operator_body(obj)}
    if isinstance(obj, ProcessMatrix):
        return {
            **head,
            "kind": "process",
            "operator": _operator_body(obj.op),
            "parties": [_party_doc(p) for p in obj.parties],
            "normalized": bool(obj.normalized),
        }
    if isinstance(obj, Instrument):
        return {
            **head,
            "kind": "instrument",
            "party": obj.party,
            "inputs": [_factor_doc(f) for f in obj.in_factors],
            "outputs": [_factor_doc(f) for f in obj.out_factors],
            "elements": [
                {"outcome": a, "setting": x, "operator": _operator_body(op)}
                for (a, x), op in sorted(obj.elements.items(), key=lambda kv: (kv[0][1], kv[0][0]))
            ],
        }
    if isinstance(obj, Certificate):
        return {**head, "kind": "certificate", **obj.as_dict()}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(to_document(obj), separators=(",", ":")) + "\n"


def save(obj, path) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


# -- decoding -----------------------------------------------------------------


def _get(d, key, loc, types=None):
    if not isinstance(d, dict):
        raise DocumentError("expected an object", loc)
    if key not in d:
        raise DocumentError(f"missing field {key!r}", loc)
    v = d[key]
    if types is not None and (not isinstance(v, types) or isinstance(v, bool) and bool not in _as_tuple(types)):
        raise DocumentError(f"field {key!r} has type {type(v).__name__}", f"{loc}.{key}")
    return v


def _as_tuple(t):
    return t if isinstance(t, tuple) else (t,)


def _factor(d, loc) -> FactorLabel:
    party = _get(d, "party", loc, str)
    port = _get(d, "port", loc, str)
    if port not in ("I", "O"):
        raise DocumentError(f"port must be 'I' or 'O', got {port!r}", f"{loc}.port")
    copy = _get(d, "copy", loc, int)
    dim = _get(d, "dim", loc, int)
    try:
        return FactorLabel(party, Port(port), copy, dim)
    except ValueError as exc:
        raise DocumentError(str(exc), loc) from None


def _factors(lst, loc) -> tuple[FactorLabel, ...]:
    if not isinstance(lst, list):
        raise DocumentError("expected a list of factors", loc)
    return tuple(_factor(f, f"{loc}[{i}]") for i, f in enumerate(lst))


def _entries(rows, D, loc) -> np.ndarray:
    if not isinstance(rows, list) or len(rows) != D:
        raise DocumentError(f"expected {D} rows", loc)
    out = np.empty((D, D), dtype=complex)
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != D:
            raise DocumentError(f"expected {D} entries", f"{loc}[{i}]")
        for j, z in enumerate(row):
            if (not isinstance(z, list) or len(z) != 2
                    or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in z)):
                raise DocumentError("expected an [re, im] pair of numbers", f"{loc}[{i}][{j}]")
            out[i, j] = complex(z[0], z[1])
    return out


def _operator(d, loc) -> LabeledOperator:
    factors = _factors(_get(d, "factors", loc), f"{loc}.factors")
    D = int(np.prod([f.dim for f in factors])) if factors else 1
    entries = _entries(_get(d, "entries", loc), D, f"{loc}.entries")
    try:
        return LabeledOperator(factors, entries)
    except ValueError as exc:
        raise DocumentError(str(exc), loc) from None


def from_document(doc):
    if not isinstance(doc, dict):
        raise DocumentError("document must be a JSON object")
    if doc.get("format") != FORMAT:
        raise DocumentError(f"not a {FORMAT} document (format {doc.get('format')!r})", "$.format")
    version = doc.get("version")
    if version != VERSION:
        raise DocumentError(f"unsupported schema version {version!r}; this reader knows version {VERSION}", "$.version")
    kind = doc.get("kind")
    if kind == "operator":
        return _operator(doc, "$")
    if kind == "process":
        op = _operator(_get(doc, "operator", "$", dict), "$.operator")
        parties = []
        for i, p in enumerate(_get(doc, "parties", "$", list)):
            loc = f"$.parties[{i}]"
            parties.append(Party(_get(p, "name", loc, str), _factors(_get(p, "inputs", loc), f"{loc}.inputs"),
                                 _factors(_get(p, "outputs", loc), f"{loc}.outputs")))
        normalized = _get(doc, "normalized", "$", bool)
        try:
            return ProcessMatrix(op, tuple(parties), normalized)
        except ValueError as exc:
            raise DocumentError(str(exc), "$.parties") from None
    if kind == "instrument":
        party = _get(doc, "party", "$", str)
        ins = _factors(_get(doc, "inputs", "$"), "$.inputs")
        outs = _factors(_get(doc, "outputs", "$"), "$.outputs")
        elements = {}
        for i, e in enumerate(_get(doc, "elements", "$", list)):
            loc = f"$.elements[{i}]"
            key = (_get(e, "outcome", loc, int), _get(e, "setting", loc, int))
            if key in elements:
                raise DocumentError(f"duplicate element {key}", loc)
            elements[key] = _operator(_get(e, "operator", loc, dict), f"{loc}.operator")
        try:
            return Instrument(party, ins, outs, elements)
        except ValueError as exc:
            raise DocumentError(str(exc), "$.elements") from None
    if kind == "certificate":
        try:
            return Certificate.from_dict(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise DocumentError(f"malformed certificate ({exc})", "$") from None
    raise DocumentError(f"unknown document kind {kind!r}; expected one of {', '.join(KINDS)}", "$.kind")


def loads(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return from_document(doc)


def load(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DocumentError(f"cannot read file ({exc.strerror})", str(path)) from None
    try:
        return loads(text)
    except DocumentError as exc:
        raise DocumentError(exc.message, f"{path}: {exc.location}") from None
