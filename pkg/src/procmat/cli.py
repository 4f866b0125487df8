"""Command line: ``procmat {validate,born,compose,certify,basis}``.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or parse error.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io
from .bases import gellmann_basis, gellmann_names, product_basis, pti_basis
from .composition import mixed_order_pair, same_order_pair, tensor_compose, theorem_certificate
from .instruments import Instrument, probability_table, setting_sums, validate_instrument
from .processes import ProcessMatrix, causal_class, validate_process
from .tensorspace import DEFAULT_TOL, MAX_DIM

OK, FAILED, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(args, payload: dict, text: str):
    print(json.dumps(payload, indent=1) if args.json else text)


def _load(path, kind):
    obj = io.load(path)
    if not isinstance(obj, kind):
        raise UsageError(f"{path}: expected a {kind.__name__} document, got {type(obj).__name__}")
    return obj


def _class_text(W, tol) -> str | None:
    if len(W.parties) != 2:
        return None
    return causal_class(W, tol).value


def cmd_validate(args) -> int:
    obj = io.load(args.file)
    if isinstance(obj, Instrument):
        rep = validate_instrument(obj, args.tol)
        payload = {"kind": "instrument", "passed": rep.passed,
                   "min_eigenvalues": {f"{a},{x}": v for (a, x), v in rep.min_eigenvalues.items()},
                   "tp_residuals": {str(x): r for x, r in rep.tp_residuals.items()}}
        _emit(args, payload, str(rep))
        return OK if rep.passed else FAILED
    if not isinstance(obj, ProcessMatrix):
        raise UsageError(f"{args.file}: cannot validate a {type(obj).__name__} document")
    rep = validate_process(obj, args.tol)
    payload = {"kind": "process", **rep.as_dict()}
    text = str(rep)
    if rep.passed:
        cls = _class_text(obj, args.tol)
        if cls is not None:
            payload["causal_class"] = cls
            text += f"\ncausal class: {cls}"
    else:
        text += f"\nfailed: {', '.join(rep.failures())}"
    _emit(args, payload, text)
    return OK if rep.passed else FAILED


def cmd_born(args) -> int:
    W = _load(args.process, ProcessMatrix)
    instruments = [_load(p, Instrument) for p in args.instruments]
    if args.setting is not None:
        if len(args.setting) != len(instruments):
            raise UsageError(f"--setting needs one value per instrument ({len(instruments)})")
        restricted = []
        for inst, x in zip(instruments, args.setting):
            if x not in inst.settings:
                raise UsageError(f"instrument {inst.party} has no setting {x}; available: {inst.settings}")
            elems = {k: v for k, v in inst.elements.items() if k[1] == x}
            restricted.append(Instrument(inst.party, inst.in_factors, inst.out_factors, elems))
        instruments = restricted
    try:
        table = probability_table(W, *instruments, tol=args.tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    n = len(instruments)
    sums = setting_sums(table, n)
    anomalies = {s: v for s, v in sums.items() if abs(v - 1) > args.tol}
    negative = {k: p for k, p in table.items() if p < -args.tol}
    lines = [f"p(outcomes | settings) for parties {', '.join(i.party for i in instruments)}"]
    for key, p in table.items():
        lines.append(f"  p({','.join(map(str, key[:n]))} | {','.join(map(str, key[n:]))}) = {p:.12g}")
    for s, v in sums.items():
        flag = "" if abs(v - 1) <= args.tol else "   ANOMALOUS: probabilities do not sum to 1"
        lines.append(f"  sum over outcomes at settings ({','.join(map(str, s))}) = {v:.12g}{flag}")
    for k, p in negative.items():
        lines.append(f"  ANOMALOUS: negative probability {p:.3e} at {k}")
    payload = {
        "table": [{"outcomes": list(k[:n]), "settings": list(k[n:]), "p": p} for k, p in table.items()],
        "sums": [{"settings": list(s), "sum": v} for s, v in sums.items()],
        "anomalous": bool(anomalies or negative),
    }
    _emit(args, payload, "\n".join(lines))
    return FAILED if anomalies or negative else OK


def cmd_compose(args) -> int:
    W1 = _load(args.first, ProcessMatrix)
    W2 = _load(args.second, ProcessMatrix)
    if args.shift_copy:
        shift = max(f.copy for f in W1.factors) + 1
        W2 = W2.with_copy(shift)
    try:
        W = tensor_compose(W1, W2)
    except ValueError as exc:
        raise UsageError(f"cannot compose: {exc}") from None
    if args.out:
        io.save(W, args.out)
    rep = validate_process(W, args.tol)
    payload = {"out": args.out, "parties": [p.name for p in W.parties], **rep.as_dict()}
    text = f"composite on parties {', '.join(p.name for p in W.parties)}"
    text += f" written to {args.out}" if args.out else ""
    text += "\n" + str(rep)
    if rep.passed:
        cls = _class_text(W, args.tol)
        payload["causal_class"] = cls
        text += f"\ncausal class: {cls}"
    else:
        text += f"\nfailed: {', '.join(rep.failures())}"
    _emit(args, payload, text)
    return OK if rep.passed else FAILED


def cmd_certify(args) -> int:
    dims = tuple(args.dims)
    if min(dims) < 2:
        raise UsageError("every port dimension must be at least 2")
    D = int(np.prod(dims, dtype=object))
    if D * D > MAX_DIM:
        raise UsageError(f"composite dimension {D * D} exceeds the guard {MAX_DIM}")
    pair = same_order_pair(dims) if args.control else mixed_order_pair(dims)
    cert = theorem_certificate(dims, counterexample=pair, seed=args.seed, tol=args.tol)
    if args.control:
        cert.notes.append("control run: the counterexample pair was replaced by two same-order processes")
    if args.out:
        io.save(cert, args.out)
    text = cert.summary() + f"\nbasis size per copy: {cert.meta.get('basis_size')} of {cert.meta.get('product_terms')}"
    if args.out:
        text += f"\ncertificate written to {args.out}"
    _emit(args, cert.as_dict(), text)
    return OK if cert.passed else FAILED


def cmd_basis(args) -> int:
    if args.dim is not None:
        d = args.dim
        if d < 2:
            raise UsageError("--dim must be at least 2")
        mats = gellmann_basis(d)
        names = gellmann_names(d)
        rows = []
        for name, m in zip(names, mats):
            vals = np.round(np.linalg.eigvalsh(m), 12) + 0.0
            rows.append({"name": name, "trace": float(np.trace(m).real), "eigenvalues": vals.tolist()})
        lines = [f"Gell-Mann basis, d = {d}: {len(mats)} elements"]
        lines += [f"  {r['name']:<6} trace {r['trace']:+g}  eigenvalues {r['eigenvalues']}" for r in rows]
        _emit(args, {"dim": d, "count": len(mats), "elements": rows}, "\n".join(lines))
        return OK
    dims = tuple(args.ports)
    if len(dims) != 4 or min(dims) < 2:
        raise UsageError("--ports needs four dimensions, each at least 2")
    if int(np.prod(dims, dtype=object)) > MAX_DIM:
        raise UsageError(f"dimension exceeds the guard {MAX_DIM}")
    basis = pti_basis(dims)
    total = len(product_basis(dims))
    by_sig: dict = {}
    for e in basis:
        key = " ".join(p.name for p in basis.ports if p in e.signature) or "1"
        by_sig[key] = by_sig.get(key, 0) + 1
    lines = [f"ports {dims}: {len(basis)} allowed of {total} product terms"]
    lines += [f"  {sig:<24} {n}" for sig, n in by_sig.items()]
    if args.verbose:
        for e in basis:
            eig = sorted({round(v, 12) + 0.0 for v in np.ravel([e.eigenvalue(k) for k in range(e.operator.dim)])})
            lines.append(f"  {e.name or '1'}   eigenvalues {eig}")
    payload = {"ports": list(dims), "allowed": len(basis), "total": total, "signatures": by_sig,
               "elements": [e.name for e in basis]}
    _emit(args, payload, "\n".join(lines))
    return OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="numerical tolerance (default 1e-9)")
    common.add_argument("--json", action="store_true", help="machine-readable output")

    parser = argparse.ArgumentParser(prog="procmat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a process or instrument document")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("born", parents=[common], help="probability table for one instrument per party")
    p.add_argument("process")
    p.add_argument("instruments", nargs="+")
    p.add_argument("--setting", type=int, nargs="+", help="one setting per instrument (default: all)")
    p.set_defaults(func=cmd_born)

    p = sub.add_parser("compose", parents=[common], help="tensor-compose two bipartite processes")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--out", help="write the composite process here")
    p.add_argument("--shift-copy", action="store_true", help="relabel the second process to the next free copy")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("certify", parents=[common], help="run the composition no-go certificate")
    p.add_argument("--dims", type=int, nargs=4, default=[2, 2, 2, 2], metavar=("D_AI", "D_AO", "D_BI", "D_BO"))
    p.add_argument("--out", help="write the certificate document here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--control", action="store_true", help="use a same-order pair instead of the counterexample")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("basis", parents=[common], help="list Gell-Mann or valid-subspace product bases")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--dim", type=int)
    g.add_argument("--ports", type=int, nargs=4)
    p.add_argument("--verbose", action="store_true", help="list every element")
    p.set_defaults(func=cmd_basis)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, io.DocumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
