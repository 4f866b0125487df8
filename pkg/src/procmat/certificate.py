"""Structured verification records."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any


@dataclass
class Check:
    """One named numerical check.

    ``kind="at_most"`` passes when ``residual <= tolerance``; ``kind="exceeds"``
    passes when ``residual > tolerance`` (used for exhibited violations).
    """

    name: str
    statement: str
    residual: float
    tolerance: float
    kind: str = "at_most"
    inputs: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.residual):
            return False
        if self.kind == "exceeds":
            return self.residual > self.tolerance
        return self.residual <= self.tolerance

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "statement": self.statement,
            "residual": float(self.residual),
            "tolerance": float(self.tolerance),
            "kind": self.kind,
            "passed": self.passed,
            "inputs": _plain(self.inputs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Check":
        return cls(d["name"], d["statement"], float(d["residual"]), float(d["tolerance"]),
                   d.get("kind", "at_most"), dict(d.get("inputs", {})))


@dataclass
class Certificate:
    title: str
    checks: list[Check] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    aborted: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.aborted is None and all(c.passed for c in self.checks)

    def add(self, name, statement, residual, tolerance, kind="at_most", **inputs) -> Check:
        c = Check(name, statement, float(residual), float(tolerance), kind, inputs)
        self.checks.append(c)
        return c

    def extend(self, other: "Certificate", prefix: str = ""):
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.statement, c.residual, c.tolerance, c.kind, dict(c.inputs)))
        if other.aborted and not self.aborted:
            self.aborted = other.aborted

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "title": self.title,
            "passed": self.passed,
            "aborted": self.aborted,
            "meta": _plain(self.meta),
            "notes": list(self.notes),
            "checks": [c.as_dict() for c in self.checks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        return cls(d["title"], [Check.from_dict(c) for c in d.get("checks", [])],
                   list(d.get("notes", [])), d.get("aborted"), dict(d.get("meta", {})))

    def summary(self) -> str:
        lines = [f"{self.title}: {'PASS' if self.passed else 'FAIL'} ({len(self.checks)} checks, {len(self.failed())} failed)"]
        if self.aborted:
            lines.append(f"  aborted: {self.aborted}")
        for c in self.checks:
            op = ">" if c.kind == "exceeds" else "<="
            lines.append(f"  [{'pass' if c.passed else 'FAIL'}] {c.name}: {c.residual:.3e} {op} {c.tolerance:g}")
        return "\n".join(lines)


def _plain(x: Any):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if hasattr(x, "item") and callable(x.item):
        return x.item()
    if isinstance(x, (str, int, float, bool)) or x is None:
        return x
    return str(x)
