"""Experiment reports and per-trial trace logs."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .selector import BatchSelection

TRACE_CAP = 10_000


@dataclass
class Estimate:
    name: str
    value: float
    stderr: float | None = None
    exploratory: bool = False


@dataclass
class GoldenCheck:
    description: str
    expected: Any
    actual: Any
    passed: bool


@dataclass
class Gate:
    description: str
    value: float
    tolerance: float
    passed: bool


def frequency_stderr(p_hat: float, n: int) -> float:
    return math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n)


def _clean(x: Any) -> Any:
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    return x


@dataclass
class ExperimentReport:
    name: str
    seed: int
    trials: int
    config: dict = field(default_factory=dict)
    estimates: list[Estimate] = field(default_factory=list)
    golden_checks: list[GoldenCheck] = field(default_factory=list)
    gates: list[Gate] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def estimate(self, name: str, value: float, stderr: float | None = None, *,
                 exploratory: bool = False) -> None:
        self.estimates.append(Estimate(name, float(value), None if stderr is None else float(stderr),
                                       exploratory))

    def frequency(self, name: str, count: int, n: int) -> float:
        p_hat = count / n
        self.estimate(name, p_hat, frequency_stderr(p_hat, n))
        return p_hat

    def golden(self, description: str, expected: Any, actual: Any, passed: bool | None = None) -> bool:
        ok = bool(expected == actual) if passed is None else bool(passed)
        self.golden_checks.append(GoldenCheck(description, _clean(expected), _clean(actual), ok))
        return ok

    def gate(self, description: str, value: float, tolerance: float) -> bool:
        ok = bool(value < tolerance)
        self.gates.append(Gate(description, float(value), float(tolerance), ok))
        return ok

    def get(self, name: str) -> Estimate:
        for e in self.estimates:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def verdict(self) -> str:
        ok = all(g.passed for g in self.golden_checks) and all(g.passed for g in self.gates)
        return "pass" if ok else "fail"

    def to_dict(self) -> dict:
        return _clean({
            "name": self.name,
            "seed": self.seed,
            "trials": self.trials,
            "verdict": self.verdict,
            "estimates": [vars(e) for e in self.estimates],
            "golden_checks": [vars(g) for g in self.golden_checks],
            "gates": [vars(g) for g in self.gates],
            "notes": list(self.notes),
            "config": self.config,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "name", "value", "stderr", "expected", "tolerance", "passed", "exploratory"])
        for e in self.estimates:
            w.writerow(["estimate", e.name, repr(e.value), "" if e.stderr is None else repr(e.stderr),
                        "", "", "", int(e.exploratory)])
        for g in self.gates:
            w.writerow(["gate", g.description, repr(g.value), "", "", repr(g.tolerance), int(g.passed), 0])
        for g in self.golden_checks:
            w.writerow(["golden", g.description, json.dumps(g.actual, ensure_ascii=False), "",
                        json.dumps(g.expected, ensure_ascii=False), "", int(g.passed), 0])
        return buf.getvalue()


class TraceLog:
    """Collects per-trial selection traces up to a fixed number of lines."""

    def __init__(self, cap: int = TRACE_CAP):
        self.cap = cap
        self.lines: list[dict] = []

    @property
    def full(self) -> bool:
        return len(self.lines) >= self.cap

    def add(self, context: str, batch: BatchSelection, labels: Sequence[str], start: int = 0) -> None:
        for i in range(min(len(batch), self.cap - len(self.lines))):
            row = {"context": context, "trial": start + i}
            row.update(batch.trace(i, labels).to_dict())
            self.lines.append(row)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(_clean(r), sort_keys=True, ensure_ascii=False) + "\n" for r in self.lines)
