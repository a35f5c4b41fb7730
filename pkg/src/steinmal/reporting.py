"""Structured records for verified inequalities and Monte Carlo estimates,
plus deterministic CSV/JSON writers (full-precision floats, sorted keys, no
wall-clock fields, so identical runs produce identical bytes)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["BoundReport", "EstimatorResult", "write_csv", "write_json",
           "fmt_float"]


@dataclass
class BoundReport:
    """One verified inequality: lhs <= rhs + slack."""

    name: str
    lhs: float
    rhs: float
    slack: float = 0.0
    grid: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs + self.slack)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "margin": self.margin,
            "passed": self.passed,
            "grid": self.grid,
            "extras": self.extras,
        }


@dataclass
class EstimatorResult:
    """Monte Carlo estimate with its standard error and provenance echo."""

    estimate: float
    std_error: float
    n: int
    seed: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("estimator results need n >= 2")
        if not self.std_error >= 0.0:
            raise ValueError("standard error must be non-negative")

    def agrees_with(self, other: "EstimatorResult", n_se: float = 3.0) -> bool:
        combined = float(np.hypot(self.std_error, other.std_error))
        return abs(self.estimate - other.estimate) <= n_se * combined

    def as_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "n": self.n,
            "seed": self.seed,
            "config": self.config,
        }


def fmt_float(value) -> str:
    """Shortest round-trip decimal form; exact on re-parse."""
    return repr(float(value))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_float(v) if isinstance(v, (float, np.floating))
                             else str(v) for v in row])


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
