"""Population parameters, test policies and the rate profiles used in the experiments."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np


class FixedLabel(str, Enum):
    """Constant estimate held for a person who is never tested."""

    HEALTHY = "always-healthy"
    INFECTED = "always-infected"


@dataclass(frozen=True)
class PersonParams:
    """Infection rate ``lam`` and recovery rate ``mu`` of one person."""

    lam: float
    mu: float

    def violations(self) -> list[str]:
        out = []
        if not (math.isfinite(self.lam) and self.lam > 0):
            out.append(f"lambda must be positive and finite, got {self.lam!r}")
        if not (math.isfinite(self.mu) and self.mu > 0):
            out.append(f"mu must be positive and finite, got {self.mu!r}")
        return out


@dataclass(frozen=True)
class PopulationSpec:
    people: tuple[PersonParams, ...]
    total_rate: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "people", tuple(self.people))

    @property
    def n(self) -> int:
        return len(self.people)

    @property
    def lam(self) -> np.ndarray:
        return np.array([p.lam for p in self.people], dtype=float)

    @property
    def mu(self) -> np.ndarray:
        return np.array([p.mu for p in self.people], dtype=float)

    def replace(self, **changes) -> "PopulationSpec":
        kw = dict(people=self.people, total_rate=self.total_rate, theta=self.theta)
        kw.update(changes)
        return PopulationSpec(**kw)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "total_rate": self.total_rate,
            "people": [{"lambda": p.lam, "mu": p.mu} for p in self.people],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PopulationSpec":
        people = tuple(PersonParams(float(p["lambda"]), float(p["mu"])) for p in doc["people"])
        return cls(people=people, total_rate=float(doc["total_rate"]), theta=float(doc["theta"]))

    @classmethod
    def from_rates(cls, lam: Sequence[float], mu: Sequence[float], total_rate: float,
                   theta: float) -> "PopulationSpec":
        if len(lam) != len(mu):
            raise ValueError(f"lambda and mu lengths differ: {len(lam)} != {len(mu)}")
        people = tuple(PersonParams(float(a), float(b)) for a, b in zip(lam, mu))
        return cls(people=people, total_rate=float(total_rate), theta=float(theta))


@dataclass(frozen=True)
class TestPolicy:
    """Per-person test rates.

    ``s[i]`` is the test rate while person i is marked healthy, ``c[i]`` while
    marked infected.  ``fixed_label[i]`` is the constant estimate used when both
    rates are zero and must be ``None`` otherwise.
    """

    __test__ = False  # not a pytest class

    s: tuple[float, ...]
    c: tuple[float, ...]
    fixed_label: tuple[FixedLabel | None, ...] = field(default=())

    def __post_init__(self):
        s = tuple(float(v) for v in self.s)
        c = tuple(float(v) for v in self.c)
        labels = tuple(self.fixed_label) if self.fixed_label else (None,) * len(s)
        labels = tuple(FixedLabel(x) if x is not None else None for x in labels)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "fixed_label", labels)

    @property
    def n(self) -> int:
        return len(self.s)

    @property
    def total(self) -> float:
        return math.fsum(self.s) + math.fsum(self.c)

    def violations(self, n: int | None = None) -> list[str]:
        out = []
        if len(self.c) != len(self.s) or len(self.fixed_label) != len(self.s):
            out.append("policy vectors s, c and fixed_label must have equal length")
            return out
        if n is not None and self.n != n:
            out.append(f"policy has {self.n} entries but population has {n}")
        for i, (s, c, lab) in enumerate(zip(self.s, self.c, self.fixed_label), start=1):
            if not (math.isfinite(s) and s >= 0):
                out.append(f"s[{i}] must be nonnegative and finite, got {s!r}")
            if not (math.isfinite(c) and c >= 0):
                out.append(f"c[{i}] must be nonnegative and finite, got {c!r}")
            untested = s == 0 and c == 0
            if untested and lab is None:
                out.append(f"person {i} is untested but has no fixed_label")
            if not untested and lab is not None:
                out.append(f"person {i} is tested but carries fixed_label {lab.value}")
        return out

    def to_dict(self) -> dict:
        return {
            "s": list(self.s),
            "c": list(self.c),
            "fixed_label": [None if x is None else x.value for x in self.fixed_label],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TestPolicy":
        return cls(s=doc["s"], c=doc["c"], fixed_label=doc.get("fixed_label") or ())

    @classmethod
    def uniform(cls, n: int, total: float) -> "TestPolicy":
        r = total / (2 * n)
        return cls(s=(r,) * n, c=(r,) * n)


def geometric_rate_profile(n: int, ratio: float, total: float) -> np.ndarray:
    """Rates ``a * ratio**i`` for i = 1..n, with ``a`` chosen so they sum to ``total``."""
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not (ratio > 0 and math.isfinite(ratio)):
        raise ValueError(f"ratio must be positive, got {ratio!r}")
    if not (total > 0 and math.isfinite(total)):
        raise ValueError(f"total must be positive, got {total!r}")
    # Normalize by the largest power so large n with ratio > 1 does not overflow.
    exps = np.arange(1, n + 1, dtype=float)
    logw = exps * math.log(ratio)
    with np.errstate(under="ignore"):
        w = np.exp(logw - logw.max())
        return total * w / math.fsum(w)


def uniform_rate_profile(n: int, total: float) -> np.ndarray:
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not (total > 0 and math.isfinite(total)):
        raise ValueError(f"total must be positive, got {total!r}")
    return np.full(n, total / n)


def validate_population(spec: PopulationSpec) -> list[str]:
    """Collect every invariant violation of ``spec``; an empty list means valid."""
    out = []
    if spec.n < 1:
        out.append("population must contain at least one person")
    for i, p in enumerate(spec.people, start=1):
        out.extend(f"person {i}: {msg}" for msg in p.violations())
    if not (math.isfinite(spec.total_rate) and spec.total_rate >= 0):
        out.append(f"total_rate must be nonnegative and finite, got {spec.total_rate!r}")
    if not (0.0 <= spec.theta <= 1.0):
        out.append(f"theta must lie in [0, 1], got {spec.theta!r}")
    return out


def paper_population(n: int = 10, total_rate: float = 16.0, theta: float = 0.5,
                     lambda_ratio: float = 0.9, mu_ratio: float = 1.1,
                     lambda_total: float = 6.0, mu_total: float = 4.0) -> PopulationSpec:
    """Geometric profiles used for the default experiments."""
    lam = geometric_rate_profile(n, lambda_ratio, lambda_total)
    mu = geometric_rate_profile(n, mu_ratio, mu_total)
    return PopulationSpec.from_rates(lam, mu, total_rate, theta)


def load_population(path: str | Path) -> PopulationSpec:
    with open(path) as fh:
        return PopulationSpec.from_dict(json.load(fh))


def dump_population(spec: PopulationSpec, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
