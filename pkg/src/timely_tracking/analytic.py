"""Closed-form long-run estimation error and an independent CTMC check.

For one person the joint process (x, xhat) is a four-state chain.  The renewal
argument over the marked-healthy / marked-infected intervals gives

    d1 = K c / (mu c + lam s + c s),   d2 = K s / (mu c + lam s + c s),

with ``K = mu lam / (mu + lam)``; ``ctmc_stationary`` solves the same chain by
brute linear algebra so the two can be compared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .model import FixedLabel, PersonParams, PopulationSpec, TestPolicy

# Joint (x, xhat) states in the order used by CtmcDistribution.pi
STATES = ((0, 0), (1, 0), (1, 1), (0, 1))


class DomainError(ValueError):
    """Closed form evaluated outside its domain (e.g. a zero test rate)."""


@dataclass(frozen=True)
class CycleStatistics:
    e_i1: float
    e_i2: float
    e_te1: float
    e_te2: float


@dataclass(frozen=True)
class ErrorBreakdown:
    d1: float
    d2: float
    d: float


@dataclass(frozen=True)
class CtmcDistribution:
    pi: tuple[float, float, float, float]

    def __getitem__(self, state: tuple[int, int]) -> float:
        return self.pi[STATES.index(state)]


class PopulationError(NamedTuple):
    delta: float
    people: list[ErrorBreakdown]
    delta1: float
    delta2: float


def _check_params(p: PersonParams) -> None:
    bad = p.violations()
    if bad:
        raise DomainError("; ".join(bad))


def _check_rates(s: float, c: float) -> None:
    if not (s > 0 and c > 0 and np.isfinite(s) and np.isfinite(c)):
        raise DomainError(
            f"test rates must be positive (s={s!r}, c={c!r}); "
            "untested people are handled by no_test_error"
        )


def expected_cycle_durations(p: PersonParams, s: float, c: float) -> CycleStatistics:
    """Mean lengths of the marked-healthy and marked-infected intervals and of the error time within each."""
    _check_params(p)
    _check_rates(s, c)
    return CycleStatistics(
        e_i1=1.0 / s + (s + p.mu) / (s * p.lam),
        e_i2=1.0 / c + (c + p.lam) / (c * p.mu),
        e_te1=1.0 / s,
        e_te2=1.0 / c,
    )


def error_rates(p: PersonParams, s: float, c: float) -> tuple[float, float]:
    """Long-run fractions of time with (x=1, xhat=0) and (x=0, xhat=1)."""
    _check_params(p)
    _check_rates(s, c)
    k = p.mu * p.lam / (p.mu + p.lam)
    den = p.mu * c + p.lam * s + c * s
    return k * c / den, k * s / den


def weighted_error(p: PersonParams, s: float, c: float, theta: float) -> float:
    _check_params(p)
    if s == 0 and c == 0:
        raise DomainError("s = c = 0: use no_test_error for untested people")
    _check_rates(s, c)
    k = p.mu * p.lam / (p.mu + p.lam)
    return k * (theta * c + (1 - theta) * s) / (p.mu * c + p.lam * s + c * s)


def no_test_error(p: PersonParams, theta: float) -> tuple[float, FixedLabel]:
    """Best constant estimate for an untested person; ties go to always-healthy."""
    _check_params(p)
    healthy = theta * p.lam / (p.mu + p.lam)
    infected = (1 - theta) * p.mu / (p.mu + p.lam)
    if healthy <= infected:
        return healthy, FixedLabel.HEALTHY
    return infected, FixedLabel.INFECTED


def fixed_label_breakdown(p: PersonParams, label: FixedLabel, theta: float) -> ErrorBreakdown:
    label = FixedLabel(label)
    if label is FixedLabel.HEALTHY:
        d1, d2 = p.lam / (p.lam + p.mu), 0.0
    else:
        d1, d2 = 0.0, p.mu / (p.lam + p.mu)
    return ErrorBreakdown(d1, d2, theta * d1 + (1 - theta) * d2)


def person_breakdown(p: PersonParams, s: float, c: float, theta: float,
                     label: FixedLabel | None = None) -> ErrorBreakdown:
    if s == 0 and c == 0:
        if label is None:
            raise DomainError("untested person requires a fixed label")
        return fixed_label_breakdown(p, label, theta)
    if s == 0 or c == 0:
        # One zero rate freezes the estimate after the first test that hits it;
        # the long-run behaviour is that of the corresponding fixed label.
        return fixed_label_breakdown(
            p, FixedLabel.INFECTED if c == 0 else FixedLabel.HEALTHY, theta)
    d1, d2 = error_rates(p, s, c)
    return ErrorBreakdown(d1, d2, theta * d1 + (1 - theta) * d2)


def population_error(spec: PopulationSpec, policy: TestPolicy) -> PopulationError:
    """Mean weighted error over the population plus its two components."""
    if policy.n != spec.n:
        raise ValueError(f"policy has {policy.n} entries but population has {spec.n}")
    people = [
        person_breakdown(p, s, c, spec.theta, lab)
        for p, s, c, lab in zip(spec.people, policy.s, policy.c, policy.fixed_label)
    ]
    n = spec.n
    return PopulationError(
        delta=sum(b.d for b in people) / n,
        people=people,
        delta1=sum(b.d1 for b in people) / n,
        delta2=sum(b.d2 for b in people) / n,
    )


def generator_matrix(p: PersonParams, s: float, c: float) -> np.ndarray:
    """Generator of the joint (x, xhat) chain over ``STATES``; tests with x == xhat are self-loops."""
    q = np.zeros((4, 4))
    q[0, 1] = p.lam  # (0,0) -> (1,0) infection
    q[1, 0] = p.mu   # (1,0) -> (0,0) recovery
    q[1, 2] = s      # (1,0) -> (1,1) test detects infection
    q[2, 3] = p.mu   # (1,1) -> (0,1) recovery
    q[3, 2] = p.lam  # (0,1) -> (1,1) reinfection
    q[3, 0] = c      # (0,1) -> (0,0) test detects recovery
    q[np.diag_indices(4)] = -q.sum(axis=1)
    return q


def ctmc_stationary(p: PersonParams, s: float, c: float,
                    label: FixedLabel | None = None) -> CtmcDistribution:
    """Stationary law of the joint chain by a direct linear solve.

    With ``s = c = 0`` the estimate never moves, so the chain lives on the two
    states sharing ``label``'s xhat value.
    """
    _check_params(p)
    if s < 0 or c < 0:
        raise DomainError(f"test rates must be nonnegative (s={s!r}, c={c!r})")
    if s == 0 and c == 0:
        if label is None:
            raise DomainError("s = c = 0 requires a fixed label")
        infected = p.lam / (p.lam + p.mu)
        if FixedLabel(label) is FixedLabel.HEALTHY:
            return CtmcDistribution((1 - infected, infected, 0.0, 0.0))
        return CtmcDistribution((0.0, 0.0, infected, 1 - infected))
    q = generator_matrix(p, s, c)
    # pi Q = 0 with one balance row replaced by normalization.
    a = q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(4)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"singular balance system for {p}, s={s}, c={c}") from exc
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return CtmcDistribution(tuple(float(v) for v in pi))


def weighted_error_grad(p: PersonParams, s: float, c: float, theta: float) -> tuple[float, float]:
    """Partial derivatives of ``weighted_error`` with respect to s and c."""
    k = p.mu * p.lam / (p.mu + p.lam)
    den2 = (p.mu * c + p.lam * s + s * c) ** 2
    ds = k * c * ((1 - theta) * p.mu - theta * (c + p.lam)) / den2
    dc = k * s * (theta * p.lam - (1 - theta) * (p.mu + s)) / den2
    return ds, dc


def per_person_no_test(spec: PopulationSpec) -> Sequence[tuple[float, FixedLabel]]:
    return [no_test_error(p, spec.theta) for p in spec.people]
