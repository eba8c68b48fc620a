"""Test-rate allocation under a total-rate budget.

The objective is nonconvex jointly in (s, c) but, for fixed c, each s_i has a
closed-form water-filling solution (and symmetrically for c given s).  The
solver alternates these updates over all 2n variables at once, zeroes any
pair whose objective no longer depends on one of its rates, and restarts from
many initial points.

Multiplier convention: ``waterfill`` works with the multiplier of the summed
objective sum_i Delta_i (the scale on which ``phi`` is compared).  Everything
else in this module (``SolverState.beta``, ``SolverReport.beta``,
``kkt_residual``) uses the multiplier of the mean Delta, i.e. that value / n.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .analytic import no_test_error, population_error
from .model import PopulationSpec, TestPolicy

log = logging.getLogger(__name__)

KKT_TOL = 1e-9
RATE_TOL = 1e-12
# a run stopped by the rate-change rule only counts as converged below this residual
CERTIFY_TOL = 1e-8
MAX_ITER = 10_000
MAX_HALVINGS = 30
DEFAULT_RESTARTS = 30


class PairAction(str, Enum):
    KEEP = "keep"
    ZERO_S = "zero-s-then-pair"
    ZERO_C = "zero-c-then-pair"


@dataclass
class SolverState:
    policy: TestPolicy
    beta: float
    active: np.ndarray  # bool, length 2n: s-variables then c-variables
    iteration: int
    converged: bool = False
    kkt_residual: float = math.inf


@dataclass
class SolverReport:
    policy: TestPolicy
    objective: float
    kkt_residual: float
    restarts: list[tuple[int, float]]
    converged: bool
    iterations_used: int
    beta: float
    baselines: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "beta": self.beta,
            "policy": self.policy.to_dict(),
            "restarts": [{"seed": s, "objective": d} for s, d in self.restarts],
            "baselines": dict(self.baselines),
        }


def phi(spec: PopulationSpec, policy: TestPolicy) -> tuple[np.ndarray, np.ndarray]:
    """Water-filling levels for the 2n variables.

    Returns ``(phi, defined)``; entry i < n belongs to s_i and needs c_i > 0,
    entry n + i belongs to c_i and needs s_i > 0.  Undefined entries are NaN.
    """
    lam, mu, th = spec.lam, spec.mu, spec.theta
    s = np.asarray(policy.s, dtype=float)
    c = np.asarray(policy.c, dtype=float)
    out = np.full(2 * spec.n, np.nan)
    ok_s = c > 0
    ok_c = s > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ps = lam / (mu + lam) / (mu * c) * (th * (c + lam) - (1 - th) * mu)
        pc = mu / (mu + lam) / (lam * s) * ((1 - th) * (s + mu) - th * lam)
    out[: spec.n] = np.where(ok_s, ps, np.nan)
    out[spec.n:] = np.where(ok_c, pc, np.nan)
    return out, np.concatenate([ok_s, ok_c])


def waterfill_coefficients(spec: PopulationSpec, policy: TestPolicy) -> np.ndarray:
    lam, mu = spec.lam, spec.mu
    s = np.asarray(policy.s, dtype=float)
    c = np.asarray(policy.c, dtype=float)
    return np.concatenate([mu * c / (lam + c), lam * s / (mu + s)])


@dataclass
class WaterfillResult:
    beta: float
    u: np.ndarray
    active: np.ndarray
    passes: int
    empty: bool = False


def waterfill(k, phi_vals, budget: float) -> WaterfillResult:
    """Allocate ``u_i = k_i (sqrt(phi_i / beta) - 1)^+`` with sum(u) = budget.

    Entries with non-positive, NaN or zero-coefficient levels never enter.
    The remaining set is pruned one index at a time (smallest level first,
    lowest index on ties) until every remaining level is at least beta.
    """
    k = np.asarray(k, dtype=float)
    p = np.asarray(phi_vals, dtype=float)
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget!r}")
    active = np.isfinite(p) & (p > 0) & (k > 0)
    passes = 0
    while active.any():
        passes += 1
        idx = np.flatnonzero(active)
        root_beta = math.fsum(k[idx] * np.sqrt(p[idx])) / (budget + math.fsum(k[idx]))
        # compare and allocate on the sqrt scale: squaring a tiny root_beta goes subnormal
        # argmin returns the first occurrence, i.e. the lowest index on ties
        j = idx[np.argmin(p[idx])]
        if math.sqrt(p[j]) < root_beta:
            active[j] = False
            continue
        u = np.zeros_like(p)
        u[idx] = k[idx] * np.maximum(np.sqrt(p[idx]) / root_beta - 1.0, 0.0)
        return WaterfillResult(root_beta * root_beta, u, active, passes)
    return WaterfillResult(0.0, np.zeros_like(p), active, passes, empty=True)


def zero_pair_check(lam: float, mu: float, theta: float, s: float, c: float) -> PairAction:
    """Decide whether the pair (s, c) must be zeroed.

    If the objective increases in s it is optimal to drop s, after which it no
    longer depends on c either; symmetrically for c.
    """
    if theta * (c + lam) < (1 - theta) * mu:
        return PairAction.ZERO_S
    if (1 - theta) * (s + mu) < theta * lam:
        return PairAction.ZERO_C
    return PairAction.KEEP


def _gradients(spec: PopulationSpec, s: np.ndarray, c: np.ndarray):
    lam, mu, th = spec.lam, spec.mu, spec.theta
    k = mu * lam / (mu + lam)
    den2 = (mu * c + lam * s + s * c) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ds = k * c * ((1 - th) * mu - th * (c + lam)) / den2
        dc = k * s * (th * lam - (1 - th) * (mu + s)) / den2
    return ds, dc


def _origin_gain(lam: float, mu: float, theta: float, grid: int = 2001) -> float:
    """Largest first-order decrease of Delta_i per unit of test rate leaving s = c = 0.

    Only meaningful when both untested labels tie, where Delta_i is continuous
    at the origin; otherwise the zero-pair rule applies.
    """
    a = np.linspace(0.0, 1.0, grid)[1:-1]
    b = 1.0 - a
    k = mu * lam / (mu + lam)
    return float(np.max(k * (theta * b + (1 - theta) * a) * a * b / (mu * b + lam * a) ** 2))


def kkt_residual(spec: PopulationSpec, policy: TestPolicy, beta: float) -> float:
    """Max-norm violation of the KKT conditions of min Delta s.t. sum(s + c) <= C.

    ``beta`` multiplies the budget constraint of the mean objective.  Positive
    rates must satisfy grad/n + beta = 0; a zero rate whose partner is positive
    needs grad/n + beta >= 0.  Untested pairs must satisfy the zero-pair rule
    at the origin.
    """
    n = spec.n
    s = np.asarray(policy.s, dtype=float)
    c = np.asarray(policy.c, dtype=float)
    lam, mu, th = spec.lam, spec.mu, spec.theta
    worst = max(0.0, -beta)
    ds, dc = _gradients(spec, s, c)
    for i in range(n):
        if s[i] == 0 and c[i] == 0:
            if zero_pair_check(lam[i], mu[i], th, 0.0, 0.0) is PairAction.KEEP:
                worst = max(worst, _origin_gain(lam[i], mu[i], th) / n - beta)
            continue
        for val, g in ((s[i], ds[i]), (c[i], dc[i])):
            stat = g / n + beta
            worst = max(worst, abs(stat) if val > 0 else -stat)
    if beta > 0:
        worst = max(worst, beta * abs(spec.total_rate - (s.sum() + c.sum())))
    return float(worst)


def _label_policy(spec: PopulationSpec, s: np.ndarray, c: np.ndarray) -> TestPolicy:
    labels = []
    for p, si, ci in zip(spec.people, s, c):
        labels.append(no_test_error(p, spec.theta)[1] if si == 0 and ci == 0 else None)
    return TestPolicy(s=tuple(s), c=tuple(c), fixed_label=tuple(labels))


def _objective(spec: PopulationSpec, s: np.ndarray, c: np.ndarray) -> float:
    return population_error(spec, _label_policy(spec, s, c)).delta


def alternate_minimize(spec: PopulationSpec, init: TestPolicy, tol: float = KKT_TOL,
                       max_iter: int = MAX_ITER) -> SolverState:
    """Alternate closed-form s and c updates from ``init`` until KKT holds.

    Each iteration zeroes pairs flagged by ``zero_pair_check`` (sticky for the
    rest of the run), recomputes phi from the current rates, water-fills the
    budget over the remaining variables and takes the result as the new rates.

    The simultaneous update can overshoot and oscillate with growing amplitude
    (seen with n=1).  A full step that would raise Delta is therefore halved
    toward the water-filling point, up to ``MAX_HALVINGS`` times; both ends lie
    on the budget line and fixed points are unchanged.
    """
    n = spec.n
    budget = spec.total_rate
    s = np.asarray(init.s, dtype=float).copy()
    c = np.asarray(init.c, dtype=float).copy()
    dead = (s <= 0) | (c <= 0)
    lam, mu, th = spec.lam, spec.mu, spec.theta
    beta = 0.0
    best = None
    it = 0
    for it in range(1, max_iter + 1):
        for i in np.flatnonzero(~dead):
            if zero_pair_check(lam[i], mu[i], th, s[i], c[i]) is not PairAction.KEEP:
                dead[i] = True
        s[dead] = 0.0
        c[dead] = 0.0
        if dead.all() or budget <= 0:
            beta = 0.0
            break
        cur = TestPolicy(s=tuple(s), c=tuple(c))
        levels, _ = phi(spec, cur)
        k = waterfill_coefficients(spec, cur)
        k[np.concatenate([dead, dead])] = 0.0
        wf = waterfill(k, levels, budget)
        if wf.empty:
            dead[:] = True
            s[:] = 0.0
            c[:] = 0.0
            beta = 0.0
            break
        u_s, u_c = wf.u[:n], wf.u[n:]
        obj_cur = _objective(spec, s, c)
        if best is None:
            start = _label_policy(spec, s, c)
            best = (obj_cur, start, wf.beta / n, kkt_residual(spec, start, wf.beta / n), it)
        step = 1.0
        for _ in range(MAX_HALVINGS):
            s_new, c_new = s + step * (u_s - s), c + step * (u_c - c)
            if _objective(spec, s_new, c_new) <= obj_cur:
                break
            step *= 0.5
        else:
            s_new, c_new = u_s, u_c  # no descent found along the segment; take the plain step
        change = max(np.max(np.abs(s_new - s)), np.max(np.abs(c_new - c)))
        s, c = s_new, c_new
        dead |= (s <= 0) | (c <= 0)
        s[dead] = 0.0
        c[dead] = 0.0
        beta = wf.beta / n
        policy = _label_policy(spec, s, c)
        res = kkt_residual(spec, policy, beta)
        obj = population_error(spec, policy).delta
        if best is None or obj < best[0]:
            best = (obj, policy, beta, res, it)
        if res < tol or change < RATE_TOL:
            return SolverState(policy, beta, np.concatenate([~dead, ~dead]), it,
                               converged=res < max(tol, CERTIFY_TOL), kkt_residual=res)
    else:
        log.debug("alternating minimization hit max_iter=%d", max_iter)
        _, policy, beta, res, _ = best
        active = np.concatenate([np.asarray(policy.s) > 0, np.asarray(policy.c) > 0])
        return SolverState(policy, beta, active, max_iter, converged=False, kkt_residual=res)
    # every pair zeroed: the no-test policy, which is its own certificate
    policy = _label_policy(spec, s, c)
    res = kkt_residual(spec, policy, beta)
    return SolverState(policy, beta, np.zeros(2 * n, dtype=bool), it,
                       converged=res < tol, kkt_residual=res)


def random_init(spec: PopulationSpec, seed: int) -> TestPolicy:
    """Uniform draw from the scaled simplex sum(s + c) = C."""
    if spec.total_rate <= 0:
        raise ValueError("random_init needs a positive total rate")
    rng = np.random.default_rng(seed)
    x = rng.standard_exponential(2 * spec.n)
    x *= spec.total_rate / x.sum()
    return TestPolicy(s=tuple(x[: spec.n]), c=tuple(x[spec.n:]))


def no_test_policy(spec: PopulationSpec) -> TestPolicy:
    labels = tuple(no_test_error(p, spec.theta)[1] for p in spec.people)
    return TestPolicy(s=(0.0,) * spec.n, c=(0.0,) * spec.n, fixed_label=labels)


def _neighbours(spec: PopulationSpec, policy: TestPolicy, revive_share: float = 0.05):
    """Initial points that differ from ``policy`` by one pair switched on or off."""
    s = np.asarray(policy.s, dtype=float)
    c = np.asarray(policy.c, dtype=float)
    budget = spec.total_rate
    for i in range(spec.n):
        s2, c2 = s.copy(), c.copy()
        if s[i] > 0 and c[i] > 0:
            s2[i] = c2[i] = 0.0
            rest = s2.sum() + c2.sum()
            if rest <= 0:
                continue
            s2 *= budget / rest
            c2 *= budget / rest
        else:
            used = s2.sum() + c2.sum()
            scale = (1 - revive_share) * budget / used if used > 0 else 0.0
            s2 *= scale
            c2 *= scale
            share = revive_share if used > 0 else 1.0
            s2[i] = c2[i] = share * budget / 2
        yield TestPolicy(s=tuple(s2), c=tuple(c2))


@dataclass
class _Candidate:
    objective: float
    tag: int
    state: SolverState


def solve(spec: PopulationSpec, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
          tol: float = KKT_TOL, max_iter: int = MAX_ITER, init: TestPolicy | None = None,
          refine: bool = True) -> SolverReport:
    """Multi-start alternating minimization; returns the best policy found.

    Starting points: the uniform split, ``init`` if given, and ``restarts``
    random simplex points (seeds ``seed``, ``seed + 1``, ...).  The untested
    baseline is always a candidate.  With ``refine`` the incumbent is then
    re-solved from every neighbour obtained by switching one pair on or off,
    as long as that improves the objective.
    """
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    n = spec.n
    baseline = no_test_policy(spec)
    baseline_obj = population_error(spec, baseline).delta
    uniform = TestPolicy.uniform(n, spec.total_rate) if spec.total_rate > 0 else baseline
    uniform_obj = population_error(spec, uniform).delta if spec.total_rate > 0 else baseline_obj
    baselines = {"no_test": baseline_obj, "uniform": uniform_obj}

    if spec.total_rate <= 0:
        res = kkt_residual(spec, baseline, 0.0)
        return SolverReport(baseline, baseline_obj, res, [], res < tol, 0, 0.0, baselines)

    candidates: list[_Candidate] = []
    iterations = 0

    def run(start: TestPolicy, tag: int) -> _Candidate:
        nonlocal iterations
        state = alternate_minimize(spec, start, tol=tol, max_iter=max_iter)
        iterations += state.iteration
        cand = _Candidate(population_error(spec, state.policy).delta, tag, state)
        candidates.append(cand)
        return cand

    # negative tags mark deterministic starts so random seeds keep their own numbers
    run(uniform, -1)
    if init is not None:
        run(init, -2)
    restart_trace = []
    for r in range(restarts):
        cand = run(random_init(spec, seed + r), seed + r)
        restart_trace.append((seed + r, cand.objective))

    def key(cd: _Candidate):
        return (cd.objective, not cd.state.converged, cd.tag)

    best = min(candidates, key=key)
    if refine:
        tag = -3
        while True:
            improved = False
            for start in _neighbours(spec, best.state.policy):
                cand = run(start, tag)
                tag -= 1
                if cand.objective < best.objective - 1e-15 and (cand.state.converged
                                                                or not best.state.converged):
                    best = cand
                    improved = True
            if not improved:
                break

    state = best.state
    if baseline_obj < best.objective:
        res = kkt_residual(spec, baseline, 0.0)
        return SolverReport(baseline, baseline_obj, res, restart_trace, res < tol,
                            iterations, 0.0, baselines)
    return SolverReport(
        policy=state.policy,
        objective=best.objective,
        kkt_residual=state.kkt_residual,
        restarts=restart_trace,
        converged=state.converged,
        iterations_used=iterations,
        beta=state.beta,
        baselines=baselines,
    )
