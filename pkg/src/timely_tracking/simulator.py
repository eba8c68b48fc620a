"""Event-driven Monte Carlo of the joint (x, xhat) process of each person.

Every enabled transition gets a fresh exponential clock after each event
(exact because all clocks are memoryless); the earliest one fires.  Time spent
in each joint state is accumulated per batch so batch-means error bars come
out of a single long path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from .model import FixedLabel, PersonParams, PopulationSpec, TestPolicy

N_BATCHES = 20
DEFAULT_HORIZON = 1e5
_CHUNK = 1 << 16

# joint-state columns of the occupancy array: 0 (0,0), 1 (1,0), 2 (1,1), 3 (0,1)


@dataclass
class SimState:
    x: int
    xhat: int
    t: float
    acc1: float
    acc2: float


@dataclass(frozen=True)
class SimReport:
    d1_hat: float
    d2_hat: float
    d_hat: float
    horizon: float
    events: int
    stderr1: float
    stderr2: float
    occupancy: tuple[float, float, float, float]
    final: SimState

    def to_dict(self) -> dict:
        return {
            "d1_hat": self.d1_hat,
            "d2_hat": self.d2_hat,
            "d_hat": self.d_hat,
            "horizon": self.horizon,
            "events": self.events,
            "stderr1": self.stderr1,
            "stderr2": self.stderr2,
        }


class PopulationSimulation(NamedTuple):
    people: list[SimReport]
    delta_hat: float
    delta1_hat: float
    delta2_hat: float
    stderr: float


@numba.njit(cache=True)
def _advance(state, t, acc, batch_edges, horizon, lam, mu, s, c, expo, events, trace):
    """Consume exponential variates from ``expo`` until they run out or the horizon is hit.

    ``state`` is [x, xhat]; ``acc`` is (n_batches, 4) occupancy time.  Returns
    (t, n_used, finished, events).  Each event uses two variates: one for the
    status clock (infection or recovery), one for the test clock.
    """
    n_batches = acc.shape[0]
    width = horizon / n_batches
    i = 0
    n = expo.shape[0]
    while i + 1 < n:
        x = state[0]
        xhat = state[1]
        status_rate = lam if x == 0 else mu
        test_rate = s if xhat == 0 else c
        dt = expo[i] / status_rate
        test_fires = False
        if test_rate > 0.0:
            dt_test = expo[i + 1] / test_rate
            if dt_test < dt:
                dt = dt_test
                test_fires = True
        i += 2
        t_next = t + dt
        done = t_next >= horizon
        if done:
            t_next = horizon
        # split [t, t_next) over batch boundaries
        k = 0 if x == 0 and xhat == 0 else (1 if xhat == 0 else (2 if x == 1 else 3))
        b = int(t / width)
        if b > n_batches - 1:
            b = n_batches - 1
        while b < n_batches - 1 and batch_edges[b + 1] <= t:
            b += 1
        while b > 0 and batch_edges[b] > t:
            b -= 1
        cur = t
        while cur < t_next:
            edge = t_next
            if b < n_batches - 1 and batch_edges[b + 1] < t_next:
                edge = batch_edges[b + 1]
            acc[b, k] += edge - cur
            cur = edge
            b += 1
        t = t_next
        if done:
            return t, i, True, events
        events += 1
        if test_fires:
            state[1] = x
        else:
            state[0] = 1 - x
        if trace.shape[0] > 0 and events <= trace.shape[0]:
            trace[events - 1, 0] = t
            trace[events - 1, 1] = state[0]
            trace[events - 1, 2] = state[1]
    return t, i, False, events


def _run(lam, mu, s, c, horizon, rng, xhat_frozen=None, trace_len=0):
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    acc = np.zeros((N_BATCHES, 4))
    edges = np.linspace(0.0, horizon, N_BATCHES + 1)
    state = np.zeros(2, dtype=np.int64)
    if xhat_frozen is not None:
        state[1] = xhat_frozen
        s = c = 0.0
    trace = np.zeros((trace_len, 3))
    t = 0.0
    events = 0
    # expected events ~ horizon * max rate; draw in chunks to bound memory
    while True:
        expo = rng.standard_exponential(_CHUNK)
        t, _, finished, events = _advance(state, t, acc, edges, float(horizon), float(lam),
                                          float(mu), float(s), float(c), expo, events, trace)
        if finished:
            break
    occ = acc.sum(axis=0)
    final = SimState(int(state[0]), int(state[1]), float(t), float(occ[1]), float(occ[3]))
    return acc, events, trace, final


def _report(acc: np.ndarray, events: int, horizon: float, theta: float,
            final: SimState) -> SimReport:
    width = horizon / N_BATCHES
    b1 = acc[:, 1] / width
    b2 = acc[:, 3] / width
    occ = acc.sum(axis=0)
    d1 = float(occ[1] / horizon)
    d2 = float(occ[3] / horizon)
    se1 = float(b1.std(ddof=1) / np.sqrt(N_BATCHES))
    se2 = float(b2.std(ddof=1) / np.sqrt(N_BATCHES))
    return SimReport(
        d1_hat=d1,
        d2_hat=d2,
        d_hat=theta * d1 + (1 - theta) * d2,
        horizon=float(horizon),
        events=int(events),
        stderr1=se1,
        stderr2=se2,
        occupancy=tuple(float(v) for v in occ),
        final=final,
    )


def _rng(seed, index=None) -> np.random.Generator:
    if index is None:
        return np.random.default_rng(np.random.SeedSequence(seed))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def simulate_person(p: PersonParams, s: float, c: float, theta: float,
                    horizon: float = DEFAULT_HORIZON, seed: int = 0,
                    label: FixedLabel | None = None, *, rng: np.random.Generator | None = None
                    ) -> SimReport:
    """Simulate one person from x = xhat = 0 up to ``horizon``.

    With ``s = c = 0`` the estimate is frozen at ``label`` (default
    always-healthy, i.e. the initial xhat).
    """
    bad = p.violations()
    if bad:
        raise ValueError("; ".join(bad))
    if s < 0 or c < 0:
        raise ValueError(f"test rates must be nonnegative (s={s!r}, c={c!r})")
    frozen = None
    if s == 0 and c == 0:
        frozen = 1 if label is not None and FixedLabel(label) is FixedLabel.INFECTED else 0
    acc, events, _, final = _run(p.lam, p.mu, s, c, horizon, rng or _rng(seed), frozen)
    return _report(acc, events, horizon, theta, final)


def sample_path(p: PersonParams, s: float, c: float, horizon: float, seed: int = 0,
                max_events: int = 10_000) -> np.ndarray:
    """First ``max_events`` events as rows (time, x, xhat); for inspection and tests."""
    _, events, trace, _ = _run(p.lam, p.mu, s, c, horizon, _rng(seed), None, max_events)
    return trace[: min(events, max_events)]


def simulate_population(spec: PopulationSpec, policy: TestPolicy,
                        horizon: float = DEFAULT_HORIZON, seed: int = 0
                        ) -> PopulationSimulation:
    """Independent per-person runs, person i seeded from (seed, i)."""
    if policy.n != spec.n:
        raise ValueError(f"policy has {policy.n} entries but population has {spec.n}")
    reports = []
    for i, (p, s, c, lab) in enumerate(zip(spec.people, policy.s, policy.c, policy.fixed_label)):
        reports.append(simulate_person(p, s, c, spec.theta, horizon, label=lab, rng=_rng(seed, i)))
    n = spec.n
    d = [r.d_hat for r in reports]
    # independent persons: variance of the mean adds up
    var = sum((spec.theta * r.stderr1) ** 2 + ((1 - spec.theta) * r.stderr2) ** 2
              for r in reports)
    return PopulationSimulation(
        people=reports,
        delta_hat=sum(d) / n,
        delta1_hat=sum(r.d1_hat for r in reports) / n,
        delta2_hat=sum(r.d2_hat for r in reports) / n,
        stderr=float(np.sqrt(var) / n),
    )
