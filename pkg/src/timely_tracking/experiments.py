"""Scenario configs and the four sweep experiments (per-person allocation, budget, population size, theta)."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .analytic import no_test_error, person_breakdown, population_error
from .model import (
    PopulationSpec,
    TestPolicy,
    geometric_rate_profile,
    uniform_rate_profile,
    validate_population,
)
from .optimizer import DEFAULT_RESTARTS, KKT_TOL, MAX_ITER, SolverReport, solve
from .simulator import DEFAULT_HORIZON

FIG4_COLUMNS = ("i", "lambda", "mu", "s", "c", "delta_opt", "delta_uniform", "delta_notest")
FIG5_COLUMNS = ("C", "delta")
FIG6_COLUMNS = ("n", "delta_uniform_rates", "delta_geometric_rates")
FIG7_COLUMNS = ("theta", "delta", "delta1", "delta2", "sum_s", "sum_c")

DEFAULT_C_VALUES = tuple(float(c) for c in range(5, 21))
DEFAULT_N_VALUES = tuple(range(2, 31))
DEFAULT_THETA_VALUES = tuple(round(0.2 + 0.05 * k, 10) for k in range(11))


class ConfigError(ValueError):
    """Invalid scenario configuration."""


@dataclass(frozen=True)
class ProfileDirective:
    kind: str = "geometric"  # or "uniform"
    n: int = 10
    lambda_ratio: float = 0.9
    mu_ratio: float = 1.1
    lambda_total: float = 6.0
    mu_total: float = 4.0

    def rates(self, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        n = self.n if n is None else n
        if self.kind == "geometric":
            return (geometric_rate_profile(n, self.lambda_ratio, self.lambda_total),
                    geometric_rate_profile(n, self.mu_ratio, self.mu_total))
        if self.kind == "uniform":
            return (uniform_rate_profile(n, self.lambda_total),
                    uniform_rate_profile(n, self.mu_total))
        raise ConfigError(f"unknown profile kind {self.kind!r}")


@dataclass(frozen=True)
class SolverOptions:
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0
    tol: float = KKT_TOL
    max_iter: int = MAX_ITER


@dataclass(frozen=True)
class SimOptions:
    horizon: float = DEFAULT_HORIZON
    enabled: bool = False


@dataclass(frozen=True)
class Sweep:
    param: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.param not in ("C", "n", "theta"):
            raise ConfigError(f"sweep param must be one of C, n, theta; got {self.param!r}")
        vals = tuple(self.values)
        if not vals:
            raise ConfigError("sweep values must be non-empty")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("sweep values must be strictly increasing")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class ScenarioConfig:
    """One experiment's inputs; exactly one of ``population`` / ``profile`` is set."""

    population: PopulationSpec | None = None
    profile: ProfileDirective | None = None
    total_rate: float = 16.0
    theta: float = 0.5
    policy: TestPolicy | None = None
    sweep: Sweep | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    sim: SimOptions = field(default_factory=SimOptions)
    out: str | None = None
    fmt: str = "csv"

    def __post_init__(self):
        if (self.population is None) == (self.profile is None):
            raise ConfigError("config needs exactly one population source: 'people' or 'profile'")

    def build(self, n: int | None = None, total_rate: float | None = None,
              theta: float | None = None) -> PopulationSpec:
        """Population for this scenario, optionally overriding n, C or theta."""
        C = self.total_rate if total_rate is None else total_rate
        th = self.theta if theta is None else theta
        if self.population is not None:
            if n is not None and n != self.population.n:
                raise ConfigError("cannot resize an inline population; use a profile directive")
            return self.population.replace(total_rate=float(C), theta=float(th))
        lam, mu = self.profile.rates(n)
        return PopulationSpec.from_rates(lam, mu, C, th)

    def solve(self, spec: PopulationSpec, init: TestPolicy | None = None) -> SolverReport:
        o = self.solver
        return solve(spec, restarts=o.restarts, seed=o.seed, tol=o.tol, max_iter=o.max_iter,
                     init=init)

    @classmethod
    def paper_default(cls, **changes) -> "ScenarioConfig":
        kw: dict[str, Any] = dict(profile=ProfileDirective())
        kw.update(changes)
        return cls(**kw)

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        try:
            population = profile = None
            if "people" in doc and "profile" in doc:
                raise ConfigError("config has both 'people' and 'profile'")
            if "people" in doc:
                population = PopulationSpec.from_dict(
                    {"people": doc["people"], "total_rate": doc.get("total_rate", 16.0),
                     "theta": doc.get("theta", 0.5)})
            elif "profile" in doc:
                profile = ProfileDirective(**doc["profile"])
            policy = TestPolicy.from_dict(doc["policy"]) if doc.get("policy") else None
            sweep = None
            if doc.get("sweep"):
                sweep = Sweep(doc["sweep"]["param"], tuple(doc["sweep"]["values"]))
            output = doc.get("output", {})
            cfg = cls(
                population=population,
                profile=profile,
                total_rate=float(doc.get("total_rate", 16.0)),
                theta=float(doc.get("theta", 0.5)),
                policy=policy,
                sweep=sweep,
                solver=SolverOptions(**doc.get("solver", {})),
                sim=SimOptions(**doc.get("sim", {})),
                out=output.get("path"),
                fmt=output.get("format", "csv"),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        problems = validate_population(cfg.build())
        if policy is not None:
            problems += policy.violations(cfg.build().n)
        if problems:
            raise ConfigError("; ".join(problems))
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(doc)


@dataclass
class ExperimentResult:
    name: str
    columns: tuple[str, ...]
    rows: list[dict[str, Any]]
    reports: list[SolverReport] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(self.columns), lineterminator="\n",
                           extrasaction="ignore")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: _fmt(row[k]) for k in self.columns})
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "experiment": self.name,
            "columns": list(self.columns),
            "rows": self.rows,
            "reports": [r.to_dict() for r in self.reports],
        }
        doc.update(self.extra)
        return json.dumps(doc, indent=2, default=_json_default) + "\n"

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ConfigError(f"unknown format {fmt!r}")


def _fmt(v):
    # repr of a float is the shortest string that parses back to the same value
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def read_csv(text: str) -> list[dict[str, float]]:
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        rows.append({k: float(v) for k, v in row.items()})
    return rows


def write_output(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def run_fig4(config: ScenarioConfig | None = None) -> ExperimentResult:
    """Optimal, uniform and untested error per person for one population."""
    config = config or ScenarioConfig.paper_default()
    spec = config.build()
    report = config.solve(spec, init=config.policy)
    opt = population_error(spec, report.policy)
    uni = population_error(spec, TestPolicy.uniform(spec.n, spec.total_rate))
    rows = []
    for i, (p, s, c, b_opt, b_uni) in enumerate(
            zip(spec.people, report.policy.s, report.policy.c, opt.people, uni.people), start=1):
        rows.append({
            "i": i, "lambda": p.lam, "mu": p.mu, "s": s, "c": c,
            "delta_opt": b_opt.d, "delta_uniform": b_uni.d,
            "delta_notest": no_test_error(p, spec.theta)[0],
        })
    return ExperimentResult("fig4", FIG4_COLUMNS, rows, [report], extra={
        "delta_opt": opt.delta, "delta_uniform": uni.delta,
        "delta_notest": report.baselines["no_test"],
        "fixed_label": [None if x is None else x.value for x in report.policy.fixed_label],
    })


def _sweep_values(config: ScenarioConfig, param: str, default: Sequence[float]):
    if config.sweep is None:
        return tuple(default)
    if config.sweep.param != param:
        raise ConfigError(f"this experiment sweeps {param!r}, config sweeps {config.sweep.param!r}")
    return config.sweep.values


def run_fig5(config: ScenarioConfig | None = None) -> ExperimentResult:
    """Optimized error against the total test rate C."""
    config = config or ScenarioConfig.paper_default()
    rows, reports = [], []
    for C in _sweep_values(config, "C", DEFAULT_C_VALUES):
        rep = config.solve(config.build(total_rate=C))
        reports.append(rep)
        rows.append({"C": float(C), "delta": rep.objective})
    return ExperimentResult("fig5", FIG5_COLUMNS, rows, reports)


def run_fig6(config: ScenarioConfig | None = None) -> ExperimentResult:
    """Optimized error against n for uniform and geometric rate profiles with fixed totals."""
    config = config or ScenarioConfig.paper_default()
    if config.profile is None:
        raise ConfigError("the population-size sweep needs a profile directive")
    prof = config.profile
    uniform = ScenarioConfig(profile=ProfileDirective("uniform", prof.n, prof.lambda_ratio,
                                                      prof.mu_ratio, prof.lambda_total,
                                                      prof.mu_total),
                             total_rate=config.total_rate, theta=config.theta,
                             solver=config.solver)
    geometric = ScenarioConfig(profile=ProfileDirective("geometric", prof.n, prof.lambda_ratio,
                                                        prof.mu_ratio, prof.lambda_total,
                                                        prof.mu_total),
                               total_rate=config.total_rate, theta=config.theta,
                               solver=config.solver)
    rows, reports = [], []
    for n in _sweep_values(config, "n", DEFAULT_N_VALUES):
        n = int(n)
        ru = uniform.solve(uniform.build(n=n))
        rg = geometric.solve(geometric.build(n=n))
        reports += [ru, rg]
        rows.append({"n": n, "delta_uniform_rates": ru.objective,
                     "delta_geometric_rates": rg.objective})
    return ExperimentResult("fig6", FIG6_COLUMNS, rows, reports)


def run_fig7(config: ScenarioConfig | None = None) -> ExperimentResult:
    """Optimized error, its two components and the total s / c rates against theta."""
    config = config or ScenarioConfig.paper_default()
    rows, reports = [], []
    for th in _sweep_values(config, "theta", DEFAULT_THETA_VALUES):
        spec = config.build(theta=th)
        rep = config.solve(spec)
        err = population_error(spec, rep.policy)
        reports.append(rep)
        rows.append({
            "theta": float(th), "delta": err.delta, "delta1": err.delta1, "delta2": err.delta2,
            "sum_s": math.fsum(rep.policy.s), "sum_c": math.fsum(rep.policy.c),
        })
    return ExperimentResult("fig7", FIG7_COLUMNS, rows, reports)


EVAL_COLUMNS = ("i", "lambda", "mu", "s", "c", "fixed_label", "delta1", "delta2", "delta")


def evaluate(spec: PopulationSpec, policy: TestPolicy) -> ExperimentResult:
    err = population_error(spec, policy)
    rows = []
    for i, (p, s, c, lab, b) in enumerate(zip(spec.people, policy.s, policy.c,
                                              policy.fixed_label, err.people), start=1):
        rows.append({"i": i, "lambda": p.lam, "mu": p.mu, "s": s, "c": c,
                     "fixed_label": "" if lab is None else lab.value,
                     "delta1": b.d1, "delta2": b.d2, "delta": b.d})
    return ExperimentResult("eval", EVAL_COLUMNS, rows, extra={
        "delta": err.delta, "delta1": err.delta1, "delta2": err.delta2,
        "population": spec.to_dict(), "policy": policy.to_dict()})


def solve_table(spec: PopulationSpec, report: SolverReport) -> ExperimentResult:
    res = evaluate(spec, report.policy)
    res.name = "solve"
    res.reports = [report]
    return res


SIM_COLUMNS = ("i", "s", "c", "delta1", "delta2", "d1_hat", "d2_hat", "stderr1", "stderr2")


def simulate_table(spec: PopulationSpec, policy: TestPolicy, horizon: float,
                   seed: int) -> ExperimentResult:
    from .simulator import simulate_population

    sim = simulate_population(spec, policy, horizon, seed)
    rows = []
    for i, (p, s, c, lab, r) in enumerate(zip(spec.people, policy.s, policy.c,
                                              policy.fixed_label, sim.people), start=1):
        b = person_breakdown(p, s, c, spec.theta, lab)
        rows.append({"i": i, "s": s, "c": c, "delta1": b.d1, "delta2": b.d2,
                     "d1_hat": r.d1_hat, "d2_hat": r.d2_hat,
                     "stderr1": r.stderr1, "stderr2": r.stderr2})
    return ExperimentResult("simulate", SIM_COLUMNS, rows, extra={
        "delta": population_error(spec, policy).delta,
        "delta_hat": sim.delta_hat, "delta1_hat": sim.delta1_hat,
        "delta2_hat": sim.delta2_hat, "stderr": sim.stderr,
        "horizon": horizon, "seed": seed, "policy": policy.to_dict()})


EXPERIMENTS = {"fig4": run_fig4, "fig5": run_fig5, "fig6": run_fig6, "fig7": run_fig7}
