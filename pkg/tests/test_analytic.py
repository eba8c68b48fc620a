import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from timely_tracking.analytic import (
    DomainError,
    ctmc_stationary,
    error_rates,
    expected_cycle_durations,
    generator_matrix,
    no_test_error,
    population_error,
    weighted_error,
    weighted_error_grad,
)
from timely_tracking.model import FixedLabel, PersonParams, PopulationSpec, TestPolicy

rate = st.floats(0.01, 100.0)


def test_cycle_durations_examples():
    st1 = expected_cycle_durations(PersonParams(1, 1), 1, 1)
    assert (st1.e_i1, st1.e_i2, st1.e_te1, st1.e_te2) == (3.0, 3.0, 1.0, 1.0)
    st2 = expected_cycle_durations(PersonParams(2, 1), 1, 1)
    assert st2.e_i1 == pytest.approx(2.0)
    assert st2.e_i2 == pytest.approx(4.0)


def test_cycle_durations_fast_testing_limit():
    cs = expected_cycle_durations(PersonParams(2.0, 1.0), 1e9, 1.0)
    assert cs.e_i1 == pytest.approx(1 / 2.0, rel=1e-6)
    assert cs.e_te1 == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("s,c", [(0.0, 1.0), (1.0, 0.0), (0.0, 0.0), (-1.0, 1.0)])
def test_zero_rates_are_domain_errors(s, c):
    with pytest.raises(DomainError):
        expected_cycle_durations(PersonParams(1, 1), s, c)
    with pytest.raises(DomainError):
        error_rates(PersonParams(1, 1), s, c)
    with pytest.raises(DomainError):
        weighted_error(PersonParams(1, 1), s, c, 0.5)


@given(rate, rate, rate, rate)
def test_cycle_statistics_invariants(lam, mu, s, c):
    cs = expected_cycle_durations(PersonParams(lam, mu), s, c)
    assert cs.e_te1 <= cs.e_i1 and cs.e_te2 <= cs.e_i2
    assert min(cs.e_i1, cs.e_i2, cs.e_te1, cs.e_te2) > 0


def test_error_rates_unit_example(unit_person):
    d1, d2 = error_rates(unit_person, 1, 1)
    assert d1 == pytest.approx(1 / 6, abs=1e-15)
    assert d2 == pytest.approx(1 / 6, abs=1e-15)
    cs = expected_cycle_durations(unit_person, 1, 1)
    assert cs.e_te1 / (cs.e_i1 + cs.e_i2) == pytest.approx(1 / 6)


def test_error_rates_continuous_testing():
    d1, d2 = error_rates(PersonParams(1, 1), 1e12, 1e12)
    assert d1 < 1e-11 and d2 < 1e-11


@given(rate, rate, rate, rate)
def test_ratio_identity(lam, mu, s, c):
    p = PersonParams(lam, mu)
    d1, d2 = error_rates(p, s, c)
    cs = expected_cycle_durations(p, s, c)
    total = cs.e_i1 + cs.e_i2
    assert d1 * total == pytest.approx(1 / s, rel=1e-12)
    assert d2 * total == pytest.approx(1 / c, rel=1e-12)
    assert d1 >= 0 and d2 >= 0 and d1 + d2 <= 1


@given(rate, rate, rate, rate, st.floats(1e-3, 1e3))
def test_scale_invariance(lam, mu, s, c, a):
    d = error_rates(PersonParams(lam, mu), s, c)
    da = error_rates(PersonParams(a * lam, a * mu), a * s, a * c)
    assert da == pytest.approx(d, rel=1e-10)


def test_weighted_error_examples():
    assert weighted_error(PersonParams(2, 1), 1, 1, 1.0) == pytest.approx(1 / 6)
    assert weighted_error(PersonParams(1, 1), 1, 1, 0.5) == pytest.approx(1 / 6)
    C = 2.0
    assert weighted_error(PersonParams(1, 1), C / 2, C / 2, 0.5) == pytest.approx(1 / 6)


@given(rate, rate, rate, rate, st.floats(0, 1))
def test_weighted_error_is_theta_mix(lam, mu, s, c, theta):
    p = PersonParams(lam, mu)
    d1, d2 = error_rates(p, s, c)
    assert weighted_error(p, s, c, theta) == pytest.approx(theta * d1 + (1 - theta) * d2,
                                                           rel=1e-12, abs=1e-300)


def test_no_test_error_examples():
    assert no_test_error(PersonParams(1, 1), 0.5) == (0.25, FixedLabel.HEALTHY)
    assert no_test_error(PersonParams(1, 1), 1.0) == (0.0, FixedLabel.INFECTED)
    d, lab = no_test_error(PersonParams(5.0, 0.2), 0.5)
    assert lab is FixedLabel.INFECTED
    assert d == pytest.approx(0.5 * 0.2 / 5.2)


def test_population_error_examples(unit_person):
    one = PopulationSpec((unit_person,), 2.0, 0.5)
    assert population_error(one, TestPolicy((1.0,), (1.0,))).delta == pytest.approx(1 / 6)
    two = PopulationSpec((unit_person, unit_person), 4.0, 0.5)
    assert population_error(two, TestPolicy((1.0, 1.0), (1.0, 1.0))).delta == \
        pytest.approx(1 / 6)
    untested = TestPolicy((0.0,), (0.0,), (FixedLabel.HEALTHY,))
    res = population_error(one, untested)
    assert res.delta == pytest.approx(0.25)
    assert (res.people[0].d1, res.people[0].d2) == (0.5, 0.0)
    inf = population_error(one, TestPolicy((0.0,), (0.0,), (FixedLabel.INFECTED,)))
    assert (inf.people[0].d1, inf.people[0].d2) == (0.0, 0.5)


def test_population_error_aggregates():
    spec = PopulationSpec((PersonParams(1, 2), PersonParams(3, 0.5)), 4.0, 0.3)
    res = population_error(spec, TestPolicy((1.0, 0.5), (0.5, 2.0)))
    assert res.delta1 == pytest.approx(np.mean([b.d1 for b in res.people]))
    assert res.delta2 == pytest.approx(np.mean([b.d2 for b in res.people]))
    assert res.delta == pytest.approx(0.3 * res.delta1 + 0.7 * res.delta2)
    for b in res.people:
        assert b.d == 0.3 * b.d1 + 0.7 * b.d2


def test_population_error_errors(unit_person):
    one = PopulationSpec((unit_person,), 2.0, 0.5)
    with pytest.raises(ValueError):
        population_error(one, TestPolicy((1.0, 1.0), (1.0, 1.0)))
    with pytest.raises(DomainError):
        population_error(one, TestPolicy((0.0,), (0.0,)))


def test_ctmc_unit_example(unit_person):
    pi = ctmc_stationary(unit_person, 1, 1).pi
    np.testing.assert_allclose(pi, [1 / 3, 1 / 6, 1 / 3, 1 / 6], atol=1e-15)


def test_ctmc_untested_two_state_chain(unit_person):
    dist = ctmc_stationary(unit_person, 0, 0, FixedLabel.HEALTHY)
    assert dist[(1, 0)] == 0.5 and dist[(0, 0)] == 0.5
    with pytest.raises(DomainError):
        ctmc_stationary(unit_person, 0, 0)


def test_generator_rows_sum_to_zero():
    q = generator_matrix(PersonParams(0.3, 2.0), 1.5, 0.7)
    np.testing.assert_allclose(q.sum(axis=1), 0.0, atol=1e-15)


@given(rate, rate, rate, rate)
def test_ctmc_matches_closed_form(lam, mu, s, c):
    p = PersonParams(lam, mu)
    pi = ctmc_stationary(p, s, c)
    d1, d2 = error_rates(p, s, c)
    assert abs(pi[(1, 0)] - d1) <= 1e-10
    assert abs(pi[(0, 1)] - d2) <= 1e-10
    assert sum(pi.pi) == pytest.approx(1.0, abs=1e-12)
    assert min(pi.pi) >= 0


def _fd(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


@given(rate, rate, st.floats(0.05, 50), st.floats(0.05, 50), st.floats(0, 1))
def test_gradient_matches_central_differences(lam, mu, s, c, theta):
    p = PersonParams(lam, mu)
    ds, dc = weighted_error_grad(p, s, c, theta)
    hs, hc = 1e-5 * s, 1e-5 * c
    fs = _fd(lambda v: weighted_error(p, v, c, theta), s, hs)
    fc = _fd(lambda v: weighted_error(p, s, v, theta), c, hc)
    # central differences cannot resolve below ~eps*f/h; nearly flat directions hit that floor
    f = weighted_error(p, s, c, theta)
    eps = np.finfo(float).eps
    assert abs(fs - ds) <= 1e-6 * abs(ds) + 8 * eps * f / hs
    assert abs(fc - dc) <= 1e-6 * abs(dc) + 8 * eps * f / hc


@given(rate, rate, rate, rate, st.floats(0, 1))
def test_sign_of_partials(lam, mu, s, c, theta):
    p = PersonParams(lam, mu)
    ds, dc = weighted_error_grad(p, s, c, theta)
    h = 1e-6
    if theta * (c + lam) > (1 - theta) * mu * (1 + 1e-9):
        assert ds < 0
        assert weighted_error(p, s * (1 + h), c, theta) < weighted_error(p, s, c, theta) or \
            math.isclose(ds, 0, abs_tol=1e-14)
    if (1 - theta) * (s + mu) > theta * lam * (1 + 1e-9):
        assert dc < 0


def test_small_s_limit_matches_always_healthy():
    p = PersonParams(1.3, 0.7)
    d1, _ = error_rates(p, 1e-9, 2.0)
    assert d1 == pytest.approx(p.lam / (p.lam + p.mu), abs=1e-6)
