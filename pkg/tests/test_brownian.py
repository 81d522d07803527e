import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sinai_lab import brownian as bm
from sinai_lab.env import constant, two_point
from sinai_lab.errors import DomainError, HorizonTooShort, SpecInvalid


def test_sample_starts_at_zero():
    p = bm.sample_bm(1.3, 0.01, 2.0, seed=4)
    assert p.plus[0] == 0.0 and p.minus[0] == 0.0
    assert p.horizon == pytest.approx(2.0)


def test_moments_of_many_paths():
    # 10^5 paths on the grid {0, 1, 2} with sigma = 1.5
    sigma, trials = 1.5, 100_000
    b1 = np.empty(trials)
    inc = np.empty(trials)
    for chunk in range(10):
        paths = [bm.sample_bm(sigma, 1.0, 2.0, seed=chunk * 10_000 + i) for i in range(10_000)]
        sl = slice(chunk * 10_000, (chunk + 1) * 10_000)
        b1[sl] = [q.plus[1] for q in paths]
        inc[sl] = [q.plus[2] - q.plus[1] for q in paths]
    var_se = sigma**2 * math.sqrt(2 / trials)
    assert abs(b1.var() - sigma**2) < 5 * var_se
    cov = np.mean((b1 - b1.mean()) * (inc - inc.mean()))
    assert abs(cov) < 5 * sigma**2 / math.sqrt(trials)


def test_first_passage_linear():
    p = bm.BMPath.from_function(lambda t: t, 0.01, 5.0)
    assert bm.first_passage(p, 3.0) == pytest.approx(3.0)
    assert bm.first_passage(p, 6.0) is None
    assert bm.first_passage(p, -2.0, "-") == pytest.approx(-2.0)
    assert bm.first_passage(p, 2.0, "-") is None


def test_first_passage_piecewise():
    # up to 1 at t = 1, down to -0.5 at t = 2.5, up again with slope 2
    def f(t):
        t = np.abs(t)
        return np.where(t <= 1, t, np.where(t <= 2.5, 1 - (t - 1), -0.5 + 2 * (t - 2.5)))

    p = bm.BMPath.from_function(f, 0.005, 5.0)
    assert bm.first_passage(p, -0.25) == pytest.approx(2.25)
    assert bm.first_passage(p, 1.5) == pytest.approx(3.5)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), y1=st.floats(0.05, 2.0), y2=st.floats(0.05, 2.0))
def test_first_passage_monotone(seed, y1, y2):
    p = bm.sample_bm(1.0, 1e-3, 4.0, seed)
    a, b = sorted((y1, y2))
    ta, tb = bm.first_passage(p, a), bm.first_passage(p, b)
    if tb is not None:
        assert ta is not None and ta <= tb


def test_event_linear_paths():
    p1 = bm.BMPath.from_function(lambda t: np.abs(t), 1e-4, 1.3)
    ev = bm.event_AD(p1, 1.0, 0.3)
    assert ev.F_plus and ev.F_minus
    assert not ev.A_plus  # hitting 1.1 at t = 1.1 misses the deadline L^2 = 1
    p2 = bm.BMPath.from_function(lambda t: 2 * np.abs(t), 1e-4, 1.3)
    ev = bm.event_AD(p2, 1.0, 0.3)
    assert ev.A_plus and ev.A_minus
    assert ev.D_plus and ev.both_D


def test_event_domain_checks():
    p = bm.BMPath.from_function(lambda t: t, 1e-3, 1.0)
    with pytest.raises(HorizonTooShort):
        bm.event_AD(p, 1.0, 0.3)
    p = bm.sample_bm(1.0, 1e-3, 2.0, 0)
    with pytest.raises(DomainError):
        bm.event_AD(p, 1.0, 0.6)


def test_event_clause_implications():
    for seed in range(150):
        p = bm.sample_bm(1.0, 1e-3, 1.3, seed)
        ev = bm.event_AD(p, 1.0, 0.3)
        assert not ev.A_plus or ev.F_plus
        assert not ev.A_minus or ev.F_minus
        assert not ev.D_plus or all(ev.G_plus)
        assert not ev.D_minus or all(ev.G_minus)


def test_event_probability_json_and_ci():
    est = bm.event_probability(0.3, 1.0, 200, seed=3)
    payload = json.loads(est.to_json())
    assert set(payload) == {"delta", "L", "trials", "hits", "ci_low", "ci_high"}
    assert 0.0 <= est.ci_low <= est.estimate <= est.ci_high <= 1.0
    with pytest.raises(DomainError):
        bm.event_probability(0.3, 1.0, 0, seed=3)


def test_event_probability_worker_independent():
    a = bm.event_probability(0.3, 1.0, 300, seed=5, dt=1e-3)
    b = bm.event_probability(0.3, 1.0, 300, seed=5, dt=1e-3, workers=3)
    assert a.hits == b.hits


def test_binomial_ci_zero_hits():
    lo, hi = bm.binomial_ci(0, 100)
    assert lo == 0.0 and 0.0 < hi < 0.06


def test_reflection_tail_rows():
    rows = bm.reflection_tail_check(1.0, 1.0, [1.0, 3.0, 8.0], 4000, seed=1, n_steps=2000)
    assert rows[0].reflection == pytest.approx(0.3173, abs=1e-4)
    assert rows[1].bound == pytest.approx(1.477e-3, rel=1e-3)
    assert abs(rows[0].mc - rows[0].reflection) < 4 * rows[0].se + 0.02  # grid maxima run low
    assert rows[2].mc == 0.0 and rows[2].passes
    with pytest.raises(DomainError):
        bm.reflection_tail_check(1.0, 1.0, [0.0], 10)


def test_diffusive_diagnostic():
    rep = bm.diffusive_diagnostic(two_point(0.3, 0), 1000, 2000, seed=1)
    assert rep.ks < 0.05
    assert rep.sigma_hat == pytest.approx(math.log(7 / 3))
    with pytest.raises(SpecInvalid):
        bm.diffusive_diagnostic(constant(0.5), 1000, 1000)
    with pytest.raises(DomainError):
        bm.diffusive_diagnostic(two_point(), 1000, 1)
