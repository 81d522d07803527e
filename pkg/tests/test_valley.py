import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from sinai_lab import valley as vl
from sinai_lab.env import constant, two_point
from sinai_lab.errors import DomainError, EmptyRange, GridMismatch, NotInGamma, ScanExhausted


def test_fixture_descriptor(env_w):
    d = vl.valley_descriptor(env_w, 10, delta=0.4)
    assert (d.t_minus, d.t_plus, d.b_minus, d.b_plus) == (-11, 9, -4, 2)
    assert d.r1_plus == pytest.approx(2.0) and d.r1_minus == pytest.approx(3.0)
    assert d.r2_plus == pytest.approx(0.0, abs=1e-12) and d.r2_minus == pytest.approx(1.0)
    assert d.in_gamma
    assert vl.gamma_member(env_w, 10, 0.4)


def test_fixture_grid(env_w):
    hits = vl.gamma_search(env_w, 0.4, [5, 10, 20])
    assert [h.member for h in hits] == [False, True, False]
    assert hits[2].exhausted and not hits[1].exhausted


def test_monotone_environment():
    env = constant(1 / 3)  # rho == 2, V(x) = x log 2
    L = 7.3
    with pytest.raises(ScanExhausted) as info:
        vl.valley_descriptor(env, L)
    assert info.value.side == "-"
    assert not vl.gamma_member(env, L, 0.4)
    # the positive side alone: first rise of L
    plus = vl._side(env.potentials(0, 100), L)
    assert plus == (math.ceil(L / math.log(2)), 0.0, 0, 0.0)


def test_flat_environment_exhausts_both_sides():
    with pytest.raises(ScanExhausted) as info:
        vl.valley_descriptor(constant(0.5), 3)
    assert info.value.side == "both"


def test_gamma_member_domain():
    with pytest.raises(DomainError):
        vl.gamma_member(two_point(), 10, 1.2)
    with pytest.raises(DomainError):
        vl.gamma_search(two_point(), 0.4, [10, 5])


def _brute(env, L):
    v_r = env.potentials(0, int(L * L) + 64)
    v_l = env.potentials(-int(L * L) - 64, 0)[::-1]
    out = []
    for v in (v_r, v_l):
        t = next(k for k in range(len(v)) if v[k] - v[: k + 1].min() >= L - vl.TIE_TOL)
        r1 = -v[: t + 1].min()
        kb = next(k for k in range(t + 1) if v[k] <= -r1 + vl.TIE_TOL)
        out.append((t, r1, kb, v[: kb + 1].max()))
    return out


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**9), L=st.floats(2.0, 12.0))
def test_descriptor_brute_force(seed, L):
    env = two_point(0.3, seed)
    try:
        d = vl.valley_descriptor(env, L)
    except ScanExhausted:
        return
    (tp, r1p, bp, r2p), (tm, r1m, bm, r2m) = _brute(env, L)
    assert (d.t_plus, d.b_plus, -d.t_minus, -d.b_minus) == (tp, bp, tm, bm)
    assert (d.r1_plus, d.r2_plus, d.r1_minus, d.r2_minus) == (r1p, r2p, r1m, r2m)
    # confinement: the walls rise at least L above the bottoms
    v = env.potential_at
    assert v(d.t_plus) - v(d.b_plus) >= L - vl.TIE_TOL
    assert v(d.t_minus) - v(d.b_minus) >= L - vl.TIE_TOL
    assert v(d.b_plus) == pytest.approx(-d.r1_plus)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**9), L=st.floats(4.0, 15.0), d1=st.floats(0.05, 0.9), d2=st.floats(0.05, 0.9))
def test_gamma_monotone_in_delta(seed, L, d1, d2):
    env = two_point(0.3, seed)
    lo, hi = sorted((d1, d2))
    if vl.gamma_member(env, L, lo):
        assert vl.gamma_member(env, L, hi)


def test_search_consistent_with_member():
    grid = [6.0, 8.0, 10.0, 14.0]
    for seed in range(30):
        env = two_point(0.3, seed)
        hits = vl.gamma_search(env, 0.4, grid)
        assert [h.member for h in hits] == [vl.gamma_member(env, L, 0.4) for L in grid]


def test_prop1_ranges(env_w):
    with pytest.raises(EmptyRange):
        vl.prop1_n_grid(10, 0.25)
    with pytest.raises(EmptyRange):
        vl.prop1_check(env_w, 10, 0.4)
    g = vl.prop1_n_grid(30, 0.15)
    assert len(g) <= 16 and g[0] == math.ceil(math.exp(13.5)) and g[-1] == math.floor(math.exp(21))
    with pytest.raises(NotInGamma):
        vl.prop1_check(constant(1 / 3), 30, 0.15)


def _find_gamma(delta, L, seeds):
    for s in seeds:
        env = two_point(0.3, s)
        if vl.gamma_member(env, L, delta):
            return env
    return None


def test_prop1_report_on_found_valley():
    env = _find_gamma(0.15, 25, range(400))
    assert env is not None
    rep = vl.prop1_check(env, 25, 0.15)
    assert rep.threshold == pytest.approx(math.exp(-3 * 0.15 * 25))
    assert np.all(rep.lhs > 0) and np.all(rep.lhs <= 1)
    assert rep.observed_c == pytest.approx(float(np.min(rep.lhs / rep.threshold)))
    payload = __import__("json").loads(rep.to_json())
    assert {"L", "delta", "t_minus", "t_plus", "b_minus", "b_plus", "rows", "observed_C"} <= set(payload)


def test_local_exponent():
    assert vl.local_exponent(100, 1e-3) == pytest.approx(1.5)
    assert vl.local_exponent(100, 1.0) == 0.0
    assert vl.local_exponent(100, 0.0) == math.inf
    with pytest.raises(DomainError):
        vl.local_exponent(1, 0.5)


def test_partial_sums_examples():
    s = vl.return_series(constant(0.5), 100)
    ps = vl.partial_sums(s, 0.0)
    assert ps.at(2)["weighted"] == pytest.approx(7 / 8, abs=1e-15)
    assert np.allclose(ps.weighted, np.cumsum(s.probs))
    assert np.allclose(ps.power, np.cumsum(s.probs))
    conv = vl.partial_sums(s, 1.0)
    # sum p_n / n with p_n ~ (pi n)^{-1/2}: bounded, value pinned by direct summation
    direct = math.fsum(p / n for n, p in zip(s.ns, s.probs))
    assert conv.at(100)["weighted"] == pytest.approx(direct, rel=1e-12)
    # the full series sums to 2 log 2
    assert conv.at(100)["weighted"] == pytest.approx(1.2737844811356773, rel=1e-12)
    assert conv.at(100)["weighted"] < 2 * math.log(2)


def test_partial_sums_companions():
    a = vl.return_series(two_point(0.3, 1), 50)
    b = vl.return_series(two_point(0.3, 2), 50)
    ps = vl.partial_sums(a, companions=[b])
    assert ps.product[-1] == pytest.approx(float(np.sum(a.probs * b.probs)))
    short = vl.return_series(two_point(0.3, 2), 40)
    with pytest.raises(GridMismatch):
        vl.partial_sums(a, companions=[short])


def test_return_series_validation_and_csv():
    s = vl.return_series(two_point(0.3, 3), 10)
    text = s.to_csv()
    assert text.splitlines()[0] == "n,probability,mode" and len(text.splitlines()) == 11
    with pytest.raises(DomainError):
        vl.ReturnSeries("x", [1, 1], [0.1, 0.2])
    with pytest.raises(DomainError):
        vl.ReturnSeries("x", [1, 2], [0.1, 1.5])


def test_dyadic_blocks():
    assert vl.dyadic_block_ends(10_000)[-6:] == [512, 1024, 2048, 4096, 8192, 10_000]
    assert vl.dyadic_block_ends(8) == [1, 2, 4, 8]


def test_cp_density():
    assert vl.cp_density(0.5) == pytest.approx(1.5 - 2.5 * math.exp(-1), abs=1e-12)
    assert vl.cp_density(0.5) == pytest.approx(0.580301, abs=1e-6)
    left = 2 - 1 - 3 * math.exp(-2)
    assert vl.cp_density(1.0) == pytest.approx(1 - 3 * math.exp(-2), abs=1e-15)
    assert left == pytest.approx(vl.cp_density(1.0), abs=1e-15)
    assert vl.cp_density(0.0) == 0.0
    z = np.linspace(0, 10, 10_000)
    assert np.all(vl.cp_density(z) >= 0)
    total = integrate.quad(vl.cp_density, 0, 1)[0] + integrate.quad(vl.cp_density, 1, np.inf)[0]
    assert total == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(DomainError):
        vl.cp_density(-0.1)
