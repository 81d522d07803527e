import math

import numpy as np
import pytest
from scipy import stats

from sinai_lab import models as md
from sinai_lab.env import EnvironmentSpec, constant, two_point
from sinai_lab.errors import DomainError, GridMismatch, KindMismatch, SpecInvalid
from sinai_lab.valley import ReturnSeries, return_series

SINAI = EnvironmentSpec("two-point", p=0.3, seed=5)
FLAT = EnvironmentSpec("constant", p=0.5, degenerate=True)


def test_step_laws():
    pm = md.make_step_law("point-mass", z0=1)
    assert pm.mean == 1.0 and pm.is_point_mass()
    rad = md.make_step_law("rademacher")
    assert rad.mean == 0.0 and rad.beta == 2.0
    ht = md.make_step_law("heavy-tail-lattice", {"beta": 1.5})
    assert ht.cutoff == 10**6
    assert abs(ht.total - 1.0) <= 1e-12
    sup, probs = ht.finite_table()
    assert abs(math.fsum(probs) - 1.0) <= 1e-12
    assert np.array_equal(probs, probs[::-1])  # p(k) = p(-k)
    assert ht.pmf(3) == ht.pmf(-3) == pytest.approx(3**-2.5 / (2 * np.sum(np.arange(1, 10**6 + 1.0) ** -2.5)))
    tab = md.make_step_law("finite-table", table={-2: 1, 1: 2})
    assert tab.mean == pytest.approx(0.0) and tab.total == pytest.approx(1.0)


@pytest.mark.parametrize(
    "kind,params",
    [
        ("nope", {}),
        ("heavy-tail-lattice", {"beta": 2.5}),
        ("heavy-tail-lattice", {"beta": 1.0}),
        ("finite-table", {"table": {1: -1.0, 2: 0.5}}),
        ("finite-table", {"table": {1: 0.0}}),
    ],
)
def test_step_law_errors(kind, params):
    with pytest.raises(SpecInvalid):
        md.make_step_law(kind, params)


def test_heavy_tail_sampler_matches_pmf():
    law = md.make_step_law("heavy-tail-lattice", beta=1.5, cutoff=64)
    rng = np.random.default_rng(0)
    z = law.sample(rng, 400_000)
    assert np.all((np.abs(z) >= 1) & (np.abs(z) <= 64))
    sup, probs = law.finite_table()
    counts = np.array([np.sum(z == k) for k in sup])
    mask = probs * len(z) >= 20
    obs = np.append(counts[mask], counts[~mask].sum())
    exp = np.append(probs[mask], probs[~mask].sum()) * len(z)
    assert stats.chisquare(obs, exp).pvalue > 1e-3


def test_alias_table():
    t = md.AliasTable([0.1, 0.2, 0.7])
    draws = t.sample(np.random.default_rng(1), 200_000)
    freq = np.bincount(draws, minlength=3) / len(draws)
    assert np.allclose(freq, [0.1, 0.2, 0.7], atol=0.005)


def test_config_validation():
    rad = md.make_step_law("rademacher")
    pm = md.make_step_law("point-mass", z0=1)
    with pytest.raises(SpecInvalid):
        md.Model2DConfig("II", SINAI, pm).validate()
    with pytest.raises(SpecInvalid):
        md.Model2DConfig("I", SINAI, pm).validate()
    with pytest.raises(SpecInvalid):
        md.Model2DConfig("II", SINAI, rad, delta=1.5).validate()
    with pytest.raises(SpecInvalid):
        md.Model2DConfig("IV", SINAI, rad).validate()
    md.Model2DConfig("III", SINAI, pm).validate()


def test_kind_one_moves_both():
    cfg = md.Model2DConfig("I", SINAI, md.make_step_law("rademacher"), seed=2)
    st = md.simulate_model(cfg, 1000)
    assert st.horizontal_moves == 1000 and st.vertical_moves == 0
    assert st.visits.sum() == 1000
    # x and y both change by one each step, so x + y keeps the parity of t
    assert (st.final[0] + st.final[1]) % 2 == 0


def test_kind_two_moves_one_coordinate():
    cfg = md.Model2DConfig("II", SINAI, md.make_step_law("rademacher"), delta=0.3, seed=3)
    n = 200_000
    st = md.simulate_model(cfg, n)
    assert st.horizontal_moves + st.vertical_moves == n
    se = math.sqrt(n * 0.3 * 0.7)
    assert abs(st.horizontal_moves - 0.3 * n) < 5 * se


def test_kind_three_parity_rule():
    cfg = md.Model2DConfig("III", SINAI, md.make_step_law("point-mass", z0=1), seed=4)
    st = md.simulate_model(cfg, 200_000)
    assert st.parity["down_even"] == 0 and st.parity["up_odd"] == 0
    assert st.parity["up_even"] > 0 and st.parity["down_odd"] > 0


def test_kind_three_general_law_sign_frequencies():
    law = md.make_step_law("finite-table", table={1: 3, -1: 1})
    cfg = md.Model2DConfig("III", SINAI, law, seed=6)
    st = md.simulate_model(cfg, 400_000)
    even = st.parity["up_even"] + st.parity["down_even"]
    odd = st.parity["up_odd"] + st.parity["down_odd"]
    assert abs(st.parity["up_even"] / even - 0.75) < 5 * math.sqrt(0.75 * 0.25 / even)
    assert abs(st.parity["down_odd"] / odd - 0.75) < 5 * math.sqrt(0.75 * 0.25 / odd)


def test_embedded_chain_gaps():
    cfg = md.Model2DConfig("II", SINAI, md.make_step_law("rademacher"), delta=0.5, seed=7)
    ec = md.embedded_chain(cfg, 100_000)
    taus = ec.records[:, 1]
    assert np.all(np.diff(taus) > 0)
    assert np.array_equal(ec.records[:, 0], np.arange(1, len(taus) + 1))
    assert abs(ec.mean_gap() - 2.0) < 5 * ec.gap_se()
    assert ec.gaps.mean() == pytest.approx(ec.mean_gap())
    with pytest.raises(KindMismatch):
        md.embedded_chain(md.Model2DConfig("I", SINAI, md.make_step_law("rademacher")), 10)


def test_embedded_chain_site_frequencies():
    cfg = md.Model2DConfig("II", SINAI, md.make_step_law("rademacher"), delta=0.5, seed=8)
    st = md.simulate_model(cfg, 2_000_000)
    xs, visits, rights = st.site_table(min_visits=1000)
    assert len(xs) > 3
    env = md.make_environment(SINAI)
    w = np.array([env.omega_at(int(x)) for x in xs])
    chi2 = np.sum((rights - visits * w) ** 2 / (visits * w * (1 - w)))
    assert stats.chi2.sf(chi2, len(xs)) > 1e-3


def test_simulation_reproducible():
    cfg = md.Model2DConfig("II", SINAI, md.make_step_law("heavy-tail-lattice", beta=1.5), seed=9)
    a = md.simulate_model(cfg, 50_000)
    b = md.simulate_model(cfg, 50_000)
    assert a.as_dict() == b.as_dict()
    assert np.array_equal(a.visits, b.visits)


def test_window_growth_matches():
    # a transient-looking walk (omega = 0.9) leaves the initial window quickly
    spec = EnvironmentSpec("constant", p=0.9, degenerate=True)
    cfg = md.Model2DConfig("III", spec, md.make_step_law("point-mass", z0=1), seed=1)
    st = md.simulate_model(cfg, 30_000)
    assert st.max_abs_x > 4096
    assert st.visits.sum() == st.horizontal_moves
    assert st.rights.sum() - (st.horizontal_moves - st.rights.sum()) == st.final[0]


def test_meeting_single_walker_counts_returns():
    env = two_point(0.3, 5)
    rep = md.meeting_experiment([SINAI], 1, True, 4000, seed=3)
    at_zero = md._walker_returns(env, 4000, md.task_rng(3, 0, 0))
    assert rep.total == int(at_zero.sum())
    assert list(rep.cumulative) == sorted(rep.cumulative)


def test_meeting_two_flat_walkers():
    trials = 20_000
    rep = md.meeting_experiment([FLAT], 2, False, 2, seed=1, trials=trials)
    p = rep.total / trials
    assert abs(p - 0.25) < 4 * math.sqrt(0.25 * 0.75 / trials)


def test_meeting_reproducible_and_worker_independent():
    a = md.meeting_experiment([SINAI], 3, False, 3000, seed=4, trials=6)
    b = md.meeting_experiment([SINAI], 3, False, 3000, seed=4, trials=6, workers=3)
    assert a.block_counts == b.block_counts
    assert a.to_csv().startswith("block_end_n,count,cumulative\n")


def test_classifier():
    assert md.srw_recurrence_classifier(2.0) == "recurrent"
    for b in (1.01, 1.2, 1.5, 1.9):
        assert md.srw_recurrence_classifier(b) == "transient"
    for b in (1.0, 2.1):
        with pytest.raises(DomainError):
            md.srw_recurrence_classifier(b)
    cfg = md.Model2DConfig("III", SINAI, md.make_step_law("point-mass", z0=1))
    with pytest.raises(DomainError):
        md.classify_config(cfg)


def test_law_return_series():
    rad = md.make_step_law("rademacher")
    s = md.law_return_series(rad, 20)
    ref = return_series(constant(0.5), 20)
    assert np.allclose(s.probs, ref.probs, atol=1e-14)


def test_product_series():
    x = return_series(two_point(0.3, 1), 10)
    y = md.law_return_series(md.make_step_law("rademacher"), 10)
    prod = md.product_series(x, y)
    assert prod.probs[1] == pytest.approx(x.probs[1] * 3 / 8)
    ones = ReturnSeries("one", np.arange(1, 6), np.ones(5))
    assert np.all(md.product_series(ones, ones).probs == 1.0)
    with pytest.raises(GridMismatch):
        md.product_series(x, return_series(two_point(0.3, 1), 9))


def test_heavy_tail_series_sums_plateau():
    from sinai_lab.valley import partial_sums

    srw = md.law_return_series(md.make_step_law("rademacher"), 1000)
    ht = md.law_return_series(md.make_step_law("heavy-tail-lattice", beta=1.5, cutoff=30), 1000)
    both = partial_sums(md.product_series(srw, srw)).weighted
    mixed = partial_sums(md.product_series(srw, ht)).weighted
    # SRW x SRW adds ~ log 2 / pi per doubling; the heavy-tailed companion adds far less
    assert both[-1] - both[499] > 0.2
    assert mixed[-1] - mixed[499] < 0.5 * (both[-1] - both[499])


def test_law_series_fourier_matches_convolution():
    law = md.make_step_law("finite-table", table={-2: 1, 1: 2})
    wide = md.law_return_series(law, 2000).probs
    narrow = md.law_return_series(law, 1000).probs
    assert np.allclose(wide[:1000], narrow, atol=1e-14)
