import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newsmech import public_goods as pg
from newsmech.errors import DomainError, ValidationError
from newsmech.laws import spike_law, uniform_law
from newsmech.newsutil import DiscreteDistribution

U01 = uniform_law(0, 1, 101).discrete


def env(n=2, F=U01, mu=1.0, L=0.5, cost=0.5):
    return pg.PublicGoodEnv(n, F, mu, L, cost)


class TestRule:
    def test_examples(self):
        e = env()
        assert pg.efficiency_rule([0.3, 0.4], e) == 1
        assert pg.efficiency_rule([0.0, 0.0], e) == 0
        # 2 * (0.25 + 0.25) equals 2 * 0.5 exactly
        assert pg.efficiency_rule([0.25, 0.25], e) == 1

    def test_profile_length(self):
        with pytest.raises(DomainError):
            pg.efficiency_rule([0.1, 0.2, 0.3], env())

    def test_env_checks(self):
        with pytest.raises(ValidationError):
            env(n=1)
        with pytest.raises(ValidationError):
            env(cost=0.0)
        assert env().interesting and not env(cost=5.0).interesting


class TestInterim:
    def test_uniform_two_agents(self):
        e = env(mu=0.0, cost=0.5)  # n * c_tilde = 1
        theta = U01.support
        np.testing.assert_allclose(pg.interim_probability(theta, e), theta, atol=0.011)

    def test_top_is_certain(self):
        e = env(mu=0.0, cost=0.2)
        assert pg.interim_probability(1.0, e) == 1.0

    def test_matches_enumeration(self):
        F = DiscreteDistribution([0.0, 0.5, 1.0], [0.2, 0.5, 0.3])
        e = pg.PublicGoodEnv(3, F, 0.5, 0.5, 0.6)
        grid = np.array(np.meshgrid(F.support, F.support)).reshape(2, -1).T
        probs = np.outer(F.probs, F.probs).ravel()
        for th in F.support:
            direct = sum(p for (a, b), p in zip(grid, probs) if pg.efficiency_rule([th, a, b], e))
            assert pg.interim_probability(th, e) == pytest.approx(direct, abs=1e-12)

    @settings(max_examples=30)
    @given(st.integers(2, 6), st.floats(0.05, 0.95), st.floats(0, 2))
    def test_nondecreasing(self, n, cost, mu):
        Q = pg.interim_probability(U01.support, env(n=n, mu=mu, cost=cost))
        assert np.all(np.diff(Q) >= 0) and Q.min() >= 0 and Q.max() <= 1


class TestIC:
    def test_a_always(self):
        e = env(F=spike_law(0, 1, 0.95, 101), L=10.0, cost=0.6)
        assert pg.ic_condition("A", e).ok

    def test_b_small_loss_aversion(self):
        for F in (U01, spike_law(0, 1, 0.95, 101)):
            assert pg.ic_condition("B", env(F=F, L=0.5)).ok

    def test_concentrated_types_fail(self):
        e = env(F=spike_law(0, 1, 0.95, 101), mu=1.0, L=3.0, cost=0.6)
        for T in "BC":
            v = pg.ic_condition(T, e)
            assert not v.ok and v.witness == 0.0 and v.agree

    def test_unknown_timeline(self):
        with pytest.raises(DomainError):
            pg.perceived_valuation("D", 0.5, env())

    def test_thresholds(self):
        e = env(mu=1.0, L=3.0)
        assert pg.derivative_threshold("A", e) == 0.0
        assert pg.derivative_threshold("B", e) == pytest.approx(1 / 6)
        assert pg.derivative_threshold("C", e) == pytest.approx(1 / 3)
        assert pg.derivative_threshold("C", env(L=1.0)) == 0.0

    @settings(max_examples=60)
    @given(st.integers(2, 5), st.floats(0.05, 0.95), st.floats(0, 2), st.floats(0, 6), st.floats(0.5, 0.99))
    def test_verdicts_agree(self, n, cost, mu, L, spike):
        F = spike_law(0, 1, spike, 41)
        for T in pg.PG_TIMELINES:
            v = pg.ic_condition(T, env(n=n, F=F, mu=mu, L=L, cost=cost))
            assert v.agree, v.summary()

    def test_failures_grow_with_loss_aversion(self):
        F = spike_law(0, 1, 0.9, 41)
        fails = [sum(not pg.ic_condition(T, env(F=F, L=L, cost=0.6)).ok for T in "BC") for L in np.linspace(0, 8, 17)]
        assert all(a <= b for a, b in zip(fails, fails[1:]))
        assert fails[0] == 0 and fails[-1] == 2


class TestPopulation:
    def test_finite_N(self):
        scan = pg.min_population_for_ic(uniform_law(0, 1, 41).discrete, 1.0, 3.0, lambda N: 0.9, range(2, 40))
        assert scan.N is not None and scan.monotone

    def test_mild_loss_aversion(self):
        scan = pg.min_population_for_ic(U01, 1.0, 0.8, lambda N: 0.9, range(3, 8))
        assert scan.N == 3

    def test_costly_good_never_restored(self):
        # c_tilde = 0.8 exceeds the mean type 0.5
        scan = pg.min_population_for_ic(uniform_law(0, 1, 21).discrete, 1.0, 3.0, lambda N: 1.6, range(2, 30))
        assert scan.N is None
