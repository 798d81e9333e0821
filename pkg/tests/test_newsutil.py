import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from newsmech.errors import DomainError, InfeasibleError, ResourceError, ValidationError
from newsmech.laws import uniform_law
from newsmech.newsutil import (
    DiscreteDistribution,
    GainLossSpec,
    binary_for_target,
    expected_realization_penalty,
    gain_loss,
    gap_functional,
    n_fold_convolution,
    news_utility,
    positive_gap_mean,
    quantile,
)

from conftest import discrete

HALF = DiscreteDistribution([0.0, 2.0], [0.5, 0.5])


def brute_gap(H):
    # double sum over ordered pairs
    return sum(pz * pw * (z - w) for (z, pz), (w, pw) in itertools.product(zip(H.support, H.probs), repeat=2) if z > w)


def percentile_integral(G, H, mu, lam, n=400_000):
    # midpoint rule on a fine p grid; an independent check of the exact breakpoint sum
    p = (np.arange(n) + 0.5) / n
    qg = G.support[np.searchsorted(np.cumsum(G.probs), p)]
    qh = H.support[np.searchsorted(np.cumsum(H.probs), p)]
    y = qg - qh
    return float(np.mean(np.where(y >= 0, mu * y, mu * lam * y)))


class TestDistribution:
    def test_merge_and_normalise(self):
        D = DiscreteDistribution([1.0, 0.0, 1.0 + 1e-13], [0.25, 0.5, 0.25])
        assert D.support.tolist() == [0.0, 1.0]
        np.testing.assert_allclose(D.probs, [0.5, 0.5])
        assert abs(D.probs.sum() - 1) < 1e-12

    def test_rejects_bad_input(self):
        with pytest.raises((ValidationError, DomainError)):
            DiscreteDistribution([0.0, 1.0], [-0.1, 1.1])
        with pytest.raises((ValidationError, DomainError)):
            DiscreteDistribution([0.0, np.nan], [0.5, 0.5])

    def test_roundtrip_dict(self):
        assert DiscreteDistribution.from_dict(HALF.to_dict()) == HALF

    @given(discrete())
    def test_sorted_and_normalised(self, D):
        assert np.all(np.diff(D.support) > 0)
        assert abs(D.probs.sum() - 1) < 1e-12


class TestQuantile:
    def test_degenerate(self):
        assert quantile(DiscreteDistribution.degenerate(5.0), 0.3) == 5.0

    def test_steps(self):
        assert quantile(HALF, 0.5) == 0.0
        assert quantile(HALF, 0.75) == 2.0

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.5])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            quantile(HALF, p)

    @given(discrete(), st.floats(0.001, 0.999))
    def test_smallest_point_reaching_p(self, D, p):
        c = quantile(D, p)
        assert D.cdf(c) >= p - 1e-12
        below = D.support[D.support < c]
        if below.size:
            assert D.cdf(below[-1]) < p + 1e-12


class TestGainLoss:
    def test_examples(self):
        assert gain_loss(1.0, 1.0, 2.0) == 1.0
        assert gain_loss(-1.0, 1.0, 2.0) == -2.0
        assert gain_loss(0.0, 3.0, 1.5) == 0.0


class TestNewsUtility:
    def test_examples(self):
        assert news_utility(DiscreteDistribution.degenerate(2.0), HALF, 1.0, 2.0) == pytest.approx(1.0, abs=1e-12)
        assert news_utility(DiscreteDistribution.degenerate(0.0), DiscreteDistribution.degenerate(1.0), 1.0, 2.0) == pytest.approx(-2.0)

    @given(discrete())
    def test_self_news_is_zero(self, G):
        assert news_utility(G, G, 1.3, 2.2) == 0.0

    @given(discrete(), discrete(), st.floats(1.0, 4.0))
    def test_antisymmetry_only_without_loss_aversion(self, G, H, lam):
        both = news_utility(G, H, 1.0, lam) + news_utility(H, G, 1.0, lam)
        assert both <= 1e-12
        assert abs(news_utility(G, H, 1.0, 1.0) + news_utility(H, G, 1.0, 1.0)) < 1e-12

    def test_matches_sampled_percentiles(self, rng):
        G = DiscreteDistribution(rng.normal(size=4), rng.dirichlet(np.ones(4)))
        H = DiscreteDistribution(rng.normal(size=3), rng.dirichlet(np.ones(3)))
        assert news_utility(G, H, 1.0, 2.5) == pytest.approx(percentile_integral(G, H, 1.0, 2.5), abs=1e-4)

    @given(discrete())
    def test_expected_self_news_is_minus_penalty(self, F):
        direct = sum(p * news_utility(DiscreteDistribution.degenerate(u), F, 1.0, 2.0) for u, p in zip(F.support, F.probs))
        assert direct == pytest.approx(-expected_realization_penalty(F, 1.0), abs=1e-9)


class TestPenalty:
    def test_examples(self):
        assert expected_realization_penalty(DiscreteDistribution.degenerate(3.0), 2.0) == 0.0
        assert expected_realization_penalty(HALF, 1.0) == pytest.approx(0.5)

    @given(discrete())
    def test_gap_matches_double_sum(self, H):
        assert gap_functional(H) == pytest.approx(brute_gap(H), abs=1e-12)

    @given(discrete(lo=0.0), st.floats(0.0, 5.0))
    def test_penalty_properties(self, H, Lam):
        w = expected_realization_penalty(H, Lam)
        assert w >= 0
        assert w <= Lam * H.mean() + 1e-12
        if Lam > 0:
            assert (w == 0) == H.is_degenerate


class TestBinary:
    def test_examples(self):
        assert binary_for_target(0.0, 7.0, 1.0) == DiscreteDistribution.degenerate(7.0)
        assert binary_for_target(1.0, 0.0, 1.0) == DiscreteDistribution([-2.0, 2.0], [0.5, 0.5])
        assert binary_for_target(1.0, 0.0, 2.0) == DiscreteDistribution([-1.0, 1.0], [0.5, 0.5])

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            binary_for_target(1.0, 0.0, 0.0)

    @given(st.floats(0, 10), st.floats(-10, 10), st.floats(0.01, 5))
    def test_roundtrip(self, x, y, Lam):
        H = binary_for_target(x, y, Lam)
        assert expected_realization_penalty(H, Lam) == pytest.approx(x, abs=1e-9)
        assert H.mean() == pytest.approx(y, abs=1e-9)


class TestConvolution:
    def test_examples(self):
        assert n_fold_convolution(DiscreteDistribution.degenerate(1.0), 3) == DiscreteDistribution.degenerate(3.0)
        coin = DiscreteDistribution([0.0, 1.0], [0.5, 0.5])
        assert n_fold_convolution(coin, 2) == DiscreteDistribution([0, 1, 2], [0.25, 0.5, 0.25])
        assert n_fold_convolution(HALF, 1) == HALF

    @given(discrete(max_atoms=4), st.integers(1, 5))
    def test_moments(self, D, k):
        S = n_fold_convolution(D, k)
        assert S.mean() == pytest.approx(k * D.mean(), abs=1e-9)
        assert S.var() == pytest.approx(k * D.var(), abs=1e-8)

    def test_lattice_matches_enumeration(self):
        D = DiscreteDistribution([0.0, 0.1, 0.3], [0.2, 0.5, 0.3])
        S = n_fold_convolution(D, 3)
        sums = {}
        for combo in itertools.product(range(3), repeat=3):
            v = round(sum(D.support[i] for i in combo), 9)
            sums[v] = sums.get(v, 0.0) + np.prod([D.probs[i] for i in combo])
        ref = DiscreteDistribution(list(sums), np.array(list(sums.values())))
        np.testing.assert_allclose(S.support, ref.support, atol=1e-12)
        np.testing.assert_allclose(S.probs, ref.probs, atol=1e-12)

    def test_cap(self):
        D = DiscreteDistribution(np.sqrt(np.arange(1, 30)), np.full(29, 1 / 29))
        with pytest.raises(ResourceError):
            n_fold_convolution(D, 6, support_cap=1000)


class TestPositiveGapMean:
    def test_examples(self):
        assert positive_gap_mean(DiscreteDistribution.degenerate(2.0)) == 0.0
        assert positive_gap_mean(DiscreteDistribution([0, 1], [0.5, 0.5])) == pytest.approx(0.25)
        assert positive_gap_mean(uniform_law(0, 1, 101).discrete) == pytest.approx(1 / 6, abs=1e-2)

    @given(discrete())
    def test_equals_unit_penalty(self, F):
        assert positive_gap_mean(F) == pytest.approx(expected_realization_penalty(F, 1.0), abs=1e-12)


class TestSpec:
    def test_aggregates(self):
        s = GainLossSpec(1.0, 0.5, 1.2, 3.0)
        assert s.Lambda_g == pytest.approx(0.2)
        assert s.Lambda_m == pytest.approx(1.0)

    def test_validation(self):
        with pytest.raises((ValidationError, DomainError)):
            GainLossSpec(-1.0, 0.0, 1.0, 1.0)
        with pytest.raises((ValidationError, DomainError)):
            GainLossSpec(1.0, 1.0, 0.9, 1.0)
