import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from credit_copula.merton import (
    ContractParams,
    OverlappingPortfolios,
    PortfolioSpec,
    asset_value_at_maturity,
    contract_loss,
    portfolio_loss,
    simulate_loss_pairs,
)
from credit_copula.rng import INFINITY, MarketParams, StreamKey, sample_horizon_returns


def test_asset_value_drift_cancels():
    s = 0.03
    assert asset_value_at_maturity(0.0, s ** 2 / 2, s, 252, 1.7) == pytest.approx(1.7, abs=1e-15)


def test_asset_value_direct():
    got = asset_value_at_maturity(0.1, 1e-3, 0.03, 252, 1.0)
    assert got == pytest.approx(math.exp(0.1 + (0.001 - 0.00045) * 252), rel=1e-15)
    assert got == pytest.approx(math.exp(0.2386), rel=1e-12)


def test_asset_value_deterministic():
    assert asset_value_at_maturity(0.0, 0.0, 0.0, 252, 2.5) == 2.5


def test_asset_value_rejects_bad_horizon():
    with pytest.raises(ValueError):
        asset_value_at_maturity(0.0, 0.0, 0.1, 0, 1.0)


@pytest.mark.parametrize("vT, face, expect", [(1.0, 1.0, 0.0), (0.5, 1.0, 0.5), (2.0, 1.0, 0.0)])
def test_contract_loss(vT, face, expect):
    assert contract_loss(vT, face) == expect


def test_portfolio_loss_examples():
    assert portfolio_loss([0, 0, 0], [0.2, 0.3, 0.5]) == 0.0
    assert portfolio_loss([0.5, 0.0], [0.5, 0.5]) == 0.25
    assert portfolio_loss([0.3] * 4, [0.1, 0.2, 0.3, 0.4]) == pytest.approx(0.3, abs=1e-15)


def test_portfolio_loss_length_mismatch():
    with pytest.raises(ValueError):
        portfolio_loss([0.1, 0.2], [1.0])


def test_portfolio_spec_fractions_from_face_values():
    spec = PortfolioSpec.from_contracts(
        [0, 1], [ContractParams(0, 0.02, 0.6, face_value=3.0), ContractParams(0, 0.02, 0.9, face_value=1.0)]
    )
    np.testing.assert_allclose(spec.fractions, [0.75, 0.25])
    default = PortfolioSpec([0, 1], [0.6, 0.9])
    np.testing.assert_allclose(default.fractions, [0.4, 0.6])
    assert abs(default.fractions.sum() - 1) < 1e-12


@pytest.mark.parametrize("kwargs", [
    dict(members=[], leverages=[]),
    dict(members=[1, 1], leverages=0.7),
    dict(members=[0], leverages=1.2),
    dict(members=[0, 1], leverages=0.7, fractions=[0.7, 0.7]),
])
def test_portfolio_spec_validation(kwargs):
    with pytest.raises(ValueError):
        PortfolioSpec(**kwargs)


def test_contract_params_leverage_range():
    with pytest.raises(ValueError):
        ContractParams(0.0, 0.02, 0.0)
    ContractParams(0.0, 0.02, 1.0)


def _oracle_losses(market, p1, p2, n, key):
    """Loop-by-loop evaluation of the Merton loss formulas."""
    union = sorted(p1.members + p2.members)
    r = sample_horizon_returns(market, union, n, key.child("block", 0))
    col = {m: k for k, m in enumerate(union)}
    T = market.horizon_T
    out = []
    for spec in (p1, p2):
        losses = []
        for i in range(n):
            total = 0.0
            for m, lev, f in zip(spec.members, spec.leverages, spec.fractions):
                mu, s = market.mu[m], market.sigma[m]
                v = math.exp(r[i, col[m]] + (mu - s * s / 2) * T)
                total += f * ((lev - v) / lev if v < lev else 0.0)
            losses.append(total)
        out.append(np.array(losses))
    return out


@pytest.mark.parametrize("k1, k2, tail_n", [(1, 1, INFINITY), (2, 3, 5), (3, 3, INFINITY), (3, 2, 4)])
def test_oracle_equivalence(k1, k2, tail_n):
    rng = np.random.default_rng(k1 * 10 + k2)
    n = 8
    a = rng.standard_normal((n, n + 4))
    cov = a @ a.T
    d = np.sqrt(np.diag(cov))
    market = MarketParams(rng.uniform(-3e-3, 2e-3, n), rng.uniform(0.01, 0.05, n),
                          cov / np.outer(d, d), tail_n=tail_n)
    members = rng.permutation(n)
    p1 = PortfolioSpec(members[:k1], rng.uniform(0.6, 0.9, k1))
    p2 = PortfolioSpec(members[k1:k1 + k2], rng.uniform(0.6, 0.9, k2), None)
    key = StreamKey(99, k1 + k2)
    got = simulate_loss_pairs(market, p1, p2, 100, key)
    l1, l2 = _oracle_losses(market, p1, p2, 100, key)
    np.testing.assert_allclose(got.l1, l1, rtol=0, atol=1e-12)
    np.testing.assert_allclose(got.l2, l2, rtol=0, atol=1e-12)


def test_overlapping_portfolios_rejected():
    market = MarketParams.homogeneous(4, 0.0, 0.02, 0.2)
    with pytest.raises(OverlappingPortfolios):
        simulate_loss_pairs(market, PortfolioSpec([0, 1], 0.7), PortfolioSpec([1, 2], 0.7), 10, StreamKey(0))


def test_member_out_of_range():
    market = MarketParams.homogeneous(4, 0.0, 0.02, 0.2)
    with pytest.raises(IndexError):
        simulate_loss_pairs(market, PortfolioSpec([0], 0.7), PortfolioSpec([7], 0.7), 10, StreamKey(0))


def test_perfect_correlation_identical_losses():
    market = MarketParams.homogeneous(2, 1e-3, 0.03, 1.0)
    s = simulate_loss_pairs(market, PortfolioSpec([0], 0.75), PortfolioSpec([1], 0.75), 5000, StreamKey(3))
    np.testing.assert_allclose(s.l1, s.l2, rtol=0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(0.0, 0.9), mu=st.floats(-5e-3, 3e-3),
       tail=st.sampled_from([INFINITY, 3, 5]))
def test_losses_bounded(seed, c, mu, tail):
    market = MarketParams.homogeneous(6, mu, 0.04, c, tail_n=tail)
    s = simulate_loss_pairs(market, PortfolioSpec([0, 1, 2], 0.9), PortfolioSpec([3, 4, 5], 0.8),
                            300, StreamKey(seed))
    for l in (s.l1, s.l2):
        assert np.all(l >= 0) and np.all(l < 1)


def test_loss_monotone_in_leverage():
    market = MarketParams.homogeneous(4, 0.0, 0.03, 0.3)
    key = StreamKey(5)
    low = simulate_loss_pairs(market, PortfolioSpec([0, 1], [0.6, 0.7]), PortfolioSpec([2, 3], 0.7), 2000, key)
    high = simulate_loss_pairs(market, PortfolioSpec([0, 1], [0.6, 0.95]), PortfolioSpec([2, 3], 0.7), 2000, key)
    # equal face-value weights keep the comparison about the loss alone
    low_eq = simulate_loss_pairs(market, PortfolioSpec([0, 1], [0.6, 0.7], [0.5, 0.5]),
                                 PortfolioSpec([2, 3], 0.7), 2000, key)
    high_eq = simulate_loss_pairs(market, PortfolioSpec([0, 1], [0.6, 0.95], [0.5, 0.5]),
                                  PortfolioSpec([2, 3], 0.7), 2000, key)
    assert np.all(high_eq.l1 >= low_eq.l1)
    np.testing.assert_array_equal(low.l2, high.l2)


def test_shuffle_within_portfolio_invariant():
    market = MarketParams(np.linspace(-2e-3, 1e-3, 6), np.linspace(0.01, 0.04, 6),
                          np.eye(6) * 0.7 + 0.3, tail_n=5)
    key = StreamKey(21)
    a = simulate_loss_pairs(market, PortfolioSpec([0, 2, 4], [0.6, 0.7, 0.8]),
                            PortfolioSpec([1, 3, 5], [0.65, 0.75, 0.85]), 1000, key)
    b = simulate_loss_pairs(market, PortfolioSpec([4, 0, 2], [0.8, 0.6, 0.7]),
                            PortfolioSpec([5, 3, 1], [0.85, 0.75, 0.65]), 1000, key)
    np.testing.assert_allclose(a.l1, b.l1, rtol=0, atol=1e-15)
    np.testing.assert_allclose(a.l2, b.l2, rtol=0, atol=1e-15)


def test_blocks_do_not_change_distribution_shape():
    market = MarketParams.homogeneous(4, 0.0, 0.03, 0.3)
    s = simulate_loss_pairs(market, PortfolioSpec([0, 1], 0.75), PortfolioSpec([2, 3], 0.75),
                            2500, StreamKey(1), block_size=1000)
    assert len(s) == 2500


def _nondefault_probability(mu, sigma, lev, c, K, T=252):
    """P[all K names survive] under one-factor Gaussian correlation, by quadrature."""
    thr = (math.log(lev) - (mu - sigma ** 2 / 2) * T) / (sigma * math.sqrt(T))

    def integrand(f):
        p = stats.norm.cdf((thr - math.sqrt(c) * f) / math.sqrt(1 - c))
        return stats.norm.pdf(f) * (1 - p) ** K

    return integrate.quad(integrand, -12, 12, epsabs=1e-12)[0]


def _fig3_market(mu):
    return MarketParams.homogeneous(100, mu, 0.02, 0.3)


def _nondefault(mu, n=200_000, seed=0):
    p = PortfolioSpec(range(50), 0.75)
    q = PortfolioSpec(range(50, 100), 0.75)
    s = simulate_loss_pairs(_fig3_market(mu), p, q, n, StreamKey(seed))
    return s.nondefault_fraction()[0]


def test_strong_negative_drift_always_defaults():
    assert _nondefault(-3e-3) < 1e-4


def test_nondefault_matches_quadrature():
    expect = _nondefault_probability(1e-3, 0.02, 0.75, 0.3, 50)
    se = math.sqrt(expect * (1 - expect) / 200_000)
    assert abs(_nondefault(1e-3) - expect) < 4 * se


@pytest.mark.xfail(strict=True, reason="reference 39.1% is not attainable with the stated model; "
                                       "exact value is 30.98%, see README 'Known deviations'")
def test_nondefault_paper_value():
    assert abs(_nondefault(1e-3) - 0.391) < 0.01
