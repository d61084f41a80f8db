import numpy as np
import pytest

from credit_copula.market_data import (
    periodic_returns,
    prices_from_returns,
    trading_days,
    write_price_csv,
)
from credit_copula.rng import StreamKey, homogeneous_corr


@pytest.fixture
def price_csv(tmp_path):
    """Write a price table and return its path."""

    def make(prices, tickers=None, name="prices.csv", start_day=0):
        prices = np.asarray(prices, dtype=float)
        if prices.ndim == 1:
            prices = prices[:, None]
        tickers = tickers or [f"T{i:03d}" for i in range(prices.shape[1])]
        dates = trading_days(prices.shape[0] + start_day)[start_day:]
        path = tmp_path / name
        write_price_csv(path, dates, tickers, prices)
        return path

    return make


@pytest.fixture
def homogeneous_prices():
    """Prices whose every 252-day window has exactly the given moments."""

    def make(n_tickers, mu, sigma, c_a, n_days=756, seed=0):
        r = periodic_returns(np.full(n_tickers, mu), np.full(n_tickers, sigma),
                             homogeneous_corr(n_tickers, c_a), n_days, StreamKey(seed))
        return prices_from_returns(r)

    return make


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
