"""Price-history ingestion, annual-window estimation and portfolio drawing.

CSV layout: header ``date,<ticker1>,<ticker2>,...``; ISO-8601 dates in
strictly increasing order; positive decimal prices; an empty cell is a
missing price. One file per market.
"""
from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .merton import PortfolioSpec
from .rng import NotPositiveDefinite, StreamKey, cholesky_factor

log = logging.getLogger(__name__)

WINDOW_DAYS = 252
MIN_OBSERVATIONS = 2 * WINDOW_DAYS
MIN_WINDOW_DAYS = 200
MAX_MISSING_FRACTION = 0.05
DIAGONAL_LOADING = 1e-6


class MarketDataError(ValueError):
    pass


class MalformedCsv(MarketDataError):
    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"line {line}: {reason}")


class NonPositivePrice(MarketDataError):
    def __init__(self, ticker: str, date, price: float):
        self.ticker = ticker
        self.date = date
        super().__init__(f"non-positive price {price} for {ticker} on {date}")


class TooShortHistory(MarketDataError):
    def __init__(self, ticker: str, n_obs: int, required: int):
        self.ticker = ticker
        super().__init__(f"{ticker} has {n_obs} returns, {required} required")


class WindowRejected(MarketDataError):
    pass


class InsufficientUniverse(MarketDataError):
    pass


@dataclass
class ReturnPanel:
    dates: list
    tickers: list
    returns: np.ndarray
    dropped_rows: int = 0
    excluded_tickers: list = field(default_factory=list)

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=float)
        if self.returns.shape != (len(self.dates), len(self.tickers)):
            raise ValueError("returns shape does not match dates x tickers")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")

    def __len__(self):
        return len(self.dates)

    def select(self, rows) -> "ReturnPanel":
        rows = np.asarray(rows)
        return ReturnPanel([self.dates[i] for i in rows], list(self.tickers),
                           self.returns[rows], self.dropped_rows, list(self.excluded_tickers))


def _parse_price(cell: str, line: int, ticker: str, date):
    cell = cell.strip()
    if not cell:
        return math.nan
    try:
        value = float(cell)
    except ValueError:
        raise MalformedCsv(line, f"bad price {cell!r} for {ticker}") from None
    if not math.isfinite(value):
        raise MalformedCsv(line, f"bad price {cell!r} for {ticker}")
    if value <= 0:
        raise NonPositivePrice(ticker, date, value)
    return value


def read_price_csv(path):
    """Parse a price file into ``(dates, tickers, prices)``; NaN marks missing."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedCsv(1, "empty file") from None
        header = [h.strip() for h in header]
        if not header or header[0].lower() != "date" or len(header) < 2:
            raise MalformedCsv(1, "header must be 'date,<ticker>,...'")
        tickers = header[1:]
        if len(set(tickers)) != len(tickers):
            raise MalformedCsv(1, "duplicate ticker in header")
        dates, rows = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedCsv(line, f"expected {len(header)} fields, got {len(row)}")
            try:
                date = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise MalformedCsv(line, f"bad date {row[0]!r}") from None
            if dates and date <= dates[-1]:
                raise MalformedCsv(line, f"date {date} is not after {dates[-1]}")
            dates.append(date)
            rows.append([_parse_price(c, line, t, date) for c, t in zip(row[1:], tickers)])
    prices = np.array(rows, dtype=float).reshape(len(dates), len(tickers))
    return dates, tickers, prices


def panel_from_prices(dates, tickers, prices, *, max_missing=MAX_MISSING_FRACTION,
                      min_observations=MIN_OBSERVATIONS) -> ReturnPanel:
    """Log-returns from a price table after the missing-data rules.

    Tickers missing more than ``max_missing`` of their prices are dropped;
    then every date with a remaining gap is deleted before differencing.
    """
    prices = np.asarray(prices, dtype=float)
    missing = np.isnan(prices).mean(axis=0) if len(dates) else np.zeros(len(tickers))
    keep = missing <= max_missing
    excluded = [t for t, k in zip(tickers, keep) if not k]
    for t in excluded:
        log.warning("excluding %s: %.1f%% of prices missing", t, 100 * missing[tickers.index(t)])
    tickers = [t for t, k in zip(tickers, keep) if k]
    prices = prices[:, keep]
    complete = ~np.isnan(prices).any(axis=1)
    dropped = int((~complete).sum())
    dates = [d for d, c in zip(dates, complete) if c]
    prices = prices[complete]
    returns = np.diff(np.log(prices), axis=0)
    if tickers and returns.shape[0] < min_observations:
        raise TooShortHistory(tickers[0], returns.shape[0], min_observations)
    return ReturnPanel(dates[1:], tickers, returns, dropped, excluded)


def load_price_csv(path, **kwargs) -> ReturnPanel:
    dates, tickers, prices = read_price_csv(path)
    return panel_from_prices(dates, tickers, prices, **kwargs)


def write_price_csv(path, dates, tickers, prices) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *tickers])
        for d, row in zip(dates, prices):
            w.writerow([d.isoformat(), *("" if np.isnan(p) else repr(float(p)) for p in row)])


def align_panels(a: ReturnPanel, b: ReturnPanel) -> ReturnPanel:
    """Join two markets on their common dates (ticker names get prefixed if clashing)."""
    common = sorted(set(a.dates) & set(b.dates))
    ia = {d: i for i, d in enumerate(a.dates)}
    ib = {d: i for i, d in enumerate(b.dates)}
    ra = a.returns[[ia[d] for d in common]]
    rb = b.returns[[ib[d] for d in common]]
    tickers = list(a.tickers) + list(b.tickers)
    if len(set(tickers)) != len(tickers):
        tickers = [f"A:{t}" for t in a.tickers] + [f"B:{t}" for t in b.tickers]
    return ReturnPanel(common, tickers, np.hstack([ra, rb]))


@dataclass
class WindowEstimate:
    window_start: int
    mu: np.ndarray
    sigma: np.ndarray
    corr: np.ndarray
    mean_offdiag: float
    active: np.ndarray
    n_days: int = WINDOW_DAYS

    @property
    def active_indices(self) -> np.ndarray:
        return np.flatnonzero(self.active)


def estimate_window(panel: ReturnPanel, start: int, length: int = WINDOW_DAYS,
                    min_days: int = MIN_WINDOW_DAYS) -> WindowEstimate:
    """Drift, volatility and correlation estimates on one annual window.

    The drift adds back ``sigma**2 / 2`` so it is the drift of the asset
    value process, not of its logarithm. Tickers with zero variance in the
    window are marked inactive and kept out of the correlation matrix.
    """
    if start < 0 or start + length > len(panel):
        raise IndexError(f"window [{start}, {start + length}) outside panel of {len(panel)} days")
    x = panel.returns[start:start + length]
    ok = ~np.isnan(x).any(axis=1)
    if ok.sum() < min_days:
        raise WindowRejected(f"window at {start} has only {int(ok.sum())} complete days")
    x = x[ok]
    sigma = x.std(axis=0, ddof=1)
    mu = x.mean(axis=0) + 0.5 * sigma ** 2
    active = sigma > 0
    if not active.all():
        names = [panel.tickers[i] for i in np.flatnonzero(~active)]
        log.warning("zero variance in window %d, excluded from correlations: %s", start, names)
    m = x.shape[1]
    corr = np.eye(m)
    idx = np.flatnonzero(active)
    if idx.size > 1:
        sub = np.corrcoef(x[:, idx], rowvar=False)
        sub = 0.5 * (sub + sub.T)
        np.fill_diagonal(sub, 1.0)
        corr[np.ix_(idx, idx)] = np.clip(sub, -1.0, 1.0)
    iu = np.triu_indices(idx.size, k=1)
    mean_offdiag = float(corr[np.ix_(idx, idx)][iu].mean()) if idx.size > 1 else 0.0
    return WindowEstimate(start, mu, sigma, corr, mean_offdiag, active, int(ok.sum()))


def regularize_corr(corr, eps: float = DIAGONAL_LOADING) -> np.ndarray:
    """Return ``corr`` if it factors, else ``(1 - eps) C + eps I``."""
    try:
        cholesky_factor(corr, tol=0.0)
        return corr
    except NotPositiveDefinite:
        return (1 - eps) * np.asarray(corr) + eps * np.eye(len(corr))


def partition_submarkets(universe, key: StreamKey):
    """Randomly split ``universe`` into two halves (sizes differ by at most one)."""
    universe = list(universe)
    if len(universe) < 2:
        raise InsufficientUniverse("need at least two names to split a market")
    perm = key.generator().permutation(len(universe))
    half = (len(universe) + 1) // 2
    return [universe[i] for i in perm[:half]], [universe[i] for i in perm[half:]]


def _is_split(universe) -> bool:
    return (isinstance(universe, tuple) and len(universe) == 2
            and all(not np.isscalar(u) for u in universe))


def draw_portfolio_pair(universe, K: int, leverage_bounds=(0.6, 0.9),
                        key: StreamKey | None = None):
    """Two disjoint size-``K`` portfolios with uniform random leverages.

    ``universe`` is either one sequence of company indices or a tuple
    ``(A, B)`` of disjoint sub-universes; in the latter case portfolio 1 is
    drawn from ``A`` only and portfolio 2 from ``B`` only.
    """
    if K < 1:
        raise ValueError("portfolio size must be >= 1")
    rng = key.generator()
    if _is_split(universe):
        a, b = (list(u) for u in universe)
        if len(a) < K or len(b) < K:
            raise InsufficientUniverse(f"sub-markets of {len(a)} and {len(b)} names, K={K}")
        m1 = [a[i] for i in rng.choice(len(a), K, replace=False)]
        m2 = [b[i] for i in rng.choice(len(b), K, replace=False)]
    else:
        u = list(universe)
        if len(u) < 2 * K:
            raise InsufficientUniverse(f"{len(u)} names cannot host two portfolios of {K}")
        pick = rng.choice(len(u), 2 * K, replace=False)
        m1 = [u[i] for i in pick[:K]]
        m2 = [u[i] for i in pick[K:]]
    lo, hi = leverage_bounds
    if not 0 < lo <= hi <= 1:
        raise ValueError("leverage bounds must satisfy 0 < lo <= hi <= 1")
    lev = rng.uniform(lo, hi, size=2 * K) if hi > lo else np.full(2 * K, float(lo))
    return PortfolioSpec(m1, lev[:K]), PortfolioSpec(m2, lev[K:])


def trading_days(n: int, start=dt.date(1993, 1, 4)) -> list:
    days = np.busday_offset(np.datetime64(start), np.arange(n), roll="forward")
    return [d.item() for d in days]


def periodic_returns(mu, sigma, corr, n_days: int, key: StreamKey,
                     period: int = WINDOW_DAYS) -> np.ndarray:
    """Synthetic daily log-returns whose every ``period``-day window has the
    exact target moments.

    One block of ``period`` days is whitened to identity sample covariance,
    coloured to ``diag(sigma) C diag(sigma)`` and shifted to mean
    ``mu - sigma**2/2``; the block then repeats. Any window of ``period``
    consecutive days is a cyclic shift of the block, so
    :func:`estimate_window` returns ``mu``, ``sigma``, ``corr`` exactly.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    m = mu.shape[0]
    if period <= m + 1:
        raise ValueError("period must exceed the number of tickers + 1")
    z = key.generator().standard_normal((period, m))
    z -= z.mean(axis=0)
    s = np.cov(z, rowvar=False).reshape(m, m)
    z = np.linalg.solve(np.linalg.cholesky(s), z.T).T
    x = z @ cholesky_factor(corr).T * sigma + (mu - 0.5 * sigma ** 2)
    reps = -(-n_days // period)
    return np.tile(x, (reps, 1))[:n_days]


def gbm_returns(mu, sigma, corr, n_days: int, key: StreamKey) -> np.ndarray:
    """I.i.d. Gaussian daily log-returns of correlated geometric Brownian motions."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    eps = key.generator().standard_normal((n_days, mu.shape[0]))
    return eps @ cholesky_factor(corr).T * sigma + (mu - 0.5 * sigma ** 2)


def prices_from_returns(returns, p0: float = 100.0) -> np.ndarray:
    returns = np.asarray(returns, dtype=float)
    logp = np.vstack([np.zeros((1, returns.shape[1])), np.cumsum(returns, axis=0)])
    return p0 * np.exp(logp)
