"""Canned studies: homogeneous and heterogeneous copulas, loss-correlation
sweeps, and the empirical time-averaged pipeline.

Every study is split into independent work units (one per portfolio pair
or per annual window). A unit derives all of its randomness from
``(master_seed, unit label)`` and returns plain counts; the reducer merges
them in unit order, so results do not depend on the number of workers.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .copula import (
    CopulaHistogram,
    DeviationGrid,
    ZeroVariance,
    copula_counts,
    deviation,
    gaussian_copula,
    pearson_correlation,
    rank_transform,
)
from .market_data import (
    WINDOW_DAYS,
    ReturnPanel,
    WindowRejected,
    align_panels,
    draw_portfolio_pair,
    estimate_window,
    partition_submarkets,
    regularize_corr,
)
from .merton import PortfolioSpec, simulate_loss_pairs
from .rng import INFINITY, MarketParams, StreamKey, derive_stream_id, homogeneous_corr

log = logging.getLogger(__name__)

MODES = ("homogeneous", "heterogeneous_sigma", "empirical")
PAIRINGS = ("cross", "same-a", "same-b")
SWEEP_K_LIST = (1, 2, 3, 4, 7, 10, 15, 25, 50, 100, 150)
MAX_WINDOW_ATTEMPTS = 100


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _is_bounds(x) -> bool:
    return isinstance(x, (tuple, list)) and len(x) == 2


def _as_list(x) -> list:
    return list(x) if isinstance(x, (tuple, list)) else [x]


def pd_lower_bound(n: int) -> float:
    """Smallest admissible homogeneous correlation (exclusive) for ``n`` names."""
    return -1.0 / (n - 1) if n > 1 else -1.0


@dataclass
class ExperimentConfig:
    mode: str = "homogeneous"
    c_a: float | list = 0.0
    mu: float = 1e-3
    sigma: float | tuple = 0.03
    leverage: float | tuple = 0.75
    K: int | list = 50
    tail_n: float = INFINITY
    n_pairs: int = 1000
    n_sims: int = 10_000
    n_iterations: int = 20_000
    b: int = 20
    master_seed: int = 0
    horizon_T: float = 252.0
    pdf_bins: int = 50

    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}")
        if self.n_sims < 2:
            raise ConfigError("n_sims", "must be >= 2")
        if self.n_pairs < 1:
            raise ConfigError("n_pairs", "must be >= 1")
        if self.n_iterations < 1:
            raise ConfigError("n_iterations", "must be >= 1")
        if self.b < 1:
            raise ConfigError("b", "must be >= 1")
        if self.pdf_bins < 1:
            raise ConfigError("pdf_bins", "must be >= 1")
        if not self.horizon_T > 0:
            raise ConfigError("horizon_T", "must be positive")
        ks = _as_list(self.K)
        if not ks or any(int(k) != k or k < 1 for k in ks):
            raise ConfigError("K", "portfolio sizes must be integers >= 1")
        grid = _as_list(self.c_a)
        if not grid:
            raise ConfigError("c_a", "grid must not be empty")
        if self.tail_n != INFINITY and (self.tail_n < 1 or int(self.tail_n) != self.tail_n):
            raise ConfigError("tail_n", "must be a positive integer or inf")
        for name in ("sigma", "leverage"):
            val = getattr(self, name)
            lo, hi = val if _is_bounds(val) else (val, val)
            if lo > hi:
                raise ConfigError(name, "lower bound exceeds upper bound")
            if name == "sigma" and lo < 0:
                raise ConfigError(name, "volatility must be >= 0")
            if name == "leverage" and not (0 < lo and hi <= 1):
                raise ConfigError(name, "leverage must lie in (0, 1]")
        if self.mode != "empirical":
            n = 2 * max(ks)
            for c in grid:
                if not pd_lower_bound(n) < c <= 1:
                    raise ConfigError(
                        "c_a",
                        f"c_a={c} with K={max(ks)} gives an indefinite {n}x{n} matrix; "
                        f"need {pd_lower_bound(n):.4g} < c_a <= 1",
                    )
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["tail_n"] == INFINITY:
            d["tail_n"] = "inf"
        return d


@dataclass
class LossPdf:
    """Loss histogram on ``(0, 1]`` plus the separate point mass at zero."""

    edges: np.ndarray
    density: np.ndarray
    point_mass: float

    @classmethod
    def from_counts(cls, counts, n_zero: int, n_total: int) -> "LossPdf":
        counts = np.asarray(counts, dtype=float)
        nb = counts.shape[0]
        width = 1.0 / nb
        density = counts / (n_total * width) if n_total else np.zeros(nb)
        return cls(np.linspace(0.0, 1.0, nb + 1), density, n_zero / n_total if n_total else 0.0)

    def continuous_mass(self) -> float:
        return float(self.density @ np.diff(self.edges))


def _positive_loss_counts(losses, n_bins: int):
    losses = np.asarray(losses, dtype=float)
    pos = losses[losses > 0]
    idx = np.clip(np.ceil(pos * n_bins).astype(np.int64) - 1, 0, n_bins - 1)
    return np.bincount(idx, minlength=n_bins), int(losses.size - pos.size)


def loss_pdf(losses, n_bins: int = 50) -> LossPdf:
    losses = np.asarray(losses, dtype=float)
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if losses.size and (losses.min() < 0 or losses.max() > 1):
        raise ValueError("losses must lie in [0, 1]")
    counts, n_zero = _positive_loss_counts(losses, n_bins)
    return LossPdf.from_counts(counts, n_zero, losses.size)


@dataclass
class UnitOutcome:
    """What one portfolio pair contributes to a study."""

    index: int
    n_sims: int
    corr: float | None
    n_zero: tuple
    counts: np.ndarray | None = None
    pdf_counts: tuple | None = None
    asset_corr: float = math.nan
    window_corr: float = math.nan


@dataclass
class StudyResult:
    averaged_copula: CopulaHistogram
    gaussian_ref: CopulaHistogram | None
    deviation: DeviationGrid | None
    avg_loss_corr: float | None
    loss_corr_stderr: float | None
    nondefault_prob: tuple
    nondefault_stderr: tuple
    loss_pdf: tuple
    skipped_pairs: int
    n_units: int
    avg_asset_corr: float
    avg_window_corr: float = math.nan

    def summary(self) -> dict:
        def num(x):
            return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)

        return {
            "avg_asset_corr": num(self.avg_asset_corr),
            "avg_window_corr": num(self.avg_window_corr),
            "avg_loss_corr": num(self.avg_loss_corr),
            "loss_corr_stderr": num(self.loss_corr_stderr),
            "nondefault_prob": [float(p) for p in self.nondefault_prob],
            "nondefault_stderr": [float(p) for p in self.nondefault_stderr],
            "skipped_pairs": int(self.skipped_pairs),
            "n_units": int(self.n_units),
            "max_abs_deviation": None if self.deviation is None else self.deviation.max_abs(),
        }


@dataclass
class CurvePoint:
    c_a: float
    corr: float | None
    stderr: float | None
    n_used: int


@dataclass
class LossCorrCurve:
    K: int
    points: list = field(default_factory=list)

    def values(self) -> np.ndarray:
        return np.array([math.nan if p.corr is None else p.corr for p in self.points])

    def stderrs(self) -> np.ndarray:
        return np.array([math.nan if p.stderr is None else p.stderr for p in self.points])

    def grid(self) -> np.ndarray:
        return np.array([p.c_a for p in self.points])


# -- work units --------------------------------------------------------------

def _evaluate_pair(market, p1, p2, cfg, key, with_copula=True) -> UnitOutcome:
    sample = simulate_loss_pairs(market, p1, p2, cfg.n_sims, key.child("sims"))
    try:
        corr = pearson_correlation(sample.l1, sample.l2)
    except ZeroVariance:
        corr = None
    n_zero = (int(np.count_nonzero(sample.l1 == 0)), int(np.count_nonzero(sample.l2 == 0)))
    out = UnitOutcome(0, cfg.n_sims, corr, n_zero)
    if with_copula:
        u = rank_transform(sample.l1, key.child("ties", 1))
        v = rank_transform(sample.l2, key.child("ties", 2))
        out.counts = copula_counts(u, v, cfg.b)
        out.pdf_counts = (
            _positive_loss_counts(sample.l1, cfg.pdf_bins)[0],
            _positive_loss_counts(sample.l2, cfg.pdf_bins)[0],
        )
    return out


def _draw(bounds_or_value, n, rng):
    if _is_bounds(bounds_or_value):
        lo, hi = bounds_or_value
        return rng.uniform(lo, hi, size=n) if hi > lo else np.full(n, float(lo))
    return np.full(n, float(bounds_or_value))


def _synthetic_unit(cfg: ExperimentConfig, K: int, c_a: float, key: StreamKey,
                    with_copula: bool) -> UnitOutcome:
    n = 2 * K
    rng = key.child("parameters").generator()
    sigma = _draw(cfg.sigma, n, rng)
    leverage = _draw(cfg.leverage, n, rng)
    market = MarketParams(np.full(n, float(cfg.mu)), sigma, homogeneous_corr(n, c_a),
                          cfg.tail_n, cfg.horizon_T)
    p1 = PortfolioSpec(range(K), leverage[:K])
    p2 = PortfolioSpec(range(K, n), leverage[K:])
    out = _evaluate_pair(market, p1, p2, cfg, key, with_copula)
    out.asset_corr = out.window_corr = float(c_a)
    return out


def _study_unit(ctx, item):
    cfg, label = ctx
    i = item
    key = StreamKey(cfg.master_seed, derive_stream_id(label, "pair", i))
    out = _synthetic_unit(cfg, int(cfg.K), float(cfg.c_a), key, True)
    out.index = i
    return out


def _sweep_unit(ctx, item):
    cfg = ctx
    K, c_a, i = item
    # same streams for every c_a: common random numbers along each curve
    key = StreamKey(cfg.master_seed, derive_stream_id("sweep", K, "pair", i))
    out = _synthetic_unit(cfg, K, c_a, key, False)
    out.index = i
    return out


_WORKER_CONTEXT = None


def _set_context(ctx):
    global _WORKER_CONTEXT
    _WORKER_CONTEXT = ctx


def _call_with_context(fn, item):
    return fn(_WORKER_CONTEXT, item)


def parallel_map(fn, items, ctx=None, workers: int = 1):
    """``[fn(ctx, item) for item in items]``, optionally on a process pool.

    Results come back in item order whatever the pool size.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(ctx, it) for it in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, initializer=_set_context,
                             initargs=(ctx,)) as pool:
        return list(pool.map(_call_with_context, [fn] * len(items), items, chunksize=chunk))


# -- reduction ----------------------------------------------------------------

def _mean_stderr(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return None, None
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return mean, se


def reduce_outcomes(outcomes, b: int, pdf_bins: int) -> StudyResult:
    outcomes = sorted(outcomes, key=lambda o: o.index)
    counts = np.zeros((b, b), dtype=np.int64)
    pdf = [np.zeros(pdf_bins, dtype=np.int64), np.zeros(pdf_bins, dtype=np.int64)]
    zeros = np.zeros(2, dtype=np.int64)
    total = 0
    corrs = []
    nd = [[], []]
    for o in outcomes:
        counts += o.counts
        pdf[0] += o.pdf_counts[0]
        pdf[1] += o.pdf_counts[1]
        zeros += o.n_zero
        total += o.n_sims
        nd[0].append(o.n_zero[0] / o.n_sims)
        nd[1].append(o.n_zero[1] / o.n_sims)
        if o.corr is not None:
            corrs.append(o.corr)
    averaged = CopulaHistogram(counts / total, b, total, "averaged")
    avg_corr, corr_se = _mean_stderr(corrs)
    ref = dev = None
    if avg_corr is not None:
        c = float(np.clip(avg_corr, -1 + 1e-9, 1 - 1e-9))
        ref = gaussian_copula(c, b)
        dev = deviation(averaged, ref)
    nd_mean = tuple(float(z / total) for z in zeros)
    nd_se = tuple(_mean_stderr(x)[1] for x in nd)
    pdfs = tuple(LossPdf.from_counts(pdf[p], int(zeros[p]), total) for p in range(2))
    return StudyResult(
        averaged_copula=averaged,
        gaussian_ref=ref,
        deviation=dev,
        avg_loss_corr=avg_corr,
        loss_corr_stderr=corr_se,
        nondefault_prob=nd_mean,
        nondefault_stderr=nd_se,
        loss_pdf=pdfs,
        skipped_pairs=len(outcomes) - len(corrs),
        n_units=len(outcomes),
        avg_asset_corr=float(np.mean([o.asset_corr for o in outcomes])),
        avg_window_corr=float(np.mean([o.window_corr for o in outcomes])),
    )


# -- studies ------------------------------------------------------------------

def _require_scalar(cfg, *names):
    for name in names:
        val = getattr(cfg, name)
        if isinstance(val, (list, tuple)):
            raise ConfigError(name, "this study needs a single value")


def run_homogeneous_study(cfg: ExperimentConfig, workers: int = 1) -> StudyResult:
    """Averaged copula, Gaussian reference and loss statistics for one parameter set.

    The market has ``2K`` names with common correlation ``c_a``; portfolio 1
    holds the first ``K``, portfolio 2 the rest. A bounds tuple for
    ``leverage`` draws leverages per pair.
    """
    cfg.validate()
    if cfg.mode != "homogeneous":
        raise ConfigError("mode", "expected homogeneous")
    _require_scalar(cfg, "c_a", "K", "sigma")
    outcomes = parallel_map(_study_unit, range(cfg.n_pairs), (cfg, "homogeneous"), workers)
    return reduce_outcomes(outcomes, cfg.b, cfg.pdf_bins)


def run_heterogeneous_sigma_study(cfg: ExperimentConfig, workers: int = 1) -> StudyResult:
    """As the homogeneous study, with volatilities redrawn per pair from bounds."""
    cfg.validate()
    if cfg.mode != "heterogeneous_sigma":
        raise ConfigError("mode", "expected heterogeneous_sigma")
    if not _is_bounds(cfg.sigma):
        raise ConfigError("sigma", "heterogeneous_sigma needs (low, high) bounds")
    _require_scalar(cfg, "c_a", "K")
    outcomes = parallel_map(_study_unit, range(cfg.n_pairs), (cfg, "heterogeneous_sigma"), workers)
    return reduce_outcomes(outcomes, cfg.b, cfg.pdf_bins)


def run_loss_corr_sweep(cfg: ExperimentConfig, workers: int = 1) -> list:
    """One loss-correlation curve over the ``c_a`` grid per portfolio size."""
    cfg.validate()
    ks = [int(k) for k in _as_list(cfg.K)]
    grid = [float(c) for c in _as_list(cfg.c_a)]
    items = [(K, c, i) for K in ks for c in grid for i in range(cfg.n_pairs)]
    outcomes = parallel_map(_sweep_unit, items, cfg, workers)
    curves = []
    pos = 0
    for K in ks:
        curve = LossCorrCurve(K)
        for c in grid:
            chunk = outcomes[pos:pos + cfg.n_pairs]
            pos += cfg.n_pairs
            used = [o.corr for o in chunk if o.corr is not None]
            mean, se = _mean_stderr(used)
            curve.points.append(CurvePoint(c, mean, se, len(used)))
        curves.append(curve)
    return curves


@dataclass
class EmpiricalResult:
    study: StudyResult
    size_curve: list


def _market_universe(panel_a, panel_b, pairing, key):
    if pairing == "cross":
        if panel_b is None:
            raise ConfigError("pairing", "cross pairing needs two markets")
        panel = align_panels(panel_a, panel_b)
        na = len(panel_a.tickers)
        return panel, (list(range(na)), list(range(na, len(panel.tickers))))
    if pairing == "same-b":
        if panel_b is None:
            raise ConfigError("pairing", "same-b pairing needs a second market")
        panel = panel_b
    else:
        panel = panel_a
    halves = partition_submarkets(range(len(panel.tickers)), key.child("partition"))
    return panel, halves


def _empirical_unit(ctx, item):
    cfg, panel, halves, leverage_bounds = ctx
    K, i, with_copula = item
    key = StreamKey(cfg.master_seed, derive_stream_id("empirical", K, "iteration", i))
    rng = key.child("window").generator()
    n_starts = len(panel) - WINDOW_DAYS + 1
    for _ in range(MAX_WINDOW_ATTEMPTS):
        start = int(rng.integers(0, n_starts))
        try:
            est = estimate_window(panel, start)
            break
        except WindowRejected:
            continue
    else:
        raise WindowRejected(f"no usable window after {MAX_WINDOW_ATTEMPTS} attempts")
    a = [t for t in halves[0] if est.active[t]]
    b = [t for t in halves[1] if est.active[t]]
    p1, p2 = draw_portfolio_pair((a, b), K, leverage_bounds, key.child("portfolios"))
    members = np.array(p1.members + p2.members)
    corr = regularize_corr(est.corr[np.ix_(members, members)])
    market = MarketParams(est.mu[members], est.sigma[members], corr, cfg.tail_n, cfg.horizon_T)
    q1 = PortfolioSpec(range(K), p1.leverages)
    q2 = PortfolioSpec(range(K, 2 * K), p2.leverages)
    out = _evaluate_pair(market, q1, q2, cfg, key, with_copula)
    out.index = i
    out.asset_corr = float(corr[:K, K:].mean())
    out.window_corr = est.mean_offdiag
    return out


def run_empirical_study(cfg: ExperimentConfig, panel_a: ReturnPanel,
                        panel_b: ReturnPanel | None = None, pairing: str = "cross",
                        k_list=None, workers: int = 1) -> EmpiricalResult:
    """Time-averaged copula and loss statistics of portfolios drawn from data.

    Each of ``n_iterations`` units picks a random annual window, estimates
    drifts, volatilities and correlations on it, draws two portfolios with
    uniform leverages from the two sub-markets and simulates their losses.
    ``pairing='cross'`` takes portfolio 1 from market A and portfolio 2 from
    market B; ``same-a``/``same-b`` split one market into fixed halves.
    ``k_list`` adds one averaged loss-correlation point per portfolio size.
    """
    cfg.validate()
    if pairing not in PAIRINGS:
        raise ConfigError("pairing", f"must be one of {PAIRINGS}")
    _require_scalar(cfg, "K")
    base = StreamKey(cfg.master_seed, derive_stream_id("empirical"))
    panel, halves = _market_universe(panel_a, panel_b, pairing, base)
    if len(panel) < WINDOW_DAYS:
        raise ConfigError("market", f"only {len(panel)} common trading days")
    lev = cfg.leverage if _is_bounds(cfg.leverage) else (cfg.leverage, cfg.leverage)
    ctx = (cfg, panel, halves, tuple(lev))
    K = int(cfg.K)
    outcomes = parallel_map(_empirical_unit, [(K, i, True) for i in range(cfg.n_iterations)],
                            ctx, workers)
    study = reduce_outcomes(outcomes, cfg.b, cfg.pdf_bins)

    curve = []
    for k in (k_list or []):
        k = int(k)
        if k == K:
            chunk = outcomes
        else:
            chunk = parallel_map(_empirical_unit,
                                 [(k, i, False) for i in range(cfg.n_iterations)], ctx, workers)
        used = [o.corr for o in chunk if o.corr is not None]
        mean, se = _mean_stderr(used)
        c_a = float(np.mean([o.asset_corr for o in chunk]))
        curve.append(LossCorrCurve(k, [CurvePoint(c_a, mean, se, len(used))]))
    return EmpiricalResult(study, curve)
