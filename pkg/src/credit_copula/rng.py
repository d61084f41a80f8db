"""Reproducible sampling of correlated, optionally heavy-tailed horizon returns.

Every random draw in the package goes through a :class:`StreamKey`. A key is
turned into a Philox (counter-based) generator, so any work unit can rebuild
its own stream from ``(master_seed, stream_id)`` alone.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

INFINITY = math.inf
"""Symbolic tail parameter: pure Gaussian returns, no chi-square mixing."""

_MASK64 = (1 << 64) - 1


class NotPositiveDefinite(ValueError):
    """Raised when a correlation matrix has a negative Cholesky pivot."""

    def __init__(self, pivot: int, value: float):
        self.pivot = pivot
        self.value = value
        super().__init__(
            f"correlation matrix is not positive semi-definite "
            f"(pivot {pivot}: {value:.3g})"
        )


def derive_stream_id(*parts) -> int:
    """Hash experiment/pair/replication labels into a 64-bit stream id."""
    text = "\x1f".join(repr(p) for p in parts).encode()
    digest = hashlib.blake2b(text, digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class StreamKey:
    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "master_seed", int(self.master_seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def child(self, *parts) -> "StreamKey":
        """Sub-stream for a labelled piece of work below this one."""
        return StreamKey(self.master_seed, derive_stream_id(self.stream_id, *parts))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence([self.master_seed, self.stream_id])
        return np.random.Generator(np.random.Philox(seq))


def homogeneous_corr(n: int, c_a: float) -> np.ndarray:
    corr = np.full((n, n), float(c_a))
    np.fill_diagonal(corr, 1.0)
    return corr


@dataclass
class MarketParams:
    """Drifts, volatilities and correlations of the whole company universe.

    ``mu`` is per day, ``sigma`` per square-root day; ``tail_n`` is either a
    positive integer or :data:`INFINITY`.
    """

    mu: np.ndarray
    sigma: np.ndarray
    corr: np.ndarray
    tail_n: float = INFINITY
    horizon_T: float = 252.0
    _chol_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        self.sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        self.corr = np.atleast_2d(np.asarray(self.corr, dtype=float))
        n = self.mu.shape[0]
        if self.sigma.shape != (n,) or self.corr.shape != (n, n):
            raise ValueError("mu, sigma and corr dimensions disagree")
        if np.any(self.sigma < 0):
            raise ValueError("volatilities must be non-negative")
        if not self.horizon_T > 0:
            raise ValueError("horizon_T must be positive")
        if not np.allclose(self.corr, self.corr.T, rtol=0, atol=1e-12):
            raise ValueError("correlation matrix is not symmetric")
        if not np.allclose(np.diag(self.corr), 1.0, rtol=0, atol=1e-12):
            raise ValueError("correlation matrix must have unit diagonal")
        if np.any(np.abs(self.corr) > 1 + 1e-12):
            raise ValueError("correlation entries must lie in [-1, 1]")
        if self.tail_n != INFINITY:
            if self.tail_n < 1 or int(self.tail_n) != self.tail_n:
                raise ValueError("tail_n must be a positive integer or INFINITY")
            self.tail_n = int(self.tail_n)

    @property
    def size(self) -> int:
        return self.mu.shape[0]

    @classmethod
    def homogeneous(cls, n, mu, sigma, c_a, tail_n=INFINITY, horizon_T=252.0):
        return cls(
            mu=np.full(n, float(mu)),
            sigma=np.full(n, float(sigma)) if np.isscalar(sigma) else sigma,
            corr=homogeneous_corr(n, c_a),
            tail_n=tail_n,
            horizon_T=horizon_T,
        )

    def factor(self, subset) -> np.ndarray:
        """Cholesky factor of the correlation sub-matrix, cached per subset."""
        subset = tuple(int(i) for i in subset)
        L = self._chol_cache.get(subset)
        if L is None:
            idx = np.asarray(subset, dtype=np.intp)
            L = cholesky_factor(self.corr[np.ix_(idx, idx)])
            self._chol_cache[subset] = L
        return L


def cholesky_factor(corr, tol: float = 1e-10) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == corr``.

    Semi-definite matrices are accepted: a pivot within ``tol`` of zero
    leaves its column at zero, so e.g. the all-ones matrix (``c_a = 1``)
    factors. A pivot below ``-tol`` raises :class:`NotPositiveDefinite`.
    """
    A = np.array(corr, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("correlation matrix must be square")
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        if pivot < -tol:
            raise NotPositiveDefinite(j, pivot)
        resid = A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]
        if pivot <= tol:
            # a zero pivot is only consistent with a zero residual column
            if resid.size and np.max(np.abs(resid)) > math.sqrt(tol):
                raise NotPositiveDefinite(j, pivot)
            continue
        d = math.sqrt(pivot)
        L[j, j] = d
        L[j + 1:, j] = resid / d
    return L


def chi_square_sample(dof: int, key: StreamKey, size=None):
    """Chi-square draw(s) with ``dof`` degrees of freedom."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    return key.generator().chisquare(dof, size=size)


def sample_horizon_returns(params: MarketParams, subset, n_draws: int,
                           key: StreamKey) -> np.ndarray:
    """Draw ``n_draws`` joint horizon returns for the companies in ``subset``.

    Rows are Normal(0, T * Sigma_subset) scaled by ``sqrt(z / N)`` with one
    ``z ~ chi2_N`` per row; for ``tail_n = INFINITY`` the scale is 1.
    """
    idx = np.asarray(subset, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= params.size):
        raise IndexError("subset index out of range")
    if n_draws < 0:
        raise ValueError("n_draws must be non-negative")
    if n_draws == 0:
        return np.empty((0, idx.size))
    L = params.factor(idx)
    rng = key.generator()
    eps = rng.standard_normal((n_draws, idx.size))
    r = eps @ L.T
    r *= params.sigma[idx] * math.sqrt(params.horizon_T)
    if params.tail_n != INFINITY:
        z = rng.chisquare(params.tail_n, size=n_draws)
        r *= np.sqrt(z / params.tail_n)[:, None]
    return r
