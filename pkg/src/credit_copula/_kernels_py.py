"""NumPy implementations of the inner loops, used when the extension is absent."""
import numpy as np


def contract_portfolio_losses(returns, drift, face, owner, frac, n_portfolios):
    returns = np.asarray(returns, dtype=float)
    m = returns.shape[1]
    if not (len(drift) == len(face) == len(owner) == len(frac) == m):
        raise ValueError("per-contract arrays must match the number of return columns")
    owner = np.asarray(owner)
    if m and (owner.min() < 0 or owner.max() >= n_portfolios):
        raise ValueError("owner index out of range")
    v = np.exp(returns + drift)
    loss = np.maximum(face - v, 0.0) / face
    out = np.zeros((returns.shape[0], n_portfolios))
    for p in range(n_portfolios):
        cols = np.flatnonzero(owner == p)
        out[:, p] = loss[:, cols] @ frac[cols]
    return out


def copula_bin_counts(u, v, b):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError("u and v must have equal length")
    shrink = 1.0 - 1e-12
    iu = np.clip(np.ceil(u * b * shrink).astype(np.int64) - 1, 0, b - 1)
    iv = np.clip(np.ceil(v * b * shrink).astype(np.int64) - 1, 0, b - 1)
    return np.bincount(iu * b + iv, minlength=b * b).reshape(b, b).astype(np.int64)
