"""Merton losses: horizon returns -> asset values -> contract and portfolio losses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .rng import MarketParams, StreamKey, sample_horizon_returns


class OverlappingPortfolios(ValueError):
    pass


@dataclass(frozen=True)
class ContractParams:
    mu: float
    sigma: float
    leverage: float
    face_value: float | None = None

    def __post_init__(self):
        if not 0 < self.leverage <= 1:
            raise ValueError(f"leverage must lie in (0, 1], got {self.leverage}")
        if self.face_value is not None and not self.face_value > 0:
            raise ValueError("face value must be positive")


@dataclass
class PortfolioSpec:
    """One credit portfolio.

    ``members`` index into the market universe. When ``fractions`` is not
    given it is taken from the contracts' face values, which default to
    their leverages (initial asset values normalized to 1).
    """

    members: list
    leverages: np.ndarray
    fractions: np.ndarray | None = None

    def __post_init__(self):
        self.members = [int(m) for m in self.members]
        if len(self.members) < 1:
            raise ValueError("a portfolio needs at least one contract")
        if len(set(self.members)) != len(self.members):
            raise ValueError("portfolio members must be distinct")
        self.leverages = np.broadcast_to(
            np.asarray(self.leverages, dtype=float), (len(self.members),)
        ).copy()
        if np.any(self.leverages <= 0) or np.any(self.leverages > 1):
            raise ValueError("leverages must lie in (0, 1]")
        if self.fractions is None:
            self.fractions = face_fractions(self.leverages)
        else:
            self.fractions = np.asarray(self.fractions, dtype=float)
            if self.fractions.shape != (len(self.members),):
                raise ValueError("one fraction per member required")
            if np.any(self.fractions < 0) or abs(self.fractions.sum() - 1) > 1e-12:
                raise ValueError("fractions must be non-negative and sum to 1")

    @property
    def size(self) -> int:
        return len(self.members)

    @classmethod
    def from_contracts(cls, members, contracts):
        faces = np.array([
            c.face_value if c.face_value is not None else c.leverage for c in contracts
        ])
        return cls(members, [c.leverage for c in contracts], face_fractions(faces))


def face_fractions(face_values) -> np.ndarray:
    faces = np.asarray(face_values, dtype=float)
    return faces / faces.sum()


@dataclass
class LossPairSample:
    l1: np.ndarray
    l2: np.ndarray

    def __len__(self):
        return len(self.l1)

    def nondefault_fraction(self):
        return float(np.mean(self.l1 == 0)), float(np.mean(self.l2 == 0))


def asset_value_at_maturity(r, mu, sigma, T=252.0, v0=1.0):
    """``v0 * exp(r + (mu - sigma**2 / 2) * T)``; works elementwise."""
    if not T > 0 or not np.all(np.asarray(v0) > 0):
        raise ValueError("T and v0 must be positive")
    return v0 * np.exp(r + (mu - 0.5 * np.square(sigma)) * T)


def contract_loss(vT, face):
    """Normalized loss ``(F - V_T) / F`` when ``V_T < F``, else 0."""
    vT = np.asarray(vT, dtype=float)
    out = np.where(vT < face, (face - vT) / face, 0.0)
    return float(out) if out.ndim == 0 else out


def portfolio_loss(losses, fractions) -> float:
    losses = np.asarray(losses, dtype=float)
    fractions = np.asarray(fractions, dtype=float)
    if losses.shape != fractions.shape:
        raise ValueError(
            f"{losses.shape[0]} losses but {fractions.shape[0]} fractions"
        )
    return float(losses @ fractions)


def simulate_loss_pairs(market: MarketParams, p1: PortfolioSpec, p2: PortfolioSpec,
                        n_sims: int, key: StreamKey, block_size: int = 20_000) -> LossPairSample:
    """Joint loss draws for two disjoint portfolios on one market.

    Each simulation draws a single return vector over the union of both
    portfolios' members, so cross-portfolio correlations are respected.
    Blocks of ``block_size`` rows each own a child stream of ``key``.
    """
    if set(p1.members) & set(p2.members):
        raise OverlappingPortfolios(
            f"portfolios share members {sorted(set(p1.members) & set(p2.members))}"
        )
    members = np.array(p1.members + p2.members, dtype=np.intp)
    if members.min() < 0 or members.max() >= market.size:
        raise IndexError("portfolio member outside the market universe")
    # draws are tied to company index, not to position within a portfolio
    universe = np.sort(members)
    cols = np.searchsorted(universe, members)

    T = market.horizon_T
    drift = (market.mu[members] - 0.5 * market.sigma[members] ** 2) * T
    face = np.concatenate([p1.leverages, p2.leverages])
    owner = np.repeat(np.array([0, 1], dtype=np.intp), [p1.size, p2.size])
    frac = np.concatenate([p1.fractions, p2.fractions])

    out = np.empty((n_sims, 2))
    for b, start in enumerate(range(0, n_sims, block_size)):
        stop = min(start + block_size, n_sims)
        r = sample_horizon_returns(market, universe, stop - start, key.child("block", b))
        out[start:stop] = kernels.contract_portfolio_losses(
            np.ascontiguousarray(r[:, cols]), drift, face, owner, frac, 2
        )
    return LossPairSample(out[:, 0].copy(), out[:, 1].copy())

