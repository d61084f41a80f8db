"""Empirical copula histograms, Gaussian-copula references and deviations."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri, owens_t

from . import kernels
from .rng import StreamKey

KINDS = ("empirical", "gaussian", "averaged")


class ZeroVariance(ValueError):
    """Correlation is undefined because one sample is constant."""


@dataclass
class CopulaHistogram:
    """A ``b x b`` grid of bin masses over the unit square.

    Row index follows ``u`` (first variable), column index ``v``. Bin
    ``(i, j)`` covers ``(i/b, (i+1)/b] x (j/b, (j+1)/b]``.
    """

    masses: np.ndarray
    b: int
    n_samples: int = 0
    kind: str = "empirical"

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.shape != (self.b, self.b):
            raise ValueError(f"masses must be {self.b}x{self.b}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown histogram kind {self.kind!r}")

    @property
    def density(self) -> np.ndarray:
        """Bin mass times ``b**2``; the independence copula is 1 everywhere."""
        return self.masses * self.b ** 2

    def to_dict(self) -> dict:
        return {
            "b": self.b,
            "n_samples": int(self.n_samples),
            "kind": self.kind,
            "masses": self.masses.ravel().tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "CopulaHistogram":
        b = int(doc["b"])
        return cls(np.reshape(doc["masses"], (b, b)), b, int(doc["n_samples"]), doc["kind"])

    @classmethod
    def from_json(cls, text: str) -> "CopulaHistogram":
        return cls.from_dict(json.loads(text))


@dataclass
class DeviationGrid:
    densities: np.ndarray
    b: int

    def max_abs(self) -> float:
        return float(np.abs(self.densities).max())

    def to_dict(self) -> dict:
        return {"b": self.b, "densities": self.densities.ravel().tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "DeviationGrid":
        b = int(doc["b"])
        return cls(np.reshape(np.asarray(doc["densities"], dtype=float), (b, b)), b)


def rank_transform(x, key: StreamKey) -> np.ndarray:
    """Normalized ranks ``k/n`` with ties broken uniformly at random.

    Random tie-breaking spreads an atom (e.g. the non-default mass at zero
    loss) evenly over its rank block, which keeps the marginal exactly
    uniform.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 1:
        raise ValueError("need at least one observation")
    jitter = key.generator().random(n)
    order = np.lexsort((jitter, x))
    ranks = np.empty(n)
    ranks[order] = np.arange(1, n + 1)
    return ranks / n


def copula_counts(u, v, b: int = 20) -> np.ndarray:
    """Integer ``b x b`` bin counts of rank pairs in ``(0, 1]``."""
    if b < 1:
        raise ValueError("bin count must be >= 1")
    u = np.ascontiguousarray(u, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError("u and v must have the same length")
    if u.size and (u.min() <= 0 or u.max() > 1 or v.min() <= 0 or v.max() > 1):
        raise ValueError("ranks must lie in (0, 1]")
    return kernels.copula_bin_counts(u, v, int(b))


def empirical_copula(u, v, b: int = 20) -> CopulaHistogram:
    counts = copula_counts(u, v, b)
    n = int(counts.sum())
    masses = counts / n if n else np.zeros((b, b))
    return CopulaHistogram(masses, b, n, "empirical")


def bivariate_normal_cdf(h, k, rho: float):
    """P[X <= h, Y <= k] for standard normals with correlation ``rho``.

    Evaluated through Owen's T function, so it is accurate to roughly
    machine precision; infinite limits are handled exactly.
    """
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    out = np.empty(h.shape)
    lo = np.isneginf(h) | np.isneginf(k)
    h_inf = np.isposinf(h) & ~lo
    k_inf = np.isposinf(k) & ~lo & ~h_inf
    fin = ~(lo | h_inf | k_inf)
    out[lo] = 0.0
    out[h_inf] = ndtr(k[h_inf])
    out[k_inf] = ndtr(h[k_inf])

    hf, kf = h[fin], k[fin]
    s = np.sqrt((1 - rho) * (1 + rho))
    with np.errstate(divide="ignore", invalid="ignore"):
        a_h = (kf - rho * hf) / (hf * s)
        a_k = (hf - rho * kf) / (kf * s)
    hk = hf * kf
    beta = np.where((hk < 0) | ((hk == 0) & (hf + kf < 0)), 0.5, 0.0)
    val = 0.5 * (ndtr(hf) + ndtr(kf)) - owens_t(hf, a_h) - owens_t(kf, a_k) - beta
    origin = (hf == 0) & (kf == 0)
    val[origin] = 0.25 + np.arcsin(rho) / (2 * np.pi)
    out[fin] = val
    return out if out.ndim else float(out)


def gaussian_copula(c: float, b: int = 20) -> CopulaHistogram:
    """Bin masses of the Gaussian copula with correlation ``c``."""
    if not -1 < c < 1:
        raise ValueError("Gaussian copula parameter must lie in (-1, 1)")
    if b < 1:
        raise ValueError("bin count must be >= 1")
    z = ndtri(np.arange(b + 1) / b)
    F = bivariate_normal_cdf(z[:, None], z[None, :], c)
    masses = F[1:, 1:] - F[:-1, 1:] - F[1:, :-1] + F[:-1, :-1]
    np.clip(masses, 0.0, None, out=masses)
    return CopulaHistogram(masses, b, 0, "gaussian")


def deviation(emp: CopulaHistogram, ref: CopulaHistogram) -> DeviationGrid:
    if emp.b != ref.b:
        raise ValueError(f"bin counts differ: {emp.b} vs {ref.b}")
    return DeviationGrid(emp.density - ref.density, emp.b)


def pearson_correlation(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and of equal length")
    if x.shape[0] < 2:
        raise ValueError("need at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx == 0 or syy == 0:
        raise ZeroVariance("constant sample, correlation undefined")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def average_histograms(hists) -> CopulaHistogram:
    hists = list(hists)
    if not hists:
        raise ValueError("cannot average an empty list of histograms")
    b = hists[0].b
    if any(h.b != b for h in hists):
        raise ValueError("histograms have different bin counts")
    total = np.zeros((b, b))
    for h in hists:
        total += h.masses
    return CopulaHistogram(total / len(hists), b, sum(h.n_samples for h in hists), "averaged")
