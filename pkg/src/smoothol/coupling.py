"""Constructive coupling between a smooth draw and i.i.d. candidates from the base measure.

One round works as follows: draw Z_1..Z_k i.i.d. from mu, accept each Z_j
independently with probability sigma * (dp/dmu)(Z_j) (a number in [0, 1] by
smoothness), and set x to a uniform pick among the accepted candidates; if
none were accepted, fall back to an independent draw from p.  Then x ~ p
exactly, the Z_j stay i.i.d. mu, and the fallback fires with probability
(1 - sigma)^k.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .core import FiniteMeasure

__all__ = ["CouplingDraw", "couple_round", "CouplingConfig", "CouplingReport",
           "validate_coupling"]


class SmoothnessViolation(ValueError):
    pass


@dataclass
class CouplingDraw:
    x: int | float
    candidates: np.ndarray
    accepted: np.ndarray  # indices into candidates
    hit: bool


def couple_round(density_ratio: Callable[[np.ndarray], np.ndarray], sigma: float, k: int,
                 mu_sampler: Callable[[np.random.Generator, int], np.ndarray],
                 fallback_p_sampler: Callable[[np.random.Generator], int | float],
                 rng: np.random.Generator) -> CouplingDraw:
    """One coupled draw.

    ``density_ratio`` is the (vectorized) dp/dmu, valued in [0, 1/sigma];
    ``mu_sampler(rng, n)`` returns n base-measure samples; the fallback
    sampler draws a single point from p itself.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    z = mu_sampler(rng, k)
    ratios = np.asarray(density_ratio(z), dtype=np.float64)
    if np.any(ratios > 1.0 / sigma + 1e-9):
        raise SmoothnessViolation("smoothness violated")
    accept_probs = np.clip(sigma * ratios, 0.0, 1.0)
    accepted = np.flatnonzero(rng.random(k) < accept_probs)
    if len(accepted):
        pick = accepted[int(rng.integers(len(accepted)))]
        return CouplingDraw(x=z[pick], candidates=z, accepted=accepted, hit=True)
    return CouplingDraw(x=fallback_p_sampler(rng), candidates=z,
                        accepted=accepted, hit=False)


@dataclass(frozen=True)
class CouplingConfig:
    """Finite-ground-set coupling instance: mu and p as probability vectors."""

    mu_probs: np.ndarray
    p_probs: np.ndarray
    sigma: float
    k: int

    def density_ratio(self) -> np.ndarray:
        ratio = np.zeros(len(self.mu_probs))
        support = self.mu_probs > 0
        ratio[support] = self.p_probs[support] / self.mu_probs[support]
        if np.any(self.p_probs[~support] > 0):
            raise SmoothnessViolation("p is not absolutely continuous w.r.t. mu")
        return ratio


@dataclass
class CouplingReport:
    x_marginal_pvalue: float
    z_marginal_pvalue: float
    miss_rate: float
    bound: float
    trials: int

    def to_dict(self) -> dict:
        return {
            "x_marginal_pvalue": self.x_marginal_pvalue,
            "z_marginal_pvalue": self.z_marginal_pvalue,
            "miss_rate": self.miss_rate,
            "bound": self.bound,
            "trials": self.trials,
        }


def _couple_trials(config: CouplingConfig, trials: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized batch of coupled rounds; returns (x ids, Z ids, hit flags)."""
    n = len(config.mu_probs)
    ratio = config.density_ratio()
    if np.any(ratio > 1.0 / config.sigma + 1e-9):
        raise SmoothnessViolation("smoothness violated")
    mu_cdf = np.cumsum(config.mu_probs)
    mu_cdf[-1] = 1.0
    p_cdf = np.cumsum(config.p_probs)
    p_cdf[-1] = 1.0

    z = np.searchsorted(mu_cdf, rng.random((trials, config.k)), side="right")
    accept = rng.random((trials, config.k)) < np.clip(config.sigma * ratio[z], 0.0, 1.0)
    counts = accept.sum(axis=1)
    hit = counts > 0

    xs = np.empty(trials, dtype=np.int64)
    # uniform pick among accepted candidates: index the r-th accepted column
    r = (rng.random(trials) * np.maximum(counts, 1)).astype(np.int64)
    cum = np.cumsum(accept, axis=1)
    pick_col = np.argmax(cum > r[:, None], axis=1)
    rows = np.flatnonzero(hit)
    xs[rows] = z[rows, pick_col[rows]]
    misses = np.flatnonzero(~hit)
    xs[misses] = np.searchsorted(p_cdf, rng.random(len(misses)), side="right")
    return xs, z, hit


def validate_coupling(config: CouplingConfig, trials: int,
                      rng: np.random.Generator) -> CouplingReport:
    """Goodness-of-fit checks for both marginals plus the empirical miss rate.

    Chi-square p-values compare the x sample to p and the pooled candidate
    sample to mu; ``bound`` is the exact per-round miss probability
    (1 - sigma)^k.
    """
    if trials < 1000:
        raise ValueError("insufficient trials")
    xs, z, hit = _couple_trials(config, trials, rng)
    n = len(config.mu_probs)

    x_counts = np.bincount(xs, minlength=n)
    p_support = config.p_probs > 0
    if np.any(x_counts[~p_support] > 0):
        x_pvalue = 0.0
    else:
        expected = config.p_probs[p_support] * trials
        x_pvalue = float(stats.chisquare(x_counts[p_support], expected).pvalue)

    z_counts = np.bincount(z.ravel(), minlength=n)
    mu_support = config.mu_probs > 0
    if np.any(z_counts[~mu_support] > 0) or config.k == 0:
        z_pvalue = 0.0 if config.k > 0 else 1.0
    else:
        expected = config.mu_probs[mu_support] * trials * config.k
        z_pvalue = float(stats.chisquare(z_counts[mu_support], expected).pvalue)

    miss_rate = float(1.0 - hit.mean())
    bound = (1.0 - config.sigma) ** config.k
    return CouplingReport(x_pvalue, z_pvalue, miss_rate, bound, trials)


def concentrated_p(mu: FiniteMeasure, sigma: float) -> np.ndarray:
    """The tight construction: p = (1/sigma) * mu restricted to a set of mu-mass sigma.

    Greedily fills atoms until mass sigma is reached (the last atom may be
    partial), so the density ratio equals 1/sigma on the support.
    """
    probs = np.zeros(mu.ground.size)
    remaining = sigma
    for i, m in enumerate(mu.probs):
        take = min(m, remaining)
        probs[i] = take / sigma
        remaining -= take
        if remaining <= 1e-15:
            break
    if remaining > 1e-12:
        raise ValueError("mu has insufficient mass")
    return probs
