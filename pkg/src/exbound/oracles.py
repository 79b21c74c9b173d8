"""Independent ground-truth pricers: closed-form puts and a binomial tree.

These never touch the PDE machinery, so they can referee it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fd import MarketParams


@dataclass(frozen=True)
class BsQuote:
    spot: float
    strike: float
    rate: float
    volatility: float
    tau: float  # time to maturity

    def __post_init__(self):
        if self.spot <= 0.0 or self.strike <= 0.0:
            raise ValueError("spot and strike must be positive")
        if self.tau < 0.0:
            raise ValueError("tau must be >= 0")


def normal_cdf(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _d1_d2(q: BsQuote) -> tuple[float, float]:
    sig_sqrt = q.volatility * math.sqrt(q.tau)
    d1 = (math.log(q.spot / q.strike)
          + (q.rate + 0.5 * q.volatility**2) * q.tau) / sig_sqrt
    return d1, d1 - sig_sqrt


def bs_put(quote: BsQuote) -> float:
    """European put value; collapses to the payoff at tau = 0."""
    if quote.tau == 0.0:
        return max(quote.strike - quote.spot, 0.0)
    d1, d2 = _d1_d2(quote)
    return (quote.strike * math.exp(-quote.rate * quote.tau) * normal_cdf(-d2)
            - quote.spot * normal_cdf(-d1))


def bs_call(quote: BsQuote) -> float:
    """European call value, used for the parity cross-checks."""
    if quote.tau == 0.0:
        return max(quote.spot - quote.strike, 0.0)
    d1, d2 = _d1_d2(quote)
    return (quote.spot * normal_cdf(d1)
            - quote.strike * math.exp(-quote.rate * quote.tau) * normal_cdf(d2))


def crr_american_put(spot: float, strike: float, market: MarketParams,
                     maturity_T: float, steps: int) -> float:
    """Recombining binomial tree with early exercise at every node.

    Up/down factors exp(+-sigma sqrt(dt)), risk-neutral up probability
    (exp(r dt) - d) / (u - d); values obtained by discounted backward
    induction with a payoff floor.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    dt = maturity_T / steps
    u = math.exp(market.volatility * math.sqrt(dt))
    d = 1.0 / u
    p = (math.exp(market.rate * dt) - d) / (u - d)
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"risk-neutral probability {p:.4f} outside [0, 1]")
    disc = math.exp(-market.rate * dt)

    # terminal prices spot * u^j * d^(steps - j), j = 0..steps
    j = np.arange(steps + 1)
    prices = spot * u ** j * d ** (steps - j)
    values = np.maximum(strike - prices, 0.0)
    for i in range(steps - 1, -1, -1):
        prices = prices[1:i + 2] * d
        cont = disc * (p * values[1:i + 2] + (1.0 - p) * values[0:i + 1])
        values = np.maximum(cont, strike - prices)
    return float(values[0])
