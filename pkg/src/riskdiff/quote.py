"""Black-Scholes pricing and implied-volatility inversion.

American prices are quoted through the European formula by market
convention; log-moneyness is ln(K/S).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, InversionError

__all__ = ["Quote", "bs_price", "bs_vega", "implied_vol", "log_moneyness"]

_VOL_LO, _VOL_HI = 1e-6, 5.0


def bs_price(spot: float, strike: float, rate: float, vol: float,
             maturity: float, side: str) -> float:
    """Standard Black-Scholes value of a European put or call."""
    if spot <= 0 or strike <= 0:
        raise DomainError("spot and strike must be positive")
    if vol < 0 or maturity < 0:
        raise DomainError("vol and maturity must be nonnegative")
    if side not in ("put", "call"):
        raise DomainError(f"side must be 'put' or 'call', got {side!r}")

    disc_k = strike * np.exp(-rate * maturity)
    if vol == 0.0 or maturity == 0.0:
        intrinsic_call = max(spot - disc_k, 0.0)
        return intrinsic_call if side == "call" else max(disc_k - spot, 0.0)

    srt = vol * np.sqrt(maturity)
    d1 = (np.log(spot / strike) + (rate + 0.5 * vol * vol) * maturity) / srt
    d2 = d1 - srt
    call = spot * ndtr(d1) - disc_k * ndtr(d2)
    if side == "call":
        return float(call)
    return float(call - spot + disc_k)  # put-call parity


def bs_vega(spot: float, strike: float, rate: float, vol: float,
            maturity: float) -> float:
    if vol <= 0 or maturity <= 0:
        return 0.0
    srt = vol * np.sqrt(maturity)
    d1 = (np.log(spot / strike) + (rate + 0.5 * vol * vol) * maturity) / srt
    return float(spot * np.sqrt(maturity) * np.exp(-0.5 * d1 * d1)
                 / np.sqrt(2.0 * np.pi))


@dataclass(frozen=True)
class Quote:
    spot: float
    strike: float
    rate: float
    maturity: float
    price: float
    side: str = "put"


def log_moneyness(q: Quote) -> float:
    return float(np.log(q.strike / q.spot))


def implied_vol(q: Quote) -> float:
    """Invert Black-Scholes by bisection on [1e-6, 5] plus a Newton polish.

    The price must lie strictly inside the no-arbitrage bounds; otherwise
    an InversionError is raised.
    """
    lo_price = bs_price(q.spot, q.strike, q.rate, _VOL_LO, q.maturity, q.side)
    hi_price = bs_price(q.spot, q.strike, q.rate, _VOL_HI, q.maturity, q.side)
    if not (lo_price < q.price < hi_price):
        raise InversionError(
            f"price {q.price} outside invertible range "
            f"({lo_price:.6g}, {hi_price:.6g}) for vol in [{_VOL_LO}, {_VOL_HI}]")

    lo, hi = _VOL_LO, _VOL_HI
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        err = bs_price(q.spot, q.strike, q.rate, mid, q.maturity, q.side) - q.price
        if abs(err) < 1e-10:
            break
        if err < 0:
            lo = mid
        else:
            hi = mid
    vol = 0.5 * (lo + hi)

    # two safeguarded Newton steps sharpen the bisection result
    for _ in range(2):
        vega = bs_vega(q.spot, q.strike, q.rate, vol, q.maturity)
        if vega <= 1e-14:
            break
        step = (bs_price(q.spot, q.strike, q.rate, vol, q.maturity, q.side)
                - q.price) / vega
        candidate = vol - step
        if _VOL_LO <= candidate <= _VOL_HI:
            vol = candidate
    return float(vol)
