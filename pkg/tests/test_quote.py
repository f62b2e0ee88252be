import numpy as np
import pytest

from riskdiff import Quote, bs_price, implied_vol, log_moneyness
from riskdiff.errors import DomainError, InversionError
from riskdiff.quote import bs_vega


def _quad_bs_put(spot, strike, rate, vol, maturity):
    """Integrate the discounted put payoff against the lognormal density.

    Independent of the closed form: Gauss-Legendre on the standardized
    normal variable over [-12, 12].
    """
    x, w = np.polynomial.legendre.leggauss(400)
    srt = vol * np.sqrt(maturity)
    # integrate only below the exercise boundary so the kink is excluded
    z_star = (np.log(strike / spot) - (rate - 0.5 * vol * vol) * maturity) / srt
    lo, hi = -14.0, z_star
    z = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * w
    s_t = spot * np.exp((rate - 0.5 * vol * vol) * maturity + srt * z)
    payoff = strike - s_t
    dens = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    return float(np.exp(-rate * maturity) * np.sum(w * dens * payoff))


def test_bs_against_quadrature():
    for vol in (0.1, 0.3, 0.8):
        for k in (80.0, 100.0, 120.0):
            closed = bs_price(100.0, k, 0.03, vol, 0.7, "put")
            quad = _quad_bs_put(100.0, k, 0.03, vol, 0.7)
            assert abs(closed - quad) < 1e-9


def test_bs_reference_value():
    # frozen against the independent quadrature oracle above
    assert abs(bs_price(100.0, 100.0, 0.02, 0.4, 1.0, "put") - 14.72428) < 1e-4


def test_put_call_parity():
    for vol in (0.05, 0.2, 0.6):
        call = bs_price(100.0, 95.0, 0.04, vol, 0.5, "call")
        put = bs_price(100.0, 95.0, 0.04, vol, 0.5, "put")
        forward = 100.0 - 95.0 * np.exp(-0.04 * 0.5)
        assert abs(call - put - forward) < 1e-12


def test_degenerate_inputs():
    assert bs_price(100.0, 120.0, 0.0, 0.0, 1.0, "put") == 20.0
    assert bs_price(100.0, 120.0, 0.0, 0.3, 0.0, "put") == 20.0
    assert bs_price(100.0, 80.0, 0.0, 0.0, 1.0, "put") == 0.0
    with pytest.raises(DomainError):
        bs_price(-1.0, 100.0, 0.0, 0.2, 1.0, "put")
    with pytest.raises(DomainError):
        bs_price(100.0, 100.0, 0.0, -0.2, 1.0, "put")
    with pytest.raises(DomainError):
        bs_price(100.0, 100.0, 0.0, 0.2, 1.0, "straddle")


def test_price_monotone_in_vol():
    vols = np.linspace(0.05, 1.5, 30)
    prices = [bs_price(100.0, 100.0, 0.02, v, 0.5, "put") for v in vols]
    assert np.all(np.diff(prices) > 0)


def test_vega_matches_fd():
    h = 1e-6
    for vol in (0.1, 0.4, 1.0):
        fd = (bs_price(100.0, 105.0, 0.02, vol + h, 0.5, "put")
              - bs_price(100.0, 105.0, 0.02, vol - h, 0.5, "put")) / (2 * h)
        assert abs(bs_vega(100.0, 105.0, 0.02, vol, 0.5) - fd) < 1e-6


def test_implied_vol_round_trip():
    for vol in (0.08, 0.25, 0.6, 1.2, 2.5):
        for k in (70.0, 90.0, 100.0, 110.0, 140.0):
            for t in (0.1, 0.5, 2.0):
                px = bs_price(100.0, k, 0.03, vol, t, "put")
                q = Quote(spot=100.0, strike=k, rate=0.03, maturity=t,
                          price=px, side="put")
                try:
                    back = implied_vol(q)
                except InversionError:
                    # deep-OTM prices can fall below the lower vol bound
                    continue
                # always recover the price; recover the vol itself whenever
                # vega is large enough to identify it
                re_px = bs_price(100.0, k, 0.03, back, t, "put")
                assert abs(re_px - px) < 1e-8
                if bs_vega(100.0, k, 0.03, vol, t) > 1e-4:
                    assert abs(back - vol) < 1e-6


def test_implied_vol_out_of_bounds():
    # below intrinsic and above the vol-cap price must both refuse
    q_low = Quote(spot=100.0, strike=150.0, rate=0.0, maturity=1.0,
                  price=10.0, side="put")
    with pytest.raises(InversionError):
        implied_vol(q_low)
    q_high = Quote(spot=100.0, strike=100.0, rate=0.0, maturity=1.0,
                   price=99.9, side="put")
    with pytest.raises(InversionError):
        implied_vol(q_high)


def test_log_moneyness():
    q = Quote(spot=100.0, strike=100.0 * np.e, rate=0.0, maturity=1.0,
              price=1.0)
    assert abs(log_moneyness(q) - 1.0) < 1e-15
    q_atm = Quote(spot=100.0, strike=100.0, rate=0.0, maturity=1.0, price=1.0)
    assert log_moneyness(q_atm) == 0.0
