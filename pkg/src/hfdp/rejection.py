"""Exact draws from f(t) ∝ Γ(t)^(-r) t^(a-1) exp(-c t) on t > 0.

Writing Γ(t) = Γ(t+1)/t gives f(t) ∝ t^(s-1) exp(-c t) Γ(t+1)^(-r) with
s = a + r, which is log-concave for r >= 1 because log Γ(t+1) is convex.

Two covers are used:

* Gamma cover. A tangent to the convex r log Γ(t+1) at t0 bounds it from
  below, so f(t) <= C t^(s-1) exp(-(c + r ψ(t0+1)) t), a Gamma(s, c + r ψ(t0+1))
  density. Taking t0 at the mode of f makes the Gamma mode coincide with it;
  the acceptance probability is exp(-r [log Γ(t+1) - tangent(t)]) <= 1.
* Three-piece exponential cover. Tangents to log f at the two points where
  log f drops one unit below its maximum, joined by a flat cap at the
  maximum. Concavity keeps all three pieces above log f.

The Gamma cover is used when the exponential rate c is positive and a <= 1,
unless its curvature at the mode is much flatter than the target's; the
three-piece cover handles every other case.
"""

from __future__ import annotations

import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import gammaln, polygamma, psi

from .errors import InvalidInputError, NumericalDegeneracyError

logger = logging.getLogger(__name__)

MAX_PROPOSALS = 10_000
GAMMA_COVER_MIN_CURVATURE_RATIO = 0.1


def log_density(t: float, a: float, c: float, r: int) -> float:
    """Unnormalized log f(t)."""

    if t <= 0:
        return -math.inf
    return float(-r * gammaln(t) + (a - 1.0) * math.log(t) - c * t)


def sample_t(
    a: float,
    c: float,
    r: int,
    rng: np.random.Generator,
    cluster: Optional[int] = None,
    max_proposals: int = MAX_PROPOSALS,
) -> float:
    """One exact draw of t from f(t) ∝ Γ(t)^(-r) t^(a-1) exp(-c t)."""

    if not a > 0:
        raise InvalidInputError(f"shape a must be positive, got {a}")
    if r < 0:
        raise InvalidInputError("r must be nonnegative")
    if r == 0:
        if not c > 0:
            raise InvalidInputError("with r = 0 the rate c must be positive")
        return float(rng.gamma(a, 1.0 / c))

    s = a + r
    mode = _mode(s, c, r)
    if c > 0 and a <= 1.0 and _gamma_cover_curvature_ratio(s, mode, r) >= GAMMA_COVER_MIN_CURVATURE_RATIO:
        return _sample_gamma_cover(s, c, r, mode, rng, cluster, max_proposals)
    return _sample_piecewise_cover(a, c, r, mode, rng, cluster, max_proposals)


def _score(t: float, s: float, c: float, r: int) -> float:
    """d/dt log f(t) in the (s, Γ(t+1)) parametrization."""
    return (s - 1.0) / t - c - r * float(psi(t + 1.0))


def _mode(s: float, c: float, r: int) -> float:
    """Unique root of the score; it is strictly decreasing in t."""

    def score_log(u: float) -> float:
        return _score(math.exp(u), s, c, r)

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if score_log(lo) > 0:
            break
        lo *= 2.0
    for _ in range(200):
        if score_log(hi) < 0:
            break
        hi = hi * 2.0 if hi < 700 else 700.0
    if not (score_log(lo) > 0 > score_log(hi)):
        raise NumericalDegeneracyError(f"could not bracket the mode (s={s}, c={c}, r={r})")
    return math.exp(brentq(score_log, lo, hi, xtol=1e-12))


def _gamma_cover_curvature_ratio(s: float, mode: float, r: int) -> float:
    """Envelope curvature over target curvature at the mode (1 means a perfect fit)."""

    envelope = (s - 1.0) / mode**2
    target = envelope + r * float(polygamma(1, mode + 1.0))
    return envelope / target


def _sample_gamma_cover(
    s: float,
    c: float,
    r: int,
    mode: float,
    rng: np.random.Generator,
    cluster: Optional[int],
    max_proposals: int,
) -> float:
    rate = (s - 1.0) / mode  # equals c + r psi(mode + 1) at the mode
    anchor = r * float(gammaln(mode + 1.0))
    slope = r * float(psi(mode + 1.0))
    for _ in range(max_proposals):
        t = float(rng.gamma(s, 1.0 / rate))
        if t <= 0:
            continue
        log_accept = -(r * float(gammaln(t + 1.0)) - anchor - slope * (t - mode))
        if math.log(rng.uniform()) <= log_accept:
            return t
    raise NumericalDegeneracyError(
        f"rejection sampler exceeded {max_proposals} proposals", cluster=cluster
    )


def _sample_piecewise_cover(
    a: float,
    c: float,
    r: int,
    mode: float,
    rng: np.random.Generator,
    cluster: Optional[int],
    max_proposals: int,
) -> float:
    s = a + r
    top = log_density(mode, a, c, r)

    def drop(t: float) -> float:
        return log_density(t, a, c, r) - (top - 1.0)

    left = _bisect_left(drop, mode)
    right = _bisect_right(drop, mode)
    slope_left = _score(left, s, c, r)
    slope_right = -_score(right, s, c, r)
    if not (slope_left > 0 and slope_right > 0):
        raise NumericalDegeneracyError("degenerate tangent in the exponential cover", cluster=cluster)

    # Where each tangent reaches the flat cap (log f(tangent point) = top - 1).
    cap_left = max(left + 1.0 / slope_left, 0.0)
    cap_right = right - 1.0 / slope_right
    area_left = -math.expm1(-slope_left * cap_left) / slope_left
    area_mid = cap_right - cap_left
    area_right = 1.0 / slope_right
    total = area_left + area_mid + area_right

    for _ in range(max_proposals):
        pick = rng.uniform() * total
        u = rng.uniform()
        if pick < area_left:
            # Exponential increasing towards cap_left, truncated at 0.
            t = cap_left + math.log1p(-u * -math.expm1(-slope_left * cap_left)) / slope_left
            envelope = -slope_left * (cap_left - t)
        elif pick < area_left + area_mid:
            t = cap_left + u * area_mid
            envelope = 0.0
        else:
            t = cap_right - math.log1p(-u) / slope_right
            envelope = -slope_right * (t - cap_right)
        if t <= 0:
            continue
        if math.log(rng.uniform()) <= log_density(t, a, c, r) - top - envelope:
            return t
    raise NumericalDegeneracyError(
        f"rejection sampler exceeded {max_proposals} proposals", cluster=cluster
    )


def _bisect_left(drop, mode: float) -> float:
    lo = mode
    for _ in range(2000):
        lo *= 0.5
        if drop(lo) < 0:
            return brentq(drop, lo, mode, xtol=1e-14 * mode + 1e-300)
    raise NumericalDegeneracyError("could not bracket the left tangent point")


def _bisect_right(drop, mode: float) -> float:
    step = max(mode, 1.0)
    hi = mode + step
    for _ in range(2000):
        if drop(hi) < 0:
            return brentq(drop, mode, hi, xtol=1e-12 * hi)
        step *= 2.0
        hi = mode + step
    raise NumericalDegeneracyError("could not bracket the right tangent point")


def moments_by_quadrature(a: float, c: float, r: int) -> Tuple[float, float]:
    """Mean and variance of f by numerical integration (test and diagnostics oracle)."""

    s = a + r
    mode = _mode(s, c, r) if r > 0 else max((a - 1.0) / c, 1e-8)
    top = log_density(mode, a, c, r)

    def weight(t: float, power: int) -> float:
        if t <= 0:
            return 0.0
        return t**power * math.exp(log_density(t, a, c, r) - top)

    def integral(power: int) -> float:
        head = quad(weight, 0.0, mode, args=(power,), limit=500)[0]
        tail = quad(weight, mode, np.inf, args=(power,), limit=500)[0]
        return head + tail

    mass = integral(0)
    first = integral(1) / mass
    second = integral(2) / mass
    return first, second - first**2
