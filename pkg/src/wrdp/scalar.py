"""Closed-form distortion-rate-perception tradeoff for a scalar Gaussian source.

For X ~ N(0, gamma) with compression rate R, common randomness rate C and
squared-W2 perception budget P,

    D*(R, C, P) = gamma 2^{-2R}
                  + [(sqrt(gamma (2 - 2^{-2R} - 2 psi(R, R + C))) - sqrt(P))_+]^2

with psi(a, b) = sqrt((1 - 2^{-2a}) (1 - 2^{-2b})).  The threshold helpers
describe where the perception term switches off.
"""

from __future__ import annotations

import math

from .types import (
    INF,
    DomainError,
    GaussianScalarSource,
    NoFiniteThreshold,
    TradeoffPoint,
    TradeoffQuery,
    check_budget,
    check_rate,
    check_variance,
    validate_query,
)


def exp2m2(a: float) -> float:
    """2^{-2a}, exactly 0 for a = inf."""
    if math.isinf(a):
        return 0.0
    return 2.0 ** (-2.0 * a)


def psi(a: float, b: float) -> float:
    a = check_rate("a", a, allow_inf=True)
    b = check_rate("b", b, allow_inf=True)
    return math.sqrt((1.0 - exp2m2(a)) * (1.0 - exp2m2(b)))


def bracket(x: float, y: float) -> float:
    """[(sqrt(x) - sqrt(y))_+]^2 for x, y >= 0 (y may be inf)."""
    if math.isinf(y):
        return 0.0
    d = math.sqrt(x) - math.sqrt(y)
    return d * d if d > 0 else 0.0


def shannon_dr(gamma: float, R: float) -> float:
    gamma = check_variance("gamma", gamma)
    R = check_rate("R", R)
    return gamma * exp2m2(R)


def perception_gap(gamma: float, R: float, C: float) -> float:
    """gamma (2 - 2^{-2R} - 2 psi(R, R + C)): the squared transport cost of
    the best rate-(R + C) coupling between source and representation."""
    gamma = check_variance("gamma", gamma)
    R = check_rate("R", R)
    C = check_rate("C", C, allow_inf=True)
    if gamma == 0:
        return 0.0
    val = gamma * (2.0 - exp2m2(R) - 2.0 * psi(R, R + C))
    # analytically >= gamma (1 - sqrt(1 - 2^{-2R}))^2 >= 0; guard rounding only
    return max(val, 0.0)


def dstar_value(gamma: float, R: float, C: float = 0.0, P: float = INF) -> float:
    """D*(R, C, P) for N(0, gamma) as a plain float."""
    gamma = check_variance("gamma", gamma)
    R = check_rate("R", R)
    C = check_rate("C", C, allow_inf=True)
    P = check_budget("P", P)
    if gamma == 0:
        return 0.0
    return gamma * exp2m2(R) + bracket(perception_gap(gamma, R, C), P)


def dstar_scalar(src: GaussianScalarSource, q: TradeoffQuery) -> TradeoffPoint:
    validate_query(q, src)
    return TradeoffPoint(q, dstar_value(src.gamma, q.R, q.C, q.P))


def dstar_scalar_c0(src: GaussianScalarSource, R: float, P: float) -> float:
    """No common randomness: D(R) + [(sqrt(D(R)) - sqrt(P))_+]^2."""
    d = shannon_dr(src.gamma, R)
    return d + bracket(d, check_budget("P", P))


def perception_threshold_P(src: GaussianScalarSource, R: float, C: float) -> float:
    """Smallest P at which the perception constraint is inactive."""
    return perception_gap(src.gamma, R, C)


def common_randomness_threshold_C(src: GaussianScalarSource, R: float, P: float) -> float:
    """Smallest C beyond which more common randomness no longer lowers D*.

    Returns 0 when P >= gamma 2^{-2R} (perception already inactive) or when
    R = 0 (C has no effect at zero rate).  Returns ``inf`` exactly at the
    lower endpoint gamma (2 - 2^{-2R} - 2 sqrt(1 - 2^{-2R})), where only
    unlimited common randomness switches perception off.  Below it raises
    :class:`NoFiniteThreshold`.
    """
    gamma = check_variance("gamma", src.gamma)
    R = check_rate("R", R)
    P = check_budget("P", P)
    if gamma == 0 or R == 0:
        return 0.0
    a = exp2m2(R)
    if P >= gamma * a:
        return 0.0
    lower = gamma * (2.0 - a - 2.0 * math.sqrt(1.0 - a))
    if P < lower:
        raise NoFiniteThreshold(
            f"P={P} is below {lower}: perception stays active for every C")
    p = P / gamma
    denom = 2.0 * (2.0 - a) * p - p * p - a * a
    if P == lower or denom <= 0:
        return INF
    c = 0.5 * math.log2(4.0 * (a - a * a) / denom)
    return max(c, 0.0)


def rate_threshold_R(src: GaussianScalarSource, C: float, P: float) -> float:
    """Smallest R at which D* reduces to gamma 2^{-2R}.

    Raises :class:`NoFiniteThreshold` for P = 0 with gamma > 0.
    """
    gamma = check_variance("gamma", src.gamma)
    C = check_rate("C", C, allow_inf=True)
    P = check_budget("P", P)
    if gamma == 0 or P >= gamma:
        return 0.0
    if P == 0:
        raise NoFiniteThreshold("P = 0: perception is active at every finite rate")
    p = P / gamma
    c = 0.0 if math.isinf(C) else 2.0 ** (-2.0 * (C - 1.0))
    q = 4.0 * p - p * p
    s = 2.0 * p + c
    disc = s * s + 4.0 * (1.0 - c) * q
    if disc < 0:
        raise DomainError(f"negative discriminant {disc} for C={C}, P={P}")
    return max(0.5 * math.log2((s + math.sqrt(disc)) / (2.0 * q)), 0.0)
