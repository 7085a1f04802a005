"""Domain types shared by the scalar, vector, transport and simulation code.

Rates are in bits per symbol. Infinite common randomness or an infinite
perception budget is written as ``math.inf``; every formula in the package
branches on it explicitly instead of relying on overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence, Union

INF = math.inf

#: absolute slack allowed when checking rate-allocation feasibility
FEASIBILITY_TOL = 1e-9


class WRDPError(ValueError):
    """Base class for input and domain errors raised by this package."""


class DomainError(WRDPError):
    pass


class NegativeRate(DomainError):
    pass


class NegativeVariance(DomainError):
    pass


class NonFiniteInput(DomainError):
    pass


class DimensionMismatch(WRDPError):
    pass


class NoFiniteThreshold(DomainError):
    """No finite threshold exists: the constraint stays active for every value."""


def _check_number(name: str, value: float, *, allow_inf: bool) -> float:
    value = float(value)
    if math.isnan(value):
        raise NonFiniteInput(f"{name} is NaN")
    if math.isinf(value) and not (allow_inf and value > 0):
        raise NonFiniteInput(f"{name} must be finite, got {value}")
    return value


def check_rate(name: str, value: float, *, allow_inf: bool = False) -> float:
    value = _check_number(name, value, allow_inf=allow_inf)
    if value < 0:
        raise NegativeRate(f"{name} must be >= 0, got {value}")
    return value


def check_variance(name: str, value: float) -> float:
    value = _check_number(name, value, allow_inf=False)
    if value < 0:
        raise NegativeVariance(f"{name} must be >= 0, got {value}")
    return value


def check_budget(name: str, value: float) -> float:
    value = _check_number(name, value, allow_inf=True)
    if value < 0:
        raise DomainError(f"{name} must be >= 0, got {value}")
    return value


def encode_number(x: float) -> Union[float, str]:
    """JSON form of a possibly-infinite nonnegative number."""
    return "inf" if math.isinf(x) else float(x)


def decode_number(x: Any) -> float:
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "+inf", "infinity"):
            return INF
        return float(x)
    return float(x)


@dataclass(frozen=True)
class GaussianScalarSource:
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "gamma", check_variance("gamma", self.gamma))

    def to_dict(self) -> dict:
        return {"gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianScalarSource":
        return cls(float(d["gamma"]))


@dataclass(frozen=True)
class DiagGaussianSource:
    """Zero-mean Gaussian vector source given by its covariance eigenvalues.

    The order of ``gammas`` is kept as given; coordinate ``l`` of any
    allocation refers to ``gammas[l]``.
    """

    gammas: tuple

    def __post_init__(self):
        gammas = tuple(check_variance(f"gammas[{i}]", g) for i, g in enumerate(self.gammas))
        if not gammas:
            raise DimensionMismatch("a vector source needs at least one component")
        object.__setattr__(self, "gammas", gammas)

    @property
    def dim(self) -> int:
        return len(self.gammas)

    def to_dict(self) -> dict:
        return {"gammas": list(self.gammas)}

    @classmethod
    def from_dict(cls, d: dict) -> "DiagGaussianSource":
        return cls(tuple(float(g) for g in d["gammas"]))


@dataclass(frozen=True)
class TradeoffQuery:
    R: float
    C: float = 0.0
    P: float = INF

    def __post_init__(self):
        object.__setattr__(self, "R", check_rate("R", self.R))
        object.__setattr__(self, "C", check_rate("C", self.C, allow_inf=True))
        object.__setattr__(self, "P", check_budget("P", self.P))

    def to_dict(self) -> dict:
        return {"R": self.R, "C": encode_number(self.C), "P": encode_number(self.P)}

    @classmethod
    def from_dict(cls, d: dict) -> "TradeoffQuery":
        return cls(decode_number(d["R"]), decode_number(d.get("C", 0.0)),
                   decode_number(d.get("P", INF)))


@dataclass(frozen=True)
class TradeoffPoint:
    query: TradeoffQuery
    D: float

    def to_dict(self) -> dict:
        return {"query": self.query.to_dict(), "D": self.D}

    @classmethod
    def from_dict(cls, d: dict) -> "TradeoffPoint":
        return cls(TradeoffQuery.from_dict(d["query"]), float(d["D"]))


@dataclass(frozen=True)
class GaussianCoupling:
    """Zero-mean jointly Gaussian law of (X, X~).

    ``gamma`` = Var X, ``gamma_tilde`` = Var X~ and ``theta`` = E[X X~].
    """

    gamma: float
    gamma_tilde: float
    theta: float

    def __post_init__(self):
        g = check_variance("gamma", self.gamma)
        gt = check_variance("gamma_tilde", self.gamma_tilde)
        th = _check_number("theta", self.theta, allow_inf=False)
        if gt > g:
            raise DomainError(f"gamma_tilde={gt} exceeds gamma={g}")
        if th * th > g * gt:
            raise DomainError(f"theta^2={th * th} exceeds gamma*gamma_tilde={g * gt}: not PSD")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "gamma_tilde", gt)
        object.__setattr__(self, "theta", th)

    @property
    def is_mmse(self) -> bool:
        """True when E[X | X~] = X~, i.e. theta == gamma_tilde."""
        return self.theta == self.gamma_tilde

    @property
    def cond_scale(self) -> float:
        """Slope of E[X | X~ = x~] in x~."""
        return self.theta / self.gamma_tilde if self.gamma_tilde > 0 else 0.0

    @property
    def cond_var(self) -> float:
        """Var(X | X~)."""
        if self.gamma_tilde == 0:
            return self.gamma
        return max(self.gamma - self.theta ** 2 / self.gamma_tilde, 0.0)

    @property
    def sq_error(self) -> float:
        """E[(X - X~)^2] under this coupling."""
        return self.gamma + self.gamma_tilde - 2.0 * self.theta

    def mutual_information(self) -> float:
        """I(X; X~) in bits."""
        denom = self.gamma * self.gamma_tilde - self.theta ** 2
        if self.gamma_tilde == 0 or self.theta == 0:
            return 0.0
        if denom <= 0:
            return INF
        return 0.5 * math.log2(self.gamma * self.gamma_tilde / denom)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "gamma_tilde": self.gamma_tilde, "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianCoupling":
        return cls(float(d["gamma"]), float(d["gamma_tilde"]), float(d["theta"]))


@dataclass(frozen=True)
class RateAllocation:
    """Per-coordinate rates ``r`` (sum <= R) and ``r_prime`` (sum <= R + C)."""

    r: tuple
    r_prime: tuple

    def __post_init__(self):
        r = tuple(check_rate(f"r[{i}]", x) for i, x in enumerate(self.r))
        rp = tuple(check_rate(f"r_prime[{i}]", x, allow_inf=True)
                   for i, x in enumerate(self.r_prime))
        if len(r) != len(rp):
            raise DimensionMismatch(f"len(r)={len(r)} != len(r_prime)={len(rp)}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "r_prime", rp)

    def is_feasible(self, R: float, C: float, cap: float = 30.0,
                    tol: float = FEASIBILITY_TOL) -> bool:
        if sum(self.r) > R + tol:
            return False
        if math.isinf(C):
            return True
        return sum(min(x, cap) for x in self.r_prime) <= R + C + tol

    def to_dict(self) -> dict:
        return {"r": list(self.r), "r_prime": [encode_number(x) for x in self.r_prime]}

    @classmethod
    def from_dict(cls, d: dict) -> "RateAllocation":
        return cls(tuple(float(x) for x in d["r"]),
                   tuple(decode_number(x) for x in d["r_prime"]))


Source = Union[GaussianScalarSource, DiagGaussianSource]


def validate_query(q: TradeoffQuery, src: Source) -> TradeoffQuery:
    """Re-check every field of ``q`` and ``src``; return ``q`` unchanged.

    The dataclasses already validate on construction, but objects built with
    ``object.__new__`` or mutated through ``object.__setattr__`` bypass that,
    so solvers call this at their entry point.
    """
    check_rate("R", q.R)
    check_rate("C", q.C, allow_inf=True)
    check_budget("P", q.P)
    if isinstance(src, GaussianScalarSource):
        check_variance("gamma", src.gamma)
    else:
        for i, g in enumerate(src.gammas):
            check_variance(f"gammas[{i}]", g)
    return q


def as_vector_source(src: Union[Source, Sequence[float], float]) -> DiagGaussianSource:
    if isinstance(src, DiagGaussianSource):
        return src
    if isinstance(src, GaussianScalarSource):
        return DiagGaussianSource((src.gamma,))
    if isinstance(src, (int, float)):
        return DiagGaussianSource((float(src),))
    return DiagGaussianSource(tuple(src))
