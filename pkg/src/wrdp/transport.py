"""Wasserstein-2 helpers and the interpolation decoder.

Given a representation W of S with MMSE estimate S~ = E[S | W], the decoder

    S^ = (1 - sqrt(P) / W2) S' + (sqrt(P) / W2) S~      if P <= W2^2
    S^ = S~                                             otherwise

(with S' a perceptually perfect sample transported from S~) has perception
loss min(W2^2, P) and distortion mse + [(W2 - sqrt(P))_+]^2, the best possible
for that representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scalar import bracket, shannon_dr
from .types import DimensionMismatch, DomainError, WRDPError, check_budget

PSD_TOL = 1e-10
SYM_TOL = 1e-12


class NonPSD(WRDPError):
    pass


class UnequalCounts(WRDPError):
    pass


class EmptyInput(WRDPError):
    pass


class NegativeBudget(DomainError):
    pass


@dataclass(frozen=True)
class GaussianMoments:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        L = mean.shape[0]
        if cov.shape != (L, L):
            raise DimensionMismatch(f"mean has length {L} but cov has shape {cov.shape}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYM_TOL * max(1.0, np.max(np.abs(cov))):
            raise NonPSD("covariance is not symmetric")
        w = np.linalg.eigvalsh(cov)
        if w.size and w.min() < -PSD_TOL * max(1.0, abs(w.max())):
            raise NonPSD(f"covariance has eigenvalue {w.min()}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @classmethod
    def scalar(cls, mean: float, var: float) -> "GaussianMoments":
        return cls(np.array([mean]), np.array([[var]]))

    @classmethod
    def diagonal(cls, mean, var) -> "GaussianMoments":
        return cls(np.asarray(mean, float), np.diag(np.asarray(var, float)))


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric square root; eigenvalues within PSD_TOL of zero are clipped."""
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def w2_gaussian(a: GaussianMoments, b: GaussianMoments) -> float:
    """Squared W2 distance between two Gaussian laws."""
    if a.mean.shape != b.mean.shape:
        raise DimensionMismatch(f"dimensions {a.mean.shape} and {b.mean.shape} differ")
    mean_term = float(np.sum((a.mean - b.mean) ** 2))
    sb = psd_sqrt(b.cov)
    cross = psd_sqrt(sb @ a.cov @ sb)
    cov_term = float(np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.trace(cross))
    return max(mean_term + cov_term, 0.0)


def w2_diagonal(mean_a, var_a, mean_b, var_b) -> float:
    """Squared W2 between diagonal Gaussians, without forming matrices."""
    mean_a, var_a, mean_b, var_b = (np.asarray(x, float) for x in (mean_a, var_a, mean_b, var_b))
    sa = np.sqrt(np.clip(var_a, 0.0, None))
    sb = np.sqrt(np.clip(var_b, 0.0, None))
    return float(np.sum((mean_a - mean_b) ** 2) + np.sum((sa - sb) ** 2))


def w2_empirical_1d(xs, ys) -> float:
    """Exact squared W2 between two equal-size 1-D empirical laws (sorted matching)."""
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.size == 0 or ys.size == 0:
        raise EmptyInput("empirical W2 needs at least one sample on each side")
    if xs.size != ys.size:
        raise UnequalCounts(f"{xs.size} vs {ys.size} samples")
    return float(np.mean((np.sort(xs) - np.sort(ys)) ** 2))


def interpolation_weight(w2_full: float, P: float) -> float:
    """Weight on the MMSE estimate; the perceptual sample gets 1 - weight."""
    if P < 0:
        raise NegativeBudget(f"P must be >= 0, got {P}")
    if w2_full < 0:
        raise DomainError(f"w2_full must be >= 0, got {w2_full}")
    if w2_full == 0 or P >= w2_full:
        return 1.0
    return math.sqrt(P / w2_full)


def interpolate_reconstruction(s_tilde, s_prime, w2_full: float, P: float):
    lam = interpolation_weight(w2_full, P)
    if lam == 1.0:
        return s_tilde
    if lam == 0.0:
        return s_prime
    return (1.0 - lam) * np.asarray(s_prime) + lam * np.asarray(s_tilde)


@dataclass(frozen=True)
class DPPoint:
    mmse: float
    w2_full: float
    P: float
    distortion: float
    perception: float


def dp_tradeoff_point(mmse: float, w2_full: float, P: float) -> DPPoint:
    if mmse < 0 or w2_full < 0:
        raise DomainError("mmse and w2_full must be nonnegative")
    P = check_budget("P", P)
    return DPPoint(mmse=mmse, w2_full=w2_full, P=P,
                   distortion=mmse + bracket(w2_full, P),
                   perception=min(w2_full, P))


def gaussian_dp_reference(gamma: float, R: float, P: float) -> DPPoint:
    """Tradeoff point of the zero-common-randomness Gaussian scheme, where the
    MMSE and the transport cost both equal gamma 2^{-2R}."""
    d = shannon_dr(gamma, R)
    return dp_tradeoff_point(d, d, P)
