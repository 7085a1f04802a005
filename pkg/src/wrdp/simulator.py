"""Monte-Carlo simulation of the random-codebook scheme for a scalar Gaussian source.

A codebook of floor(2^{nR}) x floor(2^{nC}) codewords is drawn i.i.d. from
N(0, gamma~)^n and split into floor(2^{nC}) subcodebooks, one per value of the
shared seed K.  The encoder samples a codeword index from the test-channel
likelihood within subcodebook K; the decoder draws a perceptual sample X'^n
from the nu-channel and interpolates between it and the selected codeword.

Subcodebooks are generated on demand from ``(seed, codebook, k)``, so a
codebook is a deterministic function of the seed whether or not it is ever
materialised in full (see :func:`build_codebook`).

Every random draw comes from a stream keyed by ``SeedSequence(seed,
spawn_key=(tag, ...))``; results do not depend on execution order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .scalar import dstar_value, psi
from .transport import NegativeBudget, interpolate_reconstruction, w2_diagonal
from .types import (
    DomainError,
    GaussianCoupling,
    WRDPError,
    check_budget,
    check_rate,
    check_variance,
    encode_number,
)

DEFAULT_BUDGET = 2 ** 22

# stream tags
_CODEBOOK, _TRIAL, _COVER, _POSTERIOR = 1, 2, 3, 4


class BudgetExceeded(WRDPError):
    pass


def _count(n: int, rate: float) -> int:
    """floor(2^{n rate}), at least 1; exact for integral n*rate."""
    if rate == 0:
        return 1
    e = n * rate
    if e > 62:
        return 2 ** 62
    if abs(e - round(e)) < 1e-9:
        return 2 ** int(round(e))
    return max(int(math.floor(2.0 ** e)), 1)


@dataclass(frozen=True)
class CodebookConfig:
    n: int
    R: float
    C: float
    gamma: float
    seed: int = 0
    budget: int = DEFAULT_BUDGET
    n_codebooks: int = 5

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"blocklength n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "R", check_rate("R", self.R))
        object.__setattr__(self, "C", check_rate("C", self.C))
        object.__setattr__(self, "gamma", check_variance("gamma", self.gamma))
        if self.n_codebooks < 1:
            raise DomainError("n_codebooks must be >= 1")
        if self.num_codewords > self.budget:
            raise BudgetExceeded(
                f"subcodebook size floor(2^(nR)) = {self.num_codewords} exceeds the "
                f"budget {self.budget} (n={self.n}, R={self.R})")

    @property
    def num_codewords(self) -> int:
        """Codewords per subcodebook."""
        return _count(self.n, self.R)

    @property
    def num_seeds(self) -> int:
        """Number of subcodebooks (values of the shared seed K)."""
        return _count(self.n, self.C)

    @property
    def R_eff(self) -> float:
        return math.log2(self.num_codewords) / self.n

    @property
    def C_eff(self) -> float:
        return math.log2(self.num_seeds) / self.n

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TestChannels:
    mu: GaussianCoupling
    nu: GaussianCoupling

    @classmethod
    def for_rates(cls, gamma: float, R: float, C: float) -> "TestChannels":
        gt = gamma * (1.0 - 2.0 ** (-2.0 * R))
        mu = GaussianCoupling(gamma, gt, gt)
        theta = gamma * psi(R, R + C)
        # theta^2 <= gamma * gt holds analytically; trim rounding at the edge
        theta = min(theta, math.sqrt(gamma * gt))
        return cls(mu, GaussianCoupling(gamma, gt, theta))


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@lru_cache(maxsize=512)
def _subcodebook_cached(seed, n, M, gamma_tilde, codebook, k):
    rng = _stream(seed, _CODEBOOK, codebook, k)
    book = rng.standard_normal((M, n)) * math.sqrt(gamma_tilde)
    book.setflags(write=False)
    return book


def subcodebook(cfg: CodebookConfig, k: int, codebook: int = 0,
                gamma_tilde: Optional[float] = None) -> np.ndarray:
    """Subcodebook ``k`` of codebook realisation ``codebook``: (M, n) array."""
    if gamma_tilde is None:
        gamma_tilde = TestChannels.for_rates(cfg.gamma, cfg.R_eff, cfg.C_eff).mu.gamma_tilde
    return _subcodebook_cached(cfg.seed, cfg.n, cfg.num_codewords, float(gamma_tilde),
                               int(codebook), int(k))


def build_codebook(cfg: CodebookConfig, codebook: int = 0) -> np.ndarray:
    """Full codebook as a (num_seeds, num_codewords, n) array."""
    total = cfg.num_codewords * cfg.num_seeds
    if total > cfg.budget:
        raise BudgetExceeded(
            f"{cfg.num_codewords} x {cfg.num_seeds} = {total} codewords exceed the "
            f"budget {cfg.budget} (n={cfg.n}, R={cfg.R}, C={cfg.C})")
    return np.stack([subcodebook(cfg, k, codebook) for k in range(cfg.num_seeds)])


def likelihood_encode(x, book: np.ndarray, mu: GaussianCoupling,
                      rng: np.random.Generator) -> int:
    """Sample j with probability proportional to prod_t mu(x_t | book[j, t])."""
    x = np.asarray(x, dtype=float)
    if book.ndim != 2 or book.shape[1] != x.shape[0]:
        raise DomainError(f"block of length {x.shape[0]} vs codebook shape {book.shape}")
    if book.shape[0] == 1:
        return 0
    d2 = np.sum((x - mu.cond_scale * book) ** 2, axis=1)
    var = mu.cond_var
    if var == 0:
        logw = np.where(d2 == d2.min(), 0.0, -np.inf)
    else:
        logw = -d2 / (2.0 * var)
    w = np.exp(logw - logw.max())
    cdf = np.cumsum(w)
    j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(j, len(w) - 1)


def perceptual_draw(x_tilde, nu: GaussianCoupling, rng: np.random.Generator) -> np.ndarray:
    """X'^n drawn symbol-wise from the nu-conditional law of X given X~."""
    x_tilde = np.asarray(x_tilde, dtype=float)
    z = rng.standard_normal(x_tilde.shape)
    return nu.cond_scale * x_tilde + math.sqrt(nu.cond_var) * z


def reconstruct(x_tilde, nu: GaussianCoupling, P: float, w2_hat: float,
                rng: np.random.Generator) -> np.ndarray:
    """Decoder output for per-symbol budget ``P`` and per-symbol W2^2 estimate
    ``w2_hat`` between the source law and the law of the selected codeword."""
    if P < 0:
        raise NegativeBudget(f"P must be >= 0, got {P}")
    x_tilde = np.asarray(x_tilde, dtype=float)
    n = x_tilde.shape[0]
    x_prime = perceptual_draw(x_tilde, nu, rng)
    return interpolate_reconstruction(x_tilde, x_prime, n * w2_hat, n * P)


@dataclass
class SimulationResult:
    n: int
    trials: int
    empirical_distortion: float
    empirical_distortion_se: float
    empirical_w2_per_symbol: float
    soft_covering_gap: float
    reference: float
    R_eff: float = 0.0
    C_eff: float = 0.0
    P: float = 0.0
    w2_hat: float = 0.0
    codebook_distortions: list = field(default_factory=list)
    codebook_dispersion: float = 0.0
    mmse_distortion_codeword: float = 0.0
    mmse_distortion_posterior: Optional[float] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["P"] = encode_number(self.P)
        return d


@dataclass(frozen=True)
class EstimatorConfig:
    pilot_fraction: float = 0.1
    cover_subcodebooks: int = 8
    cover_draws: int = 64
    posterior_samples: int = 4096


@dataclass(frozen=True)
class _Trial:
    x: np.ndarray
    x_tilde: np.ndarray
    rng: np.random.Generator
    codebook: int
    k: int
    j: int


def _encode_trial(cfg, channels, i) -> _Trial:
    rng = _stream(cfg.seed, _TRIAL, i)
    c = i % cfg.n_codebooks
    k = int(rng.integers(cfg.num_seeds))
    x = rng.standard_normal(cfg.n) * math.sqrt(cfg.gamma)
    book = subcodebook(cfg, k, c, channels.mu.gamma_tilde)
    j = likelihood_encode(x, book, channels.mu, rng)
    return _Trial(x, book[j], rng, c, k, j)


def _posterior_means(cfg, channels, codebook, k, samples):
    """E[X^n | J = j, K = k] for every j, by Monte Carlo over X^n ~ N(0, gamma I)."""
    rng = _stream(cfg.seed, _POSTERIOR, codebook, k)
    xs = rng.standard_normal((samples, cfg.n)) * math.sqrt(cfg.gamma)
    book = subcodebook(cfg, k, codebook, channels.mu.gamma_tilde)
    var = channels.mu.cond_var
    d2 = np.sum((xs[:, None, :] - book[None, :, :]) ** 2, axis=2)
    logw = -d2 / (2.0 * var)
    post = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))  # p(j | x)
    mass = post.sum(axis=0)
    means = (post.T @ xs) / np.maximum(mass, 1e-300)[:, None]
    return means


def run_trials(cfg: CodebookConfig, P: float, trials: int,
               estimator_cfg: Optional[EstimatorConfig] = None) -> SimulationResult:
    """Simulate ``trials`` source blocks through encoder and decoder."""
    P = check_budget("P", P)
    if int(trials) != trials or trials < 1:
        raise DomainError(f"trials must be a positive integer, got {trials}")
    trials = int(trials)
    est = estimator_cfg or EstimatorConfig()
    channels = TestChannels.for_rates(cfg.gamma, cfg.R_eff, cfg.C_eff)
    n = cfg.n

    # pilot: transport cost between X~^n and the decoder's perceptual draws
    pilot = max(1, int(math.ceil(est.pilot_fraction * trials)))
    cost = 0.0
    for i in range(pilot):
        t = _encode_trial(cfg, channels, i)
        x_prime = perceptual_draw(t.x_tilde, channels.nu, t.rng)
        cost += float(np.sum((x_prime - t.x_tilde) ** 2)) / n
    w2_hat = cost / pilot

    posterior = (n <= 4 and cfg.R <= 1 and cfg.C <= 1 and cfg.gamma > 0)
    post_cache = {}
    dist = np.empty(trials)
    mmse_cw = np.empty(trials)
    mmse_post = np.empty(trials) if posterior else None
    s1 = np.zeros(n)
    s2 = np.zeros(n)
    by_book = np.zeros(cfg.n_codebooks)
    count_book = np.zeros(cfg.n_codebooks)
    for i in range(trials):
        t = _encode_trial(cfg, channels, i)
        x_hat = reconstruct(t.x_tilde, channels.nu, P, w2_hat, t.rng)
        dist[i] = float(np.sum((t.x - x_hat) ** 2)) / n
        mmse_cw[i] = float(np.sum((t.x - t.x_tilde) ** 2)) / n
        if posterior:
            key = (t.codebook, t.k)
            if key not in post_cache:
                post_cache[key] = _posterior_means(cfg, channels, t.codebook, t.k,
                                                   est.posterior_samples)
            mmse_post[i] = float(np.sum((t.x - post_cache[key][t.j]) ** 2)) / n
        s1 += x_hat
        s2 += x_hat * x_hat
        by_book[t.codebook] += dist[i]
        count_book[t.codebook] += 1

    mean = s1 / trials
    var = np.maximum(s2 / trials - mean ** 2, 0.0)
    w2_emp = w2_diagonal(mean, var, np.zeros(n), np.full(n, cfg.gamma)) / n
    se = float(dist.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("nan")
    book_means = [float(b / c) for b, c in zip(by_book, count_book) if c > 0]

    cover = soft_covering_gap(cfg, subcodebooks=est.cover_subcodebooks,
                              draws=est.cover_draws, margin=0.0)

    return SimulationResult(
        n=n,
        trials=trials,
        empirical_distortion=float(dist.mean()),
        empirical_distortion_se=se,
        empirical_w2_per_symbol=float(w2_emp),
        soft_covering_gap=cover.gap,
        reference=dstar_value(cfg.gamma, cfg.R_eff, cfg.C_eff, P),
        R_eff=cfg.R_eff,
        C_eff=cfg.C_eff,
        P=P,
        w2_hat=w2_hat,
        codebook_distortions=book_means,
        codebook_dispersion=float(np.std(book_means)) if len(book_means) > 1 else 0.0,
        mmse_distortion_codeword=float(mmse_cw.mean()),
        mmse_distortion_posterior=float(mmse_post.mean()) if posterior else None,
    )


@dataclass(frozen=True)
class CoveringEstimate:
    n: int
    margin: float
    gap: float           # upper bound on (1/n) W2^2, averaged over subcodebooks
    gap_se: float
    lower: float         # moment-matching lower bound on (1/n) W2^2
    lower_se: float
    subcodebooks: int

    def to_dict(self) -> dict:
        return asdict(self)


def soft_covering_gap(cfg: CodebookConfig, subcodebooks: int = 40, draws: int = 400,
                      margin: float = 0.25, moment_draws: int = 20000) -> CoveringEstimate:
    """Estimate (1/n) E[W2^2(p_{X'^n | K, C}, N(0, gamma I_n))].

    X'^n is a uniformly chosen codeword of one subcodebook passed through the
    mu-channel designed for rate ``R - margin``.  Two bounds are returned:

    * ``gap``: (2 gamma / n) D(p_{X'^n|K,C} || N(0, gamma I)) with D in nats,
      an upper bound on W2^2 / n by Talagrand's transport inequality.  D is
      estimated by Monte Carlo with the exact mixture density.
    * ``lower``: the squared W2 between diagonal Gaussians matching the
      per-symbol means and variances of X'^n, a lower bound (Gelbrich).

    A negative ``margin`` designs the channel for a rate above the codebook
    rate, i.e. an undersized codebook.
    """
    design = cfg.R - margin
    if design < 0:
        raise DomainError(f"design rate R - margin = {design} is negative")
    gamma, n, M = cfg.gamma, cfg.n, cfg.num_codewords
    gt = gamma * (1.0 - 2.0 ** (-2.0 * design))
    mu = GaussianCoupling(gamma, gt, gt)
    var = mu.cond_var
    uppers = np.empty(subcodebooks)
    lowers = np.empty(subcodebooks)
    tag = int(round(margin * 1e6))
    for b in range(subcodebooks):
        rng = _stream(cfg.seed, _COVER, n, b, tag & 0xFFFFFFFF, 1 if tag < 0 else 0)
        book = rng.standard_normal((M, n)) * math.sqrt(gt)

        jj = rng.integers(M, size=moment_draws)
        yy = book[jj] + math.sqrt(var) * rng.standard_normal((moment_draws, n))
        lowers[b] = w2_diagonal(yy.mean(axis=0), yy.var(axis=0),
                                np.zeros(n), np.full(n, gamma)) / n

        if var == 0 or gamma == 0:
            uppers[b] = np.inf if gt > 0 else 0.0
            continue
        j = rng.integers(M, size=draws)
        y = book[j] + math.sqrt(var) * rng.standard_normal((draws, n))
        log_q = np.empty(draws)
        chunk = max(1, 4_000_000 // (M * n))
        for s in range(0, draws, chunk):
            d2 = np.sum((y[s:s + chunk, None, :] - book[None, :, :]) ** 2, axis=2)
            log_q[s:s + chunk] = logsumexp(-d2 / (2.0 * var), axis=1)
        log_q += -math.log(M) - 0.5 * n * math.log(2.0 * math.pi * var)
        log_p = -np.sum(y * y, axis=1) / (2.0 * gamma) - 0.5 * n * math.log(2.0 * math.pi * gamma)
        uppers[b] = 2.0 * gamma * float(np.mean(log_q - log_p)) / n

    def se(a):
        return float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else float("nan")

    return CoveringEstimate(n=n, margin=margin, gap=float(uppers.mean()), gap_se=se(uppers),
                            lower=float(lowers.mean()), lower_se=se(lowers),
                            subcodebooks=subcodebooks)


def soft_covering_sweep(gamma: float, R: float, ns, seed: int = 0, margin: float = 0.25,
                        subcodebooks: int = 40, draws: int = 400) -> list:
    """Soft-covering estimates for each blocklength in ``ns``."""
    out = []
    for n in ns:
        cfg = CodebookConfig(n=n, R=R, C=0.0, gamma=gamma, seed=seed)
        out.append(soft_covering_gap(cfg, subcodebooks=subcodebooks, draws=draws, margin=margin))
    return out
