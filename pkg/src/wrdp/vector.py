"""Rate allocation for a vector Gaussian source with diagonal covariance.

D*(R, C, P) = min over r, r' >= 0 with sum(r) <= R, sum(r') <= R + C of

    sum_l g_l 2^{-2 r_l}
      + [(sqrt(sum_l g_l (2 - 2^{-2 r_l} - 2 psi(r_l, r'_l))) - sqrt(P))_+]^2

The solver alternates between an exact KKT solve for r' (the objective only
depends on r' through the transport term, which is a concave sum in r') and a
projected-gradient pass for r on the simplex.  Closed forms exist at P = inf
(reverse waterfilling) and at P = 0, C = inf (the "beta" waterfilling); both
are exposed and double as regression targets for the solver.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .scalar import bracket
from .types import (
    FEASIBILITY_TOL,
    INF,
    DiagGaussianSource,
    DimensionMismatch,
    DomainError,
    RateAllocation,
    TradeoffQuery,
    WRDPError,
    as_vector_source,
    check_rate,
    encode_number,
    validate_query,
)

LN2 = math.log(2.0)
K2 = 2.0 * LN2  # d/dr of -ln 2^{-2r}

#: r'_l is capped here during optimisation; 2^{-60} is below double precision
CAP = 30.0
MAX_ROUNDS = 500
ROUND_TOL = 1e-10
DEFAULT_GRID_STEP = 0.02
DEFAULT_CELL_BUDGET = 10 ** 7


class AllZeroSpectrum(WRDPError):
    pass


class ConvergenceFailure(WRDPError):
    def __init__(self, msg, iterates=None):
        super().__init__(msg)
        self.iterates = iterates or []


class TooManyCells(WRDPError):
    pass


@dataclass(frozen=True)
class WaterLevel:
    value: float
    kind: str  # "alpha" or "beta"

    def __post_init__(self):
        if self.kind not in ("alpha", "beta"):
            raise DomainError(f"unknown water level kind {self.kind!r}")
        if self.kind == "alpha" and not self.value > 0:
            raise DomainError("alpha must be positive")
        if self.kind == "beta" and self.value < 0:
            raise DomainError("beta must be nonnegative")


@dataclass(frozen=True)
class AllocationSolution:
    allocation: RateAllocation
    D: float
    inner: dict
    solver_meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "allocation": self.allocation.to_dict(),
            "D": self.D,
            "inner": self.inner,
            "solver_meta": self.solver_meta,
        }


@dataclass(frozen=True)
class UniversalityGap:
    r_hat: tuple        # optimal r at P = inf (reverse waterfilling)
    r_perception: tuple  # optimal r at P = 0
    gap: float

    def to_dict(self) -> dict:
        return {"r_hat": list(self.r_hat), "r_perception": list(self.r_perception),
                "gap": self.gap}


# ---------------------------------------------------------------- objective

def _terms(gammas, r, r_prime):
    g = np.asarray(gammas, dtype=float)
    r = np.asarray(r, dtype=float)
    rp = np.asarray(r_prime, dtype=float)
    e = np.exp2(-2.0 * r)
    ep = np.exp2(-2.0 * rp)  # exactly 0 for r' = inf
    distortion = float(np.sum(g * e))
    inner = float(np.sum(g * (2.0 - e - 2.0 * np.sqrt((1.0 - e) * (1.0 - ep)))))
    return distortion, inner


def _objective(gammas, r, r_prime, P):
    distortion, inner = _terms(gammas, r, r_prime)
    scale = float(np.sum(gammas))
    assert inner >= -1e-12 * max(scale, 1.0), f"negative transport term {inner}"
    return distortion + bracket(max(inner, 0.0), P)


def objective(src, a: RateAllocation, P: float) -> float:
    """Objective value of allocation ``a`` for budget ``P``."""
    src = as_vector_source(src)
    if len(a.r) != src.dim:
        raise DimensionMismatch(f"allocation has {len(a.r)} coordinates, source has {src.dim}")
    return _objective(src.gammas, a.r, a.r_prime, P)


# ------------------------------------------------------------ waterfilling

def _require_positive(src: DiagGaussianSource):
    if max(src.gammas) <= 0:
        raise AllZeroSpectrum("every component has zero variance")


def _bisect_decreasing(f, lo, hi, iters=400, tol=1e-13):
    """Root of a decreasing function with f(lo) >= 0 >= f(hi)."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def reverse_waterfill_alpha(src, R: float):
    """Classical reverse waterfilling: r_l = 1/2 log2+(g_l / alpha), sum = R."""
    src = as_vector_source(src)
    R = check_rate("R", R)
    _require_positive(src)
    g = np.asarray(src.gammas)
    gmax = float(g.max())
    if R == 0:
        return WaterLevel(gmax, "alpha"), tuple(0.0 for _ in g)
    pos = g > 0
    log_g = np.where(pos, np.log2(np.where(pos, g, 1.0)), -np.inf)

    def total(log_alpha):
        return float(np.sum(0.5 * np.maximum(log_g - log_alpha, 0.0))) - R

    hi = math.log2(gmax)
    lo = hi - 2.0 * R - 1.0
    log_alpha = _bisect_decreasing(total, lo, hi, tol=1e-15)
    # the active set is now known; solve its level exactly so sum(r) == R
    active = log_g > log_alpha + 1e-12
    if not active.any():  # R below bisection resolution: the largest components only
        active = log_g == log_g.max()
    log_alpha = (float(np.sum(log_g[active])) - 2.0 * R) / int(active.sum())
    rates = np.where(active, 0.5 * (log_g - log_alpha), 0.0)
    return WaterLevel(2.0 ** log_alpha, "alpha"), tuple(float(x) for x in rates)


def _beta_rates(g, beta):
    return 0.5 * np.log2((1.0 + np.sqrt(1.0 + beta * g * g)) / 2.0)


def waterfill_beta(src, R: float):
    """Allocation minimising sum 2 g_l (1 - sqrt(1 - 2^{-2 r_l})) with sum(r) = R."""
    src = as_vector_source(src)
    R = check_rate("R", R)
    _require_positive(src)
    g = np.asarray(src.gammas)
    if R == 0:
        return WaterLevel(0.0, "beta"), tuple(0.0 for _ in g)

    def total(log_beta):
        return float(np.sum(_beta_rates(g, 2.0 ** log_beta))) - R

    # rates grow like 1/4 log2(beta) for large beta
    lo, hi = -60.0, 1.0
    while total(hi) < 0:
        hi *= 2.0
    while total(lo) > 0:
        lo *= 2.0
    log_beta = -_bisect_decreasing(lambda x: total(-x), -hi, -lo, tol=1e-15)
    beta = 2.0 ** log_beta
    rates = _beta_rates(g, beta)
    return WaterLevel(beta, "beta"), tuple(float(x) for x in rates)


# ------------------------------------------------------------- block solves

def _best_r_prime(g, r, budget):
    """argmax sum_l g_l sqrt(u_l) sqrt(1 - 2^{-2 r'_l}) s.t. sum r' <= budget,
    0 <= r' <= CAP, where u_l = 1 - 2^{-2 r_l}.  Each term is concave in r'_l,
    so the KKT point under a shared multiplier is the global optimum."""
    L = len(g)
    if math.isinf(budget):
        return np.full(L, INF)
    if budget >= L * CAP:
        return np.full(L, CAP)
    c = g * np.sqrt(1.0 - np.exp2(-2.0 * r))
    active = c > 0
    if not active.any():
        # transport term is independent of r'; spread the budget evenly
        return np.full(L, min(budget / L, CAP))
    if budget == 0:
        return np.zeros(L)
    ca = c[active]

    def rates(log_lam):
        # c g'(t) = lam with g(t) = sqrt(1 - e^{-K2 t}), solved for y = e^{-K2 t}
        m = 2.0 * np.exp(log_lam) / (ca * K2)
        y = 2.0 * m / (np.sqrt(m * m + 4.0) + m)
        return np.clip(-np.log(y) / K2, 0.0, CAP)

    def excess(log_lam):
        return float(np.sum(rates(log_lam))) - budget

    lo, hi = -200.0, 200.0
    log_lam = brentq(excess, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    out = np.zeros(L)
    out[active] = rates(log_lam)
    # remove the bisection residual from the largest coordinate
    resid = float(out.sum()) - budget
    if resid > 0:
        i = int(np.argmax(out))
        out[i] = max(out[i] - resid, 0.0)
    return out


def _project_capped_simplex(x, R):
    """Euclidean projection onto {x >= 0, sum(x) <= R}."""
    y = np.maximum(x, 0.0)
    if y.sum() <= R:
        return y
    if R <= 0:
        return np.zeros_like(y)
    u = np.sort(x)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, len(x) + 1)
    cond = u - (css - R) / idx > 0
    # cond[0] holds analytically; rounding can lose it when R is tiny
    rho = idx[cond][-1] if cond.any() else 1
    tau = (css[rho - 1] - R) / rho
    return np.maximum(x - tau, 0.0)


def _grad_r(g, r, r_prime, P):
    e = np.exp2(-2.0 * r)
    u = 1.0 - e
    v = 1.0 - np.exp2(-2.0 * r_prime)
    _, inner = _terms(g, r, r_prime)
    if math.isinf(P) or inner <= P:
        t = 0.0
    else:
        t = 1.0 - math.sqrt(P / inner)
    # d/dr sqrt(u) blows up at r = 0; the floor keeps the direction finite
    ratio = np.sqrt(v / np.maximum(u, 1e-300))
    ratio = np.minimum(ratio, 1e12)
    return K2 * g * e * (-1.0 + t * (1.0 - ratio))


def _best_r(g, r0, r_prime, P, R, max_iter=3000):
    """Projected gradient with Barzilai-Borwein steps and Armijo backtracking."""
    r = _project_capped_simplex(np.asarray(r0, float), R)
    f = _objective(g, r, r_prime, P)
    grad = _grad_r(g, r, r_prime, P)
    step = 1.0 / max(float(np.max(np.abs(grad))), 1e-12)
    iters = 0
    stall = 0
    for iters in range(1, max_iter + 1):
        while True:
            cand = _project_capped_simplex(r - step * grad, R)
            d = cand - r
            fc = _objective(g, cand, r_prime, P)
            if fc <= f + 1e-4 * float(grad @ d) or step < 1e-20:
                break
            step *= 0.5
        if not np.any(d):
            break
        new_grad = _grad_r(g, cand, r_prime, P)
        s, yv = d, new_grad - grad
        sy = float(s @ yv)
        improvement = f - fc
        if fc <= f:
            r, f, grad = cand, fc, new_grad
        step = float(s @ s) / sy if sy > 1e-300 else 2.0 * step
        step = min(max(step, 1e-16), 1e6)
        if float(np.max(np.abs(d))) < 1e-14 or 0 <= improvement < 1e-17:
            break
        # bouncing off the r = 0 face, where d/dr sqrt(u) is unbounded
        stall = stall + 1 if improvement < 1e-15 * max(f, 1.0) else 0
        if stall >= 30:
            break
    return r, f, iters


# --------------------------------------------------------------- the solver

def _thread_count():
    env = os.environ.get("WRDP_THREADS")
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise DomainError(f"WRDP_THREADS must be a positive integer, got {env!r}")
    if n < 1:
        raise DomainError(f"WRDP_THREADS must be a positive integer, got {env!r}")
    return n


def _seeds(src, R):
    g = np.asarray(src.gammas)
    L = len(g)
    seeds = {"uniform": np.full(L, R / L)}
    if g.max() > 0:
        seeds["alpha"] = np.array(reverse_waterfill_alpha(src, R)[1])
        seeds["beta"] = np.array(waterfill_beta(src, R)[1])
    greedy = np.zeros(L)
    greedy[int(np.argmax(g))] = R
    seeds["greedy"] = greedy
    seeds["zero"] = np.zeros(L)
    return seeds


def _descend(g, r0, R, C, P, max_rounds=MAX_ROUNDS, round_tol=ROUND_TOL):
    budget = R + C
    r = np.asarray(r0, float)
    rp = _best_r_prime(g, r, budget)
    history = [_objective(g, r, rp, P)]
    pg_iters = 0
    converged = False
    for _ in range(max_rounds):
        r, f, it = _best_r(g, r, rp, P, R)
        pg_iters += it
        rp_new = _best_r_prime(g, r, budget)
        f_new = _objective(g, r, rp_new, P)
        if f_new <= f:
            rp, f = rp_new, f_new
        history.append(f)
        if history[-2] - history[-1] < round_tol:
            converged = True
            break
    return r, rp, history, pg_iters, converged


def _report_r_prime(rp, R, C):
    """Coordinates pinned at CAP with slack in the budget are reported as inf."""
    if math.isinf(C):
        return tuple(INF for _ in rp)
    slack = (R + C) - float(np.sum(rp)) > FEASIBILITY_TOL
    return tuple(INF if (x >= CAP and slack) else float(x) for x in rp)


def _solution(src, r, rp, P, R, C, meta):
    g = src.gammas
    alloc = RateAllocation(tuple(float(x) for x in r), _report_r_prime(rp, R, C))
    distortion, inner = _terms(g, alloc.r, alloc.r_prime)
    D = _objective(g, alloc.r, alloc.r_prime, P)
    return AllocationSolution(
        allocation=alloc,
        D=D,
        inner={"sum_r": float(sum(alloc.r)),
               "sum_r_prime": encode_number(sum(alloc.r_prime)),
               "distortion_term": distortion,
               "transport_term": inner,
               "bracket": bracket(max(inner, 0.0), P)},
        solver_meta=meta,
    )


def solve_allocation(src, q: TradeoffQuery, max_rounds: int = MAX_ROUNDS,
                     round_tol: float = ROUND_TOL) -> AllocationSolution:
    """Minimise the allocation objective for ``q`` from five deterministic seeds.

    Each seed runs alternating block descent until one round improves the
    objective by less than ``round_tol`` or ``max_rounds`` is reached; the best
    end point wins.  Raises :class:`ConvergenceFailure` only if no seed
    converged.
    """
    src = as_vector_source(src)
    validate_query(q, src)
    g = np.asarray(src.gammas, float)
    R, C, P = q.R, q.C, q.P
    if g.max() <= 0:
        meta = {"rounds": 0, "converged": True, "restarts": {}, "best_seed": None,
                "history": [0.0], "pg_iterations": 0}
        return _solution(src, np.zeros(len(g)), _best_r_prime(g, np.zeros(len(g)), R + C),
                         P, R, C, meta)

    seeds = _seeds(src, R)

    def run(item):
        name, r0 = item
        return name, _descend(g, r0, R, C, P, max_rounds, round_tol)

    items = list(seeds.items())
    workers = min(_thread_count(), len(items))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(it) for it in items]

    # merge by value, ties broken lexicographically on the allocation
    best_name, (r, rp, history, pg_iters, converged) = min(
        results, key=lambda kv: (kv[1][2][-1], tuple(kv[1][0]), tuple(kv[1][1])))
    if not any(res[4] for _, res in results):
        dump = {name: {"r": res[0].tolist(), "r_prime": res[1].tolist(),
                       "history": res[2][-5:]} for name, res in results}
        raise ConvergenceFailure(
            f"no restart converged within {max_rounds} rounds", iterates=dump)
    finals = [res[2][-1] for _, res in results]
    meta = {
        "rounds": len(history) - 1,
        "converged": bool(converged),
        "best_seed": best_name,
        "restarts": {name: res[2][-1] for name, res in results},
        "restart_dispersion": float(max(finals) - min(finals)),
        "history": history,
        "pg_iterations": pg_iters,
    }
    return _solution(src, r, rp, P, R, C, meta)


# ------------------------------------------------------------------- oracle

def _simplex_grid(L, total, step):
    """All grid points k*step (k integer) with sum <= total."""
    n = int(math.floor(total / step + 1e-9))
    pts = [c for c in itertools.product(range(n + 1), repeat=L) if sum(c) <= n]
    return np.asarray(pts, dtype=float) * step


def _tight_grid(L, total, step):
    """Grid points whose coordinate sum equals floor(total / step) * step."""
    n = int(math.floor(total / step + 1e-9))
    pts = [c + (n - sum(c),) for c in itertools.product(range(n + 1), repeat=L - 1)
           if sum(c) <= n]
    return np.asarray(pts, dtype=float).reshape(-1, L) * step


def brute_force_oracle(src, q: TradeoffQuery, grid_step: float = DEFAULT_GRID_STEP,
                       cell_budget: int = DEFAULT_CELL_BUDGET) -> AllocationSolution:
    """Exhaustive grid search over r and r'.

    Every grid point with sum(r) <= R is evaluated.  For r' only grid points
    that exhaust the R + C budget are kept (psi increases in each r'_l, so any
    other point is dominated by one of these), plus the all-infinite vector
    whenever it is feasible.
    """
    src = as_vector_source(src)
    validate_query(q, src)
    if grid_step <= 0:
        raise DomainError("grid_step must be positive")
    L = src.dim
    if L > 3:
        raise TooManyCells(f"oracle supports L <= 3, got L={L}")
    g = np.asarray(src.gammas, float)
    R, C, P = q.R, q.C, q.P

    r_grid = _simplex_grid(L, R, grid_step)
    if math.isinf(C) or R + C >= L * CAP:
        rp_grid = np.full((1, L), INF)
    else:
        rp_grid = _tight_grid(L, R + C, grid_step)
    cells = len(r_grid) * len(rp_grid)
    if cells > cell_budget:
        raise TooManyCells(f"{cells} cells exceed the budget of {cell_budget}")

    e = np.exp2(-2.0 * r_grid)                      # (Nr, L)
    dist = e @ g                                    # (Nr,)
    su = np.sqrt(1.0 - e)                           # (Nr, L)
    sv = np.sqrt(1.0 - np.exp2(-2.0 * rp_grid))     # (Nrp, L)
    best = (INF, None, None)
    chunk = max(1, 2_000_000 // max(len(rp_grid), 1))
    base = (2.0 - e) @ g                            # (Nr,)
    for s in range(0, len(r_grid), chunk):
        cross = (su[s:s + chunk] * g) @ sv.T         # (chunk, Nrp)
        inner = base[s:s + chunk, None] - 2.0 * cross
        inner = np.maximum(inner, 0.0)
        if math.isinf(P):
            obj = np.broadcast_to(dist[s:s + chunk, None], inner.shape)
        else:
            br = np.maximum(np.sqrt(inner) - math.sqrt(P), 0.0) ** 2
            obj = dist[s:s + chunk, None] + br
        flat = int(np.argmin(obj))
        i, j = divmod(flat, obj.shape[1])
        if obj[i, j] < best[0]:
            best = (float(obj[i, j]), s + i, j)
    _, i, j = best
    r = r_grid[i]
    rp = rp_grid[j]
    alloc_rp = tuple(INF if math.isinf(x) else float(x) for x in rp)
    meta = {"grid_step": grid_step, "cells": cells}
    alloc = RateAllocation(tuple(float(x) for x in r), alloc_rp)
    distortion, inner = _terms(g, alloc.r, alloc.r_prime)
    return AllocationSolution(
        allocation=alloc,
        D=_objective(g, alloc.r, alloc.r_prime, P),
        inner={"sum_r": float(sum(alloc.r)),
               "sum_r_prime": encode_number(sum(alloc.r_prime)),
               "distortion_term": distortion,
               "transport_term": inner,
               "bracket": bracket(max(inner, 0.0), P)},
        solver_meta=meta,
    )


def grid_resolution_bound(src, solution: AllocationSolution, q: TradeoffQuery,
                          grid_step: float = DEFAULT_GRID_STEP) -> float:
    """Objective lost by snapping ``solution`` down onto the oracle's grid.

    The snapped point is dominated by some oracle candidate, so
    ``oracle.D - solution.D`` never exceeds the returned value.
    """
    src = as_vector_source(src)
    g = src.gammas
    r = np.floor(np.asarray(solution.allocation.r) / grid_step + 1e-9) * grid_step
    rp = np.asarray(solution.allocation.r_prime, float)
    if not (math.isinf(q.C) or q.R + q.C >= src.dim * CAP):
        rp = np.floor(np.minimum(rp, CAP) / grid_step + 1e-9) * grid_step
    snapped = _objective(g, r, rp, q.P)
    return max(snapped - solution.D, 0.0)


def universality_gap(src, R: float, C: float) -> UniversalityGap:
    """Compare the distortion-optimal split (P = inf) with the perception-optimal
    split (P = 0) for the same (R, C)."""
    src = as_vector_source(src)
    _, r_hat = reverse_waterfill_alpha(src, R)
    sol = solve_allocation(src, TradeoffQuery(R, C, 0.0))
    r_perc = sol.allocation.r
    gap = max(abs(a - b) for a, b in zip(r_hat, r_perc))
    return UniversalityGap(tuple(r_hat), tuple(r_perc), float(gap))
