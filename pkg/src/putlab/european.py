"""European put pricing under the atomic jump diffusion, and b_e(t).

Conditioning on the per-atom Poisson jump counts makes the price an exact
mixture of lognormal put values, so both the price and its spot derivative
come out in closed form per term.  The critical price b_e(t), the root of
F(t, x) = P_e(t, x) - (K - x), is resolved through a call-parity form of F
that stays cancellation-free down to theta ~ 1e-8, which the limit-case
rate checks require.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm, poisson

from .errors import RegimeMismatch, RootBracketFailure, TruncationFailure
from .model import ModelParams, Regime, classify_regime
from .parallel import thread_map

DEFAULT_ABS_TOL_FACTOR = 1e-13
MAX_COUNT_TERMS = 200


@dataclass(frozen=True)
class AlphaPoint:
    """Normalized log-moneyness of b_e at one theta, with diagnostic ratios."""

    theta: float
    b_e: float
    alpha: float
    alpha_ratio: float  # alpha / sqrt(2 ln(1/theta))
    rate_ratio: float   # (K - b_e) / (sigma K sqrt(theta |ln theta|))


def _count_mixture(m: ModelParams, theta: float, abs_tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Joint jump-count mixture: log-shifts sum(n_i y_i) and probabilities.

    Per-atom caps are chosen so that the ignored tail mass — both plain
    (bounds the put terms by K) and e^y-tilted (bounds the call terms by
    the forward) — stays below abs_tol split across atoms.
    """
    shifts = np.zeros(1)
    probs = np.ones(1)
    n_atoms = len(m.nu)
    if n_atoms == 0:
        return shifts, probs
    budget = abs_tol / (n_atoms * (m.K + m.K * math.exp(abs(m.r - m.delta) * theta)))
    for atom in m.nu:
        mean = atom.w * theta
        tilted_mean = mean * math.exp(atom.y)
        tilt_mass = math.exp(mean * math.expm1(atom.y))
        cap = 0
        while (
            poisson.sf(cap, mean) > budget
            or tilt_mass * poisson.sf(cap, tilted_mean) > budget
        ):
            cap += 1
            if cap > MAX_COUNT_TERMS:
                raise TruncationFailure(
                    f"atom (y={atom.y}, w={atom.w}) needs more than "
                    f"{MAX_COUNT_TERMS} series terms at theta={theta}"
                )
        counts = np.arange(cap + 1)
        pmf = poisson.pmf(counts, mean)
        shifts = (shifts[:, None] + atom.y * counts[None, :]).ravel()
        probs = (probs[:, None] * pmf[None, :]).ravel()
    return shifts, probs


def price_eu(
    m: ModelParams,
    t: float,
    x,
    abs_tol: float | None = None,
) -> tuple[np.ndarray | float, np.ndarray | float]:
    """European put price and spot delta at time t, spot x (scalar or array).

    Requires theta = T - t > 0.  The series is truncated so the ignored
    Poisson tail contributes less than ``abs_tol`` (default 1e-13 * K) and
    each point is accumulated with compensated summation.
    """
    theta = m.T - t
    if theta <= 0.0:
        raise ValueError(f"need t < T; got theta = {theta}")
    if abs_tol is None:
        abs_tol = DEFAULT_ABS_TOL_FACTOR * m.K
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x_arr <= 0.0):
        raise ValueError("spot must be positive")
    J, p = _count_mixture(m, theta, abs_tol)
    s = m.sigma * math.sqrt(theta)
    disc = math.exp(-m.r * theta)
    # per (count, spot): lognormal put value K*Phi(-d2) - F*Phi(-d1)
    mlog = np.log(x_arr)[None, :] + m.mu * theta + J[:, None]
    fwd = np.exp(mlog + 0.5 * s * s)
    d2 = (mlog - math.log(m.K)) / s
    d1 = d2 + s
    put_terms = disc * (m.K * norm.cdf(-d2) - fwd * norm.cdf(-d1))
    delta_terms = -disc * (fwd / x_arr[None, :]) * norm.cdf(-d1)
    price = np.array([math.fsum(p * put_terms[:, j]) for j in range(x_arr.size)])
    delta = np.array([math.fsum(p * delta_terms[:, j]) for j in range(x_arr.size)])
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(price[0]), float(delta[0])
    return price, delta


def exercise_gap(m: ModelParams, t: float, x, abs_tol: float | None = None):
    """F(t, x) = P_e(t, x) - (K - x), evaluated without large-term cancellation.

    Uses put-call parity: F = C_e(t, x) + K(e^{-r theta} - 1) - x(e^{-delta theta} - 1),
    where every summand is O(theta) or the (small) call value, so b_e stays
    resolvable at theta as small as 1e-8.
    """
    theta = m.T - t
    if theta <= 0.0:
        raise ValueError(f"need t < T; got theta = {theta}")
    if abs_tol is None:
        abs_tol = DEFAULT_ABS_TOL_FACTOR * m.K
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    J, p = _count_mixture(m, theta, abs_tol)
    s = m.sigma * math.sqrt(theta)
    disc = math.exp(-m.r * theta)
    mlog = np.log(x_arr)[None, :] + m.mu * theta + J[:, None]
    fwd = np.exp(mlog + 0.5 * s * s)
    d2 = (mlog - math.log(m.K)) / s
    d1 = d2 + s
    call_terms = disc * (fwd * norm.cdf(d1) - m.K * norm.cdf(d2))
    call_delta_terms = disc * (fwd / x_arr[None, :]) * norm.cdf(d1)
    gap = np.array(
        [
            math.fsum(p * call_terms[:, j])
            + m.K * math.expm1(-m.r * theta)
            - x_arr[j] * math.expm1(-m.delta * theta)
            for j in range(x_arr.size)
        ]
    )
    # dF/dx = 1 + put delta = (1 - e^{-delta theta}) + call delta
    slope = np.array(
        [
            math.fsum(p * call_delta_terms[:, j]) - math.expm1(-m.delta * theta)
            for j in range(x_arr.size)
        ]
    )
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(gap[0]), float(slope[0])
    return gap, slope


def solve_be(m: ModelParams, t: float, xtol: float | None = None) -> float:
    """European critical price: the unique root of F(t, .) in (0, K).

    F is strictly increasing (dF/dx = dP_e/dx + 1 > 0), so a safeguarded
    Newton iteration on the parity form with bisection fallback converges
    unconditionally once the bracket is verified.
    """
    theta = m.T - t
    if theta <= 0.0:
        raise ValueError(f"need 0 < t < T; got theta = {theta}")
    if xtol is None:
        xtol = 1e-13 * m.K
    hi = m.K
    width = 10.0 * m.sigma * math.sqrt(theta) + abs(m.mu) * theta
    lo = m.K * math.exp(-width)
    f_lo, _ = exercise_gap(m, t, lo)
    widenings = 0
    while f_lo >= 0.0:
        widenings += 1
        if widenings > 6:
            raise RootBracketFailure(
                f"could not bracket b_e at theta={theta}: F({lo}) = {f_lo}"
            )
        width *= 2.0
        lo = m.K * math.exp(-width)
        f_lo, _ = exercise_gap(m, t, lo)
    f_hi, _ = exercise_gap(m, t, hi)
    if not f_hi > 0.0:
        raise RootBracketFailure(f"F(t, K) = {f_hi} <= 0 at theta={theta}")
    xcur = 0.5 * (lo + hi)
    for _ in range(120):
        f, fp = exercise_gap(m, t, xcur)
        if f > 0.0:
            hi = xcur
        elif f < 0.0:
            lo = xcur
        else:
            return xcur
        if fp > 0.0:
            step = xcur - f / fp
        else:
            step = 0.5 * (lo + hi)
        if not (lo < step < hi):
            step = 0.5 * (lo + hi)
        if hi - lo <= xtol:
            return 0.5 * (lo + hi)
        xcur = step
    return 0.5 * (lo + hi)


def alpha_of_theta(
    m: ModelParams,
    thetas: Sequence[float],
    threads: int | None = None,
) -> list[AlphaPoint]:
    """alpha(theta) = (ln(K/b_e) - mu theta) / (sigma sqrt(theta)) per theta.

    Only meaningful in the dbar = 0 regime, where alpha grows like
    sqrt(2 ln(1/theta)); the returned ratios track that growth and the
    sqrt(2) law for (K - b_e).
    """
    if classify_regime(m) is not Regime.ZERO_DBAR:
        raise RegimeMismatch("alpha_of_theta requires a dbar = 0 model")

    def one(theta: float) -> AlphaPoint:
        b_e = solve_be(m, m.T - theta)
        alpha = (math.log(m.K / b_e) - m.mu * theta) / (m.sigma * math.sqrt(theta))
        alpha_ratio = alpha / math.sqrt(2.0 * math.log(1.0 / theta)) if theta < 1.0 else float("nan")
        rate_ratio = (m.K - b_e) / (m.sigma * m.K * math.sqrt(theta * abs(math.log(theta))))
        return AlphaPoint(theta=theta, b_e=b_e, alpha=alpha, alpha_ratio=alpha_ratio, rate_ratio=rate_ratio)

    return thread_map(one, list(thetas), threads)


def write_alpha_csv(points: Sequence[AlphaPoint], path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["theta", "b_e", "alpha", "alpha_ratio", "rate_ratio"])
        for pt in points:
            writer.writerow([repr(pt.theta), repr(pt.b_e), repr(pt.alpha), repr(pt.alpha_ratio), repr(pt.rate_ratio)])
