"""Independent reference implementations used only to check the main solvers.

Nothing here shares code with the production paths: the binomial tree
checks the finite-difference American solver, the textbook lognormal put
formula checks the no-jump limit of the series pricer, plain Monte Carlo
checks the jump-diffusion series, and a discretized Tanaka accumulation
checks the closed-form expected local time.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import norm

from .model import ModelParams


def black_scholes_put(x: float, K: float, r: float, q: float, sigma: float, theta: float) -> tuple[float, float]:
    """Standard lognormal put value and delta (continuous dividend yield q)."""
    if theta <= 0.0:
        return max(K - x, 0.0), -1.0 if x < K else 0.0
    st = sigma * math.sqrt(theta)
    d1 = (math.log(x / K) + (r - q + 0.5 * sigma * sigma) * theta) / st
    d2 = d1 - st
    price = K * math.exp(-r * theta) * norm.cdf(-d2) - x * math.exp(-q * theta) * norm.cdf(-d1)
    delta = -math.exp(-q * theta) * norm.cdf(-d1)
    return price, delta


def binomial_american_put(
    x: float,
    K: float,
    r: float,
    q: float,
    sigma: float,
    T: float,
    steps: int = 5000,
) -> float:
    """CRR tree for the no-jump American put."""
    dt = T / steps
    u = math.exp(sigma * math.sqrt(dt))
    d = 1.0 / u
    growth = math.exp((r - q) * dt)
    p = (growth - d) / (u - d)
    if not 0.0 < p < 1.0:
        raise ValueError("binomial step too coarse for these parameters")
    disc = math.exp(-r * dt)
    j = np.arange(steps + 1)
    spots = x * u ** (2.0 * j - steps)
    values = np.maximum(K - spots, 0.0)
    for k in range(steps - 1, -1, -1):
        values = disc * (p * values[1 : k + 2] + (1.0 - p) * values[: k + 1])
        spots = x * u ** (2.0 * np.arange(k + 1) - k)
        np.maximum(values, K - spots, out=values)
    return float(values[0])


def mc_euro_price(
    m: ModelParams,
    theta: float,
    x: float,
    n_paths: int = 1_000_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo European put price and standard error.

    Simulates the log-return exactly: Gaussian diffusion plus one Poisson
    count per atom.
    """
    rng = np.random.default_rng(seed)
    log_ret = m.mu * theta + m.sigma * math.sqrt(theta) * rng.standard_normal(n_paths)
    for atom in m.nu:
        log_ret += atom.y * rng.poisson(atom.w * theta, n_paths)
    payoff = np.maximum(m.K - x * np.exp(log_ret), 0.0)
    disc = math.exp(-m.r * theta)
    price = disc * float(np.mean(payoff))
    se = disc * float(np.std(payoff, ddof=1)) / math.sqrt(n_paths)
    return price, se


def mc_expected_local_time(
    x: float,
    horizon: float,
    n_paths: int = 200_000,
    n_steps: int = 400,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo of the local time of x + B at 0 over [0, horizon].

    Accumulates the Tanaka increment |x_{k+1}| - |x_k| - sgn(x_k) dx per
    step; the telescoped estimator is unbiased for E|x + B_h| - |x|.
    """
    rng = np.random.default_rng(seed)
    dt = horizon / n_steps
    pos = np.full(n_paths, float(x))
    acc = np.zeros(n_paths)
    for _ in range(n_steps):
        dx = rng.standard_normal(n_paths) * math.sqrt(dt)
        nxt = pos + dx
        acc += np.abs(nxt) - np.abs(pos) - np.sign(pos) * dx
        pos = nxt
    est = float(np.mean(acc))
    se = float(np.std(acc, ddof=1)) / math.sqrt(n_paths)
    return est, se
