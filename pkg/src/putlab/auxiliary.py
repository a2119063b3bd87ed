"""Auxiliary optimal stopping problem on the unit horizon.

The problem mixes a running reward f_{lb}(x) = x + lb * x^+ collected while
an independent Poisson regime clock has not rung, and Brownian local time
at the starting level collected between the first ring and stopping, the
whole weighted by e^{lambda tau} and killed on the second ring:

    v(y) = sup_tau E[ e^{l tau} 1{N_tau=0} int_0^tau f_{lb}(y + B_s) ds
                      + (beta/2) e^{l tau} 1{N_tau=1} (L_tau - L_T1) ].

Reduction used by the solver: in regime 1 the e^{lambda tau} growth exactly
offsets the kill rate, so continuing to the horizon is optimal and the
regime-1 value is the expected remaining local time
m(t, x) = E|x + B_{1-t}| - |x| in closed Gaussian form.  Substituting that
back, the regime-0 problem becomes a single 1D parabolic obstacle problem

    dw/dt + (1/2) d2w/dx2 + f_{lb}(x) + lambda (beta/2) m(t, x) = 0,
    w >= 0,  w(1, .) = 0,  v(y) = w(0, y),

by linearity of the reward in the running accumulator.  This reduction is
this module's own derivation, so an independent discrete stopping tree
(``tree_oracle``) with the original payoff bookkeeping is kept alongside
as a mandatory cross-check.

The support edge y_* = -inf{y : v(y) > 0} is the rate constant for the
strictly-negative-dbar boundary theorem; it always lies in
(0, 1 + lb (2 + e^lambda)).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import NonConvergence
from .lcp import solve_lcp_psor
from .parallel import thread_map

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class AuxParams:
    """Regime-jump intensity lambda (unit horizon) and reward slope beta."""

    lam: float
    beta: float

    def __post_init__(self) -> None:
        if self.lam < 0.0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not self.beta > 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def lam_beta(self) -> float:
        return self.lam * self.beta

    @property
    def support_bound(self) -> float:
        """1 + lambda beta (2 + e^lambda); v vanishes below minus this."""
        return 1.0 + self.lam * self.beta * (2.0 + math.exp(self.lam))


@dataclass(frozen=True)
class AuxGrid:
    """Discretization of the obstacle problem.

    The default resolution pins the support edge to about 1e-2 absolute.
    y_lo is auto-extended so the grid always covers the zero region below
    -(2 + lambda beta (2 + e^lambda)); the kink of f at 0 lands on a node.
    """

    dy: float = 2.5e-3
    dt: float = 2.5e-4
    y_hi: float = 6.0
    y_lo: float | None = None
    v_tol: float = 1e-8
    psor_omega: float | None = None  # None: optimal SOR factor for this mesh ratio
    psor_maxiter: int = 10_000
    psor_tol_factor: float = 1e-10
    store_slices: int = 101

    def resolve_omega(self) -> float:
        if self.psor_omega is not None:
            return self.psor_omega
        a = self.dt / (2.0 * self.dy * self.dy)
        rho_jacobi = 2.0 * a / (1.0 + 2.0 * a)
        return 2.0 / (1.0 + math.sqrt(max(1e-12, 1.0 - rho_jacobi * rho_jacobi)))

    def resolve_span(self, p: AuxParams) -> tuple[float, float]:
        lo = self.y_lo
        if lo is None:
            lo = min(-12.0, -(2.0 + p.lam_beta * (2.0 + math.exp(p.lam))))
        # snap both ends outward onto multiples of dy so that 0 is a node
        lo = -self.dy * math.ceil(-lo / self.dy)
        hi = self.dy * math.ceil(self.y_hi / self.dy)
        return lo, hi


@dataclass(frozen=True)
class AuxSolution:
    """Obstacle-problem solution with the t=0 value slice and support edge."""

    params: AuxParams
    tgrid: np.ndarray       # stored time slices (ascending, includes 0 and 1)
    ygrid: np.ndarray
    w0: np.ndarray          # stored slices of the continuation value, shape (len(tgrid), len(ygrid))
    y_threshold: float      # y_{lambda,beta}
    diagnostics: dict = field(default_factory=dict)

    @property
    def v(self) -> np.ndarray:
        """t = 0 slice: v(y) on ygrid."""
        return self.w0[0]

    def v_at(self, y) -> np.ndarray | float:
        out = np.interp(np.asarray(y, dtype=float), self.ygrid, self.v)
        return float(out) if np.isscalar(y) else out


def expected_local_time(t: float, x) -> np.ndarray | float:
    """E[local time at 0 accumulated by x + B over [t, 1]] = E|x + B_{1-t}| - |x|."""
    s = 1.0 - t
    x_arr = np.asarray(x, dtype=float)
    if s <= 0.0:
        out = np.zeros_like(x_arr)
        return float(out) if np.isscalar(x) else out
    rs = math.sqrt(s)
    out = (
        rs * SQRT_2_OVER_PI * np.exp(-x_arr * x_arr / (2.0 * s))
        + x_arr * (1.0 - 2.0 * norm.cdf(-x_arr / rs))
        - np.abs(x_arr)
    )
    return float(out) if np.isscalar(x) else out


def solve_aux(p: AuxParams, grid: AuxGrid | None = None) -> AuxSolution:
    """March the reduced obstacle problem backward and locate the support edge.

    Implicit Euler in time, PSOR on the obstacle, Dirichlet ends: 0 at the
    bottom (inside the zero region) and the no-stopping value
    (1 + lambda beta) y_hi (1 - t) at the top, where the obstacle never
    binds and the remaining source corrections are below 1e-7.
    """
    if grid is None:
        grid = AuxGrid()
    y_lo, y_hi = grid.resolve_span(p)
    ny = int(round((y_hi - y_lo) / grid.dy)) + 1
    y = y_lo + grid.dy * np.arange(ny)
    nt = int(round(1.0 / grid.dt))
    dt, dy = grid.dt, grid.dy
    lb = p.lam_beta

    f_src = y + lb * np.maximum(y, 0.0)
    a = dt / (2.0 * dy * dy)
    lower = np.full(ny - 2, -a)
    upper = np.full(ny - 2, -a)
    diag = np.full(ny - 2, 1.0 + 2.0 * a)
    psi = np.zeros(ny - 2)
    psor_tol = grid.psor_tol_factor * (1.0 + lb)
    omega = grid.resolve_omega()

    w = np.zeros(ny)
    w_prev = w.copy()
    store_every = max(1, nt // max(1, grid.store_slices - 1))
    stored: list[tuple[float, np.ndarray]] = [(1.0, w.copy())]
    max_sweeps = 0
    total_sweeps = 0

    for k in range(nt - 1, -1, -1):
        t = k * dt
        src = f_src.copy()
        if p.lam > 0.0:
            src = src + p.lam * (p.beta / 2.0) * expected_local_time(t, y)
        top = (1.0 + lb) * y_hi * (1.0 - t)
        rhs = w[1:-1] + dt * src[1:-1]
        rhs[-1] += a * top
        # warm start: linear extrapolation of the last two levels
        guess = np.maximum(2.0 * w[1:-1] - w_prev[1:-1], 0.0)
        u, active, sweeps = solve_lcp_psor(
            lower, diag, upper, rhs, psi, guess,
            omega=omega, tol=psor_tol, maxiter=grid.psor_maxiter,
        )
        max_sweeps = max(max_sweeps, sweeps)
        total_sweeps += sweeps
        w_prev[:] = w
        w[1:-1] = u
        w[0] = 0.0
        w[-1] = top
        if k % store_every == 0 or k == 0:
            stored.append((t, w.copy()))

    stored.sort(key=lambda it: it[0])
    tgrid = np.array([t for t, _ in stored])
    w0 = np.vstack([row for _, row in stored])
    v = w0[0]

    # support edge: last node with v <= v_tol before the first positive run
    pos = np.nonzero(v > grid.v_tol)[0]
    if pos.size == 0 or pos[0] == 0:
        raise NonConvergence("support edge of v not inside the grid; widen the span")
    j = pos[0]
    denom = v[j] - v[j - 1]
    frac = (0.0 - v[j - 1]) / denom if denom > 0 else 0.0
    frac = min(max(frac, 0.0), 1.0)
    y_edge = y[j - 1] + frac * dy
    diagnostics = {
        "ny": ny,
        "nt": nt,
        "psor_max_sweeps": max_sweeps,
        "psor_mean_sweeps": total_sweeps / nt,
        "psor_tol": psor_tol,
        "edge_node": int(j - 1),
    }
    return AuxSolution(
        params=p,
        tgrid=tgrid,
        ygrid=y,
        w0=w0,
        y_threshold=-y_edge,
        diagnostics=diagnostics,
    )


def tree_oracle(p: AuxParams, y: float, nsteps: int) -> float:
    """Discrete dynamic program for the original stopping problem.

    Binomial +-sqrt(dt) Brownian increments, an independent regime ring per
    step with the exact survival weight e^{-lambda dt}, local time accrued
    through the Tanaka increment (which telescopes exactly, so its
    expectation is unbiased), and the paper's payoff bookkeeping: the
    running-reward accumulator is forfeited on the first ring, everything
    on the second.  Linearity of the reward in the accumulators collapses
    the state to (step, node, regime) with per-node affine coefficients,
    so the recombining lattice stays exact.
    """
    if nsteps < 1:
        raise ValueError("nsteps must be >= 1")
    dt = 1.0 / nsteps
    h = math.sqrt(dt)
    q = math.exp(-p.lam * dt)
    p1 = p.lam * dt * math.exp(-p.lam * dt)
    lb = p.lam_beta
    # A1[j]: regime-1 value net of the accumulated-local-time annuity
    # W0[j]: regime-0 value net of the accumulated-reward annuity
    A1 = np.zeros(nsteps + 1)
    W0 = np.zeros(nsteps + 1)
    for k in range(nsteps - 1, -1, -1):
        tk = k * dt
        x = y + (2.0 * np.arange(k + 1) - k) * h
        exp_dl = np.maximum(h - np.abs(x), 0.0)  # E[Tanaka increment | x]
        f = x + lb * np.maximum(x, 0.0)
        growth = math.exp(p.lam * tk)
        a1_next = 0.5 * (A1[: k + 1] + A1[1 : k + 2])
        w0_next = 0.5 * (W0[: k + 1] + W0[1 : k + 2])
        A1[: k + 1] = np.maximum(0.0, growth * (p.beta / 2.0) * exp_dl + q * a1_next)
        W0[: k + 1] = np.maximum(0.0, growth * f * dt + q * w0_next + p1 * a1_next)
    return float(W0[0])


def tree_oracle_many(p: AuxParams, ys, nsteps: int, threads: int | None = None) -> list[float]:
    return thread_map(lambda yy: tree_oracle(p, yy, nsteps), list(ys), threads)


def tree_policy(p: AuxParams, y: float, nsteps: int) -> np.ndarray:
    """Regime-0 stop decisions of the tree DP: stop[k, j] for node j at step k.

    Regime 1 never stops before the horizon (continuation dominates), so
    only the regime-0 policy is returned.  Used by simulation-based checks
    of the DP value.
    """
    dt = 1.0 / nsteps
    h = math.sqrt(dt)
    q = math.exp(-p.lam * dt)
    p1 = p.lam * dt * math.exp(-p.lam * dt)
    lb = p.lam_beta
    A1 = np.zeros(nsteps + 1)
    W0 = np.zeros(nsteps + 1)
    stop = np.zeros((nsteps, nsteps + 1), dtype=bool)
    for k in range(nsteps - 1, -1, -1):
        tk = k * dt
        x = y + (2.0 * np.arange(k + 1) - k) * h
        exp_dl = np.maximum(h - np.abs(x), 0.0)
        f = x + lb * np.maximum(x, 0.0)
        growth = math.exp(p.lam * tk)
        a1_next = 0.5 * (A1[: k + 1] + A1[1 : k + 2])
        w0_next = 0.5 * (W0[: k + 1] + W0[1 : k + 2])
        cont = growth * f * dt + q * w0_next + p1 * a1_next
        stop[k, : k + 1] = cont <= 0.0
        A1[: k + 1] = np.maximum(0.0, growth * (p.beta / 2.0) * exp_dl + q * a1_next)
        W0[: k + 1] = np.maximum(0.0, cont)
    return stop


def c_function(p: AuxParams, x) -> np.ndarray | float:
    """C(x) = x - lambda beta E(B_1 - x)^+ in closed Gaussian form.

    Positive strictly above the support edge y_{lambda,beta}; used for the
    upper-bound half of the negative-dbar rate theorem.
    """
    x_arr = np.asarray(x, dtype=float)
    expected_excess = norm.pdf(x_arr) - x_arr * norm.sf(x_arr)
    out = x_arr - p.lam_beta * expected_excess
    return float(out) if np.isscalar(x) else out


def local_time_bound_check(a: float, t: float) -> tuple[float, float]:
    """Closed forms for 0 <= E(a - B_t)^+ - a^+ <= sqrt(t) e^{-a^2/2t} / sqrt(2 pi).

    Returns (lhs, rhs) for the caller to assert the sandwich.
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    rt = math.sqrt(t)
    z = a / rt
    lhs = a * norm.cdf(z) + rt * norm.pdf(z) - max(a, 0.0)
    rhs = rt * norm.pdf(z)
    return lhs, rhs


def write_value_csv(sol: AuxSolution, path: str) -> None:
    """CSV of the t = 0 slice: y, v_value."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["y", "v_value"])
        for yy, vv in zip(sol.ygrid, sol.v):
            writer.writerow([repr(float(yy)), repr(float(vv))])


def summary_dict(sol: AuxSolution, y0_reference: float) -> dict:
    return {
        "lambda": sol.params.lam,
        "beta": sol.params.beta,
        "y_threshold": sol.y_threshold,
        "y0_reference": y0_reference,
        "bound_1_plus_lb": sol.params.support_bound,
    }


def write_summary_json(sol: AuxSolution, y0_reference: float, path: str) -> None:
    with open(path, "w") as f:
        json.dump(summary_dict(sol, y0_reference), f, indent=2, sort_keys=True)
        f.write("\n")
