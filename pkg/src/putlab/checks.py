"""Cross-solver invariant suite behind the ``check`` subcommand.

Each check returns (name, passed, detail); the CLI prints one line per
check and exits nonzero if any fails.  The suite covers the price-shape
invariants (convexity, monotonicity, bounds), the European/American
ordering, smooth fit under refinement, and the agreement of the two
obstacle treatments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .american import GridSpec, extract_boundary, smooth_fit_check, solve_am
from .european import price_eu, solve_be
from .model import solve_xi
from .reference import MODEL_B


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check_grid(obstacle: str, nx: int = 1200) -> GridSpec:
    return GridSpec(
        nx=nx,
        nt=256,
        scheme="crank-nicolson",
        time_grading=0.95,
        obstacle=obstacle,
        extra_thetas=(0.05, 0.1, 0.2),
    )


def run_checks(threads: int | None = None) -> list[CheckResult]:
    m = MODEL_B
    results: list[CheckResult] = []
    lim = solve_xi(m)

    surface = solve_am(m, _check_grid("psor"))
    z = surface.logspots
    x = np.exp(z)
    payoff = surface.payoff
    tol = 1e-8 * m.K

    # price-shape invariants on every stored time level
    above = bool(np.min(surface.values - payoff) >= -tol)
    results.append(CheckResult("am_above_payoff", above, f"min(P - payoff) = {np.min(surface.values - payoff):.3e}"))

    # convexity in spot, not log-spot: check the spot second difference
    rows = [surface.theta_index(th) for th in (0.05, 0.1, 0.2)]
    conv_ok = True
    worst = 0.0
    for ridx in rows:
        v = surface.values[ridx]
        slopes = np.diff(v) / np.diff(x)
        dd = np.diff(slopes)
        worst = min(worst, float(np.min(dd)))
        conv_ok = conv_ok and bool(np.min(dd) >= -1e-6)
    results.append(CheckResult("am_convex_in_spot", conv_ok, f"min spot second difference {worst:.3e}"))

    mono_ok = True
    for ridx in rows:
        v = surface.values[ridx]
        mono_ok = mono_ok and bool(np.max(np.diff(v)) <= tol)
    results.append(CheckResult("am_nonincreasing_in_spot", mono_ok, "first differences <= 0"))

    # European ordering and parity bound at a few levels
    sub = slice(0, len(z), max(1, len(z) // 400))
    ordering_ok = True
    parity_ok = True
    eu_shape_ok = True
    for th in (0.05, 0.1, 0.2):
        ridx = surface.theta_index(th)
        pe, de = price_eu(m, m.T - th, x[sub])
        ordering_ok = ordering_ok and bool(np.min(surface.values[ridx][sub] - pe) >= -1e-6 * m.K)
        bound = m.K * math.exp(-m.r * th) - x[sub] * math.exp(-m.delta * th)
        parity_ok = parity_ok and bool(np.min(pe - bound) >= -tol) and bool(np.max(pe) <= m.K * math.exp(-m.r * th) + tol)
        dd = np.diff(pe, 2)
        eu_shape_ok = (
            eu_shape_ok
            and bool(np.min(dd) >= -1e-8 * m.K)
            and bool(np.max(np.diff(pe)) <= tol)
            and bool(np.min(de) >= -1.0 - 1e-12)
            and bool(np.max(de) <= 1e-12)
        )
    results.append(CheckResult("am_dominates_eu", ordering_ok, "P >= P_e on sampled nodes"))
    results.append(CheckResult("eu_parity_bound", parity_ok, "e^{-r th}K - x e^{-d th} <= P_e <= e^{-r th}K"))
    results.append(CheckResult("eu_convex_monotone_delta", eu_shape_ok, "P_e convex, nonincreasing, delta in [-1,0]"))

    # boundary ordering b <= b_e <= K
    bc = extract_boundary(surface, lim)
    order_ok = True
    detail = []
    for th in (0.05, 0.1, 0.2):
        b = float(bc.b_at(th))
        be = solve_be(m, m.T - th)
        detail.append(f"theta={th}: b={b:.4f} b_e={be:.4f}")
        order_ok = order_ok and b <= be + 1e-6 * m.K and be <= m.K
    results.append(CheckResult("boundary_ordering", order_ok, "; ".join(detail)))

    # smooth fit improves under spatial refinement
    err_coarse = dict(smooth_fit_check(surface, bc, [0.1]))[0.1]
    surface_fine = solve_am(m, _check_grid("psor", nx=2400))
    bc_fine = extract_boundary(surface_fine, lim)
    err_fine = dict(smooth_fit_check(surface_fine, bc_fine, [0.1]))[0.1]
    results.append(
        CheckResult(
            "smooth_fit_refines",
            bool(err_fine < err_coarse and err_coarse < 0.05),
            f"slope error {err_coarse:.5f} -> {err_fine:.5f}",
        )
    )

    # the two obstacle treatments agree
    surface_pen = solve_am(m, _check_grid("penalty"))
    diff = float(np.max(np.abs(surface.values - surface_pen.values)))
    results.append(
        CheckResult("psor_penalty_agree", diff <= 1e-6 * m.K, f"max |P_psor - P_penalty| = {diff:.3e}")
    )
    return results
