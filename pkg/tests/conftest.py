"""Shared fixtures; heavy solver artifacts are session-scoped so the
acceptance module and the unit tests pay for them once."""

from __future__ import annotations

import numpy as np
import pytest

from putlab import (
    AuxGrid,
    AuxParams,
    GridSpec,
    extract_boundary,
    solve_am,
    solve_aux,
    solve_xi,
)
from putlab.asymptotics import expansion_check, rate_experiment_neg, rate_experiment_zero
from putlab.reference import MODEL_A, MODEL_B, MODEL_C, MODEL_NOJUMP

RATE_THETAS = (0.04, 0.01, 0.0025)


@pytest.fixture(scope="session")
def aux0():
    """lambda = 0 auxiliary solution (the Brownian-only constant y_0)."""
    return solve_aux(AuxParams(0.0, 50.0))


@pytest.fixture(scope="session")
def aux_a():
    """Model A constants: lambda = 0.05, beta = 50."""
    return solve_aux(AuxParams(0.05, 50.0))


@pytest.fixture(scope="session")
def aux_hi():
    """High jump mass at the kink: lambda = 0.3, beta = 50."""
    return solve_aux(AuxParams(0.3, 50.0))


@pytest.fixture(scope="session")
def nojump_surface():
    grid = GridSpec(nx=1600, nt=300, scheme="crank-nicolson", time_grading=1.0,
                    obstacle="psor", extra_thetas=(0.25,))
    return solve_am(MODEL_NOJUMP, grid)


@pytest.fixture(scope="session")
def surface_b_reference():
    """Moderate uniform-time CN surface of model B for invariant tests."""
    grid = GridSpec(nx=1200, nt=256, scheme="crank-nicolson", time_grading=0.95,
                    obstacle="psor", extra_thetas=(0.05, 0.1, 0.2, 0.25))
    return solve_am(MODEL_B, grid)


@pytest.fixture(scope="session")
def rate_report_b(aux0):
    return rate_experiment_neg(MODEL_B, RATE_THETAS, aux=aux0, model_id="B")


@pytest.fixture(scope="session")
def rate_report_a(aux_a):
    return rate_experiment_neg(MODEL_A, RATE_THETAS, aux=aux_a, model_id="A")


@pytest.fixture(scope="session")
def rate_surface_b(aux0):
    """Fine-grid surface for model B with the rate thetas inserted."""
    from putlab.asymptotics import default_rate_grid

    grid = default_rate_grid(MODEL_B, RATE_THETAS)
    return grid, solve_am(MODEL_B, grid)


@pytest.fixture(scope="session")
def expansion_report_b(aux0, rate_surface_b):
    grid, surface = rate_surface_b
    a = -MODEL_B.sigma * aux0.y_threshold / 2.0
    return expansion_check(MODEL_B, a, RATE_THETAS, grid=grid, aux=aux0,
                           surface=surface, model_id="B")


@pytest.fixture(scope="session")
def zero_report_c():
    thetas = [10.0 ** -k for k in range(2, 9)]
    return rate_experiment_zero(MODEL_C, thetas, fd_thetas=(0.02, 0.005), model_id="C")


@pytest.fixture(scope="session")
def check_results():
    from putlab.checks import run_checks

    return run_checks()
