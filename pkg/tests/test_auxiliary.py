"""Auxiliary stopping problem: closed forms, PDE/tree cross-checks, thresholds."""

from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest

from putlab import (
    AuxGrid,
    AuxParams,
    c_function,
    expected_local_time,
    local_time_bound_check,
    solve_aux,
    tree_oracle,
    tree_oracle_many,
)
from putlab.auxiliary import tree_policy, write_summary_json, write_value_csv
from putlab.oracles import mc_expected_local_time

COARSE = AuxGrid(dy=5e-3, dt=1e-3, y_lo=-4.0, y_hi=5.0)


def brute_force_value(p: AuxParams, y: float, nsteps: int) -> float:
    """Exhaustive recursion over all paths with exact accumulators.

    No linearity shortcut: every branch carries its own running-reward /
    local-time accumulator, so this independently validates the affine
    state reduction used by tree_oracle (on the same discrete model).
    """
    dt = 1.0 / nsteps
    h = math.sqrt(dt)
    q = math.exp(-p.lam * dt)
    p1 = p.lam * dt * math.exp(-p.lam * dt)
    lb = p.lam * p.beta

    def v1(k, x, acc):
        stop = math.exp(p.lam * k * dt) * (p.beta / 2.0) * acc
        if k == nsteps:
            return stop
        cont = 0.0
        for s in (h, -h):
            xn = x + s
            if x == 0.0:
                dl = abs(xn)
            else:
                dl = abs(xn) - abs(x) - math.copysign(1.0, x) * s
            cont += 0.5 * q * v1(k + 1, xn, acc + dl)
        return max(stop, cont)

    def v0(k, x, acc):
        stop = math.exp(p.lam * k * dt) * acc
        if k == nsteps:
            return stop
        f = x + lb * max(x, 0.0)
        cont = 0.0
        for s in (h, -h):
            xn = x + s
            cont += 0.5 * (q * v0(k + 1, xn, acc + f * dt) + p1 * v1(k + 1, xn, 0.0))
        return max(stop, cont)

    return v0(0, y, 0.0)


def simulate_tree_policy(p: AuxParams, y: float, nsteps: int, paths: int, seed: int):
    """Monte Carlo of the discrete reward under the DP's own stopping rule."""
    stop = tree_policy(p, y, nsteps)
    dt = 1.0 / nsteps
    h = math.sqrt(dt)
    q = math.exp(-p.lam * dt)
    p1 = p.lam * dt * math.exp(-p.lam * dt)
    lb = p.lam * p.beta
    rng = np.random.default_rng(seed)

    x = np.full(paths, float(y))
    acc = np.zeros(paths)        # running reward in regime 0, local time in regime 1
    regime = np.zeros(paths, dtype=np.int8)  # 0, 1, 2=dead
    reward = np.zeros(paths)
    alive = np.ones(paths, dtype=bool)
    up_count = np.zeros(paths, dtype=np.int64)

    for k in range(nsteps):
        if not alive.any():
            break
        growth = math.exp(p.lam * k * dt)
        # stop per policy (regime 0 only; regime 1 always continues)
        j = up_count  # node index equals number of up moves
        stop_now = alive & (regime == 0) & stop[k, np.minimum(j, k)]
        reward[stop_now] = growth * acc[stop_now]
        alive &= ~stop_now
        live = alive & (regime < 2)
        # regime transitions over the step
        u = rng.uniform(size=paths)
        ring0 = u > q
        ring2 = u > q + p1
        # Brownian move
        upm = rng.uniform(size=paths) < 0.5
        xn = x + np.where(upm, h, -h)
        r0 = live & (regime == 0)
        acc[r0 & ~ring0] += (x[r0 & ~ring0] + lb * np.maximum(x[r0 & ~ring0], 0.0)) * dt
        to_r1 = r0 & ring0 & ~ring2
        acc[to_r1] = 0.0
        regime[to_r1] = 1
        dead0 = r0 & ring2
        regime[dead0] = 2
        alive[dead0] = False
        r1 = live & (regime == 1) & ~to_r1
        dead1 = r1 & ring0
        regime[dead1] = 2
        alive[dead1] = False
        surv1 = r1 & ~ring0
        sgn = np.where(x[surv1] == 0.0, 0.0, np.sign(x[surv1]))
        acc[surv1] += np.abs(xn[surv1]) - np.abs(x[surv1]) - sgn * (xn[surv1] - x[surv1])
        x = xn
        up_count = up_count + upm.astype(np.int64)

    growth = math.exp(p.lam)
    end0 = alive & (regime == 0)
    reward[end0] = growth * acc[end0]
    end1 = alive & (regime == 1)
    reward[end1] = growth * (p.beta / 2.0) * acc[end1]
    return float(np.mean(reward)), float(np.std(reward, ddof=1)) / math.sqrt(paths)


class TestExpectedLocalTime:
    def test_at_origin_full_horizon(self):
        assert expected_local_time(0.0, 0.0) == pytest.approx(math.sqrt(2.0 / math.pi), abs=1e-12)

    def test_no_time_left(self):
        assert expected_local_time(1.0, 0.7) == 0.0
        assert expected_local_time(1.0 - 1e-12, 0.7) == pytest.approx(0.0, abs=1e-6)

    def test_symmetric_in_x(self):
        assert expected_local_time(0.3, 1.2) == pytest.approx(expected_local_time(0.3, -1.2), abs=1e-14)

    def test_monte_carlo_agreement_far_level(self):
        est, se = mc_expected_local_time(3.0, 1.0, n_paths=200_000, n_steps=400, seed=7)
        assert abs(est - expected_local_time(0.0, 3.0)) <= 3.0 * se

    def test_monte_carlo_agreement_at_level(self):
        est, se = mc_expected_local_time(0.0, 1.0, n_paths=100_000, n_steps=400, seed=8)
        assert abs(est - expected_local_time(0.0, 0.0)) <= 3.0 * se


class TestTreeOracle:
    def test_deep_negative_start_worthless(self):
        assert tree_oracle(AuxParams(0.0, 50.0), -10.0, 64) == 0.0

    def test_reward_dominance_in_lambda(self):
        p0 = AuxParams(1e-12, 50.0)
        p1 = AuxParams(0.05, 50.0)
        for y in (-0.5, 0.0, 0.5):
            assert tree_oracle(p1, y, 500) >= tree_oracle(p0, y, 500) - 1e-12

    @pytest.mark.parametrize("lam,beta,y", [(0.0, 50.0, 0.0), (0.3, 50.0, 0.2), (0.05, 50.0, -0.4)])
    def test_matches_exhaustive_enumeration(self, lam, beta, y):
        p = AuxParams(lam, beta)
        for n in (6, 9):
            dp = tree_oracle(p, y, n)
            brute = brute_force_value(p, y, n)
            assert dp == pytest.approx(brute, abs=1e-12)

    def test_policy_simulation_recovers_value(self):
        p = AuxParams(0.05, 50.0)
        val = tree_oracle(p, 0.0, 200)
        mc, se = simulate_tree_policy(p, 0.0, 200, paths=150_000, seed=11)
        assert abs(mc - val) <= 3.5 * se

    def test_many_matches_scalar(self):
        p = AuxParams(0.05, 50.0)
        ys = [-0.3, 0.0, 0.4]
        assert tree_oracle_many(p, ys, 300, threads=3) == [tree_oracle(p, y, 300) for y in ys]


class TestSolveAux:
    def test_lambda_zero_reduction(self, aux0):
        # v_0(0) > 0 and a positive threshold strictly below 1
        assert aux0.v_at(0.0) > 0.0
        assert 0.0 < aux0.y_threshold < 1.0

    def test_threshold_inside_stated_bound(self, aux0, aux_a, aux_hi):
        for sol in (aux0, aux_a, aux_hi):
            assert 0.0 < sol.y_threshold < sol.params.support_bound

    def test_zero_below_support_bound(self, aux0, aux_a, aux_hi):
        for sol in (aux0, aux_a, aux_hi):
            mask = sol.ygrid <= -sol.params.support_bound
            assert mask.any()
            assert float(np.max(np.abs(sol.v[mask]))) <= 1e-8

    def test_w0_nonnegative_terminal_zero(self, aux_a):
        assert float(np.min(aux_a.w0)) >= -1e-8
        assert np.all(aux_a.w0[-1] == 0.0)

    def test_pde_tree_cross_check_lambda0(self, aux0):
        val = tree_oracle(AuxParams(0.0, 50.0), 0.0, 2000)
        assert abs(aux0.v_at(0.0) - val) <= max(0.02 * abs(val), 5e-4)

    def test_threshold_ordering_lambda(self, aux0, aux_a, aux_hi):
        tol = 2.0 * 2.5e-3
        assert aux_a.y_threshold >= aux0.y_threshold - tol
        assert aux_hi.y_threshold >= aux0.y_threshold - tol

    def test_lambda_continuity_to_zero(self):
        near = solve_aux(AuxParams(1e-6, 50.0), COARSE)
        zero = solve_aux(AuxParams(0.0, 50.0), COARSE)
        assert abs(near.y_threshold - zero.y_threshold) <= 2.0 * COARSE.dy

    def test_threshold_grid_convergence(self, aux0):
        coarse = solve_aux(AuxParams(0.0, 50.0), COARSE)
        assert abs(coarse.y_threshold - aux0.y_threshold) <= 2.0 * COARSE.dy


class TestCFunction:
    def test_at_origin(self):
        p = AuxParams(0.05, 50.0)  # lambda beta = 2.5
        assert c_function(p, 0.0) == pytest.approx(-2.5 / math.sqrt(2.0 * math.pi), abs=1e-9)

    def test_lambda_zero_is_identity(self):
        p = AuxParams(0.0, 7.0)
        for x in (0.3, 1.0, 4.2):
            assert c_function(p, x) == x

    def test_positive_above_threshold(self, aux0, aux_a, aux_hi):
        for sol in (aux0, aux_a, aux_hi):
            p = sol.params
            y_star = sol.y_threshold
            assert c_function(p, y_star) >= -1e-3
            xs = np.linspace(y_star + 0.05, y_star + 2.0, 25)
            assert np.all(c_function(p, xs) > 0.0)


class TestLocalTimeBound:
    def test_equality_at_origin(self):
        lhs, rhs = local_time_bound_check(0.0, 1.0)
        assert lhs == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), abs=1e-14)
        assert lhs == pytest.approx(rhs, abs=1e-14)

    def test_far_tail(self):
        lhs, rhs = local_time_bound_check(5.0, 0.01)
        assert 0.0 <= lhs <= rhs
        assert rhs < 1e-100

    def test_negative_level(self):
        lhs, rhs = local_time_bound_check(-1.0, 0.5)
        assert 0.0 <= lhs <= rhs

    def test_lattice(self):
        for a in np.linspace(-2.5, 2.5, 10):
            for t in np.geomspace(1e-3, 4.0, 10):
                lhs, rhs = local_time_bound_check(float(a), float(t))
                assert -1e-14 <= lhs <= rhs + 1e-14


class TestEmission:
    def test_value_csv(self, tmp_path):
        sol = solve_aux(AuxParams(0.0, 50.0), COARSE)
        path = tmp_path / "aux.csv"
        write_value_csv(sol, str(path))
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["y", "v_value"]
        assert len(rows) == len(sol.ygrid) + 1

    def test_summary_json(self, tmp_path):
        sol = solve_aux(AuxParams(0.0, 50.0), COARSE)
        path = tmp_path / "aux.json"
        write_summary_json(sol, sol.y_threshold, str(path))
        doc = json.loads(path.read_text())
        assert set(doc) == {"lambda", "beta", "y_threshold", "y0_reference", "bound_1_plus_lb"}
        assert doc["y0_reference"] == doc["y_threshold"]
