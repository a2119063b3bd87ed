"""Limit-equation solver, derived limit data and model ingestion."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from putlab import (
    ConfigError,
    DbarPositive,
    JumpAtom,
    LevyMeasure,
    ModelParams,
    Regime,
    classify_regime,
    compute_dbar,
    limit_equation,
    model_from_dict,
    model_from_json,
    model_to_dict,
    solve_xi,
)
from putlab.reference import MODEL_A, MODEL_B, MODEL_C, MODEL_D, REFERENCE_MODELS


def mk(r, delta, atoms=(), sigma=0.3, K=100.0, T=1.0):
    return ModelParams(r=r, delta=delta, sigma=sigma, K=K, T=T,
                       nu=LevyMeasure.from_pairs(atoms))


class TestDbar:
    def test_no_jumps_equal_rates(self):
        assert compute_dbar(mk(0.05, 0.05)) == 0.0

    def test_single_atom_doubling(self):
        m = mk(0.02, 0.04, [(math.log(2.0), 0.05)])
        assert compute_dbar(m) == pytest.approx(-0.07, abs=1e-15)

    def test_single_atom_quarter(self):
        m = mk(0.05, 0.02, [(math.log(1.25), 0.2)])
        assert compute_dbar(m) == pytest.approx(-0.02, abs=1e-15)

    def test_negative_jumps_do_not_enter(self):
        m = mk(0.03, 0.03, [(-0.5, 1.0)])
        assert compute_dbar(m) == 0.0
        # but they do enter gamma0
        assert m.gamma0 == pytest.approx(0.0 - 1.0 * math.expm1(-0.5))


class TestSolveXi:
    def test_empty_measure_classic_formula(self):
        lim = solve_xi(mk(0.04, 0.08))
        assert lim.xi == pytest.approx(50.0, rel=1e-12)
        assert lim.lambda_atom == 0.0
        assert lim.delta_bar == pytest.approx(0.08)
        assert lim.beta == pytest.approx(25.0, rel=1e-10)
        assert lim.regime is Regime.STRICTLY_NEGATIVE_DBAR

    def test_zero_dbar_pins_xi_at_strike(self):
        lim = solve_xi(MODEL_C)
        assert lim.regime is Regime.ZERO_DBAR
        assert lim.xi == MODEL_C.K

    def test_root_on_active_branch(self):
        # hand check: on x > 80 the equation is 25 = 0.27 x
        lim = solve_xi(MODEL_B)
        assert lim.xi == pytest.approx(2500.0 / 27.0, rel=1e-12)
        assert lim.lambda_atom == 0.0
        assert lim.delta_bar == pytest.approx(0.27, rel=1e-12)
        assert lim.beta == pytest.approx(4.0, rel=1e-10)

    def test_root_at_kink_collects_atom(self):
        lim = solve_xi(MODEL_A)
        assert lim.xi == pytest.approx(50.0, rel=1e-12)
        assert lim.lambda_atom == pytest.approx(0.05, abs=1e-15)
        assert lim.delta_bar == pytest.approx(0.04, rel=1e-12)
        assert lim.beta == pytest.approx(50.0, rel=1e-9)
        assert lim.expansion_C == pytest.approx(
            MODEL_A.sigma * 50.0 * 0.04 * math.exp(0.05), rel=1e-9
        )

    def test_residuals_tiny_for_reference_models(self):
        for m in REFERENCE_MODELS.values():
            lim = solve_xi(m)
            assert abs(limit_equation(m, lim.xi)) <= 1e-12 * m.r * m.K

    def test_rejects_positive_dbar(self):
        with pytest.raises(DbarPositive):
            solve_xi(mk(0.05, 0.01))

    def test_perturbed_atom_drops_lambda(self):
        m = mk(0.02, 0.04, [(math.log(2.0) + 1e-8, 0.05)])
        lim = solve_xi(m)
        assert lim.lambda_atom == 0.0

    def test_beta_identity(self):
        for m in REFERENCE_MODELS.values():
            lim = solve_xi(m)
            assert lim.beta * lim.delta_bar * lim.xi == pytest.approx(m.K, rel=1e-10)

    def test_limit_equation_strictly_decreasing(self):
        for m in (MODEL_A, MODEL_B, MODEL_D):
            xs = np.linspace(1e-6, m.K, 200)
            h = np.array([limit_equation(m, x) for x in xs])
            assert np.all(np.diff(h) < 0.0)


@settings(max_examples=40, deadline=None)
@given(
    r=st.floats(0.005, 0.2),
    slack=st.floats(0.0, 0.2),
    pairs=st.lists(
        st.tuples(st.floats(-1.0, 1.0).filter(lambda y: abs(y) > 1e-3), st.floats(0.01, 0.5)),
        max_size=3,
    ),
)
def test_xi_properties_random_models(r, slack, pairs):
    nu = LevyMeasure.from_pairs(pairs)
    poscomp = nu.positive_compensator
    # delta chosen so dbar = -slack <= 0 while delta stays >= 0
    extra = max(0.0, -(r - poscomp)) + slack
    delta = r - poscomp + extra
    m = ModelParams(r=r, delta=delta, sigma=0.3, K=100.0, T=1.0, nu=nu)
    lim = solve_xi(m)
    assert 0.0 < lim.xi <= m.K
    assert abs(limit_equation(m, lim.xi)) <= 1e-11 * m.r * m.K
    assert lim.beta * lim.delta_bar * lim.xi == pytest.approx(m.K, rel=1e-9)
    # positive homogeneity of degree 1 in the strike
    m2 = ModelParams(r=r, delta=delta, sigma=0.3, K=200.0, T=1.0, nu=nu)
    assert solve_xi(m2).xi == pytest.approx(2.0 * lim.xi, rel=1e-9)


class TestClassifyRegime:
    def test_reference_assignments(self):
        assert classify_regime(MODEL_D) is Regime.STRICTLY_NEGATIVE_DBAR
        assert classify_regime(MODEL_C) is Regime.ZERO_DBAR

    def test_positive_rejected(self):
        with pytest.raises(DbarPositive):
            classify_regime(mk(0.05, 0.01))


class TestMeasureAndParams:
    def test_atoms_sorted_and_merged(self):
        nu = LevyMeasure.from_pairs([(0.5, 0.1), (-0.2, 0.3), (0.5, 0.2)])
        assert [a.y for a in nu] == [-0.2, 0.5]
        assert nu.mass_at(0.5) == pytest.approx(0.3)

    def test_atom_validation(self):
        with pytest.raises(ValueError):
            JumpAtom(0.0, 0.1)
        with pytest.raises(ValueError):
            JumpAtom(0.5, -0.1)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            ModelParams(r=0.0, delta=0.0, sigma=0.2, K=100, T=1)
        with pytest.raises(ValueError):
            ModelParams(r=0.05, delta=0.0, sigma=0.0, K=100, T=1)


class TestJsonIngestion:
    def test_roundtrip(self):
        doc = model_to_dict(MODEL_A)
        m = model_from_dict(doc)
        assert m == MODEL_A

    def test_unknown_key_rejected(self):
        doc = model_to_dict(MODEL_B)
        doc["vol_of_vol"] = 0.1
        with pytest.raises(ConfigError, match="vol_of_vol"):
            model_from_dict(doc)

    def test_unknown_atom_key_rejected(self):
        doc = model_to_dict(MODEL_B)
        doc["atoms"][0]["size"] = 2.0
        with pytest.raises(ConfigError, match=r"atoms\[0\]"):
            model_from_dict(doc)

    def test_non_numeric_rejected(self):
        doc = model_to_dict(MODEL_B)
        doc["r"] = "high"
        with pytest.raises(ConfigError, match="model.r"):
            model_from_dict(doc)

    def test_malformed_json_reports_position(self):
        with pytest.raises(ConfigError, match="line"):
            model_from_json("{\"r\": 0.05,, }")

    def test_missing_key(self):
        with pytest.raises(ConfigError, match="sigma"):
            model_from_dict({"r": 0.05, "delta": 0.0, "K": 100.0, "T": 1.0})
