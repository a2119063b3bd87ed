"""Reference models used by the test suite, the demos and the check command.

A: a single atom sitting exactly at the kink ln(K/xi), so the atom mass
   enters the rate constant (lambda = 0.05, beta = 50, xi = 50).
B: an atom strictly above the kink (lambda = 0, delta_bar = 0.27, beta = 4,
   xi = 2500/27); the workhorse for the negative-dbar experiments.
C: dbar = 0 exactly; the limit-case model for the sqrt(2) law.
D: no jumps, xi = r K / delta = 50; matches the classical limit formula.
NOJUMP: dbar > 0 pricing-only model for the binomial-tree comparison.
"""

from __future__ import annotations

import math

from .model import LevyMeasure, ModelParams

MODEL_A = ModelParams(
    r=0.02, delta=0.04, sigma=0.3, K=100.0, T=1.0,
    nu=LevyMeasure.from_pairs([(math.log(2.0), 0.05)]),
)

MODEL_B = ModelParams(
    r=0.05, delta=0.02, sigma=0.3, K=100.0, T=1.0,
    nu=LevyMeasure.from_pairs([(math.log(1.25), 0.2)]),
)

MODEL_C = ModelParams(
    r=0.05, delta=0.03, sigma=0.3, K=100.0, T=1.0,
    nu=LevyMeasure.from_pairs([(math.log(1.2), 0.1)]),
)

MODEL_D = ModelParams(r=0.04, delta=0.08, sigma=0.3, K=100.0, T=1.0)

MODEL_NOJUMP = ModelParams(r=0.06, delta=0.0, sigma=0.4, K=100.0, T=0.5)

REFERENCE_MODELS = {"A": MODEL_A, "B": MODEL_B, "C": MODEL_C, "D": MODEL_D}


def model_a_off_kink(shift: float = -0.05) -> ModelParams:
    """Model A with its atom moved off the kink: same xi, lambda becomes 0."""
    return ModelParams(
        r=MODEL_A.r, delta=MODEL_A.delta, sigma=MODEL_A.sigma, K=MODEL_A.K, T=MODEL_A.T,
        nu=LevyMeasure.from_pairs([(math.log(2.0) + shift, 0.05)]),
    )
