"""Jump-diffusion model definition and the maturity limit of the critical price.

The risky asset is S_t = S_0 * exp(X_t) with

    X_t = (r - delta - sigma^2/2) t + sigma B_t + Z_t - t * int(e^y - 1) nu(dy),

where Z is a compound Poisson process whose (finite, purely atomic) jump
measure nu is given as a list of atoms (log-jump size y, intensity w).

The limit xi = b(T) of the American put critical price solves

    r K - delta x - int (x e^y - K)^+ nu(dy) = 0

on (0, K]; when dbar = r - delta - int_{y>0}(e^y - 1) nu(dy) is zero the
limit is K itself.  Everything downstream (the rate experiments, the
auxiliary stopping problem) consumes the quantities derived here:
lambda (atom mass sitting exactly at ln(K/xi)), delta_bar (effective
dividend rate), beta = K / (delta_bar * xi) and the expansion constant
C = sigma * xi * delta_bar * e^lambda.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from scipy.optimize import brentq

from .errors import ConfigError, DbarPositive

# Absolute tolerance (log scale) for matching an atom to ln(K/xi).  xi is
# resolved far more accurately than this, so kink models built exactly on
# an atom are detected and perturbed ones are not.
ATOM_MATCH_TOL = 1e-9


class Regime(str, Enum):
    STRICTLY_NEGATIVE_DBAR = "StrictlyNegativeDbar"
    ZERO_DBAR = "ZeroDbar"


@dataclass(frozen=True)
class JumpAtom:
    """One atom of the jump measure: log-jump size y, intensity weight w."""

    y: float
    w: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.y) or self.y == 0.0:
            raise ValueError(f"jump atom log-size must be finite and nonzero, got {self.y}")
        if not (self.w > 0.0 and math.isfinite(self.w)):
            raise ValueError(f"jump atom weight must be positive and finite, got {self.w}")


@dataclass(frozen=True)
class LevyMeasure:
    """Finite-activity, purely atomic jump measure (atoms sorted by y)."""

    atoms: tuple[JumpAtom, ...] = ()

    def __post_init__(self) -> None:
        merged: dict[float, float] = {}
        for a in self.atoms:
            merged[a.y] = merged.get(a.y, 0.0) + a.w
        cleaned = tuple(JumpAtom(y, w) for y, w in sorted(merged.items()))
        object.__setattr__(self, "atoms", cleaned)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> "LevyMeasure":
        return cls(tuple(JumpAtom(float(y), float(w)) for y, w in pairs))

    def __iter__(self):
        return iter(self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def is_empty(self) -> bool:
        return not self.atoms

    @property
    def total_mass(self) -> float:
        """nu(R)."""
        return math.fsum(a.w for a in self.atoms)

    @property
    def exp_moment(self) -> float:
        """int e^y nu(dy)."""
        return math.fsum(a.w * math.exp(a.y) for a in self.atoms)

    @property
    def compensator(self) -> float:
        """int (e^y - 1) nu(dy)."""
        return math.fsum(a.w * math.expm1(a.y) for a in self.atoms)

    @property
    def positive_compensator(self) -> float:
        """int_{y>0} (e^y - 1) nu(dy)."""
        return math.fsum(a.w * math.expm1(a.y) for a in self.atoms if a.y > 0.0)

    @property
    def positive_mass(self) -> float:
        """nu((0, inf))."""
        return math.fsum(a.w for a in self.atoms if a.y > 0.0)

    def mass_at(self, y0: float, tol: float = ATOM_MATCH_TOL) -> float:
        """Mass of atoms with |y - y0| <= tol."""
        return math.fsum(a.w for a in self.atoms if abs(a.y - y0) <= tol)

    def exp_moment_above(self, y0: float, tol: float = ATOM_MATCH_TOL) -> float:
        """int_{y > y0} e^y nu(dy), excluding atoms matched to y0 within tol."""
        return math.fsum(a.w * math.exp(a.y) for a in self.atoms if a.y > y0 + tol)


@dataclass(frozen=True)
class ModelParams:
    """Market model: rate, dividend yield, volatility, strike, maturity, jumps.

    Construction accepts any dbar sign; the operations implementing the
    near-maturity theorems reject dbar > 0 explicitly.
    """

    r: float
    delta: float
    sigma: float
    K: float
    T: float
    nu: LevyMeasure = field(default_factory=LevyMeasure)

    def __post_init__(self) -> None:
        if not self.r > 0.0:
            raise ValueError(f"r must be positive, got {self.r}")
        if self.delta < 0.0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.K > 0.0:
            raise ValueError(f"K must be positive, got {self.K}")
        if not self.T > 0.0:
            raise ValueError(f"T must be positive, got {self.T}")

    @property
    def gamma0(self) -> float:
        """Drift of dS/S: r - delta - int(e^y - 1) nu(dy)."""
        return self.r - self.delta - self.nu.compensator

    @property
    def mu(self) -> float:
        """Drift of ln S: gamma0 - sigma^2 / 2."""
        return self.gamma0 - 0.5 * self.sigma * self.sigma

    @property
    def dbar(self) -> float:
        """r - delta - int_{y>0}(e^y - 1) nu(dy); its sign selects the regime."""
        return self.r - self.delta - self.nu.positive_compensator

    @property
    def dbar_tol(self) -> float:
        """Classification tolerance: dbar within this of 0 counts as zero."""
        return 1e-12 * (self.r + self.delta + self.nu.total_mass)


@dataclass(frozen=True)
class LimitData:
    """Maturity-limit quantities consumed by the asymptotics experiments."""

    xi: float
    lambda_atom: float
    delta_bar: float
    beta: float
    regime: Regime
    expansion_C: float

    def as_dict(self) -> dict:
        return {
            "xi": self.xi,
            "lambda": self.lambda_atom,
            "delta_bar": self.delta_bar,
            "beta": self.beta,
            "regime": self.regime.value,
            "expansion_C": self.expansion_C,
        }


def compute_dbar(m: ModelParams) -> float:
    return m.dbar


def limit_equation(m: ModelParams, x: float) -> float:
    """H(x) = r K - delta x - int (x e^y - K)^+ nu(dy); strictly decreasing."""
    jump = math.fsum(a.w * max(x * math.exp(a.y) - m.K, 0.0) for a in m.nu)
    return m.r * m.K - m.delta * x - jump


def classify_regime(m: ModelParams) -> Regime:
    """Sign classification of dbar; dbar > 0 is rejected."""
    dbar = m.dbar
    tol = m.dbar_tol
    if dbar > tol:
        raise DbarPositive(f"dbar = {dbar:.6g} > 0; this model is outside the covered regimes")
    if abs(dbar) <= tol:
        return Regime.ZERO_DBAR
    return Regime.STRICTLY_NEGATIVE_DBAR


def solve_xi(m: ModelParams) -> LimitData:
    """Solve the limit equation for xi = b(T) and derive the limit data.

    For dbar = 0 the root is K exactly.  Otherwise H has H(0) = rK > 0 and
    H(K) = K * dbar < 0, so a Brent solve on [0, K] is safe.  lambda picks
    up atoms matching ln(K/xi) within ``ATOM_MATCH_TOL``; delta_bar sums
    strictly greater atoms only, excluding the matched one.
    """
    regime = classify_regime(m)
    if regime is Regime.ZERO_DBAR:
        xi = m.K
    else:
        xi = brentq(
            lambda x: limit_equation(m, x),
            0.0,
            m.K,
            xtol=1e-14 * m.K,
            rtol=8.9e-16,
            maxiter=200,
        )
    y_star = math.log(m.K / xi)
    lam = m.nu.mass_at(y_star)
    delta_bar = m.delta + m.nu.exp_moment_above(y_star)
    beta = m.K / (delta_bar * xi)
    expansion_c = m.sigma * xi * delta_bar * math.exp(lam)
    return LimitData(
        xi=xi,
        lambda_atom=lam,
        delta_bar=delta_bar,
        beta=beta,
        regime=regime,
        expansion_C=expansion_c,
    )


# --- JSON ingestion -------------------------------------------------------

_MODEL_KEYS = {"r", "delta", "sigma", "K", "T", "atoms"}
_ATOM_KEYS = {"y", "w"}


def _require_number(doc: dict, key: str, path: str) -> float:
    if key not in doc:
        raise ConfigError(f"{path}.{key}", "missing required key")
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {type(v).__name__}")
    return float(v)


def model_from_dict(doc: dict, path: str = "model") -> ModelParams:
    """Build ModelParams from a parsed JSON document; unknown keys rejected."""
    if not isinstance(doc, dict):
        raise ConfigError(path, f"expected an object, got {type(doc).__name__}")
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")
    r = _require_number(doc, "r", path)
    delta = _require_number(doc, "delta", path)
    sigma = _require_number(doc, "sigma", path)
    K = _require_number(doc, "K", path)
    T = _require_number(doc, "T", path)
    atoms_doc = doc.get("atoms", [])
    if not isinstance(atoms_doc, list):
        raise ConfigError(f"{path}.atoms", "expected a list")
    atoms = []
    for i, a in enumerate(atoms_doc):
        apath = f"{path}.atoms[{i}]"
        if not isinstance(a, dict):
            raise ConfigError(apath, "expected an object")
        unknown = set(a) - _ATOM_KEYS
        if unknown:
            raise ConfigError(f"{apath}.{sorted(unknown)[0]}", "unknown key")
        atoms.append((_require_number(a, "y", apath), _require_number(a, "w", apath)))
    try:
        return ModelParams(r=r, delta=delta, sigma=sigma, K=K, T=T, nu=LevyMeasure.from_pairs(atoms))
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def model_from_json(text: str) -> ModelParams:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from exc
    return model_from_dict(doc)


def model_to_dict(m: ModelParams) -> dict:
    return {
        "r": m.r,
        "delta": m.delta,
        "sigma": m.sigma,
        "K": m.K,
        "T": m.T,
        "atoms": [{"y": a.y, "w": a.w} for a in m.nu],
    }
