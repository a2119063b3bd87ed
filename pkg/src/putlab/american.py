"""Finite-difference solver for the American put variational inequality.

Log-spot coordinates on a uniform grid; the diffusion/drift/discount part
is handled implicitly (implicit Euler or Crank-Nicolson with a short
implicit start), the atomic jump sum semi-implicitly through a lagged
fixed point, and the obstacle by projected SOR or a penalty active-set
Newton — two independent treatments that must agree on reference models.
The time grid refines geometrically toward maturity so the boundary stays
resolvable at small time-to-maturity.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp

from .errors import DbarPositive, DegenerateBoundary, MissingArtifact, NonConvergence
from .european import price_eu
from .lcp import solve_lcp_penalty, solve_lcp_psor
from .model import LimitData, ModelParams, model_from_dict, model_to_dict, solve_xi

SCHEMES = ("implicit-euler", "crank-nicolson")
OBSTACLE_METHODS = ("psor", "penalty")
JUMP_INTERP = ("cubic", "linear")


@dataclass(frozen=True)
class GridSpec:
    """Discretization for the variational-inequality solve.

    Pads are log-space margins added beyond [ln xi, ln K]; when left as
    None they default to max|y_i| + 6 sigma sqrt(T), which they must at
    least cover.  time_grading < 1 shrinks steps geometrically toward
    maturity by that ratio; extra_thetas are inserted exactly as levels.
    """

    nx: int = 1200
    nt: int = 160
    pad_lo: float | None = None
    pad_hi: float | None = None
    scheme: str = "crank-nicolson"
    time_grading: float = 0.9
    obstacle: str = "psor"
    penalty_factor: float = 1e7
    psor_omega: float = 1.5
    psor_maxiter: int = 10_000
    psor_tol_factor: float = 1e-12
    step_tol_factor: float = 1e-10
    max_fixed_point: int = 50
    jump_interp: str = "cubic"
    c_ex: float = 2e-3
    rannacher_steps: int = 2
    extra_thetas: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.nx < 200:
            raise ValueError(f"nx must be >= 200, got {self.nx}")
        if self.nt < 100:
            raise ValueError(f"nt must be >= 100, got {self.nt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.obstacle not in OBSTACLE_METHODS:
            raise ValueError(f"obstacle must be one of {OBSTACLE_METHODS}")
        if self.jump_interp not in JUMP_INTERP:
            raise ValueError(f"jump_interp must be one of {JUMP_INTERP}")
        if not 0.0 < self.time_grading <= 1.0:
            raise ValueError("time_grading must be in (0, 1]")

    def required_pad(self, m: ModelParams) -> float:
        max_jump = max((abs(a.y) for a in m.nu), default=0.0)
        return max_jump + 6.0 * m.sigma * math.sqrt(m.T)

    def resolve_pads(self, m: ModelParams) -> tuple[float, float]:
        need = self.required_pad(m)
        lo = need if self.pad_lo is None else self.pad_lo
        hi = need if self.pad_hi is None else self.pad_hi
        if lo < need - 1e-12 or hi < need - 1e-12:
            raise ValueError(f"pads must cover max|y| + 6 sigma sqrt(T) = {need:.4f}")
        return lo, hi

    def as_dict(self) -> dict:
        d = asdict(self)
        d["extra_thetas"] = list(self.extra_thetas)
        return d


@dataclass
class PriceSurface:
    """Solved put prices on the (t, log-spot) grid; immutable after solve."""

    model: ModelParams
    grid: GridSpec
    times: np.ndarray     # ascending on [0, T]
    thetas: np.ndarray    # exact time-to-maturity per row (descending)
    logspots: np.ndarray  # ascending, uniform
    values: np.ndarray    # shape (len(times), len(logspots))
    active: np.ndarray    # bool, exercise-region flags from the complementarity solve
    diagnostics: dict = field(default_factory=dict)

    @property
    def payoff(self) -> np.ndarray:
        return np.maximum(self.model.K - np.exp(self.logspots), 0.0)

    def theta_index(self, theta: float) -> int:
        idx = int(np.argmin(np.abs(self.thetas - theta)))
        if abs(self.thetas[idx] - theta) > 1e-9 * max(1.0, self.model.T):
            raise KeyError(f"theta={theta} is not a grid level; insert it via extra_thetas")
        return idx

    def row_interp(self, row: int, logspot, order: int = 3):
        return _interp_uniform(self.logspots, self.values[row], np.asarray(logspot, dtype=float), order)

    def value_at(self, t: float, x, order: int = 3):
        """Price at time t and spot x; exact in t on grid rows, linear between."""
        z = np.log(np.asarray(x, dtype=float))
        pos = np.searchsorted(self.times, t)
        lo = max(0, min(pos - 1, len(self.times) - 1))
        hi = min(pos, len(self.times) - 1)
        if hi == lo or abs(self.times[lo] - t) < 1e-12 * max(1.0, self.model.T):
            out = self.row_interp(lo, z, order)
        elif abs(self.times[hi] - t) < 1e-12 * max(1.0, self.model.T):
            out = self.row_interp(hi, z, order)
        else:
            wt = (t - self.times[lo]) / (self.times[hi] - self.times[lo])
            out = (1.0 - wt) * self.row_interp(lo, z, order) + wt * self.row_interp(hi, z, order)
        return float(out) if np.isscalar(x) else out


@dataclass
class BoundaryCurve:
    """Critical prices per time-to-maturity with refinement metadata."""

    thetas: np.ndarray   # ascending, theta > 0 levels only
    b: np.ndarray        # refined boundary
    b_raw: np.ndarray    # last active grid node
    refinement: list[dict]
    xi: float | None = None

    def b_at(self, theta) -> np.ndarray | float:
        out = np.interp(np.asarray(theta, dtype=float), self.thetas, self.b)
        return float(out) if np.isscalar(theta) else out


def _interp_uniform(zgrid: np.ndarray, row: np.ndarray, zq: np.ndarray, order: int):
    """Lagrange interpolation (linear or 4-point cubic) on a uniform grid."""
    if order not in (1, 3):
        raise ValueError("order must be 1 or 3")
    if order == 1:
        return np.interp(zq, zgrid, row)
    dz = zgrid[1] - zgrid[0]
    pos = (zq - zgrid[0]) / dz
    j = np.clip(np.floor(pos).astype(int), 1, len(zgrid) - 3)
    u = pos - j
    wm1 = -u * (u - 1.0) * (u - 2.0) / 6.0
    w0 = (u * u - 1.0) * (u - 2.0) / 2.0
    w1 = -u * (u + 1.0) * (u - 2.0) / 2.0
    w2 = u * (u * u - 1.0) / 6.0
    out = wm1 * row[j - 1] + w0 * row[j] + w1 * row[j + 1] + w2 * row[j + 2]
    # clamp queries outside the grid to the end values
    out = np.where(zq <= zgrid[0], row[0], out)
    out = np.where(zq >= zgrid[-1], row[-1], out)
    return out


def theta_levels(T: float, nt: int, grading: float, extra: tuple[float, ...] = ()) -> np.ndarray:
    """Ascending theta levels on [0, T]; geometric step growth away from maturity."""
    if grading >= 1.0:
        levels = np.linspace(0.0, T, nt + 1)
    else:
        q = 1.0 / grading
        first = T * (q - 1.0) / (q ** nt - 1.0)
        steps = first * q ** np.arange(nt)
        levels = np.concatenate([[0.0], np.cumsum(steps)])
        levels[-1] = T
    extras = np.asarray([th for th in extra if 0.0 < th <= T], dtype=float)
    levels = np.sort(np.concatenate([levels, extras]))
    keep = np.concatenate([[True], np.diff(levels) > 1e-12 * max(1.0, T)])
    levels = levels[keep]
    levels[-1] = T
    return levels


def _jump_stencil(z: np.ndarray, y_jump: float, K: float, kind: str) -> tuple[sp.csr_matrix, np.ndarray]:
    """Shift-by-y interpolation as a sparse matrix plus out-of-grid constants.

    Below the grid the put is deep in the money (value K - x); above it the
    value is taken as 0.
    """
    n = len(z)
    dz = z[1] - z[0]
    zt = z + y_jump
    inside = (zt > z[0]) & (zt < z[-1])
    const = np.zeros(n)
    low = zt <= z[0]
    const[low] = K - np.exp(zt[low])
    idx = np.nonzero(inside)[0]
    pos = (zt[idx] - z[0]) / dz
    if kind == "linear":
        j = np.clip(np.floor(pos).astype(int), 0, n - 2)
        u = pos - j
        rows = np.repeat(idx, 2)
        cols = np.stack([j, j + 1], axis=1).ravel()
        vals = np.stack([1.0 - u, u], axis=1).ravel()
    else:
        j = np.clip(np.floor(pos).astype(int), 1, n - 3)
        u = pos - j
        wm1 = -u * (u - 1.0) * (u - 2.0) / 6.0
        w0 = (u * u - 1.0) * (u - 2.0) / 2.0
        w1 = -u * (u + 1.0) * (u - 2.0) / 2.0
        w2 = u * (u * u - 1.0) / 6.0
        rows = np.repeat(idx, 4)
        cols = np.stack([j - 1, j, j + 1, j + 2], axis=1).ravel()
        vals = np.stack([wm1, w0, w1, w2], axis=1).ravel()
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return mat, const


def _limit_anchor(m: ModelParams) -> float:
    try:
        return solve_xi(m).xi
    except DbarPositive:
        return m.K


def solve_am(m: ModelParams, g: GridSpec) -> PriceSurface:
    """Backward march of the obstacle problem for the American put price.

    Within each time step the jump sum is lagged and iterated to
    ``step_tol = step_tol_factor * K``; each inner problem is a
    tridiagonal LCP solved by the configured obstacle method.
    """
    pad_lo, pad_hi = g.resolve_pads(m)
    anchor_lo = math.log(min(_limit_anchor(m), m.K))
    z_lo = anchor_lo - pad_lo
    z_hi = math.log(m.K) + pad_hi
    z = np.linspace(z_lo, z_hi, g.nx)
    dz = z[1] - z[0]
    x = np.exp(z)
    payoff = np.maximum(m.K - x, 0.0)

    thetas = theta_levels(m.T, g.nt, g.time_grading, g.extra_thetas)
    n_lev = len(thetas)

    jump_mat: sp.csr_matrix | None = None
    jump_const = np.zeros(g.nx)
    nubar = m.nu.total_mass
    for atom in m.nu:
        mat, const = _jump_stencil(z, atom.y, m.K, g.jump_interp)
        jump_mat = atom.w * mat if jump_mat is None else jump_mat + atom.w * mat
        jump_const += atom.w * const

    aa = 0.5 * m.sigma * m.sigma / (dz * dz)
    bb = m.mu / (2.0 * dz)
    kill = m.r + nubar
    step_tol = g.step_tol_factor * m.K
    psor_tol = g.psor_tol_factor * m.K
    rho = g.penalty_factor * m.r

    values = np.empty((n_lev, g.nx))
    active = np.zeros((n_lev, g.nx), dtype=bool)
    values[0] = payoff
    active[0] = payoff > 0.0

    def apply_local(u: np.ndarray) -> np.ndarray:
        """L u on interior nodes, Dirichlet edge values taken from u itself."""
        out = np.empty(g.nx - 2)
        out[:] = (aa - bb) * u[:-2] + (aa + bb) * u[2:] - (2.0 * aa + kill) * u[1:-1]
        return out

    def jump_term(u: np.ndarray) -> np.ndarray:
        if jump_mat is None:
            return jump_const
        return jump_mat @ u + jump_const

    u = payoff.copy()
    max_fp = 0
    max_lcp = 0
    max_resid = 0.0
    psi = payoff[1:-1]
    for k in range(1, n_lev):
        dt = thetas[k] - thetas[k - 1]
        implicit_weight = 1.0
        if g.scheme == "crank-nicolson" and k > g.rannacher_steps:
            implicit_weight = 0.5
        w_i = implicit_weight * dt
        w_e = (1.0 - implicit_weight) * dt
        lower = np.full(g.nx - 2, -w_i * (aa - bb))
        upper = np.full(g.nx - 2, -w_i * (aa + bb))
        diag = np.full(g.nx - 2, 1.0 + w_i * (2.0 * aa + kill))
        base_rhs = u[1:-1] + (w_e * (apply_local(u) + jump_term(u)[1:-1]) if w_e > 0.0 else 0.0)

        u_new = u.copy()
        converged = False
        for fp in range(1, g.max_fixed_point + 1):
            rhs = base_rhs + w_i * jump_term(u_new)[1:-1]
            rhs[0] -= lower[0] * payoff[0]
            # top edge value is 0, no contribution
            if g.obstacle == "psor":
                sol, act, iters = solve_lcp_psor(
                    lower, diag, upper, rhs, psi, u_new[1:-1],
                    omega=g.psor_omega, tol=psor_tol, maxiter=g.psor_maxiter,
                )
            else:
                sol, act, iters = solve_lcp_penalty(
                    lower, diag, upper, rhs, psi, u_new[1:-1], penalty=rho * dt,
                )
            max_lcp = max(max_lcp, iters)
            change = float(np.max(np.abs(sol - u_new[1:-1])))
            u_new[1:-1] = sol
            u_new[0] = payoff[0]
            u_new[-1] = 0.0
            if change < step_tol or jump_mat is None:
                converged = True
                max_fp = max(max_fp, fp)
                break
        if not converged:
            raise NonConvergence(
                f"jump fixed point did not reach {step_tol} within {g.max_fixed_point} iterations"
            )
        # complementarity residual min(u - psi, A u - rhs) in max norm
        au = diag * u_new[1:-1] + lower * u_new[:-2] + upper * u_new[2:]
        resid = np.minimum(u_new[1:-1] - psi, au - (base_rhs + w_i * jump_term(u_new)[1:-1]))
        max_resid = max(max_resid, float(np.max(np.abs(np.minimum(resid, 0.0)))))
        u = u_new
        values[k] = u
        active[k, 1:-1] = act
        active[k, 0] = True

    diagnostics = {
        "dz": dz,
        "step_tol": step_tol,
        "max_fixed_point_iters": max_fp,
        "max_lcp_iters": max_lcp,
        "max_complementarity_violation": max_resid,
        "obstacle": g.obstacle,
        "scheme": g.scheme,
        "n_levels": n_lev,
    }
    # rows ascending in time t = T - theta
    return PriceSurface(
        model=m,
        grid=g,
        times=(m.T - thetas)[::-1].copy(),
        thetas=thetas[::-1].copy(),
        logspots=z,
        values=values[::-1].copy(),
        active=active[::-1].copy(),
        diagnostics=diagnostics,
    )


def extract_boundary(
    s: PriceSurface,
    lim: LimitData | None = None,
    c_ex: float | None = None,
    min_theta: float = 0.0,
) -> BoundaryCurve:
    """Critical price per time level from the active set, with sub-grid refinement.

    The raw boundary is the top of the contiguous exercise block; the
    refined value locates the crossing of the linear interpolant of
    (P - payoff) with eps_ex = c_ex * dz^2 * K just above it.  Levels with
    theta below ``min_theta`` are left out: once (P - payoff) sinks under
    the solver floor between the limit price and the strike, the active
    set no longer separates the regions and the level is unresolved
    rather than extrapolated.
    """
    if c_ex is None:
        c_ex = s.grid.c_ex
    z = s.logspots
    dz = z[1] - z[0]
    eps = c_ex * dz * dz * s.model.K
    payoff = s.payoff
    thetas = s.thetas
    out_thetas = []
    out_b = []
    out_raw = []
    refinement = []
    for row in range(len(s.times)):
        theta = thetas[row]
        if theta <= 0.0 or theta < min_theta:
            continue
        arow = s.active[row]
        if not arow[0]:
            raise DegenerateBoundary(f"no exercise node at theta={theta}")
        jlast = int(np.argmin(arow)) - 1 if not arow.all() else len(arow) - 1
        if jlast >= len(arow) - 2:
            raise DegenerateBoundary(f"exercise region touches the upper edge at theta={theta}")
        gap = s.values[row] - payoff
        jj = jlast + 1
        while jj < len(z) - 1 and gap[jj] < eps:
            jj += 1
        if gap[jj] < eps:
            raise DegenerateBoundary(f"refinement threshold never crossed at theta={theta}")
        g0, g1 = gap[jj - 1], gap[jj]
        frac = (eps - g0) / (g1 - g0) if g1 > g0 else 0.0
        frac = min(max(frac, 0.0), 1.0)
        z_cross = z[jj - 1] + frac * dz
        out_thetas.append(theta)
        out_raw.append(math.exp(z[jlast]))
        out_b.append(math.exp(z_cross))
        refinement.append({"raw_index": jlast, "cross_index": jj, "eps_ex": eps, "frac": frac})
    order = np.argsort(out_thetas)
    return BoundaryCurve(
        thetas=np.asarray(out_thetas)[order],
        b=np.asarray(out_b)[order],
        b_raw=np.asarray(out_raw)[order],
        refinement=[refinement[i] for i in order],
        xi=None if lim is None else lim.xi,
    )


def smooth_fit_check(s: PriceSurface, bc: BoundaryCurve, thetas=None) -> list[tuple[float, float]]:
    """One-sided continuation slope of P at b(theta); returns (theta, |slope + 1|)."""
    if thetas is None:
        thetas = bc.thetas
    x = np.exp(s.logspots)
    payoff = s.payoff
    out = []
    for theta in np.atleast_1d(thetas):
        row = s.theta_index(float(theta))
        pos = int(np.argmin(np.abs(bc.thetas - theta)))
        j = bc.refinement[pos]["raw_index"]
        slope = (s.values[row][j + 1] - s.values[row][j]) / (x[j + 1] - x[j])
        out.append((float(theta), abs(slope + 1.0)))
    return out


def premium_mc_check(
    m: ModelParams,
    s: PriceSurface,
    bc: BoundaryCurve,
    t: float,
    x: float,
    paths: int = 100_000,
    seed: int = 0,
) -> tuple[float, float, float]:
    """Monte Carlo check of the early-exercise-premium representation.

    lhs = P(t, x) - P_e(t, x) from the solvers; rhs is the simulated
    integral of e^{-rs} (rK - delta S - sum_{y>0} w [P(t+s, S e^y) -
    (K - S e^y)]) over the exercise region {S < b(t+s)}.  Returns
    (lhs, rhs, standard error).
    """
    theta_total = m.T - t
    if theta_total <= 0.0:
        raise ValueError("need t < T")
    mask = s.times >= t - 1e-12 * max(1.0, m.T)
    t_nodes = np.unique(np.concatenate([[t], s.times[mask]]))
    svals = t_nodes - t
    rng = np.random.default_rng(seed)
    spot = np.full(paths, float(x))
    acc = np.zeros(paths)

    def integrand_at(ti: float, sv: float, spots: np.ndarray) -> np.ndarray:
        theta_here = m.T - ti
        bval = float(bc.b_at(theta_here)) if theta_here > 0.0 else float(bc.b[0])
        inside = spots < bval
        out = np.zeros_like(spots)
        if not np.any(inside):
            return out
        sin = spots[inside]
        val = m.r * m.K - m.delta * sin
        for atom in m.nu:
            if atom.y <= 0.0:
                continue
            xs = sin * math.exp(atom.y)
            if theta_here <= 0.0:
                pvals = np.maximum(m.K - xs, 0.0)
            else:
                pvals = s.value_at(ti, xs, order=1)
            val = val - atom.w * (pvals - (m.K - xs))
        out[inside] = math.exp(-m.r * sv) * val
        return out

    integrand_prev = integrand_at(t, 0.0, spot)
    for i in range(1, len(t_nodes)):
        dt = t_nodes[i] - t_nodes[i - 1]
        if dt <= 0.0:
            continue
        log_inc = m.mu * dt + m.sigma * math.sqrt(dt) * rng.standard_normal(paths)
        for atom in m.nu:
            counts = rng.poisson(atom.w * dt, paths)
            if counts.any():
                log_inc = log_inc + atom.y * counts
        spot = spot * np.exp(log_inc)
        integrand = integrand_at(t_nodes[i], svals[i], spot)
        acc += 0.5 * dt * (integrand_prev + integrand)
        integrand_prev = integrand

    rhs = float(np.mean(acc))
    se = float(np.std(acc, ddof=1)) / math.sqrt(paths)
    p_am = s.value_at(t, x, order=3)
    p_eu, _ = price_eu(m, t, x)
    lhs = float(p_am - p_eu)
    return lhs, rhs, se


# --- persistence -----------------------------------------------------------

def save_surface(s: PriceSurface, csv_path: str, meta_path: str) -> None:
    """Flat CSV (theta, logspot, price, active) plus a JSON metadata sidecar."""
    thetas = s.thetas
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["theta", "logspot", "price", "active"])
        for i in range(len(s.times) - 1, -1, -1):  # theta ascending
            th = repr(float(thetas[i]))
            row = s.values[i]
            arow = s.active[i]
            for j, zz in enumerate(s.logspots):
                writer.writerow([th, repr(float(zz)), repr(float(row[j])), int(arow[j])])
    meta = {
        "model": model_to_dict(s.model),
        "grid": s.grid.as_dict(),
        "times": [float(v) for v in s.times],
        "thetas": [float(v) for v in s.thetas],
        "n_logspots": len(s.logspots),
        "diagnostics": s.diagnostics,
    }
    with open(meta_path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_surface(csv_path: str, meta_path: str) -> PriceSurface:
    import os

    if not (os.path.exists(csv_path) and os.path.exists(meta_path)):
        raise MissingArtifact(f"surface files not found: {csv_path}, {meta_path}")
    with open(meta_path) as f:
        meta = json.load(f)
    model = model_from_dict(meta["model"])
    gdoc = dict(meta["grid"])
    gdoc["extra_thetas"] = tuple(gdoc.get("extra_thetas", ()))
    grid = GridSpec(**gdoc)
    times = np.asarray(meta["times"], dtype=float)
    thetas = np.asarray(meta["thetas"], dtype=float)
    n_z = int(meta["n_logspots"])
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    if data.shape[0] != len(times) * n_z:
        raise MissingArtifact("surface CSV does not match its metadata sidecar")
    logspots = data[:n_z, 1]
    values = data[:, 2].reshape(len(times), n_z)[::-1]
    active = data[:, 3].reshape(len(times), n_z)[::-1].astype(bool)
    return PriceSurface(
        model=model,
        grid=grid,
        times=times,
        thetas=thetas,
        logspots=logspots,
        values=values,
        active=active,
        diagnostics=meta.get("diagnostics", {}),
    )
