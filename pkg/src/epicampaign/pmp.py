"""Pontryagin conditions and the forward-backward sweep for the fixed-seed problem.

The adjoint system is::

    dlam_k/dt = beta k lam_k sum_l q_l i_l - beta q_k sum_j lam_j j s_j + gamma u_k lam_k
    lam_k(T)  = p_k

and the Hamiltonian is maximized pointwise by ``u_k = g_k'^{-1}(gamma lam_k s_k / mu)``
(``mu = 1`` for the unconstrained net-reward problem).  With the quadratic
cost ``g_k = c_k u^2`` this is ``u_k = gamma lam_k s_k / (2 mu c_k)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    RateSamples,
    Trajectory,
    _check_controls,
    _check_i0,
    integrate_state,
    rate_samples,
    stage_controls,
    state_rhs,
)
from .errors import CostModelError, IntegrationBlowupError
from .scenario import Scenario, sample_profile

log = logging.getLogger(__name__)

ADJOINT_SLACK = 1e-9


@dataclass
class SolveReport:
    controls: Trajectory
    states: Trajectory
    adjoints: Trajectory
    J: float
    spread_reward: float
    control_cost: float
    stationarity_residual: float
    iterations: int
    converged: bool
    mu: float = 1.0
    history: list = field(default_factory=list)  # relative control change per sweep

    def summary(self) -> dict:
        return {
            "J": self.J,
            "spread_reward": self.spread_reward,
            "control_cost": self.control_cost,
            "iterations": self.iterations,
            "converged": self.converged,
            "stationarity_residual": self.stationarity_residual,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# integrals
# ---------------------------------------------------------------------------

def time_integral(values: np.ndarray, grid: np.ndarray, interp: str = "linear") -> np.ndarray:
    """Integral over the grid along the last axis.

    Composite trapezoid for linearly interpolated samples; exact left sums for
    a zero-order hold.
    """
    h = np.diff(grid)
    if interp == "hold":
        return values[..., :-1] @ h
    return 0.5 * ((values[..., :-1] + values[..., 1:]) @ h)


def control_cost(scn: Scenario, controls: Trajectory) -> float:
    """``int_0^T sum_k g_k(u_k(t)) dt``."""
    c = scn.cost_coefficients()
    running = c @ np.square(controls.values)
    return float(time_integral(running, controls.grid, controls.interp))


def normalized_resource(scn: Scenario, controls: Trajectory) -> dict[int, float]:
    """Per-capita resource ``b int u_k^2 dt`` for each degree class."""
    per_class = scn.cost.b * time_integral(np.square(controls.values), controls.grid, controls.interp)
    return dict(zip(scn.dist.degrees.tolist(), per_class.tolist()))


def evaluate_reward(scn: Scenario, controls: Trajectory, i0):
    """Net reward of given controls: ``(J, spread, cost)``."""
    states = integrate_state(scn, controls, i0)
    spread = float(scn.dist.p @ states.values[:, -1])
    cost = control_cost(scn, controls)
    return spread - cost, spread, cost


# ---------------------------------------------------------------------------
# adjoint sweep and control update
# ---------------------------------------------------------------------------

def adjoint_rhs(lam, i, k, q, beta, gamma, u):
    s = 1.0 - i
    return beta * k * lam * (q @ i) - beta * q * (lam @ (k * s)) + gamma * u * lam


def integrate_adjoint(scn: Scenario, states: Trajectory, controls: Trajectory,
                      rates: RateSamples | None = None) -> Trajectory:
    """Backward RK4 for the adjoints from ``lam_k(T) = p_k``.

    States at step midpoints come from cubic Hermite interpolation using the
    state equation's own slopes, which keeps the sweep fourth-order accurate.
    """
    _check_controls(scn, controls)
    rates = rates or rate_samples(scn)
    k = scn.dist.degrees.astype(float)
    q = scn.dist.q
    h = scn.dt
    u0, um, u1 = stage_controls(controls)
    x = states.values.T

    out = np.empty_like(x)
    out[-1] = lam = scn.dist.p.copy()
    # overflow is caught by the finiteness check below
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(scn.n_grid - 2, -1, -1):
            i0, i1 = x[n], x[n + 1]
            b0, bm, b1 = rates.beta[n], rates.beta_mid[n], rates.beta[n + 1]
            g0, gm, g1 = rates.gamma[n], rates.gamma_mid[n], rates.gamma[n + 1]
            f0 = state_rhs(i0, k, q, b0, g0, u0[n])
            f1 = state_rhs(i1, k, q, b1, g1, u1[n])
            imid = 0.5 * (i0 + i1) + 0.125 * h * (f0 - f1)

            k1 = adjoint_rhs(lam, i1, k, q, b1, g1, u1[n])
            k2 = adjoint_rhs(lam - 0.5 * h * k1, imid, k, q, bm, gm, um[n])
            k3 = adjoint_rhs(lam - 0.5 * h * k2, imid, k, q, bm, gm, um[n])
            k4 = adjoint_rhs(lam - h * k3, i0, k, q, b0, g0, u0[n])
            lam = lam - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(lam)):
                raise IntegrationBlowupError("adjoint became non-finite", n, float(scn.grid[n]))
            out[n] = lam
    out[-1] = scn.dist.p
    return Trajectory(scn.grid, out.T)


def maximize_hamiltonian(scn: Scenario, states: Trajectory, adjoints: Trajectory, mu: float = 1.0) -> Trajectory:
    """Pointwise maximizer ``u_k = g_k'^{-1}(gamma lam_k s_k / mu)``."""
    c = scn.cost_coefficients()
    if mu <= 0:
        raise CostModelError(f"multiplier mu must be > 0, got {mu!r}")
    gamma = sample_profile(scn.gamma, scn.grid)
    drive = gamma[None, :] * adjoints.values * (1.0 - states.values) / mu
    return Trajectory(scn.grid, scn.cost.g_prime_inverse(c[:, None], drive))


def stationarity_residual(scn: Scenario, controls: Trajectory, states: Trajectory,
                          adjoints: Trajectory, mu: float = 1.0) -> float:
    """``max_{k,t} |mu g_k'(u_k) - gamma lam_k s_k|``."""
    c = scn.cost_coefficients()
    gamma = sample_profile(scn.gamma, scn.grid)
    lhs = mu * scn.cost.g_prime(c[:, None], controls.values)
    rhs = gamma[None, :] * adjoints.values * (1.0 - states.values)
    return float(np.max(np.abs(lhs - rhs)))


FALLBACK_DAMPING = 0.5
FALLBACK_SWEEPS = 400
DIVERGED_GAP = 0.5
STALL_WINDOW = 25
STALL_FACTOR = 0.5
MIN_DAMPING = 1.0 / 64.0


def _sweep(scn, u, i0, rates, mu):
    states = integrate_state(scn, u, i0, rates)
    adjoints = integrate_adjoint(scn, states, u, rates)
    return states, adjoints, maximize_hamiltonian(scn, states, adjoints, mu)


def _fixed_point_gap(u_new: np.ndarray, u: np.ndarray) -> float:
    scale = float(np.max(np.abs(u_new)))
    diff = float(np.max(np.abs(u_new - u)))
    return diff / scale if scale > 0 else diff


def fbs_solve(scn: Scenario, i0=None, *, mu: float = 1.0, damping: float = 1.0,
              u_init: Trajectory | None = None, n_sweep: int | None = None,
              tol: float | None = None, fallback: bool = True) -> SolveReport:
    """Forward-backward sweep.

    Starting from ``u = 0`` (or ``u_init``), each sweep integrates the states
    forward, the adjoints backward, and replaces the controls by the
    Hamiltonian maximizer.  The loop runs ``n_sweep`` times and stops early
    once the relative sup-norm gap between the maximizer and the current
    controls drops below ``tol``.

    ``damping`` < 1 blends each update with the previous iterate.  The plain
    iteration can oscillate when spreading is fast or control is cheap; with
    ``fallback`` set, an unconverged run continues with damping 0.5, halving
    the damping factor whenever the gap stops shrinking (down to 1/64, at most
    400 extra sweeps); a blowup at some damping level counts as a stall.  It
    continues from the last iterate, or from the starting controls when the
    iteration blew up or was far from settling.

    A final forward/backward pass with the returned controls supplies
    consistent states, adjoints and the stationarity residual.
    """
    i0 = _check_i0(scn, scn.i0() if i0 is None else i0)
    n_sweep = scn.n_sweep if n_sweep is None else n_sweep
    tol = scn.fixed_point_tol if tol is None else tol
    if not (0 < damping <= 1):
        raise ValueError("damping must lie in (0, 1]")
    rates = rate_samples(scn)

    u_start = np.zeros((scn.dist.n_classes, scn.n_grid)) if u_init is None else u_init.values.copy()
    u = u_start
    history: list[float] = []
    converged = False

    def run(omega, budget, window=None):
        """Sweep with relaxation ``omega``; with ``window`` stop early once progress stalls."""
        nonlocal u, converged
        best_prev = math.inf
        for j in range(budget):
            _, _, target = _sweep(scn, Trajectory(scn.grid, u), i0, rates, mu)
            gap = _fixed_point_gap(target.values, u)
            history.append(gap)
            u = target.values if omega == 1.0 else omega * target.values + (1.0 - omega) * u
            if gap < tol:
                converged = True
                return
            if window and (j + 1) % window == 0:
                best = min(history[-window:])
                if best > STALL_FACTOR * best_prev:
                    return
                best_prev = best

    try:
        run(damping, n_sweep)
    except IntegrationBlowupError:
        if not fallback:
            raise
        log.debug("sweep blew up after %d iterations; switching to damped sweeps", len(history))
        u = u_start
    if fallback and not converged:
        omega = min(damping, FALLBACK_DAMPING)
        spent = 0
        while not converged and spent < FALLBACK_SWEEPS and omega >= MIN_DAMPING:
            if history and history[-1] > DIVERGED_GAP:
                u = u_start  # wild oscillation: restart rather than relax from it
            before = len(history)
            try:
                run(omega, FALLBACK_SWEEPS - spent, window=STALL_WINDOW)
            except IntegrationBlowupError:
                # still too aggressive for the step size: restart with less relaxation
                u = u_start
            spent += max(len(history) - before, 1)
            log.debug("damping %.4g: %d sweeps, gap %.3g", omega, spent, history[-1])
            omega *= 0.5

    u = Trajectory(scn.grid, u)
    states = integrate_state(scn, u, i0, rates)
    adjoints = integrate_adjoint(scn, states, u, rates)
    spread = float(scn.dist.p @ states.values[:, -1])
    cost = control_cost(scn, u)
    return SolveReport(
        controls=u,
        states=states,
        adjoints=adjoints,
        J=spread - cost,
        spread_reward=spread,
        control_cost=cost,
        stationarity_residual=stationarity_residual(scn, u, states, adjoints, mu),
        iterations=len(history),
        converged=converged,
        mu=mu,
        history=history,
    )


# ---------------------------------------------------------------------------
# structural properties
# ---------------------------------------------------------------------------

def adjoint_nonnegative(adjoints: Trajectory, slack: float = ADJOINT_SLACK) -> bool:
    return bool(np.min(adjoints.values) >= -slack)


def controls_nonincreasing(controls: Trajectory, slack: float = 1e-9) -> bool:
    return bool(np.all(np.diff(controls.values, axis=1) <= slack))


def controls_convex(controls: Trajectory, slack: float = 1e-8) -> bool:
    return bool(np.all(np.diff(controls.values, n=2, axis=1) >= -slack))


# ---------------------------------------------------------------------------
# sufficient conditions for convergence and uniqueness
# ---------------------------------------------------------------------------

def _exp_difference_quotient(a: float, b: float, T: float) -> float:
    """``(e^{aT} - e^{bT}) / (a - b)``, equal to ``T e^{aT}`` when ``a == b``."""
    d = a - b
    if d == 0.0:
        return T * math.exp(a * T)
    return math.exp(b * T) * math.expm1(d * T) / d


def _bound_constants(scn: Scenario):
    grid = scn.grid
    beta = sample_profile(scn.beta, grid)
    gamma = sample_profile(scn.gamma, grid)
    dist = scn.dist
    return {
        "beta": beta,
        "gamma": gamma,
        "beta_M": float(beta.max()),
        "gamma_M": float(gamma.max()),
        "c_m": float(scn.cost_coefficients().min()),
        "sum_k": float(dist.degrees.sum()),
        "K_max": float(dist.k_max),
        "q_M": float(dist.q.max()),
    }


def _trial_maxima(scn: Scenario):
    rep = fbs_solve(scn)
    return float(np.max(rep.controls.values)), float(np.max(rep.adjoints.values))


def check_convergence_bound(scn: Scenario, u_M: float | None = None, Lambda: float | None = None):
    """Sufficient condition for the sweep to contract (quadratic cost).

    Returns ``(lhs, lhs < 1)``.  Missing ``u_M`` / ``Lambda`` are taken as the
    observed maxima of a trial solve.
    """
    if u_M is None or Lambda is None:
        trial_u, trial_lam = _trial_maxima(scn)
        u_M = trial_u if u_M is None else u_M
        Lambda = trial_lam if Lambda is None else Lambda
    cst = _bound_constants(scn)
    T = scn.T
    bM, gM = cst["beta_M"], cst["gamma_M"]
    if gM == 0.0:
        return 0.0, True
    a = bM * cst["sum_k"] * cst["q_M"]
    b = bM * cst["K_max"]
    lhs = (gM ** 2 * Lambda / (2.0 * cst["c_m"])
           * math.exp((bM * cst["K_max"] + gM * u_M) * T)
           * _exp_difference_quotient(a, b, T))
    return lhs, lhs < 1.0


def uniqueness_constants(scn: Scenario, Lambda: float):
    cst = _bound_constants(scn)
    d1 = max(cst["sum_k"] * Lambda * cst["q_M"] + cst["K_max"] * Lambda, 2.0 * cst["K_max"])
    d2 = (Lambda / cst["c_m"]) * max(1.0, Lambda / 2.0)
    return d1, d2


def check_uniqueness(scn: Scenario, Lambda: float | None = None):
    """Sufficient condition ``d1 ||beta||_1 + d2 ||gamma^2||_1 < 1`` for a unique solution."""
    if Lambda is None:
        Lambda = _trial_maxima(scn)[1]
    d1, d2 = uniqueness_constants(scn, Lambda)
    grid = scn.grid
    beta = np.abs(sample_profile(scn.beta, grid))
    gamma2 = np.square(sample_profile(scn.gamma, grid))
    lhs = d1 * float(time_integral(beta, grid)) + d2 * float(time_integral(gamma2, grid))
    return lhs, lhs < 1.0
