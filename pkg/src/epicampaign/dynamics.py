"""Forward integration of the degree-class SI equations.

Each class ``k`` evolves as::

    di_k/dt = beta(t) k s_k sum_l q_l i_l  +  gamma(t) u_k(t) s_k,   s_k = 1 - i_k

and is integrated with classical fixed-step RK4 on the scenario grid.  Rate
profiles are evaluated exactly at the step midpoints; controls are grid
samples, read between grid points either by linear interpolation or as a
zero-order hold (piecewise constant on ``[t_n, t_{n+1})``).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationBlowupError, ParameterError
from .network import DegreeDistribution
from .scenario import Scenario, sample_profile

CLAMP_SLACK = 1e-9
INTERP_MODES = ("linear", "hold")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Per-class function of time sampled on a grid.

    ``values`` has shape ``(n_classes, n_grid)``.  ``interp`` says how the
    samples are read between grid points (only meaningful for controls).
    """

    grid: np.ndarray
    values: np.ndarray
    interp: str = "linear"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[-1] != grid.size:
            raise ParameterError(f"values have {values.shape[-1]} samples, grid has {grid.size}")
        if self.interp not in INTERP_MODES:
            raise ParameterError(f"interp must be one of {INTERP_MODES}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def n_classes(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, scn: Scenario) -> "Trajectory":
        return cls(scn.grid, np.zeros((scn.dist.n_classes, scn.n_grid)))

    @classmethod
    def constant(cls, scn: Scenario, level, interp: str = "linear") -> "Trajectory":
        level = np.broadcast_to(np.asarray(level, dtype=float), (scn.dist.n_classes,))
        return cls(scn.grid, np.repeat(level[:, None], scn.n_grid, axis=1), interp)

    def to_csv(self, degrees, prefix: str = "i", total=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["t"] + [f"{prefix}_{k}" for k in np.asarray(degrees).tolist()]
        if total is not None:
            header.append(f"{prefix}_total")
        writer.writerow(header)
        for n, t in enumerate(self.grid.tolist()):
            row = [repr(t)] + [repr(v) for v in self.values[:, n].tolist()]
            if total is not None:
                row.append(repr(float(total[n])))
            writer.writerow(row)
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class AggregateSeries:
    grid: np.ndarray
    i_total: np.ndarray


@dataclass(frozen=True, eq=False)
class RateSamples:
    """``beta`` and ``gamma`` at grid points and at step midpoints."""

    beta: np.ndarray
    beta_mid: np.ndarray
    gamma: np.ndarray
    gamma_mid: np.ndarray


def rate_samples(scn: Scenario) -> RateSamples:
    fine = scn.half_grid()
    b = sample_profile(scn.beta, fine)
    g = sample_profile(scn.gamma, fine)
    return RateSamples(b[0::2], b[1::2], g[0::2], g[1::2])


def stage_controls(controls: Trajectory):
    """Control values used by each RK4 step: (start, mid, end), each ``(n_steps, K)``.

    ``start`` is the right limit at ``t_n`` and ``end`` the left limit at
    ``t_{n+1}``, so a zero-order hold is represented without smearing.
    """
    u = controls.values.T
    if controls.interp == "hold":
        held = u[:-1]
        return held, held, held
    return u[:-1], 0.5 * (u[:-1] + u[1:]), u[1:]


def state_rhs(i, k, q, beta, gamma, u):
    s = 1.0 - i
    return beta * k * s * (q @ i) + gamma * u * s


def _check_controls(scn: Scenario, controls: Trajectory):
    if controls.values.shape != (scn.dist.n_classes, scn.n_grid):
        raise ParameterError(
            f"controls have shape {controls.values.shape}, "
            f"expected {(scn.dist.n_classes, scn.n_grid)}"
        )
    if not np.all(np.isfinite(controls.values)):
        raise ParameterError("controls must be finite")


def _check_i0(scn: Scenario, i0) -> np.ndarray:
    i0 = np.asarray(i0, dtype=float)
    if i0.ndim == 0:
        i0 = np.full(scn.dist.n_classes, float(i0))
    if i0.shape != (scn.dist.n_classes,):
        raise ParameterError(f"i0 has shape {i0.shape}, expected ({scn.dist.n_classes},)")
    if np.any(i0 < 0) or np.any(i0 > 1) or not np.all(np.isfinite(i0)):
        raise ParameterError("seed fractions must lie in [0, 1]")
    return i0


def clamp_unit(values: np.ndarray, grid, what: str = "state") -> np.ndarray:
    """Clip round-off excursions outside [0, 1]; larger excursions are errors."""
    bad = (values < -CLAMP_SLACK) | (values > 1.0 + CLAMP_SLACK)
    if np.any(bad):
        n = int(np.argmax(bad.any(axis=0)))
        raise IntegrationBlowupError(f"{what} left [0, 1] beyond round-off", n, float(grid[n]))
    return np.clip(values, 0.0, 1.0)


def integrate_state(scn: Scenario, controls: Trajectory | None, i0, rates: RateSamples | None = None) -> Trajectory:
    """RK4 solution of the controlled SI system on the scenario grid.

    ``controls=None`` means the uncontrolled system.
    """
    i0 = _check_i0(scn, i0)
    if controls is None:
        controls = Trajectory.zeros(scn)
    _check_controls(scn, controls)
    rates = rates or rate_samples(scn)
    k = scn.dist.degrees.astype(float)
    q = scn.dist.q
    h = scn.dt
    u0, um, u1 = stage_controls(controls)

    n_steps = scn.n_grid - 1
    out = np.empty((scn.n_grid, k.size))
    out[0] = i = i0
    # overflow is caught by the finiteness check below
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            b0, bm, b1 = rates.beta[n], rates.beta_mid[n], rates.beta[n + 1]
            g0, gm, g1 = rates.gamma[n], rates.gamma_mid[n], rates.gamma[n + 1]
            k1 = state_rhs(i, k, q, b0, g0, u0[n])
            k2 = state_rhs(i + 0.5 * h * k1, k, q, bm, gm, um[n])
            k3 = state_rhs(i + 0.5 * h * k2, k, q, bm, gm, um[n])
            k4 = state_rhs(i + h * k3, k, q, b1, g1, u1[n])
            i = i + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(i)):
                raise IntegrationBlowupError("state became non-finite", n + 1, float(scn.grid[n + 1]))
            out[n + 1] = i
    return Trajectory(scn.grid, clamp_unit(out.T, scn.grid))


def aggregate(dist: DegreeDistribution, states: Trajectory) -> AggregateSeries:
    """Population infected fraction ``i(t) = sum_k p_k i_k(t)``."""
    return AggregateSeries(states.grid, dist.p @ states.values)


def uncontrolled_spread(scn: Scenario, i0=None) -> float:
    i0 = scn.i0() if i0 is None else i0
    states = integrate_state(scn, None, i0)
    return float(scn.dist.p @ states.values[:, -1])
