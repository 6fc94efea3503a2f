"""Baseline campaigns: one control level shared by every degree class.

*static*      the level is held over the whole horizon;
*two_stage*   the level is held on ``[0, T/2)`` and switched off afterwards.

For the net-reward problem the level is found by golden-section search.  For
the fixed-budget problem it follows from spending the budget exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory, _check_i0
from .errors import ParameterError
from .pmp import control_cost, evaluate_reward
from .scenario import Scenario

KINDS = ("static", "two_stage")
LEVEL_TOL = 1e-7
INITIAL_UPPER = 0.01
MAX_DOUBLINGS = 60
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class HeuristicResult:
    kind: str
    level: float
    J: float
    resource_used: float
    spread: float

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "level": self.level, "J": self.J,
                           "resource_used": self.resource_used}, indent=2, sort_keys=True) + "\n"


def _switch_index(scn: Scenario) -> int:
    steps = scn.n_grid - 1
    if steps % 2:
        raise ParameterError("two-stage control needs T/2 on the grid (odd n_grid)")
    return steps // 2


def heuristic_controls(scn: Scenario, kind: str, level: float) -> Trajectory:
    """Piecewise-constant controls of the given shape, read as a zero-order hold."""
    if kind not in KINDS:
        raise ParameterError(f"unknown heuristic {kind!r}")
    if level < 0:
        raise ParameterError("level must be >= 0")
    values = np.full((scn.dist.n_classes, scn.n_grid), float(level))
    if kind == "two_stage":
        values[:, _switch_index(scn):] = 0.0
    return Trajectory(scn.grid, values, interp="hold")


def _active_time(scn: Scenario, kind: str) -> float:
    return scn.T if kind == "static" else scn.grid[_switch_index(scn)]


def _result(scn: Scenario, kind: str, level: float, i0, objective: str) -> HeuristicResult:
    u = heuristic_controls(scn, kind, level)
    J, spread, cost = evaluate_reward(scn, u, i0)
    return HeuristicResult(kind, float(level), spread if objective == "spread" else J, cost, spread)


def _golden_max(f, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    # compare the interior best with the bracket ends so boundary optima are kept
    candidates = [(f(lo), lo), (fc, c), (fd, d)]
    return max(candidates, key=lambda t: t[0])[1]


def best_level(scn: Scenario, kind: str, i0=None, tol: float = LEVEL_TOL) -> HeuristicResult:
    """Level maximizing the net reward within ``kind``'s one-parameter family."""
    i0 = _check_i0(scn, scn.i0() if i0 is None else i0)

    def J(level):
        return evaluate_reward(scn, heuristic_controls(scn, kind, level), i0)[0]

    # grow the bracket until the reward falls off
    hi = INITIAL_UPPER
    prev = J(hi / 2.0)
    for _ in range(MAX_DOUBLINGS):
        cur = J(hi)
        if cur < prev:
            break
        prev = cur
        hi *= 2.0
    else:
        raise ParameterError("reward kept growing with the control level; check the cost model")
    level = _golden_max(J, 0.0, hi, tol)
    return _result(scn, kind, level, i0, "net")


def best_static(scn: Scenario, i0=None) -> HeuristicResult:
    return best_level(scn, "static", i0)


def best_two_stage(scn: Scenario, i0=None) -> HeuristicResult:
    return best_level(scn, "two_stage", i0)


def budget_level(scn: Scenario, kind: str, B: float) -> float:
    """Level that spends exactly ``B`` under quadratic cost."""
    return math.sqrt(B / (float(np.sum(scn.cost_coefficients())) * _active_time(scn, kind)))


def fixed_budget_heuristics(scn: Scenario, i0=None, B: float | None = None):
    """Static and two-stage controls that spend the budget ``B`` exactly.

    ``J`` of each result is the terminal spread.  ``B = 0`` gives zero levels.
    """
    if B is None:
        B = scn.variant.B
    if B is None or not math.isfinite(B) or B < 0:
        raise ParameterError(f"budget must be finite and >= 0, got {B!r}")
    i0 = _check_i0(scn, scn.i0() if i0 is None else i0)
    return tuple(_result(scn, kind, budget_level(scn, kind, B), i0, "spread") for kind in KINDS)


def spent(scn: Scenario, result: HeuristicResult) -> float:
    """Recompute a result's resource by quadrature of its control path."""
    return control_cost(scn, heuristic_controls(scn, result.kind, result.level))
