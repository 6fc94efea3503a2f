"""Fixed-budget campaigns: maximize the terminal spread subject to a resource budget.

The budget constraint is relaxed with a multiplier ``mu``; for a fixed ``mu``
the sweep solves the relaxed problem with ``u = g'^{-1}(gamma lam s / mu)``.
The resource spent, ``r(mu)``, falls as ``mu`` grows, so ``mu`` is found by
bisection until ``|r(mu) - B|`` is below ``min(1e-3 B, 1e-6)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Trajectory, _check_i0
from .errors import BracketError, IntegrationBlowupError, MonotonicityError, ParameterError
from .pmp import (
    SolveReport,
    adjoint_nonnegative,
    controls_convex,
    controls_nonincreasing,
    fbs_solve,
)
from .scenario import Scenario

log = logging.getLogger(__name__)

MU_LOW = 1e-3
MU_HIGH = 100.0
MAX_BISECTION = 200
INNER_TOL = 1e-10


def budget_threshold(B: float) -> float:
    return min(1e-3 * B, 1e-6)


@dataclass
class BudgetReport:
    base: SolveReport
    mu_star: float
    resource_used: float
    budget: float
    gap: float
    scenario: Scenario | None = field(default=None, repr=False)
    iterations: int = 0
    history: list = field(default_factory=list)  # (mu, resource) per evaluation

    @property
    def J(self) -> float:
        """Objective of the budgeted problem: the terminal spread alone."""
        return self.base.spread_reward

    @property
    def controls(self) -> Trajectory:
        return self.base.controls

    def summary(self) -> dict:
        out = self.base.summary()
        out.update(J=self.J, mu_star=self.mu_star, resource_used=self.resource_used,
                   budget=self.budget, gap=self.gap, bisection_steps=self.iterations)
        return out

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def resource_at_mu(scn: Scenario, i0, mu: float, u_init: Trajectory | None = None,
                   tol: float = INNER_TOL) -> tuple[float, SolveReport]:
    """Solve the relaxed problem at ``mu`` and return ``(resource spent, report)``."""
    rep = fbs_solve(scn, i0, mu=mu, u_init=u_init, tol=tol)
    return rep.control_cost, rep


def budget_solve(scn: Scenario, i0=None, B: float | None = None, *,
                 mu_low: float = MU_LOW, mu_high: float = MU_HIGH,
                 max_iter: int = MAX_BISECTION, tol: float = INNER_TOL) -> BudgetReport:
    """Bisection on the multiplier around the forward-backward sweep.

    Each inner solve is warm-started from the controls of the previous one.
    The first time the bisection moves an endpoint, the opposite endpoint is
    evaluated once so an unreachable budget fails fast with a
    :class:`BracketError` carrying ``r`` at both ends.
    """
    if B is None:
        if scn.variant.B is None:
            raise ParameterError("no budget given and none configured in the scenario")
        B = scn.variant.B
    B = float(B)
    if not B > 0:
        raise ParameterError(f"budget must be > 0, got {B!r}")
    if not (0 < mu_low < mu_high):
        raise ParameterError("need 0 < mu_low < mu_high")
    i0 = _check_i0(scn, scn.i0() if i0 is None else i0)
    b_th = budget_threshold(B)

    history: list[tuple[float, float]] = []
    warm = None

    def evaluate(mu, keep=True):
        nonlocal warm
        r, rep = resource_at_mu(scn, i0, mu, u_init=warm, tol=tol)
        if keep:
            warm = rep.controls
        for mu_o, r_o in history:
            # r must not grow with mu; the slack covers inner-solve noise
            if (mu_o < mu and r_o < r - b_th) or (mu_o > mu and r_o > r + b_th):
                raise MonotonicityError(
                    f"resource not monotone in mu: r({mu_o:.6g})={r_o:.6g}, r({mu:.6g})={r:.6g}")
        history.append((mu, r))
        return r, rep

    endpoint_r: dict[str, float] = {}

    def bracket_fail(reason):
        for name, mu in (("low", mu_low), ("high", mu_high)):
            if name not in endpoint_r:
                # only needed for the message; a blowup here must not mask the bracket failure
                try:
                    endpoint_r[name] = evaluate(mu, keep=False)[0]
                except IntegrationBlowupError:
                    endpoint_r[name] = float("nan")
        raise BracketError(
            f"budget {B:g} unreachable in mu in [{mu_low:g}, {mu_high:g}] ({reason}); "
            f"r(mu_low)={endpoint_r['low']:.6g}, r(mu_high)={endpoint_r['high']:.6g}",
            r_low=endpoint_r["low"], r_high=endpoint_r["high"])

    lo, hi = mu_low, mu_high
    for step in range(1, max_iter + 1):
        mu = 0.5 * (lo + hi)
        r, rep = evaluate(mu)
        gap = abs(r - B)
        log.debug("bisection %d: mu=%.10g r=%.10g gap=%.3g", step, mu, r, gap)
        if gap < b_th:
            return BudgetReport(rep, mu, r, B, gap, scenario=scn, iterations=step, history=history)
        if r > B:
            if "high" not in endpoint_r:
                endpoint_r["high"] = evaluate(mu_high, keep=False)[0]
                if endpoint_r["high"] > B + b_th:
                    bracket_fail("budget too small even at mu_high")
            lo = mu
        else:
            if "low" not in endpoint_r:
                endpoint_r["low"] = evaluate(mu_low, keep=False)[0]
                if endpoint_r["low"] < B - b_th:
                    bracket_fail("budget too large even at mu_low")
            hi = mu
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    bracket_fail(f"no mu met the tolerance after {len(history)} solves")


def structural_check_budget(report: BudgetReport, scn: Scenario | None = None) -> bool | None:
    """Adjoint positivity and monotone controls on a budgeted solution.

    Returns ``None`` when the property is not expected to hold, i.e. when
    ``gamma`` increases somewhere on the horizon.  Convexity is checked too
    when both rate profiles are constant.
    """
    scn = scn or report.scenario
    if scn is None:
        raise ParameterError("scenario needed to check the structural hypotheses")
    if not scn.gamma.is_nonincreasing(scn.T):
        return None
    base = report.base
    ok = adjoint_nonnegative(base.adjoints) and controls_nonincreasing(base.controls)
    if scn.beta.is_constant() and scn.gamma.is_constant():
        ok = ok and controls_convex(base.controls)
    return bool(ok)
