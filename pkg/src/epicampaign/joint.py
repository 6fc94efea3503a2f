"""Joint choice of the initial seed allocation and the campaign controls.

The outer problem maximizes ``J*(i0)``, the optimal net reward for a given
seed vector, over ``{0 <= i0_k <= 1, sum_k p_k i0_k = B_i0}``.  Each
evaluation is a full forward-backward sweep.  The gradient of ``J*`` with
respect to ``i0_k`` equals the adjoint ``lam_k(0)`` at the optimum (envelope
argument), so one sweep gives value and gradient together; one-sided finite
differences are available as a cross-check.

The ascent runs in the ``p``-weighted geometry of the constraint: the search
direction is the per-capita gradient ``g_k / p_k`` and steps are projected with
``x_k = clip(v_k - tau, 0, 1)``.  A pair-exchange pass (move seed mass from
the class with the lowest marginal value to the one with the highest) polishes
the result, which matters when the optimum sits on a vertex.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .dynamics import Trajectory
from .errors import ParameterError
from .network import DegreeDistribution
from .pmp import SolveReport, fbs_solve
from .scenario import Scenario

log = logging.getLogger(__name__)

FD_STEP = 1e-4
MAX_OUTER = 100
GRAD_TOL = 1e-5
IMPROVE_TOL = 1e-8
ARMIJO = 1e-4
MAX_BACKTRACK = 30
INNER_TOL = 1e-10
FEAS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SeedVector:
    degrees: np.ndarray
    values: np.ndarray
    B_i0: float

    @property
    def i0(self) -> dict[int, float]:
        return dict(zip(self.degrees.tolist(), self.values.tolist()))

    def mass(self, p) -> float:
        return float(np.asarray(p) @ self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "i0_k"])
        for k, v in zip(self.degrees.tolist(), self.values.tolist()):
            writer.writerow([k, repr(v)])
        return buf.getvalue()


@dataclass
class JointReport:
    seed: SeedVector
    report: SolveReport
    outer_iterations: int
    grad_norm: float
    history: list = field(default_factory=list)  # best J after each outer iteration
    evaluations: int = 0

    @property
    def J(self) -> float:
        return self.report.J

    def summary(self) -> dict:
        out = self.report.summary()
        out.update(outer_iterations=self.outer_iterations, grad_norm=self.grad_norm,
                   B_i0=self.seed.B_i0, evaluations=self.evaluations)
        return out

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def _check_seed_budget(B_i0: float):
    if not (0.0 < B_i0 <= 1.0):
        raise ParameterError(f"seed budget must lie in (0, 1], got {B_i0!r}")


def _project(v: np.ndarray, p: np.ndarray, B: float, scale: np.ndarray) -> np.ndarray:
    """``clip(v - tau * scale, 0, 1)`` with ``tau`` chosen so that ``p . x = B``."""
    def mass(tau):
        return float(p @ np.clip(v - tau * scale, 0.0, 1.0)) - B

    tau_lo = float(np.min((v - 1.0) / scale))  # every class saturated at 1
    tau_hi = float(np.max(v / scale))          # every class at 0
    if mass(tau_lo) <= 0.0:
        return np.ones_like(v)
    tau = brentq(mass, tau_lo, tau_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    # the mass is piecewise linear in tau: solve the active piece exactly
    x = v - tau * scale
    free = (x > 0.0) & (x < 1.0)
    if np.any(free):
        top = x >= 1.0
        denom = float(p[free] @ scale[free])
        tau_exact = (float(p[free] @ v[free]) + float(p[top].sum()) - B) / denom
        y = v - tau_exact * scale
        if np.all((y[free] >= 0.0) & (y[free] <= 1.0)):
            x = y
    return np.clip(x, 0.0, 1.0)


def project_to_seed_simplex(v, dist: DegreeDistribution, B_i0: float, weights=None) -> SeedVector:
    """Closest point to ``v`` in ``{0 <= x_k <= 1, sum_k p_k x_k = B_i0}``.

    The distance is ``sum_k w_k (x_k - v_k)^2`` with ``w = 1`` by default
    (plain Euclidean); the minimizer is ``x_k = clip(v_k - tau p_k / w_k, 0, 1)``.
    """
    _check_seed_budget(B_i0)
    v = np.asarray(v, dtype=float)
    if v.shape != (dist.n_classes,) or not np.all(np.isfinite(v)):
        raise ParameterError(f"v must be a finite vector of length {dist.n_classes}")
    p = dist.p
    w = np.ones_like(p) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != p.shape or np.any(w <= 0):
        raise ParameterError("weights must be positive, one per class")
    if np.all((v >= 0) & (v <= 1)) and abs(float(p @ v) - B_i0) <= 1e-15:
        return SeedVector(dist.degrees, v.copy(), float(B_i0))
    return SeedVector(dist.degrees, _project(v, p, float(B_i0), p / w), float(B_i0))


# ---------------------------------------------------------------------------
# outer ascent
# ---------------------------------------------------------------------------

class _Evaluator:
    """Sweeps at given seeds, warm-started from the best controls seen so far."""

    def __init__(self, scn: Scenario, tol: float):
        self.scn = scn
        self.tol = tol
        self.warm: Trajectory | None = None
        self.count = 0

    def __call__(self, x: np.ndarray) -> SolveReport:
        self.count += 1
        return fbs_solve(self.scn, x, u_init=self.warm, tol=self.tol)

    def accept(self, rep: SolveReport):
        self.warm = rep.controls


def _gradient(ev: _Evaluator, x: np.ndarray, rep: SolveReport, kind: str, h: float) -> np.ndarray:
    if kind == "adjoint":
        return rep.adjoints.values[:, 0].copy()
    if kind != "fd":
        raise ParameterError(f"gradient must be 'adjoint' or 'fd', got {kind!r}")
    g = np.empty_like(x)
    for k in range(x.size):
        step = h if x[k] + h <= 1.0 else -h
        y = x.copy()
        y[k] += step
        g[k] = (ev(y).J - rep.J) / step
    return g


def _projected_step(x, d, alpha, p, B):
    return _project(x + alpha * d, p, B, np.ones_like(p))


def _pair_exchange(ev, x, rep, g, p, B, n_rounds):
    """Move mass between the best and worst marginal classes while it pays."""
    per_capita = g / p
    for _ in range(n_rounds):
        can_gain = x < 1.0
        can_give = x > 0.0
        if not (np.any(can_gain) and np.any(can_give)):
            break
        a = int(np.flatnonzero(can_gain)[np.argmax(per_capita[can_gain])])
        b = int(np.flatnonzero(can_give)[np.argmin(per_capita[can_give])])
        if a == b or per_capita[a] - per_capita[b] <= 0:
            break
        delta = min(p[a] * (1.0 - x[a]), p[b] * x[b])  # mass that can move
        moved = False
        for _ in range(MAX_BACKTRACK):
            y = x.copy()
            y[a] = min(1.0, y[a] + delta / p[a])
            y[b] = max(0.0, y[b] - delta / p[b])
            cand = ev(y)
            if cand.J > rep.J + IMPROVE_TOL:
                x, rep = y, cand
                ev.accept(rep)
                g = rep.adjoints.values[:, 0]
                per_capita = g / p
                moved = True
                break
            delta *= 0.5
        if not moved:
            break
    return x, rep


def _ascend(ev: _Evaluator, x0: np.ndarray, p: np.ndarray, B: float, gradient: str,
            fd_step: float, max_outer: int):
    x = x0
    rep = ev(x)
    ev.accept(rep)
    history = [rep.J]
    alpha = 1.0
    grad_norm = float("inf")
    it = 0
    for it in range(1, max_outer + 1):
        g = _gradient(ev, x, rep, gradient, fd_step)
        d = g / p
        pg = x - _projected_step(x, d, 1.0, p, B)
        grad_norm = float(np.max(np.abs(pg)))
        if grad_norm < GRAD_TOL:
            break
        improved = False
        for _ in range(MAX_BACKTRACK):
            y = _projected_step(x, d, alpha, p, B)
            if np.max(np.abs(y - x)) == 0.0:
                break
            cand = ev(y)
            if cand.J >= rep.J + ARMIJO * float(g @ (y - x)) and cand.J > rep.J:
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
        gain = cand.J - rep.J
        x, rep = y, cand
        ev.accept(rep)
        history.append(rep.J)
        alpha = min(2.0 * alpha, 1e6)
        if gain < IMPROVE_TOL:
            break

    x, rep = _pair_exchange(ev, x, rep, rep.adjoints.values[:, 0], p, B, max_outer)
    if rep.J > history[-1]:
        history.append(rep.J)
    return x, rep, it, grad_norm, history


def _starts(dist: DegreeDistribution, B: float, n_starts: int, x0) -> list[np.ndarray]:
    p = dist.p
    starts = [np.full(dist.n_classes, B) if x0 is None else np.asarray(x0, dtype=float)]
    fills = []
    for order in (np.arange(dist.n_classes)[::-1], np.arange(dist.n_classes)):
        x = np.zeros(dist.n_classes)
        left = B
        for k in order:  # greedy fill from the highest (then lowest) degree
            take = min(1.0, left / p[k])
            x[k] = take
            left -= take * p[k]
            if left <= 0:
                break
        fills.append(x)
    starts += fills
    rng = np.random.default_rng(0)
    while len(starts) < n_starts:
        starts.append(_project(rng.random(dist.n_classes), p, B, p))
    return starts[:n_starts]


def joint_solve(scn: Scenario, B_i0: float | None = None, *, gradient: str = "adjoint",
                fd_step: float = FD_STEP, max_outer: int = MAX_OUTER, n_starts: int = 1,
                x0=None, tol: float = INNER_TOL) -> JointReport:
    """Maximize the optimal net reward over feasible seed allocations.

    The first start is the uniform seed ``i0_k = B_i0`` (or ``x0``); further
    starts fill the seed budget greedily from the top degrees, then from the
    bottom, then at deterministic random points.  The best result is kept.
    """
    if B_i0 is None:
        B_i0 = scn.seed.B_i0
    if B_i0 is None:
        raise ParameterError("no seed budget given and none configured in the scenario")
    B_i0 = float(B_i0)
    _check_seed_budget(B_i0)
    if n_starts < 1:
        raise ParameterError("n_starts must be >= 1")
    dist = scn.dist
    p = dist.p

    ev = _Evaluator(scn, tol)
    best = None
    for start in _starts(dist, B_i0, n_starts, x0):
        x_start = project_to_seed_simplex(start, dist, B_i0, weights=p).values
        ev.warm = None
        x, rep, it, gnorm, hist = _ascend(ev, x_start, p, B_i0, gradient, fd_step, max_outer)
        log.debug("joint start done: J=%.10g after %d outer iterations", rep.J, it)
        if best is None or rep.J > best[1].J:
            best = (x, rep, it, gnorm, hist)
    x, rep, it, gnorm, hist = best
    return JointReport(SeedVector(dist.degrees, x, B_i0), rep, it, gnorm, hist, ev.count)
