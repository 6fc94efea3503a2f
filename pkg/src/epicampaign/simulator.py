"""Agent-based SI simulation on explicit graphs.

Time advances in synchronous steps of the scenario grid spacing.  In a step a
susceptible node with ``m`` infected neighbours is infected by contact with
probability ``1 - (1 - beta dt)^m`` and, independently, recruited by the
campaign with probability ``min(gamma u_k dt, 1)``.  Rates and controls are
read at step midpoints.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dynamics import Trajectory, _check_controls, rate_samples, stage_controls
from .errors import ParameterError, StepSizeError
from .network import DegreeDistribution, degree_sequence
from .pmp import control_cost


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected multigraph in CSR form.

    ``indices[indptr[v]:indptr[v+1]]`` lists the neighbours of node ``v``; a
    self-loop lists ``v`` twice.  ``degree_class`` is the degree each node is
    assigned to for control purposes (the sampled degree for
    configuration-model graphs, which can exceed the realized degree by one
    when the leftover half-edge is dropped).
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    degree_class: np.ndarray

    @property
    def degree_of(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    @property
    def n_edges(self) -> int:
        return int(self.indices.size // 2)

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.indices.size)
        # duplicate entries (multi-edges) are summed by scipy
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


def _from_pairs(n: int, a: np.ndarray, b: np.ndarray, degree_class: np.ndarray) -> Graph:
    src = np.concatenate([a, b])
    dst = np.concatenate([b, a])
    order = np.argsort(src, kind="stable")
    counts = np.bincount(src, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return Graph(n, indptr, dst[order].astype(np.int64), np.asarray(degree_class, dtype=np.int64))


def build_configuration_graph(dist: DegreeDistribution, n: int, rng_seed=0) -> Graph:
    """Configuration-model graph by uniform half-edge pairing.

    ``n`` degrees are drawn i.i.d. from ``p``; the half-edges are shuffled and
    paired consecutively.  An odd leftover half-edge is dropped.  Self-loops
    and multi-edges are kept.
    """
    if n < 2:
        raise ParameterError("need at least two nodes")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    degrees = rng.choice(dist.degrees, size=int(n), p=dist.p)
    stubs = np.repeat(np.arange(n, dtype=np.int64), degrees)
    rng.shuffle(stubs)
    if stubs.size % 2:
        stubs = stubs[:-1]
    pairs = stubs.reshape(-1, 2)
    return _from_pairs(int(n), pairs[:, 0], pairs[:, 1], degrees)


def graph_from_edge_list(edges) -> Graph:
    """Graph from ``(u, v)`` pairs of hashable node ids (e.g. from ``read_edge_list``)."""
    edges = list(edges)
    if not edges:
        raise ParameterError("edge list is empty")
    ids = {}
    for a, b in edges:
        ids.setdefault(a, len(ids))
        ids.setdefault(b, len(ids))
    a = np.array([ids[e[0]] for e in edges], dtype=np.int64)
    b = np.array([ids[e[1]] for e in edges], dtype=np.int64)
    deg = degree_sequence(edges)
    cls = np.empty(len(ids), dtype=np.int64)
    for node, idx in ids.items():
        cls[idx] = deg[node]
    return _from_pairs(len(ids), a, b, cls)


@dataclass(frozen=True, eq=False)
class SimOutcome:
    grid: np.ndarray
    mean_i: np.ndarray
    std_i: np.ndarray
    n_runs: int
    rng_seed: int
    runs: np.ndarray  # (n_runs, n_grid) infected fraction per run

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "mean_i", "std_i"])
        for row in zip(self.grid.tolist(), self.mean_i.tolist(), self.std_i.tolist()):
            writer.writerow([repr(v) for v in row])
        return buf.getvalue()


def _class_lookup(dist: DegreeDistribution, degree_class: np.ndarray) -> np.ndarray:
    """Index of each node's class in ``dist.degrees``, -1 when absent."""
    idx = np.searchsorted(dist.degrees, degree_class)
    idx = np.minimum(idx, dist.n_classes - 1)
    return np.where(dist.degrees[idx] == degree_class, idx, -1)


def _node_seed_prob(scn, cls: np.ndarray, seed_rule) -> np.ndarray:
    if seed_rule is None:
        seed_rule = scn.i0()
    seed_rule = np.asarray(seed_rule, dtype=float)
    if seed_rule.ndim == 0:
        return np.full(cls.size, float(seed_rule))
    if seed_rule.shape != (scn.dist.n_classes,):
        raise ParameterError("per-class seed vector has the wrong length")
    if np.any(seed_rule < 0) or np.any(seed_rule > 1):
        raise ParameterError("seed probabilities must lie in [0, 1]")
    # nodes whose degree is not a modelled class get the population seed rate
    fallback = float(scn.dist.p @ seed_rule)
    return np.where(cls >= 0, seed_rule[np.maximum(cls, 0)], fallback)


def simulate_si(graph: Graph, scn, controls: Trajectory | None = None, seed_rule=None,
                n_runs: int = 20, rng_seed: int = 0, regenerate: bool = False,
                n_nodes: int | None = None) -> SimOutcome:
    """Monte Carlo average of ``n_runs`` independent SI runs.

    ``seed_rule`` is a scalar (every node seeded with that probability) or a
    per-class vector; ``None`` uses the scenario's seed.  Run ``r`` draws from
    the ``r``-th child of ``SeedSequence(rng_seed)``, so results do not depend
    on execution order.  With ``regenerate`` a fresh configuration-model graph
    of ``n_nodes`` (default ``graph.n``) nodes is drawn for every run.
    """
    if n_runs < 1:
        raise ParameterError("n_runs must be >= 1")
    if controls is not None:
        _check_controls(scn, controls)
    rates = rate_samples(scn)
    dt = scn.dt
    worst = float(max(rates.beta.max(), rates.beta_mid.max())) * dt
    if worst > 1.0:
        raise StepSizeError(f"beta*dt = {worst:.3g} exceeds 1; increase n_grid")
    beta_mid, gamma_mid = rates.beta_mid, rates.gamma_mid
    u_mid = None if controls is None else stage_controls(controls)[1]  # (n_steps, K)
    n_steps = scn.n_grid - 1
    children = np.random.SeedSequence(rng_seed).spawn(n_runs)
    n_nodes = graph.n if n_nodes is None else int(n_nodes)

    fractions = np.empty((n_runs, scn.n_grid))
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        g = build_configuration_graph(scn.dist, n_nodes, rng) if regenerate else graph
        A = g.adjacency()
        cls = _class_lookup(scn.dist, g.degree_class)
        seed_p = _node_seed_prob(scn, cls, seed_rule)
        infected = rng.random(g.n) < seed_p
        fractions[r, 0] = infected.mean()
        for n in range(n_steps):
            m = A @ infected.astype(float)
            p_contact = -np.expm1(m * np.log1p(-beta_mid[n] * dt)) if beta_mid[n] * dt < 1 else (m > 0) * 1.0
            hit = rng.random(g.n) < p_contact
            if u_mid is not None:
                u_node = np.where(cls >= 0, u_mid[n][np.maximum(cls, 0)], 0.0)
                p_rec = np.minimum(gamma_mid[n] * u_node * dt, 1.0)
                hit |= rng.random(g.n) < p_rec
            infected |= hit
            fractions[r, n + 1] = infected.mean()

    std = fractions.std(axis=0, ddof=1) if n_runs > 1 else np.zeros(scn.n_grid)
    return SimOutcome(scn.grid.copy(), fractions.mean(axis=0), std, n_runs, rng_seed, fractions)


def simulated_reward(outcome: SimOutcome, scn, controls: Trajectory | None = None) -> float:
    """Simulated net reward: mean final infected fraction minus the (deterministic) control cost."""
    cost = 0.0 if controls is None else control_cost(scn, controls)
    return float(outcome.mean_i[-1]) - cost
