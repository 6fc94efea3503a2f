"""Degree distributions for configuration-model networks.

A :class:`DegreeDistribution` holds the degree support, the class
probabilities ``p_k`` and the per-class excess weights ``q_k`` that the
mean-field dynamics consume.  ``q_k = (k+1) p_{k+1} / kbar`` is indexed by
the same degrees as ``p``; when ``k+1`` is not in the support the weight is 0.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import IngestionError, ParameterError, ParseError


@dataclass(frozen=True, eq=False)
class DegreeDistribution:
    degrees: np.ndarray
    p: np.ndarray
    q: np.ndarray = field(init=False)
    k_bar: float = field(init=False)

    def __post_init__(self):
        degrees = np.asarray(self.degrees, dtype=np.int64)
        p = np.asarray(self.p, dtype=float)
        if degrees.ndim != 1 or degrees.shape != p.shape or degrees.size == 0:
            raise ParameterError("degrees and p must be non-empty 1-d arrays of equal length")
        if np.any(np.diff(degrees) <= 0):
            raise ParameterError("degrees must be strictly increasing")
        if degrees[0] < 1:
            raise ParameterError("degrees must be positive integers")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ParameterError("probabilities must be finite and non-negative")
        total = math.fsum(p)
        if abs(total - 1.0) > 1e-12:
            raise ParameterError(f"probabilities sum to {total!r}, expected 1")
        k_bar = math.fsum(degrees * p)
        if k_bar <= 0:
            raise ParameterError("mean degree must be positive")

        # q_k = (k+1) p_{k+1} / kbar, zero when k+1 is outside the support
        lookup = dict(zip(degrees.tolist(), p.tolist()))
        q = np.array([(k + 1) * lookup.get(k + 1, 0.0) / k_bar for k in degrees.tolist()])

        degrees.setflags(write=False)
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "degrees", degrees)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k_bar", k_bar)

    @property
    def k_min(self) -> int:
        return int(self.degrees[0])

    @property
    def k_max(self) -> int:
        return int(self.degrees[-1])

    @property
    def n_classes(self) -> int:
        return int(self.degrees.size)

    def __len__(self):
        return self.n_classes

    def __eq__(self, other):
        if not isinstance(other, DegreeDistribution):
            return NotImplemented
        return np.array_equal(self.degrees, other.degrees) and np.array_equal(self.p, other.p)

    def __hash__(self):
        return hash((self.degrees.tobytes(), self.p.tobytes()))

    def prob(self, k: int) -> float:
        idx = np.searchsorted(self.degrees, k)
        if idx < self.degrees.size and self.degrees[idx] == k:
            return float(self.p[idx])
        return 0.0

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.degrees.tolist(), self.p.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "p_k", "q_k"])
        for k, pk, qk in zip(self.degrees.tolist(), self.p.tolist(), self.q.tolist()):
            writer.writerow([k, repr(pk), repr(qk)])
        return buf.getvalue()


def _check_range(k_min, k_max):
    if int(k_min) != k_min or int(k_max) != k_max:
        raise ParameterError("k_min and k_max must be integers")
    if k_min < 1:
        raise ParameterError(f"k_min must be >= 1, got {k_min}")
    if k_min > k_max:
        raise ParameterError(f"k_min={k_min} exceeds k_max={k_max}")


def _normalized(weights: np.ndarray) -> np.ndarray:
    p = weights / math.fsum(weights)
    # second pass removes the last ulp of drift in the sum
    return p / math.fsum(p)


def from_mapping(p: dict[int, float], normalize: bool = False) -> DegreeDistribution:
    """Build a distribution from an explicit ``{degree: probability}`` map."""
    items = sorted((int(k), float(v)) for k, v in p.items())
    degrees = np.array([k for k, _ in items], dtype=np.int64)
    weights = np.array([v for _, v in items], dtype=float)
    if normalize:
        weights = _normalized(weights)
    return DegreeDistribution(degrees, weights)


def build_poisson_truncated(lam: float, k_min: int, k_max: int) -> DegreeDistribution:
    """Poisson(lam) restricted to ``[k_min, k_max]`` and renormalized.

    The normalizer is a direct sum over the finite support; the pmf is
    evaluated in log space so large ``lam`` does not underflow.
    """
    if not math.isfinite(lam) or lam <= 0:
        raise ParameterError(f"lambda must be finite and positive, got {lam!r}")
    _check_range(k_min, k_max)
    k = np.arange(int(k_min), int(k_max) + 1)
    log_pmf = np.array([-lam + kk * math.log(lam) - math.lgamma(kk + 1) for kk in k.tolist()])
    weights = np.exp(log_pmf - log_pmf.max())
    return DegreeDistribution(k, _normalized(weights))


def build_powerlaw(alpha: float, k_min: int, k_max: int) -> DegreeDistribution:
    if not math.isfinite(alpha) or alpha <= 0:
        raise ParameterError(f"alpha must be finite and positive, got {alpha!r}")
    _check_range(k_min, k_max)
    k = np.arange(int(k_min), int(k_max) + 1)
    weights = k.astype(float) ** (-float(alpha))
    return DegreeDistribution(k, _normalized(weights))


def read_edge_list(source: str | Path | Iterable[str]) -> list[tuple[str, str]]:
    """Parse a whitespace-separated edge list.

    ``source`` is a path or an iterable of lines.  Lines starting with ``#``
    and blank lines are skipped; any other line must hold exactly two node
    identifiers.
    """
    if isinstance(source, (str, Path)):
        try:
            with open(source, encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise IngestionError(f"cannot read edge list {source}: {exc}") from exc
    else:
        lines = list(source)

    edges = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected two node identifiers, got {len(parts)} field(s)", lineno)
        edges.append((parts[0], parts[1]))
    if not edges:
        raise IngestionError("edge list contains no edges")
    return edges


def degree_sequence(edge_list: Sequence[tuple]) -> dict:
    """Node -> degree.  A self-loop adds 2; duplicate edges each count."""
    deg = Counter()
    for pair in edge_list:
        if len(pair) != 2:
            raise IngestionError(f"edge {pair!r} is not a pair")
        a, b = pair
        deg[a] += 1
        deg[b] += 1
    return dict(deg)


def build_empirical(edge_list: Sequence[tuple], cap: int | None = None) -> DegreeDistribution:
    """Empirical degree distribution ``p_k = N_k / N`` of an edge list.

    The support is the set of observed degrees.  With ``cap`` set, degrees
    above it are merged into the ``cap`` bucket; by default nothing is clipped.
    """
    edge_list = list(edge_list)
    if not edge_list:
        raise IngestionError("edge list is empty")
    degrees = degree_sequence(edge_list)
    counts = Counter(degrees.values())
    if cap is not None:
        if cap < 1:
            raise ParameterError("cap must be a positive integer")
        clipped = Counter()
        for k, c in counts.items():
            clipped[min(k, cap)] += c
        counts = clipped
    n = sum(counts.values())
    ks = sorted(counts)
    p = np.array([counts[k] / n for k in ks])
    return DegreeDistribution(np.array(ks, dtype=np.int64), _normalized(p))


def build_empirical_from_file(path: str | Path, cap: int | None = None) -> DegreeDistribution:
    return build_empirical(read_edge_list(path), cap=cap)


def neighbor_distribution(dist: DegreeDistribution) -> dict[int, float]:
    """``r_k = k p_k / kbar``: degree of the node at the end of a random edge."""
    r = dist.degrees * dist.p / dist.k_bar
    return dict(zip(dist.degrees.tolist(), r.tolist()))


def excess_distribution(dist: DegreeDistribution) -> dict[int, float]:
    """Full excess-degree distribution ``q_k = (k+1) p_{k+1} / kbar``.

    Keys run over ``k = d - 1`` for every ``d`` in the support, so the values
    sum to one.  The dynamics use the support-indexed restriction ``dist.q``.
    """
    return {d - 1: r for d, r in neighbor_distribution(dist).items()}
