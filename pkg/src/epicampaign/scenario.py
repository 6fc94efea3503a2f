"""Problem parameters: horizon, grid, rate profiles, costs, seeds, variant.

Scenarios are immutable.  :func:`load_scenario` reads the JSON file format,
applies defaults (``gamma = 10 * beta``, ``n_grid = 201``, ``n_sweep = 30``)
and validates every invariant before returning.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .errors import ConfigError, CostModelError, ValidationError
from .network import (
    DegreeDistribution,
    build_empirical_from_file,
    build_poisson_truncated,
    build_powerlaw,
)

DEFAULT_N_GRID = 201
DEFAULT_N_SWEEP = 30
DEFAULT_FIXED_POINT_TOL = 1e-6
GAMMA_OVER_BETA = 10.0

PROFILE_KINDS = ("constant", "sigmoid", "piecewise_linear")
SEED_MODES = ("uniform", "vector", "optimize")
VARIANTS = ("fixed_seed", "fixed_budget", "joint")


@dataclass(frozen=True)
class TimeProfile:
    """A non-negative rate profile on ``[0, T]``.

    ``constant``: ``value``.  ``sigmoid``: ``peak / (1 + exp(-a (t - t0)))``.
    ``piecewise_linear``: ``knots`` is a tuple of ``(t, value)`` pairs with
    increasing ``t``; values are held flat outside the knot range.
    """

    kind: str
    value: float = 0.0
    peak: float = 0.0
    a: float = 0.0
    t0: float = 0.0
    knots: tuple = ()

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValidationError(f"unknown profile type {self.kind!r}")
        if self.kind == "constant" and not (math.isfinite(self.value) and self.value >= 0):
            raise ValidationError(f"constant value must be finite and >= 0, got {self.value!r}")
        if self.kind == "sigmoid":
            if not all(math.isfinite(x) for x in (self.peak, self.a, self.t0)):
                raise ValidationError("sigmoid parameters must be finite")
            if self.peak < 0:
                raise ValidationError("sigmoid peak must be >= 0")
        if self.kind == "piecewise_linear":
            knots = tuple((float(t), float(v)) for t, v in self.knots)
            if not knots:
                raise ValidationError("piecewise_linear profile needs at least one knot")
            ts = [t for t, _ in knots]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValidationError("knot times must be strictly increasing")
            if any(not (math.isfinite(v) and v >= 0) for _, v in knots):
                raise ValidationError("knot values must be finite and >= 0")
            object.__setattr__(self, "knots", knots)

    @classmethod
    def constant(cls, value: float) -> "TimeProfile":
        return cls("constant", value=float(value))

    @classmethod
    def sigmoid(cls, peak: float, a: float, t0: float) -> "TimeProfile":
        return cls("sigmoid", peak=float(peak), a=float(a), t0=float(t0))

    @classmethod
    def piecewise_linear(cls, knots) -> "TimeProfile":
        return cls("piecewise_linear", knots=tuple(knots))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.value)
        if self.kind == "sigmoid":
            # logistic written via tanh to stay finite for large |a (t - t0)|
            return self.peak * 0.5 * (1.0 + np.tanh(0.5 * self.a * (t - self.t0)))
        ts, vs = zip(*self.knots)
        return np.interp(t, ts, vs)

    def scaled(self, factor: float) -> "TimeProfile":
        if self.kind == "constant":
            return dataclasses.replace(self, value=self.value * factor)
        if self.kind == "sigmoid":
            return dataclasses.replace(self, peak=self.peak * factor)
        return dataclasses.replace(self, knots=tuple((t, v * factor) for t, v in self.knots))

    def is_constant(self) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "sigmoid":
            return self.a == 0 or self.peak == 0
        return len({v for _, v in self.knots}) == 1

    def is_nonincreasing(self, T: float) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "sigmoid":
            return self.peak == 0 or self.a <= 0
        # flat extrapolation outside the knots
        return all(b[1] <= a[1] for a, b in zip(self.knots, self.knots[1:]) if a[0] < T)

    def is_convex(self, T: float) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "sigmoid":
            # a decreasing logistic is convex only on one side of t0
            if self.peak == 0 or self.a == 0:
                return True
            return (self.a < 0 and self.t0 <= 0) or (self.a > 0 and self.t0 >= T)
        pts = [(0.0, float(self(0.0)))] + [k for k in self.knots if 0 < k[0] < T] + [(T, float(self(T)))]
        slopes = [(b[1] - a[1]) / (b[0] - a[0]) for a, b in zip(pts, pts[1:]) if b[0] > a[0]]
        return all(s2 >= s1 - 1e-15 for s1, s2 in zip(slopes, slopes[1:]))

    def to_json(self) -> dict:
        if self.kind == "constant":
            return {"type": "constant", "value": self.value}
        if self.kind == "sigmoid":
            return {"type": "sigmoid", "peak": self.peak, "a": self.a, "t0": self.t0}
        return {"type": "piecewise_linear", "knots": [list(k) for k in self.knots]}


def sample_profile(profile: TimeProfile, grid) -> np.ndarray:
    return np.asarray(profile(np.asarray(grid, dtype=float)), dtype=float)


@dataclass(frozen=True)
class CostModel:
    """Quadratic running cost ``g_k(u) = c_k u^2`` with ``c_k = b p_k``."""

    b: float

    def __post_init__(self):
        if not (math.isfinite(self.b) and self.b > 0):
            raise ValidationError(f"cost weight b must be finite and > 0, got {self.b!r}", "cost.b")

    def coefficients(self, dist: DegreeDistribution) -> np.ndarray:
        c = self.b * dist.p
        if np.any(c <= 0):
            bad = dist.degrees[c <= 0].tolist()
            raise CostModelError(f"cost coefficient c_k must be > 0; zero for degrees {bad}")
        return c

    @staticmethod
    def g(c, u):
        return c * np.square(u)

    @staticmethod
    def g_prime(c, u):
        return 2.0 * c * u

    @staticmethod
    def g_prime_inverse(c, y):
        return y / (2.0 * c)


@dataclass(frozen=True)
class SeedSpec:
    mode: str = "uniform"
    i0: float | None = 0.01
    i0_vector: tuple | None = None
    B_i0: float | None = None

    def to_json(self) -> dict:
        if self.mode == "uniform":
            return {"mode": "uniform", "i0": self.i0}
        if self.mode == "vector":
            return {"mode": "vector", "i0_vector": list(self.i0_vector)}
        return {"mode": "optimize", "B_i0": self.B_i0}


@dataclass(frozen=True)
class Variant:
    type: str = "fixed_seed"
    B: float | None = None

    def to_json(self) -> dict:
        out = {"type": self.type}
        if self.B is not None:
            out["B"] = self.B
        return out


@dataclass(frozen=True)
class Scenario:
    dist: DegreeDistribution
    T: float = 1.0
    n_grid: int = DEFAULT_N_GRID
    beta: TimeProfile = field(default_factory=lambda: TimeProfile.constant(0.07))
    gamma: TimeProfile | None = None
    cost: CostModel = field(default_factory=lambda: CostModel(25.0))
    seed: SeedSpec = field(default_factory=SeedSpec)
    variant: Variant = field(default_factory=Variant)
    n_sweep: int = DEFAULT_N_SWEEP
    fixed_point_tol: float = DEFAULT_FIXED_POINT_TOL
    network: dict | None = None  # builder parameters, kept for serialization

    def __post_init__(self):
        if self.gamma is None:
            object.__setattr__(self, "gamma", self.beta.scaled(GAMMA_OVER_BETA))
        validate_scenario(self)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_grid)

    @property
    def dt(self) -> float:
        return self.T / (self.n_grid - 1)

    def half_grid(self) -> np.ndarray:
        """Grid points and step midpoints interleaved (``2 n_grid - 1`` points)."""
        return np.linspace(0.0, self.T, 2 * self.n_grid - 1)

    def cost_coefficients(self) -> np.ndarray:
        return self.cost.coefficients(self.dist)

    def i0(self) -> np.ndarray:
        """Per-class seed vector implied by the seed spec.

        For ``optimize`` this is the uniform feasible start ``i0_k = B_i0``.
        """
        n = self.dist.n_classes
        if self.seed.mode == "uniform":
            return np.full(n, float(self.seed.i0))
        if self.seed.mode == "vector":
            return np.array(self.seed.i0_vector, dtype=float)
        return np.full(n, float(self.seed.B_i0))

    def replace(self, **changes) -> "Scenario":
        """Copy with changes.  ``b`` is accepted as a shortcut for the cost weight.

        Changing ``beta`` without giving ``gamma`` re-derives ``gamma = 10 beta``
        only when the current gamma is the default one.
        """
        if "b" in changes:
            changes["cost"] = CostModel(float(changes.pop("b")))
        if "beta" in changes and "gamma" not in changes:
            if self.gamma == self.beta.scaled(GAMMA_OVER_BETA):
                changes["gamma"] = None
        return dataclasses.replace(self, **changes)


def validate_scenario(scn: Scenario) -> None:
    if not (math.isfinite(scn.T) and scn.T > 0):
        raise ValidationError(f"must be finite and > 0, got {scn.T!r}", "T")
    if int(scn.n_grid) != scn.n_grid or scn.n_grid < 2:
        raise ValidationError(f"must be an integer >= 2, got {scn.n_grid!r}", "n_grid")
    if int(scn.n_sweep) != scn.n_sweep or scn.n_sweep < 1:
        raise ValidationError(f"must be an integer >= 1, got {scn.n_sweep!r}", "sweep.n_sweep")
    if not (scn.fixed_point_tol > 0):
        raise ValidationError("must be > 0", "sweep.fixed_point_tol")

    seed = scn.seed
    if seed.mode not in SEED_MODES:
        raise ValidationError(f"unknown seed mode {seed.mode!r}", "seed.mode")
    if seed.mode == "uniform":
        if seed.i0 is None or not (0.0 <= seed.i0 <= 1.0):
            raise ValidationError(f"must lie in [0, 1], got {seed.i0!r}", "seed.i0")
    elif seed.mode == "vector":
        vec = seed.i0_vector
        if vec is None or len(vec) != scn.dist.n_classes:
            raise ValidationError(
                f"needs one entry per degree class ({scn.dist.n_classes})", "seed.i0_vector"
            )
        if any(not (0.0 <= v <= 1.0) for v in vec):
            raise ValidationError("entries must lie in [0, 1]", "seed.i0_vector")
    else:
        if seed.B_i0 is None or not (0.0 < seed.B_i0 <= 1.0):
            raise ValidationError(f"must lie in (0, 1], got {seed.B_i0!r}", "seed.B_i0")

    var = scn.variant
    if var.type not in VARIANTS:
        raise ValidationError(f"unknown variant {var.type!r}", "variant.type")
    if var.type == "fixed_budget" and (var.B is None or not (var.B > 0 and math.isfinite(var.B))):
        raise ValidationError(f"budget must be finite and > 0, got {var.B!r}", "variant.B")
    if var.type == "joint" and seed.mode != "optimize":
        raise ValidationError("joint variant needs seed mode 'optimize' with B_i0", "seed.mode")

    for name in ("beta", "gamma"):
        vals = sample_profile(getattr(scn, name), scn.half_grid())
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValidationError("profile must be finite and >= 0 on [0, T]", name)


# ---------------------------------------------------------------------------
# JSON format
# ---------------------------------------------------------------------------

_NUM = {"type": "number"}
_PROFILE_SCHEMA = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"type": "string"},
        "value": _NUM,
        "peak": _NUM,
        "a": _NUM,
        "t0": _NUM,
        "knots": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
    },
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["network", "beta"],
    "properties": {
        "network": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"type": "string"},
                "lambda": _NUM,
                "alpha": _NUM,
                "k_min": {"type": "integer"},
                "k_max": {"type": "integer"},
                "edge_list_path": {"type": "string"},
                "cap": {"type": "integer"},
            },
        },
        "T": _NUM,
        "n_grid": {"type": "integer"},
        "beta": _PROFILE_SCHEMA,
        "gamma": _PROFILE_SCHEMA,
        "cost": {"type": "object", "properties": {"b": _NUM}},
        "b": _NUM,
        "i0": _NUM,
        "seed": {
            "type": "object",
            "properties": {
                "mode": {"type": "string"},
                "i0": _NUM,
                "i0_vector": {"type": "array", "items": _NUM},
                "B_i0": _NUM,
            },
        },
        "variant": {"type": "object", "properties": {"type": {"type": "string"}, "B": _NUM}},
        "sweep": {
            "type": "object",
            "properties": {"n_sweep": {"type": "integer"}, "fixed_point_tol": _NUM},
        },
    },
}

_NETWORK_ALIASES = {"poisson": "poisson", "er": "poisson", "powerlaw": "powerlaw", "pl": "powerlaw",
                    "empirical": "empirical"}


def build_network(spec: dict, base_dir: Path | None = None) -> DegreeDistribution:
    kind = _NETWORK_ALIASES.get(str(spec.get("type", "")).lower())
    if kind is None:
        raise ConfigError(f"unknown network type {spec.get('type')!r}", "network.type")
    if kind in ("poisson", "powerlaw"):
        param = "lambda" if kind == "poisson" else "alpha"
        for key in (param, "k_min", "k_max"):
            if key not in spec:
                raise ConfigError("missing required field", f"network.{key}")
        builder = build_poisson_truncated if kind == "poisson" else build_powerlaw
        try:
            return builder(float(spec[param]), int(spec["k_min"]), int(spec["k_max"]))
        except ValueError as exc:
            raise ValidationError(str(exc), "network") from exc
    if "edge_list_path" not in spec:
        raise ConfigError("missing required field", "network.edge_list_path")
    path = Path(spec["edge_list_path"])
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    return build_empirical_from_file(path, cap=spec.get("cap"))


def _profile_from_json(obj: dict, name: str) -> TimeProfile:
    kind = str(obj["type"]).replace("-", "_")
    needed = {"constant": ("value",), "sigmoid": ("peak", "a", "t0"), "piecewise_linear": ("knots",)}
    if kind not in needed:
        raise ConfigError(f"unknown profile type {obj['type']!r}", f"{name}.type")
    for key in needed[kind]:
        if key not in obj:
            raise ConfigError("missing required field", f"{name}.{key}")
    if kind == "constant":
        return TimeProfile.constant(obj["value"])
    if kind == "sigmoid":
        return TimeProfile.sigmoid(obj["peak"], obj["a"], obj["t0"])
    return TimeProfile.piecewise_linear(tuple(tuple(k) for k in obj["knots"]))


def scenario_from_dict(data: dict, base_dir: Path | None = None) -> Scenario:
    """Build a validated :class:`Scenario` from the parsed JSON object.

    Top-level ``b`` and ``i0`` are accepted as shorthands for ``cost.b`` and a
    uniform seed.
    """
    try:
        jsonschema.validate(data, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(exc.message, where) from None

    dist = build_network(data["network"], base_dir)
    beta = _profile_from_json(data["beta"], "beta")
    gamma = _profile_from_json(data["gamma"], "gamma") if "gamma" in data else None

    b = data.get("cost", {}).get("b", data.get("b", 25.0))

    seed_obj = data.get("seed")
    if seed_obj is None:
        seed = SeedSpec("uniform", i0=float(data.get("i0", 0.01)))
    else:
        mode = seed_obj.get("mode", "uniform")
        if mode == "uniform":
            seed = SeedSpec("uniform", i0=float(seed_obj.get("i0", data.get("i0", 0.01))))
        elif mode == "vector":
            if "i0_vector" not in seed_obj:
                raise ConfigError("missing required field", "seed.i0_vector")
            seed = SeedSpec("vector", i0=None, i0_vector=tuple(float(v) for v in seed_obj["i0_vector"]))
        elif mode == "optimize":
            if "B_i0" not in seed_obj:
                raise ConfigError("missing required field", "seed.B_i0")
            seed = SeedSpec("optimize", i0=None, B_i0=float(seed_obj["B_i0"]))
        else:
            raise ConfigError(f"unknown seed mode {mode!r}", "seed.mode")

    var_obj = data.get("variant", {})
    variant = Variant(var_obj.get("type", "fixed_seed"), var_obj.get("B"))
    if variant.type not in VARIANTS:
        raise ConfigError(f"unknown variant {variant.type!r}", "variant.type")

    sweep = data.get("sweep", {})
    return Scenario(
        dist=dist,
        T=float(data.get("T", 1.0)),
        n_grid=int(data.get("n_grid", DEFAULT_N_GRID)),
        beta=beta,
        gamma=gamma,
        cost=CostModel(float(b)),
        seed=seed,
        variant=variant,
        n_sweep=int(sweep.get("n_sweep", DEFAULT_N_SWEEP)),
        fixed_point_tol=float(sweep.get("fixed_point_tol", DEFAULT_FIXED_POINT_TOL)),
        network=copy.deepcopy(data["network"]),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return scenario_from_dict(data, base_dir=path.parent)


def scenario_to_dict(scn: Scenario) -> dict[str, Any]:
    if scn.network is not None:
        network = copy.deepcopy(scn.network)
    else:
        # no builder parameters: not representable in the file format
        raise ConfigError("scenario has no network builder parameters to serialize", "network")
    return {
        "network": network,
        "T": scn.T,
        "n_grid": scn.n_grid,
        "beta": scn.beta.to_json(),
        "gamma": scn.gamma.to_json(),
        "cost": {"b": scn.cost.b},
        "seed": scn.seed.to_json(),
        "variant": scn.variant.to_json(),
        "sweep": {"n_sweep": scn.n_sweep, "fixed_point_tol": scn.fixed_point_tol},
    }


def dump_scenario(scn: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scn), indent=2) + "\n", encoding="utf-8")
