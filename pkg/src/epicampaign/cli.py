"""Command-line front end.

    epicampaign <subcommand> --scenario scenario.json --out results/ [--seed N]

Every run writes its data files plus ``provenance.json`` (scenario hash,
seed, package versions and a hash of every output) into ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .budget import budget_solve
from .dynamics import aggregate, integrate_state
from .errors import (
    BracketError,
    ConfigError,
    EpicampaignError,
    IngestionError,
    IntegrationBlowupError,
    MonotonicityError,
    ParameterError,
    StepSizeError,
    ValidationError,
)
from .heuristics import best_static, best_two_stage, fixed_budget_heuristics, heuristic_controls
from .joint import joint_solve
from .network import read_edge_list
from .pmp import check_convergence_bound, check_uniqueness, fbs_solve, normalized_resource
from .scenario import TimeProfile, load_scenario
from .simulator import build_configuration_graph, graph_from_edge_list, simulate_si, simulated_reward

log = logging.getLogger("epicampaign")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BRACKET = 3
EXIT_BLOWUP = 4
EXIT_OTHER = 5

SWEEP_PARAMS = ("b", "beta", "gamma", "T", "i0", "B", "B_i0")
DEFAULT_NODES = 10_000
DEFAULT_RUNS = 20
IMPROVEMENT_GUARD = 1e-12


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

class Output:
    """Collects files written to the output directory, for the provenance record."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.files: dict[str, str] = {}
        out_dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str):
        data = text.encode("utf-8")
        (self.dir / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def json(self, name: str, obj):
        self.write(name, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")

    def table(self, name: str, header, rows):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        self.write(name, buf.getvalue())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def provenance(args, out: Output, extra=None) -> dict:
    scenario_bytes = Path(args.scenario).read_bytes()
    record = {
        "subcommand": args.command,
        "scenario_path": str(args.scenario),
        "scenario_sha256": hashlib.sha256(scenario_bytes).hexdigest(),
        "rng_seed": args.seed,
        "versions": {
            "epicampaign": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "outputs": dict(sorted(out.files.items())),
    }
    if extra:
        record.update(extra)
    return record


def _resource_rows(scn, controls):
    return sorted(normalized_resource(scn, controls).items())


def _write_solution(out: Output, scn, rep, prefix: str = ""):
    degrees = scn.dist.degrees
    total = aggregate(scn.dist, rep.states).i_total
    out.write(f"{prefix}controls.csv", rep.controls.to_csv(degrees, "u"))
    out.write(f"{prefix}states.csv", rep.states.to_csv(degrees, "i", total=total))
    out.write(f"{prefix}adjoints.csv", rep.adjoints.to_csv(degrees, "lambda"))
    out.table(f"{prefix}resource.csv", ["k", "r_norm_k"], _resource_rows(scn, rep.controls))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(args, scn, out):
    rep = fbs_solve(scn)
    out.json("summary.json", rep.summary())
    _write_solution(out, scn, rep)


def cmd_solve_budget(args, scn, out):
    B = args.budget if args.budget is not None else scn.variant.B
    if B is None:
        raise ConfigError("no budget: set variant.B or pass --budget", "variant.B")
    rep = budget_solve(scn, B=B)
    out.json("summary.json", rep.summary())
    _write_solution(out, scn, rep.base)


def cmd_solve_joint(args, scn, out):
    B_i0 = args.seed_budget if args.seed_budget is not None else scn.seed.B_i0
    if B_i0 is None:
        raise ConfigError("no seed budget: set seed.B_i0 or pass --seed-budget", "seed.B_i0")
    rep = joint_solve(scn, B_i0, n_starts=args.n_starts)
    out.json("summary.json", rep.summary())
    out.write("seed.csv", rep.seed.to_csv())
    _write_solution(out, scn, rep.report)


def _heuristics_for(scn):
    if scn.variant.type == "fixed_budget":
        return fixed_budget_heuristics(scn, B=scn.variant.B)
    return best_static(scn), best_two_stage(scn)


def cmd_heuristic(args, scn, out):
    results = _heuristics_for(scn)
    out.json("heuristics.json", {r.kind: {"kind": r.kind, "level": r.level, "J": r.J,
                                          "resource_used": r.resource_used} for r in results})
    out.table("heuristics.csv", ["kind", "level", "J", "resource_used"],
              [(r.kind, r.level, r.J, r.resource_used) for r in results])


def _graph_for(args, scn):
    net = scn.network or {}
    if str(net.get("type", "")).lower() == "empirical":
        path = Path(net["edge_list_path"])
        if not path.is_absolute():
            path = Path(args.scenario).parent / path
        return graph_from_edge_list(read_edge_list(path)), False
    return build_configuration_graph(scn.dist, args.n_nodes, args.seed), args.regenerate


def _controls_for(kind, scn):
    if kind == "none":
        return None
    if kind == "optimal":
        return fbs_solve(scn).controls
    if kind == "budget":
        return budget_solve(scn, B=scn.variant.B).controls
    if scn.variant.type == "fixed_budget":
        res = dict((r.kind, r) for r in fixed_budget_heuristics(scn, B=scn.variant.B))[kind]
    else:
        res = best_static(scn) if kind == "static" else best_two_stage(scn)
    return heuristic_controls(scn, kind, res.level)


def cmd_simulate(args, scn, out):
    graph, regen = _graph_for(args, scn)
    controls = _controls_for(args.control, scn)
    sim = simulate_si(graph, scn, controls, n_runs=args.n_runs, rng_seed=args.seed, regenerate=regen)
    out.write("simulation.csv", sim.to_csv())
    out.json("summary.json", {
        "n_runs": sim.n_runs, "n_nodes": graph.n, "control": args.control,
        "mean_i_T": float(sim.mean_i[-1]), "std_i_T": float(sim.std_i[-1]),
        "simulated_net_reward": simulated_reward(sim, scn, controls),
    })


def cmd_validate(args, scn, out):
    graph, regen = _graph_for(args, scn)
    controls = _controls_for(args.control, scn)
    sim = simulate_si(graph, scn, controls, n_runs=args.n_runs, rng_seed=args.seed, regenerate=regen)
    model = aggregate(scn.dist, integrate_state(scn, controls, scn.i0())).i_total
    out.table("validate.csv", ["t", "model_i", "mean_i", "std_i"],
              zip(scn.grid.tolist(), model.tolist(), sim.mean_i.tolist(), sim.std_i.tolist()))
    gap = abs(float(sim.mean_i[-1]) - float(model[-1]))
    tol = 3.0 * (float(sim.std_i[-1]) / math.sqrt(sim.n_runs) + 0.005)
    out.json("summary.json", {
        "model_i_T": float(model[-1]), "mean_i_T": float(sim.mean_i[-1]), "std_i_T": float(sim.std_i[-1]),
        "terminal_gap": gap, "tolerance": tol, "agree": gap < tol,
        "model_overestimates_everywhere": bool(np.all(model >= sim.mean_i)),
    })


def cmd_check(args, scn, out):
    lhs2, ok2 = check_convergence_bound(scn)
    lhs4, ok4 = check_uniqueness(scn)
    out.json("check.json", {"convergence_bound": {"lhs": lhs2, "holds": ok2},
                            "uniqueness_bound": {"lhs": lhs4, "holds": ok4}})


def _improvement(j_opt, j_heur):
    if abs(j_heur) < IMPROVEMENT_GUARD:
        return j_opt - j_heur  # absolute difference when the baseline is ~0
    return 100.0 * (j_opt - j_heur) / abs(j_heur)


def _with_param(scn, name, value):
    if name == "b":
        return scn.replace(b=value)
    if name == "beta":
        return scn.replace(beta=TimeProfile.constant(value))
    if name == "gamma":
        return scn.replace(gamma=TimeProfile.constant(value))
    if name == "T":
        return scn.replace(T=value)
    if name == "i0":
        return scn.replace(seed=type(scn.seed)("uniform", i0=value))
    if name == "B":
        return scn.replace(variant=type(scn.variant)("fixed_budget", value))
    return scn.replace(seed=type(scn.seed)("optimize", i0=None, B_i0=value))


def _sweep_row(scn, joint: bool):
    i0 = scn.i0()
    uncontrolled = aggregate(scn.dist, integrate_state(scn, None, i0)).i_total[-1]
    if scn.variant.type == "fixed_budget":
        opt = budget_solve(scn, i0, B=scn.variant.B).J
        j_joint = float("nan")
    else:
        opt = fbs_solve(scn, i0).J
        B_i0 = scn.seed.B_i0 if scn.seed.B_i0 is not None else float(scn.dist.p @ i0)
        j_joint = joint_solve(scn, B_i0).J if joint else float("nan")
    static, two = _heuristics_for(scn)
    return [opt, j_joint, static.J, two.J, float(uncontrolled),
            _improvement(opt, static.J), _improvement(opt, two.J)]


def cmd_sweep(args, scn, out):
    if not args.sweep_param or not args.sweep_values:
        raise ConfigError("sweep needs --sweep-param and --sweep-values", "sweep")
    rows = []
    for value in args.sweep_values:
        point = _with_param(scn, args.sweep_param, value)
        rows.append([args.sweep_param, value] + _sweep_row(point, not args.no_joint))
    out.table("sweep.csv",
              ["param", "value", "J_optimal", "J_joint", "J_static", "J_two_stage", "J_uncontrolled",
               "improvement_vs_static", "improvement_vs_two_stage"], rows)


COMMANDS = {
    "solve": cmd_solve,
    "solve-budget": cmd_solve_budget,
    "solve-joint": cmd_solve_joint,
    "heuristic": cmd_heuristic,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "check": cmd_check,
    "sweep": cmd_sweep,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _positive_values(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values or not all(math.isfinite(v) and v > 0 for v in values):
        raise argparse.ArgumentTypeError("sweep values must be finite and positive")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epicampaign",
                                     description="Optimal campaign controls for SI spreading on networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "solve-budget":
            p.add_argument("--budget", type=float, help="override variant.B")
        if name == "solve-joint":
            p.add_argument("--seed-budget", type=float, help="override seed.B_i0")
            p.add_argument("--n-starts", type=int, default=1)
        if name in ("simulate", "validate"):
            p.add_argument("--n-nodes", type=int, default=DEFAULT_NODES)
            p.add_argument("--n-runs", type=int, default=DEFAULT_RUNS)
            p.add_argument("--control", default="none",
                           choices=("none", "optimal", "budget", "static", "two_stage"))
            p.add_argument("--no-regenerate", dest="regenerate", action="store_false",
                           help="reuse one graph for all runs")
        if name == "sweep":
            p.add_argument("--sweep-param", choices=SWEEP_PARAMS)
            p.add_argument("--sweep-values", type=_positive_values)
            p.add_argument("--no-joint", action="store_true", help="skip the joint column")
    return parser


def _exit_code(exc: Exception) -> tuple[int, str]:
    if isinstance(exc, (ConfigError, ValidationError, IngestionError, ParameterError)):
        return EXIT_CONFIG, "config"
    if isinstance(exc, (BracketError, MonotonicityError)):
        return EXIT_BRACKET, "bracket"
    if isinstance(exc, (IntegrationBlowupError, StepSizeError)):
        return EXIT_BLOWUP, "blowup"
    return EXIT_OTHER, "error"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scn = load_scenario(args.scenario)
        out = Output(Path(args.out))
        COMMANDS[args.command](args, scn, out)
        extra = {}
        if args.command == "sweep":
            extra["sweep"] = {"param": args.sweep_param, "values": args.sweep_values}
        out.json("provenance.json", provenance(args, out, extra))
    except EpicampaignError as exc:
        code, kind = _exit_code(exc)
        print(f"epicampaign: {kind}: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"epicampaign: io: {exc}", file=sys.stderr)
        return EXIT_OTHER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
