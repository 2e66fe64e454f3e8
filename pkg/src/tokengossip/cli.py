"""Command-line front end: graph generation, protocol runs, analysis
reports, and scaling suites, all reproducible from (flags, files, seed).

Exit codes are a stable contract: 0 success, 2 usage, 3 generation
failure, 4 simulation failure, 5 analysis/solver failure.  A run
manifest (config hash, seed, version, timestamps, outputs) accompanies
every run that writes files.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from . import experiments as ex
from .engine import Continuous, SynchronousDiscrete
from .fusion import fusion_from_name
from .graph import (
    GraphGenerationError,
    GraphSpec,
    diameter,
    generate,
    load_graph,
    save_graph,
)
from .protocols import ProtocolError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_GENERATION = 3
EXIT_SIMULATION = 4
EXIT_ANALYSIS = 5


def _out_root() -> Path:
    import os

    return Path(os.environ.get("TOKENGOSSIP_OUT", "."))


def _write_manifest(out_dir: Path, config: dict, master_seed: int, started: float,
                    outputs: list) -> None:
    manifest = {
        "config_hash": ex.config_hash(config),
        "config": config,
        "master_seed": master_seed,
        "tool_version": __version__,
        "started_unix": started,
        "finished_unix": time.time(),
        "outputs": sorted(str(p) for p in outputs),
    }
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def _spec_from_args(args) -> GraphSpec:
    kind = args.kind
    if kind == "clique":
        return GraphSpec.clique(args.n)
    if kind == "ring":
        return GraphSpec.ring(args.n)
    if kind == "torus":
        return GraphSpec.torus(args.side, args.dim)
    if kind == "grid2d":
        return GraphSpec.grid2d(args.side)
    if kind == "rgg":
        return GraphSpec.rgg(args.n, seed=args.seed, radius=args.radius or 0.0)
    if kind == "random_regular":
        return GraphSpec.random_regular(args.n, args.degree, seed=args.seed)
    raise ValueError(f"unknown kind {kind!r}")


def cmd_gen(args) -> int:
    try:
        spec = _spec_from_args(args)
        g = generate(spec)
    except GraphGenerationError as e:
        print(f"generation failed: {e}", file=sys.stderr)
        return EXIT_GENERATION
    except ValueError as e:
        print(f"invalid parameters: {e}", file=sys.stderr)
        return EXIT_USAGE
    save_graph(g, args.out)
    print(f"n={g.n} m={g.m} diameter={diameter(g)}")
    return EXIT_OK


def _load_or_generate(args) -> object:
    if args.graph:
        return load_graph(args.graph)
    if args.kind:
        return generate(_spec_from_args(args))
    raise ValueError("need --graph FILE or an inline --kind spec")


def cmd_run(args) -> int:
    try:
        g = _load_or_generate(args)
    except GraphGenerationError as e:
        print(f"generation failed: {e}", file=sys.stderr)
        return EXIT_GENERATION
    except (ValueError, OSError) as e:
        print(f"bad graph argument: {e}", file=sys.stderr)
        return EXIT_USAGE
    started = time.time()
    params: dict = {}
    if args.lazy is not None:
        params["lazy_prob"] = args.lazy
    if args.proto == "gossip":
        params["eps"] = args.eps
    if args.proto == "hybrid_k":
        params["k"] = args.k
        params["horizon"] = args.horizon
    if args.proto == "two_phase" and args.gamma is not None:
        params["gamma"] = args.gamma if args.gamma != "log_n" else "log_n"
    values = f"file:{args.values}" if args.values else args.values_kind
    try:
        fusion_kind = "gossip" if args.proto == "gossip" else args.fusion
        x = ex.initial_values(values, g.n, fusion_kind, args.values_seed)
        point_params = dict(params)
        if args.proto == "two_phase":
            gamma = params.get("gamma", "log_n")
            gamma = max(1, math.ceil(math.log(g.n))) if gamma == "log_n" else float(gamma)
            point_params["gamma"] = float(gamma)
            point_params["switch_time"] = an.estimate_decay(
                g, trials=32, stream=args.seed + 0x517
            ).t_gamma(float(gamma))[0] if gamma < g.n else 0.0
        summaries = ex.run_point(
            g, args.proto, args.fusion, x, point_params, args.trials, args.seed,
            jobs=args.jobs,
        )
    except ex.ExperimentError as e:
        print(f"simulation incomplete: {e}", file=sys.stderr)
        return EXIT_SIMULATION
    except (ProtocolError, ValueError) as e:
        print(f"invalid run: {e}", file=sys.stderr)
        return EXIT_USAGE
    if args.proto in ("srw", "crw", "two_phase") and args.fusion in ("sum", "max"):
        if not all(s.exact for s in summaries):
            print("exactness check failed", file=sys.stderr)
            return EXIT_SIMULATION
    tau = float(np.mean([s.tau for s in summaries]))
    eta = float(np.mean([s.eta for s in summaries]))
    print(f"{tau!r} {eta!r} {eta / g.n!r}")
    if args.out:
        out_dir = _out_root() / args.out
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs = _write_trial_files(g, args, x, point_params, out_dir)
        cfg_json = {
            "protocol": args.proto,
            "fusion": args.fusion,
            "values": values,
            "values_seed": args.values_seed,
            "trials": args.trials,
            "seed": args.seed,
            "params": {k: v for k, v in point_params.items() if k != "P"},
            "clock": "discrete" if args.lazy is not None else "continuous",
            "lazy_prob": args.lazy,
            "gossip_matrix": "uniform" if args.proto == "gossip" else None,
            "graph_kind": g.kind,
            "n": g.n,
        }
        _write_manifest(out_dir, cfg_json, args.seed, started, outputs)
    return EXIT_OK


def _write_trial_files(g, args, x, params, out_dir: Path) -> list:
    # re-run trials to materialize full traces (run_point keeps summaries only)
    outputs = []
    for trial in range(args.trials):
        tr = _full_trace(g, args.proto, args.fusion, x, params, args.seed, trial)
        base = out_dir / f"trial_{trial:04d}"
        tr.write_trajectory_csv(base.with_suffix(".csv"))
        tr.write_node_summary_csv(Path(str(base) + "_nodes.csv"))
        tr.write_metadata_json(base.with_suffix(".json"))
        outputs.extend(
            [base.with_suffix(".csv"), Path(str(base) + "_nodes.csv"), base.with_suffix(".json")]
        )
    return outputs


def _full_trace(g, proto, fusion_name, x, params, seed, trial):
    from .protocols import (
        ExplicitTime,
        GossipEps,
        ProtocolKind,
        Termination,
        hybrid_k_run,
        init,
        run,
        two_phase_run,
    )

    fusion = fusion_from_name(fusion_name) if proto != "gossip" else None
    clock = (
        SynchronousDiscrete(params["lazy_prob"])
        if params.get("lazy_prob") is not None
        else Continuous()
    )
    if proto == "two_phase":
        return two_phase_run(g, x, fusion, ExplicitTime(params["switch_time"]),
                             seed=seed, clock=clock, stream_id=trial)
    if proto == "hybrid_k":
        return hybrid_k_run(g, x, k=params["k"], seed=seed,
                            horizon=params.get("horizon", 100.0), stream_id=trial)
    if proto == "gossip":
        st = init(ProtocolKind.GOSSIP, g, x, None, seed=seed, stream_id=trial)
        return run(st, GossipEps(params["eps"]))
    st = init(ProtocolKind(proto), g, x, fusion, seed=seed, clock=clock, stream_id=trial)
    return run(st, Termination())


def cmd_analyze(args) -> int:
    try:
        g = load_graph(args.graph)
    except (OSError, ValueError) as e:
        print(f"bad graph file: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = _analysis_report(g, args)
    except (an.SolverError, ValueError) as e:
        print(f"analysis failed: {e}", file=sys.stderr)
        return EXIT_ANALYSIS
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def _analysis_report(g, args) -> dict:
    what = args.what
    if what == "hitting":
        table = an.mean_hitting_times(g)
        out = {"sigma": table.worst_case, "max_residual": table.max_residual}
        if g.n <= 32:
            out["table"] = table.entry.tolist()
        return out
    if what == "resistance":
        rep = an.resistance_report(g)
        return {
            "rho_star": rep.rho_star,
            "sigma_bound": rep.sigma_bound,
            "argmax": list(rep.argmax),
            "edges": rep.edges,
        }
    if what == "meeting":
        table = an.mean_meeting_times(g)
        out = {"worst_case": table.worst_case}
        if g.n <= 32:
            out["table"] = table.entry.tolist()
        return out
    if what == "decay":
        dc = an.estimate_decay(g, trials=args.trials, stream=args.seed)
        gamma = max(1, math.ceil(math.log(g.n)))
        t_gamma, bracket = dc.t_gamma(gamma)
        if args.out:
            dc.write_csv(Path(args.out).with_suffix(".csv"))
        n_hat, m_hat = dc.at(t_gamma)
        return {
            "trials": dc.trials,
            "gamma": gamma,
            "t_gamma": t_gamma,
            "t_gamma_bracket": bracket,
            "n_at_t_gamma": n_hat,
            "m_at_t_gamma": m_hat,
        }
    if what == "gaussian":
        rep = an.check_gaussian_bound(g, t_max=args.tmax)
        return {
            "feasible": rep.feasible,
            "c3": rep.c3,
            "c4": rep.c4,
            "t_max": rep.t_max,
            "lazy_prob": rep.lazy_prob,
            "violations": rep.violations,
        }
    if what == "regularity":
        rep = an.regularity_report(g, t_max=args.tmax if g.n <= 2500 else None)
        return asdict(rep)
    raise ValueError(f"unknown analysis {what!r}")


def resolve_config_path(name: str) -> Path:
    """A config flag names either a file or a bundled suite (e.g. table1)."""
    path = Path(name)
    if path.exists():
        return path
    bundled = Path(__file__).parent / "data" / (name if name.endswith(".json") else f"{name}.json")
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"no config file or bundled suite named {name!r}")


def cmd_scale(args) -> int:
    try:
        config = json.loads(resolve_config_path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        print(f"bad config: {e}", file=sys.stderr)
        return EXIT_USAGE
    rows = [r for r in config.get("rows", []) if r.get("enabled", True)]
    if not rows:
        print("config has no enabled rows", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs:
        config["jobs"] = args.jobs
    started = time.time()
    out_dir = _out_root() / (args.out or f"scale_{ex.config_hash(config)}")
    try:
        report = ex.run_suite(config, out_dir=out_dir)
    except ex.ExperimentError as e:
        print(f"sweep failed: {e}", file=sys.stderr)
        return EXIT_SIMULATION
    lines = []
    for row in report.rows:
        flag = "PASS" if row.passed else "FAIL"
        lines.append(
            f"{flag} {row.label}: slope={row.fit.slope:.3f} "
            f"band={list(row.slope_band)} r2={row.fit.r2:.4f}"
        )
    (out_dir / "table_report.txt").write_text("\n".join(lines) + "\n")
    _write_manifest(
        out_dir, config, int(config.get("master_seed", 0)), started,
        [out_dir / "summary.csv", out_dir / "fits.json", out_dir / "table_report.txt"],
    )
    print("\n".join(lines))
    return EXIT_OK if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokengossip",
        description="simulate and analyze token-based gossip aggregation protocols",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a graph file")
    p_gen.add_argument("--kind", required=True,
                       choices=["clique", "ring", "torus", "grid2d", "rgg", "random_regular"])
    p_gen.add_argument("--n", type=int, default=0)
    p_gen.add_argument("--side", type=int, default=0)
    p_gen.add_argument("--dim", type=int, default=2)
    p_gen.add_argument("--radius", type=float, default=0.0)
    p_gen.add_argument("--degree", type=int, default=6)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_gen)

    p_run = sub.add_parser("run", help="run protocol trials")
    p_run.add_argument("--proto", required=True,
                       choices=["srw", "crw", "gossip", "two_phase", "hybrid_k"])
    p_run.add_argument("--graph")
    p_run.add_argument("--kind",
                       choices=["clique", "ring", "torus", "grid2d", "rgg", "random_regular"])
    p_run.add_argument("--n", type=int, default=0)
    p_run.add_argument("--side", type=int, default=0)
    p_run.add_argument("--dim", type=int, default=2)
    p_run.add_argument("--radius", type=float, default=0.0)
    p_run.add_argument("--degree", type=int, default=6)
    p_run.add_argument("--fusion", default="sum", choices=["sum", "max", "wavg"])
    p_run.add_argument("--values", help="values file, one per line")
    p_run.add_argument("--values-kind", default="uniform", choices=["spike", "uniform"])
    p_run.add_argument("--values-seed", type=int, default=1)
    p_run.add_argument("--trials", type=int, default=100)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--gamma", help="two-phase target token count, or log_n")
    p_run.add_argument("--eps", type=float, default=0.01)
    p_run.add_argument("--k", type=int, default=2)
    p_run.add_argument("--horizon", type=float, default=100.0)
    p_run.add_argument("--lazy", type=float, default=None,
                       help="synchronous rounds with this lazy probability")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--out", help="directory for per-trial traces + manifest")
    p_run.set_defaults(func=cmd_run)

    p_an = sub.add_parser("analyze", help="exact/MC analysis of a graph file")
    p_an.add_argument("--what", required=True,
                      choices=["hitting", "resistance", "meeting", "decay",
                               "gaussian", "regularity"])
    p_an.add_argument("--graph", required=True)
    p_an.add_argument("--tmax", type=int, default=40)
    p_an.add_argument("--trials", type=int, default=100)
    p_an.add_argument("--seed", type=int, default=0)
    p_an.add_argument("--out")
    p_an.set_defaults(func=cmd_analyze)

    p_sc = sub.add_parser("scale", help="run a scaling suite from a JSON config")
    p_sc.add_argument("--config", required=True)
    p_sc.add_argument("--out")
    p_sc.add_argument("--jobs", type=int, default=0)
    p_sc.set_defaults(func=cmd_scale)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
