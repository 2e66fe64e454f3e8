"""Trial orchestration: seeded sweeps, aggregation, and scaling-law fits.

A sweep runs one protocol over a list of graph specs, many trials per
point, every trial on its own derived random stream so results are
reproducible independently of execution order or worker count.
Aggregates carry bootstrap standard errors; fits are ordinary least
squares of log(mean) against log(predictor).
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .engine import Continuous, RngStream, SynchronousDiscrete
from .fusion import fold, fusion_from_name
from .graph import Graph, GraphSpec, generate
from .protocols import (
    ExplicitTime,
    GossipEps,
    GossipMatrix,
    ProtocolKind,
    Termination,
    estimate_switch_time,
    hybrid_k_run,
    init,
    run,
    two_phase_run,
)


class ExperimentError(RuntimeError):
    """A sweep could not produce complete results."""


@dataclass(frozen=True)
class TrialSummary:
    n: int
    trial: int
    tau: float
    eta: int
    completed: bool
    exact: Optional[bool] = None
    phase1_messages: Optional[int] = None
    phase2_messages: Optional[int] = None
    gossip_first_passage: Optional[int] = None

    @property
    def eta_per_node(self) -> float:
        return self.eta / self.n


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: protocol x graph list, with value source and stop rule."""

    graphs: Sequence[GraphSpec]
    protocol: str
    fusion: str = "sum"
    values: str = "uniform"  # "spike" | "uniform" | "file:<path>"
    values_seed: int = 1
    trials: int = 100
    master_seed: int = 0
    params: dict = field(default_factory=dict)
    jobs: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if not self.graphs:
            raise ValueError("sweep needs at least one graph spec")


def initial_values(source: str, n: int, fusion_kind: str, seed: int) -> list:
    """Materialize node values: a single spike of mass n at node 0, a
    seeded uniform draw, or one value per line from a file."""
    if source == "spike":
        base = [n] + [0] * (n - 1)
    elif source == "uniform":
        rng = RngStream(seed, stream_id=0x7A1).generator()
        base = [int(v) for v in rng.integers(-(2**20), 2**20, size=n)]
    elif source.startswith("file:"):
        lines = Path(source[5:]).read_text().split()
        if len(lines) < n:
            raise ValueError(f"values file has {len(lines)} entries, need {n}")
        base = [int(float(v)) if float(v).is_integer() else float(v) for v in lines[:n]]
    else:
        raise ValueError(f"unknown value source {source!r}")
    if fusion_kind == "wavg":
        return [(float(v), 1.0) for v in base]
    if fusion_kind == "gossip":
        return [float(v) for v in base]
    return base


def _run_one(args) -> TrialSummary:
    (graph, protocol, fusion_name, x, params, master_seed, trial) = args
    fusion = fusion_from_name(fusion_name) if fusion_name != "gossip" else None
    clock = (
        SynchronousDiscrete(params["lazy_prob"])
        if params.get("lazy_prob") is not None
        else Continuous()
    )
    if protocol == "two_phase":
        tr = two_phase_run(
            graph,
            x,
            fusion,
            ExplicitTime(params["switch_time"]),
            seed=master_seed,
            clock=clock,
            stream_id=trial,
        )
        tr.gamma = params.get("gamma")
    elif protocol == "hybrid_k":
        tr = hybrid_k_run(
            graph, x, k=params["k"], seed=master_seed,
            horizon=params.get("horizon", 100.0), stream_id=trial,
        )
    elif protocol == "gossip":
        st = init(
            ProtocolKind.GOSSIP, graph, x, None,
            params={k: v for k, v in params.items() if k in ("P", "gossip_messages_per_exchange")},
            seed=master_seed, stream_id=trial,
        )
        tr = run(st, GossipEps(params["eps"], params.get("horizon", 1_000_000_000)))
    else:
        st = init(
            ProtocolKind(protocol), graph, x, fusion,
            params=dict(params.get("init_params", {})),
            seed=master_seed, clock=clock, stream_id=trial,
        )
        tr = run(st, Termination())
    exact = None
    if protocol in ("srw", "crw", "two_phase") and fusion_name in ("sum", "max"):
        expected = fold(fusion, x)
        if protocol == "two_phase":
            exact = all(v == expected for v in tr.final_values)
        else:
            exact = tr.final_payload is not None and tr.final_payload.value == expected
    return TrialSummary(
        n=graph.n,
        trial=trial,
        tau=tr.tau,
        eta=tr.eta,
        completed=tr.completed,
        exact=exact,
        phase1_messages=tr.phase1_messages,
        phase2_messages=tr.phase2_messages,
        gossip_first_passage=tr.gossip_first_passage,
    )


def run_point(
    graph: Graph,
    protocol: str,
    fusion_name: str,
    x: Sequence,
    params: dict,
    trials: int,
    master_seed: int,
    jobs: int = 1,
) -> list:
    """All trials of one sweep point; order-independent by construction
    (each trial is a pure function of (master_seed, trial index))."""
    work = [
        (graph, protocol, fusion_name, list(x), params, master_seed, t)
        for t in range(trials)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_run_one, work, chunksize=max(1, trials // (4 * jobs))))
    else:
        out = [_run_one(w) for w in work]
    out.sort(key=lambda s: s.trial)
    bad = [s for s in out if not s.completed]
    if bad:
        raise ExperimentError(
            f"{len(bad)} of {trials} trials hit their horizon before finishing "
            f"(first: trial {bad[0].trial})"
        )
    return out


def run_trials(config: ExperimentConfig) -> dict:
    """Run the full sweep; returns {point index: (graph, summaries)}."""
    results = {}
    for idx, spec in enumerate(config.graphs):
        graph = generate(spec)
        fusion_kind = "gossip" if config.protocol == "gossip" else config.fusion
        x = initial_values(config.values, graph.n, fusion_kind, config.values_seed)
        params = dict(config.params)
        if config.protocol == "two_phase" and "switch_time" not in params:
            gamma = params.get("gamma")
            if gamma in (None, "log_n"):
                gamma = max(1, math.ceil(math.log(graph.n)))
            params["gamma"] = float(gamma)
            params["switch_time"] = estimate_switch_time(
                graph,
                float(gamma),
                trials=int(params.get("pilot_trials", 32)),
                seed=config.master_seed + 0x517,
            )
        results[idx] = (
            graph,
            run_point(
                graph,
                config.protocol,
                config.fusion,
                x,
                params,
                config.trials,
                config.master_seed,
                jobs=config.jobs,
            ),
        )
    return results


# ----------------------------------------------------------------------
# Aggregation
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class AggregateRecord:
    n: int
    metric: str
    mean: float
    stderr: float
    low: float
    high: float
    trials: int


def aggregate(
    summaries: Sequence[TrialSummary],
    metric: str,
    bootstrap: int = 1000,
    seed: int = 0,
) -> AggregateRecord:
    """Mean with a trial-level bootstrap standard error (completion-time
    distributions are skewed, so the plug-in normal error would lie)."""
    if len(summaries) < 2:
        raise ValueError("aggregation needs at least two trials")
    vals = np.array([getattr(s, metric) for s in summaries], dtype=float)
    rng = RngStream(seed, stream_id=0xB007).generator()
    idx = rng.integers(len(vals), size=(bootstrap, len(vals)))
    means = vals[idx].mean(axis=1)
    return AggregateRecord(
        n=summaries[0].n,
        metric=metric,
        mean=float(vals.mean()),
        stderr=float(means.std(ddof=1)),
        low=float(vals.min()),
        high=float(vals.max()),
        trials=len(vals),
    )


# ----------------------------------------------------------------------
# Scaling fits
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingFit:
    predictor: str
    slope: float
    intercept: float
    r2: float
    points: int


def predictor_fn(name: str) -> Callable[[int], float]:
    table = {
        "n": lambda n: float(n),
        "n2": lambda n: float(n) ** 2,
        "log_n": lambda n: math.log(n),
        "log2_n": lambda n: math.log(n) ** 2,
        "n_log_n": lambda n: n * math.log(n),
        # side-length forms for square tori/grids: N = sqrt(n)
        "N2_log_N": lambda n: n * math.log(math.sqrt(n)),
        "N2_log2_N": lambda n: n * math.log(math.sqrt(n)) ** 2,
    }
    if name in table:
        return table[name]
    if name.startswith("n_pow:"):
        p = float(name.split(":", 1)[1])
        return lambda n: float(n) ** p
    raise ValueError(f"unknown predictor {name!r}")


def fit_scaling(records: Sequence[AggregateRecord], predictor: str) -> ScalingFit:
    """OLS of log(mean) on log(predictor(n)); slope 1 means the claimed
    law matches the sweep."""
    if len(records) < 4:
        raise ValueError("scaling fits need at least four sweep points")
    f = predictor_fn(predictor)
    x = np.log([f(r.n) for r in records])
    y = np.log([r.mean for r in records])
    a = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ np.array([slope, intercept])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(predictor, float(slope), float(intercept), r2, len(records))


# ----------------------------------------------------------------------
# Gossip stopping index
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class GossipKEstimate:
    k_hat: int
    eps: float
    trials: int
    per_node_messages: float
    first_passages: tuple


def slow_mode_start(g: Graph) -> list:
    """Start vector on the slowest non-constant averaging mode.

    The stopping index is defined as a supremum over start vectors, and
    the slow eigenvector is its near-maximizer: spike or random starts
    load that mode with relatively vanishing weight as n grows, which
    systematically shortens the threshold crossing at a fixed eps.
    """
    if g.n > 4000:
        raise ValueError("dense eigensolve capped at 4000 nodes")
    deg = np.asarray(g.degrees, dtype=float)
    p = np.zeros((g.n, g.n))
    for u in range(g.n):
        for v in g.adjacency[u]:
            p[u, v] = 1.0 / deg[u]
    _, vecs = np.linalg.eigh((p + p.T) / 2)
    mode = vecs[:, -2]
    mode = mode - mode.mean()  # exact zero-mean, so the target is 0
    return [float(v) for v in g.n * mode / np.abs(mode).max()]


def measure_gossip_K(
    g: Graph,
    p: Optional[GossipMatrix],
    eps: float,
    z0: Optional[Sequence[float]] = None,
    trials: int = 40,
    master_seed: int = 0,
    horizon: int = 200_000_000,
    messages_per_exchange: int = 2,
) -> GossipKEstimate:
    """Empirical stopping index: the smallest exchange count k such that
    the fraction of trials still above the error threshold at k is at
    most eps.  The default start vector is the single spike n*e_1; the
    supremum over start vectors is not searched, so this lower-bounds
    the worst case."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if z0 is None:
        z0 = [float(g.n)] + [0.0] * (g.n - 1)
    passages = []
    for trial in range(trials):
        params = {"gossip_messages_per_exchange": messages_per_exchange}
        if p is not None:
            params["P"] = p
        st = init(ProtocolKind.GOSSIP, g, z0, None, params=params,
                  seed=master_seed, stream_id=trial)
        tr = run(st, GossipEps(eps, horizon))
        if not tr.completed:
            raise ExperimentError(f"gossip trial {trial} exceeded the {horizon}-exchange horizon")
        passages.append(tr.gossip_first_passage)
    passages.sort()
    allowed = math.floor(eps * trials)
    k_hat = passages[trials - allowed - 1]
    return GossipKEstimate(
        k_hat=int(k_hat),
        eps=eps,
        trials=trials,
        per_node_messages=messages_per_exchange * k_hat / g.n,
        first_passages=tuple(passages),
    )


# ----------------------------------------------------------------------
# Table-style suite: sweeps, fits, pass bands
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class RowResult:
    label: str
    metric: str
    fit: ScalingFit
    slope_band: tuple
    r2_min: float
    passed: bool
    records: tuple


@dataclass(frozen=True)
class SuiteReport:
    rows: tuple

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def _graph_specs_from_row(row: dict) -> list:
    specs = []
    for item in row["sweep"]:
        specs.append(GraphSpec(**item))
    return specs


def run_suite(config: dict, out_dir: Optional[Path] = None) -> SuiteReport:
    """Run every enabled row of a suite config and check its pass band.

    Row schema: label, protocol, metric (tau | eta_per_node | eta),
    predictor, sweep (list of GraphSpec kwargs), trials, slope_band,
    r2_min, params, enabled.  Writes summary.csv, fits.json, and one
    per-point trial table when an output directory is given.
    """
    rows = []
    master_seed = int(config.get("master_seed", 0))
    summary_lines = ["n,protocol,metric,mean,stderr,trials"]
    fits = []
    trial_tables = {}
    for row in config.get("rows", []):
        if not row.get("enabled", True):
            continue
        protocol = row["protocol"]
        metric = row.get("metric", "tau")
        records = []
        for spec in _graph_specs_from_row(row):
            graph = generate(spec)
            if protocol == "gossip_K":
                z0 = slow_mode_start(graph) if row.get("z0") == "slow_mode" else None
                est = measure_gossip_K(
                    graph, None, eps=float(row.get("eps", 0.01)), z0=z0,
                    trials=int(row.get("trials", 40)), master_seed=master_seed,
                )
                per_trial = [
                    TrialSummary(n=graph.n, trial=i, tau=0.0,
                                 eta=int(2 * k), completed=True)
                    for i, k in enumerate(est.first_passages)
                ]
                rec = aggregate(per_trial, "eta_per_node", seed=master_seed)
                summaries = per_trial
            else:
                cfg = ExperimentConfig(
                    graphs=[spec],
                    protocol=protocol,
                    fusion=row.get("fusion", "sum"),
                    values=row.get("values", "uniform"),
                    trials=int(row.get("trials", 100)),
                    master_seed=master_seed,
                    params=dict(row.get("params", {})),
                    jobs=int(config.get("jobs", 1)),
                )
                (_, summaries) = run_trials(cfg)[0]
                rec = aggregate(summaries, metric, seed=master_seed)
            records.append(rec)
            summary_lines.append(
                f"{rec.n},{protocol},{rec.metric},{rec.mean!r},{rec.stderr!r},{rec.trials}"
            )
            label = row.get("label", f"{protocol}/{metric}")
            name = f"trials_{label.replace('/', '_')}_{graph.n}.csv"
            trial_tables[name] = "\n".join(
                ["trial,tau,eta,eta_per_node"]
                + [f"{s.trial},{s.tau!r},{s.eta},{s.eta_per_node!r}" for s in summaries]
            )
        fit = fit_scaling(records, row["predictor"])
        band = tuple(row.get("slope_band", (0.85, 1.15)))
        r2_min = float(row.get("r2_min", 0.9))
        passed = band[0] <= fit.slope <= band[1] and fit.r2 >= r2_min
        rows.append(
            RowResult(
                label=row.get("label", f"{protocol}/{metric}"),
                metric=metric,
                fit=fit,
                slope_band=band,
                r2_min=r2_min,
                passed=passed,
                records=tuple(records),
            )
        )
        fits.append(
            {
                "label": rows[-1].label,
                "metric": metric,
                "predictor": fit.predictor,
                "slope": fit.slope,
                "intercept": fit.intercept,
                "r2": fit.r2,
                "slope_band": list(band),
                "r2_min": r2_min,
                "passed": passed,
            }
        )
    report = SuiteReport(rows=tuple(rows))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "summary.csv").write_text("\n".join(summary_lines) + "\n")
        (out_dir / "fits.json").write_text(json.dumps(fits, indent=2, sort_keys=True) + "\n")
        for name, text in sorted(trial_tables.items()):
            (out_dir / name).write_text(text + "\n")
    return report


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]
