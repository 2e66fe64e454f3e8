"""Exact and Monte-Carlo analysis of random walks on the simulation graphs.

Hitting and meeting times come from linear solves (dense fundamental
matrix, or a sparse product-chain factorization); effective and set
resistances from Laplacian solves on the unit-resistor network; token
decay curves, meeting probabilities, and the coalescence bounds from
seeded Monte Carlo.  Discrete-step expectations equal continuous
unit-rate expectations via the jump-and-hold construction, so one table
serves both clocks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import splu

from .engine import Continuous, RngStream
from .fusion import sum_fusion
from .graph import (
    Graph,
    ball,
    check_geometric_neighborhood,
    check_isoperimetry,
    check_volume_doubling,
    diameter,
    distances_from,
)
from .protocols import ProtocolKind, SynchronousDiscrete, Termination, init, run


class SolverError(RuntimeError):
    """A linear solve did not reach the required residual."""


# ----------------------------------------------------------------------
# Hitting times
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class HittingTimeTable:
    """entry[v, w] = expected first-passage time from v to w, in steps
    (equal to the continuous unit-rate expectation)."""

    entry: np.ndarray
    max_residual: float

    @property
    def worst_case(self) -> float:
        return float(self.entry.max())


def _transition_matrix(g: Graph) -> np.ndarray:
    p = np.zeros((g.n, g.n))
    for u in range(g.n):
        du = len(g.adjacency[u])
        for v in g.adjacency[u]:
            p[u, v] = 1.0 / du
    return p


def mean_hitting_times(g: Graph, residual_tol: float = 1e-9) -> HittingTimeTable:
    """All-pairs mean first-passage times of the simple random walk.

    Solved through the fundamental matrix Z = (I - P + 1 pi)^-1 with
    pi the degree-proportional stationary law; every column is verified
    against its defining harmonic system h(w) = 0, h(u) = 1 + avg_nbr h.
    """
    n = g.n
    if n == 1:
        return HittingTimeTable(np.zeros((1, 1)), 0.0)
    if n > 5000:
        raise SolverError("dense hitting-time solve capped at 5000 nodes")
    p = _transition_matrix(g)
    deg = np.asarray(g.degrees, dtype=float)
    pi = deg / deg.sum()
    z = np.linalg.inv(np.eye(n) - p + np.outer(np.ones(n), pi))
    h = (np.diag(z)[None, :] - z) / pi[None, :]
    np.fill_diagonal(h, 0.0)
    # residual of the harmonic equations, relative to the table scale
    res = h - 1.0 - p @ h
    np.fill_diagonal(res, 0.0)
    max_res = float(np.abs(res).max() / max(1.0, h.max()))
    if max_res > residual_tol:
        raise SolverError(f"hitting-time residual {max_res:.2e} above {residual_tol:.0e}")
    return HittingTimeTable(h, max_res)


def worst_case_hitting(g: Graph) -> float:
    """sigma: the largest mean first-passage time over all node pairs."""
    return mean_hitting_times(g).worst_case


# ----------------------------------------------------------------------
# Effective and set resistance
# ----------------------------------------------------------------------


def _laplacian(g: Graph) -> np.ndarray:
    lap = np.diag(np.asarray(g.degrees, dtype=float))
    for u in range(g.n):
        for v in g.adjacency[u]:
            lap[u, v] -= 1.0
    return lap


@dataclass(frozen=True)
class ResistanceReport:
    """Pairwise effective resistances of the unit-resistor network.

    ``rho_star`` is the largest pairwise resistance; ``sigma_bound`` is
    the worst-case hitting-time bound 2|E| * rho_star.
    """

    rho: np.ndarray
    rho_star: float
    argmax: tuple
    edges: int

    @property
    def sigma_bound(self) -> float:
        return 2.0 * self.edges * self.rho_star


def resistance_report(g: Graph, residual_tol: float = 1e-9) -> ResistanceReport:
    n = g.n
    if n > 4000:
        raise SolverError("dense resistance table capped at 4000 nodes")
    lap = _laplacian(g)
    lplus = np.linalg.pinv(lap, hermitian=True)
    d = np.diag(lplus)
    rho = d[:, None] + d[None, :] - 2 * lplus
    np.fill_diagonal(rho, 0.0)
    rho = np.maximum(rho, 0.0)
    idx = int(np.argmax(rho))
    u, v = divmod(idx, n)
    # verify the extremal pair against a direct grounded solve
    direct = effective_resistance(g, u, v, residual_tol) if u != v else 0.0
    if abs(direct - rho[u, v]) > residual_tol * max(1.0, direct):
        raise SolverError("pseudo-inverse and grounded solves disagree")
    return ResistanceReport(rho=rho, rho_star=float(rho[u, v]), argmax=(u, v), edges=g.m)


def effective_resistance(g: Graph, u: int, v: int, residual_tol: float = 1e-9) -> float:
    """Resistance between u and v: potential drop under a unit current
    injected at u and drawn at v (v grounded)."""
    if u == v:
        return 0.0
    n = g.n
    lap = _laplacian(g)
    keep = [i for i in range(n) if i != v]
    reduced = lap[np.ix_(keep, keep)]
    b = np.zeros(n - 1)
    b[keep.index(u)] = 1.0
    x = np.linalg.solve(reduced, b)
    res = np.linalg.norm(reduced @ x - b) / np.linalg.norm(b)
    if res > residual_tol:
        raise SolverError(f"resistance solve residual {res:.2e}")
    return float(x[keep.index(u)])


def max_resistance(g: Graph) -> float:
    return resistance_report(g).rho_star


def set_resistance(g: Graph, a: set, b: set) -> float:
    """Resistance between the shorted set A and the grounded complement
    of B: one volt on A, zero outside B, interior harmonic; returns
    1 / (power dissipated)."""
    a = set(a)
    b = set(b)
    if not a:
        raise ValueError("A must be nonempty")
    if not a <= b:
        raise ValueError("need A contained in B")
    ground = set(range(g.n)) - b
    if not ground:
        raise ValueError("the complement of B must be nonempty")
    phi = np.zeros(g.n)
    for i in a:
        phi[i] = 1.0
    interior = sorted(b - a)
    if interior:
        lap = _laplacian(g)
        sub = lap[np.ix_(interior, interior)]
        rhs = np.zeros(len(interior))
        for row, i in enumerate(interior):
            for j in g.adjacency[i]:
                if j in a:
                    rhs[row] += 1.0  # boundary potential 1 on A
        phi[interior] = np.linalg.solve(sub, rhs)
    power = 0.0
    for x, y in g.edges:
        d = phi[x] - phi[y]
        power += d * d
    if power <= 0:
        raise SolverError("no current flows between A and the ground set")
    return 1.0 / power


# ----------------------------------------------------------------------
# Meeting times
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class MeetingTable:
    """entry[v, w] = expected time for two independent unit-rate walks
    from v and w to first share a node."""

    entry: np.ndarray

    @property
    def worst_case(self) -> float:
        return float(self.entry.max())


def mean_meeting_times(g: Graph) -> MeetingTable:
    """Exact product-chain solve of pairwise meeting times.

    The product chain jumps at total rate 2; each jump moves one of the
    two walks, chosen fairly; the diagonal absorbs.  Capped at 10^4
    product states (n = 100); use :func:`estimate_alpha` beyond.
    """
    n = g.n
    if n * n > 10_000:
        raise SolverError("product-chain solve capped at 10^4 states; use the MC estimator")
    size = n * n
    rows, cols, vals = [], [], []
    rhs = np.zeros(size)
    for x in range(n):
        for y in range(n):
            s = x * n + y
            if x == y:
                rows.append(s)
                cols.append(s)
                vals.append(1.0)
                continue
            rows.append(s)
            cols.append(s)
            vals.append(1.0)
            rhs[s] = 0.5  # mean holding time at rate 2
            for xp in g.adjacency[x]:
                rows.append(s)
                cols.append(xp * n + y)
                vals.append(-0.5 / len(g.adjacency[x]))
            for yp in g.adjacency[y]:
                rows.append(s)
                cols.append(x * n + yp)
                vals.append(-0.5 / len(g.adjacency[y]))
    mat = csr_matrix((vals, (rows, cols)), shape=(size, size)).tocsc()
    sol = splu(mat).solve(rhs)
    entry = sol.reshape(n, n)
    entry = np.maximum(entry, 0.0)
    return MeetingTable(entry)


def worst_case_meeting(g: Graph) -> float:
    return mean_meeting_times(g).worst_case


# ----------------------------------------------------------------------
# Monte-Carlo estimators
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    trials: int


def _wilson_half_width(p_hat: float, trials: int, z: float = 1.96) -> float:
    denom = 1 + z * z / trials
    return (z / denom) * math.sqrt(
        p_hat * (1 - p_hat) / trials + z * z / (4 * trials * trials)
    )


@dataclass(frozen=True)
class MeetingEstimate:
    """Worst-case (minimum over pairs) meeting probability by time s."""

    alpha_hat: float
    half_width: float
    s: float
    trials: int
    argmin_pair: tuple
    pairs_sampled: bool
    exact_table: Optional[MeetingTable] = None


def _pair_meeting_mask(g: Graph, v: int, w: int, s: float, trials: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Vectorized two-walk simulation: True where the walks met by s."""
    offsets, flat = g.csr
    deg = np.diff(offsets)
    a = np.full(trials, v, dtype=np.int64)
    b = np.full(trials, w, dtype=np.int64)
    t = np.zeros(trials)
    met = np.zeros(trials, dtype=bool)
    alive = np.ones(trials, dtype=bool)
    while alive.any():
        idx = np.nonzero(alive)[0]
        t[idx] += rng.exponential(0.5, size=len(idx))
        over = t[idx] > s
        alive[idx[over]] = False
        idx = idx[~over]
        if len(idx) == 0:
            break
        which = rng.random(len(idx)) < 0.5
        for sel, pos in ((which, a), (~which, b)):
            nodes = idx[sel]
            if len(nodes) == 0:
                continue
            cur = pos[nodes]
            step = (rng.random(len(nodes)) * deg[cur]).astype(np.int64)
            pos[nodes] = flat[offsets[cur] + step]
        meet_now = a[idx] == b[idx]
        met[idx[meet_now]] = True
        alive[idx[meet_now]] = False
    return met


def estimate_alpha(
    g: Graph,
    a: Sequence[int],
    s: float,
    trials: int = 1000,
    stream: RngStream | int = 0,
    max_pairs: int = 10_000,
    with_exact_table: bool = False,
) -> MeetingEstimate:
    """Monte-Carlo estimate of min over pairs in A of P(meet by s).

    When A has more than ``max_pairs`` pairs a uniform pair sample is
    used; the reported minimum then only upper-bounds the true minimum.
    ``with_exact_table`` attaches the exact mean-meeting-time table when
    the product chain is small enough to solve.
    """
    a = sorted(set(a))
    if len(a) < 2:
        raise ValueError("alpha needs at least two start nodes")
    if isinstance(stream, int):
        stream = RngStream(master_seed=stream, stream_id=0)
    rng = stream.generator()
    pairs = [(v, w) for i, v in enumerate(a) for w in a[i + 1 :]]
    sampled = len(pairs) > max_pairs
    if sampled:
        sel = rng.choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[int(i)] for i in sel]
    best = (math.inf, (a[0], a[1]))
    for v, w in pairs:
        p_hat = float(np.mean(_pair_meeting_mask(g, v, w, s, trials, rng)))
        if p_hat < best[0]:
            best = (p_hat, (v, w))
    exact = None
    if with_exact_table and g.n * g.n <= 10_000:
        exact = mean_meeting_times(g)
    return MeetingEstimate(
        alpha_hat=best[0],
        half_width=_wilson_half_width(best[0], trials),
        s=s,
        trials=trials,
        argmin_pair=best[1],
        pairs_sampled=sampled,
        exact_table=exact,
    )


def estimate_cover_time(
    g: Graph,
    start: int,
    trials: int = 1000,
    stream: RngStream | int = 0,
    discrete: bool = False,
) -> MCEstimate:
    """Mean time for one walk from ``start`` to visit every node
    (continuous unit-rate time, or plain steps when ``discrete``)."""
    if isinstance(stream, int):
        stream = RngStream(master_seed=stream, stream_id=0)
    rng = stream.generator()
    offsets, flat = g.csr
    deg = np.diff(offsets)
    n = g.n
    out = np.zeros(trials)
    for i in range(trials):
        seen = bytearray(n)
        seen[start] = 1
        remaining = n - 1
        pos = start
        steps = 0
        while remaining:
            steps += 1
            pos = int(flat[offsets[pos] + int(rng.random() * deg[pos])])
            if not seen[pos]:
                seen[pos] = 1
                remaining -= 1
        if discrete:
            out[i] = steps
        else:
            out[i] = rng.standard_exponential(steps).sum() if steps else 0.0
    return MCEstimate(float(out.mean()), float(out.std(ddof=1) / math.sqrt(trials)), trials)


# ----------------------------------------------------------------------
# Token decay
# ----------------------------------------------------------------------


def geometric_grid(t_end: float, points_per_decade: int = 64) -> np.ndarray:
    """[0] followed by a geometric grid up to t_end."""
    if t_end <= 0:
        return np.array([0.0])
    lo = min(1.0, t_end / 10)
    decades = max(math.log10(t_end / lo), 0.1)
    count = max(2, int(math.ceil(decades * points_per_decade)))
    return np.concatenate([[0.0], np.geomspace(lo, t_end, count)])


@dataclass(frozen=True)
class DecayCurve:
    """Estimated expected active-token count of CRW over a time grid,
    with the cumulative expected message curve derived from it."""

    grid: np.ndarray
    n_hat: np.ndarray
    n_se: np.ndarray
    m_hat: np.ndarray
    m_se: np.ndarray
    trials: int
    discrete: bool

    def t_gamma(self, gamma: float) -> tuple:
        """(first grid time with N_hat <= gamma, previous grid time)."""
        for i, (t, c) in enumerate(zip(self.grid, self.n_hat)):
            if c <= gamma:
                return float(t), float(self.grid[max(0, i - 1)])
        return float(self.grid[-1]), float(self.grid[-1])

    def at(self, t: float) -> tuple:
        """(N_hat, M_hat) at the last grid point <= t."""
        i = int(np.searchsorted(self.grid, t, side="right")) - 1
        i = max(0, i)
        return float(self.n_hat[i]), float(self.m_hat[i])

    def write_csv(self, path) -> None:
        lines = ["t,N_hat,stderr,M_hat"]
        lines.extend(
            f"{t!r},{nh!r},{se!r},{mh!r}"
            for t, nh, se, mh in zip(self.grid, self.n_hat, self.n_se, self.m_hat)
        )
        from pathlib import Path

        Path(path).write_text("\n".join(lines) + "\n")


def estimate_decay(
    g: Graph,
    trials: int = 100,
    grid: Optional[np.ndarray] = None,
    stream: RngStream | int = 0,
    lazy_prob: Optional[float] = None,
) -> DecayCurve:
    """Monte-Carlo token-decay curve of CRW.

    Runs full CRW trials and reads the active-count step functions on a
    shared grid.  ``lazy_prob`` switches to synchronized discrete rounds;
    the message curve then uses per-round sums (every active token is
    charged one message per round) instead of the time integral.
    """
    if isinstance(stream, int):
        stream = RngStream(master_seed=stream, stream_id=0)
    discrete = lazy_prob is not None
    clock = SynchronousDiscrete(lazy_prob) if discrete else None
    fusion = sum_fusion()
    zero = [0] * g.n
    curves = []
    t_end = 0.0
    for trial in range(trials):
        st = init(
            ProtocolKind.CRW,
            g,
            zero,
            fusion,
            seed=stream.master_seed,
            stream_id=stream.stream_id + trial,
            clock=clock if discrete else Continuous(),
        )
        tr = run(st, Termination())
        curves.append((np.asarray(tr.times), np.asarray(tr.active_counts, dtype=float)))
        t_end = max(t_end, tr.tau)
    if grid is None:
        grid = (
            np.unique(np.concatenate([[0.0], np.rint(geometric_grid(t_end))]))
            if discrete
            else geometric_grid(t_end)
        )
    grid = np.asarray(grid, dtype=float)
    samples = np.empty((trials, len(grid)))
    integrals = np.empty((trials, len(grid)))
    for i, (times, counts) in enumerate(curves):
        idx = np.clip(np.searchsorted(times, grid, side="right") - 1, 0, len(counts) - 1)
        samples[i] = counts[idx]
        if discrete:
            # per-round message accounting: sum of counts over rounds <= t
            rounds = np.arange(0.0, grid[-1] + 1.0)
            ridx = np.clip(np.searchsorted(times, rounds, side="right") - 1, 0, len(counts) - 1)
            per_round = counts[ridx]
            cum = np.concatenate([[0.0], np.cumsum(per_round)])
            integrals[i] = cum[np.clip(grid.astype(np.int64) + 1, 0, len(cum) - 1)]
        else:
            integrals[i] = _step_integral(times, counts, grid)
    n_hat = samples.mean(axis=0)
    n_se = samples.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros_like(n_hat)
    m_hat = integrals.mean(axis=0)
    m_se = integrals.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros_like(m_hat)
    return DecayCurve(grid, n_hat, n_se, m_hat, m_se, trials, discrete)


def _step_integral(times: np.ndarray, counts: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Exact pathwise integral of a step function at each grid time."""
    # cumulative area at each breakpoint
    widths = np.diff(times)
    area = np.concatenate([[0.0], np.cumsum(counts[:-1] * widths)])
    idx = np.clip(np.searchsorted(times, grid, side="right") - 1, 0, len(times) - 1)
    return area[idx] + counts[idx] * (grid - times[idx])


# ----------------------------------------------------------------------
# Coalescing-system oracle and contraction checks
# ----------------------------------------------------------------------


def coalescing_oracle(
    g: Graph,
    b: Sequence[int],
    s_values: Sequence[float],
    trials: int = 1000,
    stream: RngStream | int = 0,
) -> list:
    """Expected surviving-token counts E|Lambda_B(s)| of a coalescing
    walk started on B, at each requested time, on coupled trajectories
    (so the estimates are pathwise nonincreasing in s)."""
    if isinstance(stream, int):
        stream = RngStream(master_seed=stream, stream_id=0)
    b = sorted(set(b))
    if not b:
        raise ValueError("start set must be nonempty")
    s_values = list(s_values)
    s_max = max(s_values)
    order = np.argsort(s_values)
    nbr = g.neighbor_lists
    counts = np.zeros((trials, len(s_values)))
    for trial in range(trials):
        sampler = RngStream(stream.master_seed, stream.stream_id + trial).sampler()
        occupied = set(b)
        t = 0.0
        pos = list(b)
        remaining = [(s_values[i], i) for i in order]
        ptr = 0
        while ptr < len(remaining):
            k = len(pos)
            if k == 1:
                break
            t += sampler.exponential() / k
            while ptr < len(remaining) and t > remaining[ptr][0]:
                counts[trial, remaining[ptr][1]] = k
                ptr += 1
            if ptr == len(remaining):
                break
            i = int(sampler.uniform() * k)
            node = pos[i]
            nbrs = nbr[node]
            dest = nbrs[int(sampler.uniform() * len(nbrs))]
            occupied.discard(node)
            if dest in occupied:
                pos[i] = pos[-1]
                pos.pop()
            else:
                occupied.add(dest)
                pos[i] = dest
        while ptr < len(remaining):
            counts[trial, remaining[ptr][1]] = len(pos)
            ptr += 1
    return [
        MCEstimate(float(c.mean()), float(c.std(ddof=1) / math.sqrt(trials)), trials)
        for c in counts.T
    ]


@dataclass(frozen=True)
class ContractionReport:
    n_t: MCEstimate
    n_t_plus_s: MCEstimate
    alpha: MeetingEstimate
    partitions: int
    precondition_ok: bool
    rhs: float
    slack: float
    holds_within_ci: bool


def check_contraction(
    g: Graph,
    t: float,
    s: float,
    partition: Sequence[Sequence[int]],
    trials: int = 2000,
    stream: RngStream | int = 0,
) -> ContractionReport:
    """Empirically verify the one-step token contraction
    N(t+s) <= N(t) exp(-alpha_s(partition)/2)."""
    blocks = [sorted(set(a)) for a in partition]
    covered = sorted(v for a in blocks for v in a)
    if covered != list(range(g.n)):
        raise ValueError("partition must cover all nodes disjointly")
    if isinstance(stream, int):
        stream = RngStream(master_seed=stream, stream_id=0)
    n_t, n_ts = coalescing_oracle(g, range(g.n), [t, t + s], trials=trials, stream=stream)
    alpha_best = None
    for bi, block in enumerate(blocks):
        if len(block) < 2:
            continue
        est = estimate_alpha(
            g, block, s, trials=max(200, trials // 4),
            stream=RngStream(stream.master_seed, stream.stream_id + 7919 + bi),
        )
        if alpha_best is None or est.alpha_hat < alpha_best.alpha_hat:
            alpha_best = est
    if alpha_best is None:
        raise ValueError("partition has no block with two nodes")
    m_t = len(blocks)
    rhs = n_t.mean * math.exp(-alpha_best.alpha_hat / 2)
    # first-order CI propagation for the right-hand side
    rhs_se = math.exp(-alpha_best.alpha_hat / 2) * (
        n_t.stderr + n_t.mean * alpha_best.half_width / 2
    )
    slack = rhs - n_ts.mean
    return ContractionReport(
        n_t=n_t,
        n_t_plus_s=n_ts,
        alpha=alpha_best,
        partitions=m_t,
        precondition_ok=m_t <= n_t.mean / 2,
        rhs=rhs,
        slack=slack,
        holds_within_ci=n_ts.mean <= rhs + 3 * (rhs_se + n_ts.stderr),
    )


# ----------------------------------------------------------------------
# Heat-kernel (Gaussian) lower bound
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianBoundReport:
    c3: float
    c4: float
    t_max: int
    lazy_prob: float
    feasible: bool
    violations: list = field(default_factory=list)


def check_gaussian_bound(g: Graph, t_max: int, lazy_prob: float = 0.5) -> GaussianBoundReport:
    """Fit constants for the lazy-walk transition lower bound
    (c3/t) exp(-d(u,v)^2 / (c4 t)) <= P_t(u,v) + P_{t+1}(u,v).

    c4 comes from least squares on log(t (P_t + P_{t+1})) against
    d^2/t; c3 is then the largest constant with zero violations over
    all 1 <= d(u,v) <= t <= t_max.
    """
    n = g.n
    if n > 2500:
        raise SolverError("dense matrix powers capped at 2500 nodes")
    p = (1 - lazy_prob) * _transition_matrix(g) + lazy_prob * np.eye(n)
    dist = np.vstack([distances_from(g, u) for u in range(n)])
    xs, ys = [], []
    ratios = []  # (t*(Pt+Pt1), d^2/t) per constraint for the c3 pass
    violations = []
    pt = p.copy()  # P^1
    for t in range(1, t_max + 1):
        pt1 = pt @ p
        q = pt + pt1
        mask = (dist >= 1) & (dist <= t)
        qv = q[mask]
        dv = dist[mask].astype(float)
        zero = qv <= 0
        if np.any(zero):
            for (u, v), val in zip(np.argwhere(mask)[zero], qv[zero]):
                violations.append((int(u), int(v), t, float(val)))
        good = ~zero
        xs.append((dv[good] ** 2) / t)
        ys.append(np.log(t * qv[good]))
        ratios.append((t * qv[good], (dv[good] ** 2) / t))
        pt = pt1
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    if violations:
        return GaussianBoundReport(0.0, 0.0, t_max, lazy_prob, False, violations)
    a = np.vstack([x, np.ones_like(x)]).T
    (slope, _), *_ = np.linalg.lstsq(a, y, rcond=None)
    c4 = -1.0 / slope if slope < 0 else math.inf
    c3 = math.inf
    for tq, x_over in ratios:
        if math.isinf(c4):
            c3 = min(c3, float(tq.min()))
        else:
            c3 = min(c3, float((tq * np.exp(x_over / c4)).min()))
    return GaussianBoundReport(float(c3), float(c4), t_max, lazy_prob, c3 > 0, [])


def collision_count(g: Graph, u: int, w: int, t_max: int, lazy_prob: float = 0.5) -> float:
    """Expected number of co-locations of two independent lazy walks from
    u and w over rounds 0..t_max: sum_t sum_v P_t(u,v) P_t(w,v)."""
    n = g.n
    p = (1 - lazy_prob) * _transition_matrix(g) + lazy_prob * np.eye(n)
    pu = np.zeros(n)
    pu[u] = 1.0
    pw = np.zeros(n)
    pw[w] = 1.0
    total = float(pu @ pw)
    for _ in range(t_max):
        pu = pu @ p
        pw = pw @ p
        total += float(pu @ pw)
    return total


def mc_collision_count(
    g: Graph,
    u: int,
    w: int,
    t_max: int,
    trials: int = 2000,
    stream: RngStream | int = 0,
    lazy_prob: float = 0.5,
) -> MCEstimate:
    """Monte-Carlo cross-check of :func:`collision_count`."""
    if isinstance(stream, int):
        stream = RngStream(master_seed=stream, stream_id=0)
    rng = stream.generator()
    offsets, flat = g.csr
    deg = np.diff(offsets)
    a = np.full(trials, u, dtype=np.int64)
    b = np.full(trials, w, dtype=np.int64)
    hits = (a == b).astype(np.int64)
    for _ in range(t_max):
        for pos in (a, b):
            move = rng.random(trials) >= lazy_prob
            nodes = np.nonzero(move)[0]
            cur = pos[nodes]
            step = (rng.random(len(nodes)) * deg[cur]).astype(np.int64)
            pos[nodes] = flat[offsets[cur] + step]
        hits += a == b
    return MCEstimate(
        float(hits.mean()), float(hits.std(ddof=1) / math.sqrt(trials)), trials
    )


# ----------------------------------------------------------------------
# Combined regularity report
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class RegularityReport:
    c0: float
    c1: float
    c5: float
    c8: Optional[float]
    c3: Optional[float]
    c4: Optional[float]
    growth_pass: bool
    doubling_pass: bool = True
    isoperimetry_pass: Optional[bool] = None
    gaussian_pass: Optional[bool] = None


def regularity_report(
    g: Graph,
    t_max: Optional[int] = None,
    lazy_prob: float = 0.5,
) -> RegularityReport:
    """Bundle the measured regularity constants of a graph: quadratic
    ball growth, volume doubling, a small-ball isoperimetry certificate,
    and (for graphs small enough for matrix powers) the heat-kernel
    bound constants."""
    growth = check_geometric_neighborhood(g)
    c5 = check_volume_doubling(g)
    c8 = None
    diam = diameter(g)
    for u in _regularity_centers(g):
        radius = 2
        while radius + 1 <= diam + 1 and len(ball(g, u, radius + 1)) <= 16:
            radius += 1
        if len(ball(g, u, radius)) >= 2:
            cert = check_isoperimetry(g, u, radius)
            if cert.connected:
                c8 = cert.value if c8 is None else min(c8, cert.value)
    c3 = c4 = None
    gaussian_pass = None
    if t_max is not None:
        rep = check_gaussian_bound(g, t_max, lazy_prob)
        c3, c4, gaussian_pass = rep.c3, rep.c4, rep.feasible
    return RegularityReport(
        c0=growth.c0_best,
        c1=growth.c1_best,
        c5=c5,
        c8=c8,
        c3=c3,
        c4=c4,
        growth_pass=growth.passed,
        doubling_pass=math.isfinite(c5) and c5 > 0,
        isoperimetry_pass=None if c8 is None else c8 > 0,
        gaussian_pass=gaussian_pass,
    )


def _regularity_centers(g: Graph, limit: int = 4) -> list:
    if g.n <= limit:
        return list(range(g.n))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(g.seed, spawn_key=(0xC8,))))
    return sorted(rng.choice(g.n, size=limit, replace=False).tolist())
