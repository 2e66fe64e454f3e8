"""Graph representation, topology generators, and structural regularity checks.

All generators produce simple, undirected, connected graphs and are
deterministic functions of their spec (including the seed).  The
regularity checkers measure the ball-growth, volume-doubling, and
isoperimetry constants that control how fast coalescing walks thin out.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np


class GraphGenerationError(RuntimeError):
    """A generator could not produce a valid (connected, simple) graph."""


@dataclass(frozen=True)
class GraphSpec:
    """Parameters of one topology: kind plus its size/shape knobs and seed."""

    kind: str
    n: int = 0
    side: int = 0  # lattice side for torus / grid2d
    dim: int = 0  # torus dimension
    radius: float = 0.0  # rgg connection radius (0 -> default)
    degree: int = 0  # random_regular degree
    seed: int = 0

    @classmethod
    def clique(cls, n: int) -> "GraphSpec":
        return cls(kind="clique", n=n)

    @classmethod
    def ring(cls, n: int) -> "GraphSpec":
        return cls(kind="ring", n=n)

    @classmethod
    def torus(cls, side: int, dim: int = 2) -> "GraphSpec":
        return cls(kind="torus", side=side, dim=dim, n=side**dim)

    @classmethod
    def grid2d(cls, side: int) -> "GraphSpec":
        return cls(kind="grid2d", side=side, n=side * side)

    @classmethod
    def rgg(cls, n: int, seed: int, radius: float = 0.0) -> "GraphSpec":
        return cls(kind="rgg", n=n, radius=radius, seed=seed)

    @classmethod
    def random_regular(cls, n: int, degree: int, seed: int) -> "GraphSpec":
        return cls(kind="random_regular", n=n, degree=degree, seed=seed)


def default_rgg_radius(n: int) -> float:
    """Connectivity-threshold radius sqrt(2 ln n / n) (natural log)."""
    return math.sqrt(2.0 * math.log(n) / n)


@dataclass(frozen=True, eq=True)
class Graph:
    """An immutable simple undirected graph with generator provenance.

    ``adjacency`` holds per-node sorted neighbor tuples; ``coords`` is
    only set for geometric graphs.  Instances are safe to share across
    concurrent trial executors.
    """

    n: int
    adjacency: Tuple[Tuple[int, ...], ...]
    kind: str
    seed: int
    coords: Optional[Tuple[Tuple[float, float], ...]] = None
    attempts: int = field(default=1, compare=False)  # generator retries used

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("graph must have at least one node")
        if len(self.adjacency) != self.n:
            raise ValueError("adjacency length does not match node count")

    @cached_property
    def degrees(self) -> Tuple[int, ...]:
        return tuple(len(a) for a in self.adjacency)

    @cached_property
    def m(self) -> int:
        """Number of undirected edges."""
        return sum(self.degrees) // 2

    @cached_property
    def edges(self) -> Tuple[Tuple[int, int], ...]:
        return tuple(
            (u, v) for u in range(self.n) for v in self.adjacency[u] if u < v
        )

    @cached_property
    def neighbor_lists(self) -> list:
        """Plain list-of-lists view for hot simulation loops."""
        return [list(a) for a in self.adjacency]

    @cached_property
    def csr(self) -> Tuple[np.ndarray, np.ndarray]:
        """(offsets, flat neighbor array) in CSR layout."""
        offsets = np.zeros(self.n + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([len(a) for a in self.adjacency])
        flat = np.fromiter(
            (v for a in self.adjacency for v in a), dtype=np.int64, count=2 * self.m
        )
        return offsets, flat


def _build(
    n: int,
    edges: Iterable[Tuple[int, int]],
    kind: str,
    seed: int,
    coords=None,
    attempts: int = 1,
) -> Graph:
    adj: list = [[] for _ in range(n)]
    seen = set()
    for u, v in edges:
        if u == v:
            raise GraphGenerationError(f"self-edge at node {u}")
        a, b = (u, v) if u < v else (v, u)
        if (a, b) in seen:
            raise GraphGenerationError(f"duplicate edge ({a},{b})")
        seen.add((a, b))
        adj[a].append(b)
        adj[b].append(a)
    return Graph(
        n=n,
        adjacency=tuple(tuple(sorted(a)) for a in adj),
        kind=kind,
        seed=seed,
        coords=coords,
        attempts=attempts,
    )


# ----------------------------------------------------------------------
# Generators
# ----------------------------------------------------------------------


def clique(n: int) -> Graph:
    if n < 1:
        raise ValueError("clique needs n >= 1")
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)]
    return _build(n, edges, "clique", 0)


def ring(n: int) -> Graph:
    if n < 2:
        raise ValueError("ring needs n >= 2")
    if n == 2:
        edges = [(0, 1)]
    else:
        edges = [(i, (i + 1) % n) for i in range(n)]
    return _build(n, edges, "ring", 0)


def torus(side: int, dim: int = 2) -> Graph:
    """d-dimensional lattice torus: every node has exactly 2*dim neighbors."""
    if side < 3:
        raise ValueError("torus needs side >= 3 (smaller sides duplicate edges)")
    if dim < 1:
        raise ValueError("torus needs dim >= 1")
    n = side**dim
    strides = [side**k for k in range(dim)]

    def coord(i):
        return [(i // strides[k]) % side for k in range(dim)]

    edges = []
    for i in range(n):
        c = coord(i)
        for k in range(dim):
            c2 = list(c)
            c2[k] = (c[k] + 1) % side
            j = sum(c2[q] * strides[q] for q in range(dim))
            edges.append((i, j))
    return _build(n, edges, f"torus{{N={side},d={dim}}}", 0)


def grid2d(side: int) -> Graph:
    """N x N grid without wraparound (the 2-d mesh)."""
    if side < 2:
        raise ValueError("grid2d needs side >= 2")
    n = side * side
    edges = []
    for y in range(side):
        for x in range(side):
            u = y * side + x
            if x + 1 < side:
                edges.append((u, u + 1))
            if y + 1 < side:
                edges.append((u, u + side))
    return _build(n, edges, f"grid2d{{N={side}}}", 0)


def rgg(
    n: int,
    seed: int,
    radius: float = 0.0,
    max_attempts: int = 50,
) -> Graph:
    """Random geometric graph on the unit square.

    Nodes are uniform points; an edge joins pairs at Euclidean distance
    <= radius.  Disconnected draws are discarded and retried with fresh
    derived seeds; the number of attempts used is recorded on the graph.
    """
    if n < 2:
        raise ValueError("rgg needs n >= 2")
    r = radius if radius > 0 else default_rgg_radius(n)
    for attempt in range(max_attempts):
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(attempt,)))
        )
        pts = rng.random((n, 2))
        dx = pts[:, 0][:, None] - pts[:, 0][None, :]
        dy = pts[:, 1][:, None] - pts[:, 1][None, :]
        close = (dx * dx + dy * dy) <= r * r
        iu, iv = np.nonzero(np.triu(close, k=1))
        edges = list(zip(iu.tolist(), iv.tolist()))
        g = _build(
            n,
            edges,
            f"rgg{{r={r!r}}}",
            seed,
            coords=tuple((float(x), float(y)) for x, y in pts),
            attempts=attempt + 1,
        )
        if is_connected(g):
            return g
    raise GraphGenerationError(
        f"rgg(n={n}, r={r:.4g}) not connected within {max_attempts} attempts"
    )


def random_regular(n: int, degree: int, seed: int, max_attempts: int = 500) -> Graph:
    """Random d-regular graph via the pairing model.

    Loops and multi-edges are rejected as stubs are paired; leftover
    stubs are re-shuffled while a valid completion remains possible and
    the whole pairing restarts otherwise (the standard repair scheme:
    wholesale rejection has vanishing acceptance already at d=6).
    Disconnected results are also rejected.
    """
    if not 0 < degree < n:
        raise ValueError("random_regular needs 0 < degree < n")
    if (n * degree) % 2 != 0:
        raise ValueError("n * degree must be even")

    def completion_possible(edges, leftover):
        if not leftover:
            return True
        for s1 in leftover:
            for s2 in leftover:
                if s1 == s2:
                    break
                a, b = (s1, s2) if s1 < s2 else (s2, s1)
                if (a, b) not in edges:
                    return True
        return False

    for attempt in range(max_attempts):
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(attempt,)))
        )
        edges: set = set()
        stubs = list(np.repeat(np.arange(n), degree))
        failed = False
        while stubs:
            leftover: dict = {}
            rng.shuffle(stubs)
            for s1, s2 in zip(stubs[::2], stubs[1::2]):
                s1, s2 = int(s1), int(s2)
                if s1 > s2:
                    s1, s2 = s2, s1
                if s1 != s2 and (s1, s2) not in edges:
                    edges.add((s1, s2))
                else:
                    leftover[s1] = leftover.get(s1, 0) + 1
                    leftover[s2] = leftover.get(s2, 0) + 1
            if not completion_possible(edges, leftover):
                failed = True
                break
            stubs = [node for node, c in leftover.items() for _ in range(c)]
        if failed:
            continue
        g = _build(
            n,
            sorted(edges),
            f"random_regular{{d={degree}}}",
            seed,
            attempts=attempt + 1,
        )
        if is_connected(g):
            return g
    raise GraphGenerationError(
        f"random_regular(n={n}, d={degree}) failed within {max_attempts} attempts"
    )


def generate(spec: GraphSpec) -> Graph:
    """Build the graph described by ``spec``; always connected or raises."""
    if spec.kind == "clique":
        return clique(spec.n)
    if spec.kind == "ring":
        return ring(spec.n)
    if spec.kind == "torus":
        return torus(spec.side, spec.dim or 2)
    if spec.kind == "grid2d":
        return grid2d(spec.side)
    if spec.kind == "rgg":
        return rgg(spec.n, spec.seed, spec.radius)
    if spec.kind == "random_regular":
        return random_regular(spec.n, spec.degree, spec.seed)
    raise ValueError(f"unknown graph kind {spec.kind!r}")


# ----------------------------------------------------------------------
# Distances, balls, volumes
# ----------------------------------------------------------------------


def distances_from(g: Graph, u: int) -> np.ndarray:
    """BFS hop distances from ``u`` to every node (-1 if unreachable)."""
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[u] = 0
    adj = g.adjacency
    q = deque([u])
    while q:
        x = q.popleft()
        dx = dist[x] + 1
        for y in adj[x]:
            if dist[y] < 0:
                dist[y] = dx
                q.append(y)
    return dist


def graph_distance(g: Graph, u: int, v: int) -> int:
    """Minimal number of edges on any path from u to v."""
    if u == v:
        return 0
    dist = distances_from(g, u)
    d = int(dist[v])
    if d < 0:
        raise ValueError(f"nodes {u} and {v} are not connected")
    return d


def ball(g: Graph, u: int, radius: int) -> set:
    """Nodes at distance strictly less than ``radius`` from u."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius == 0:
        return set()
    dist = distances_from(g, u)
    return set(np.nonzero((dist >= 0) & (dist < radius))[0].tolist())


def volume(g: Graph, nodes: Iterable[int]) -> int:
    """Sum of degrees over a node set (edge-endpoint count)."""
    deg = g.degrees
    return sum(deg[v] for v in nodes)


def is_connected(g: Graph) -> bool:
    return bool(np.all(distances_from(g, 0) >= 0))


def eccentricity(g: Graph, u: int) -> int:
    dist = distances_from(g, u)
    if np.any(dist < 0):
        raise ValueError("graph is not connected")
    return int(dist.max())


def diameter(g: Graph) -> int:
    """Exact diameter by all-pairs BFS up to 10^4 nodes.

    Above that a double-sweep lower bound is returned (flagged via
    :func:`diameter_is_exact`).
    """
    if diameter_is_exact(g):
        return max(eccentricity(g, u) for u in range(g.n))
    far = int(np.argmax(distances_from(g, 0)))
    return eccentricity(g, far)


def diameter_is_exact(g: Graph) -> bool:
    return g.n <= 10_000


# ----------------------------------------------------------------------
# Regularity checkers
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class GrowthReport:
    """Measured ball-growth constants |B(u,R)| >= c0*R^2 and annulus bound."""

    c0_best: float
    c0_argmin: Tuple[int, int]  # (u, R) achieving the worst quadratic ratio
    c1_best: float
    c1_argmax: Tuple[int, int, int]  # (u, R, delta)
    passed: bool
    sampled: bool


def _sample_nodes(g: Graph, limit: int) -> Sequence[int]:
    if g.n <= limit:
        return range(g.n)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(g.seed, spawn_key=(0xBA11,))))
    return sorted(rng.choice(g.n, size=limit, replace=False).tolist())


def check_geometric_neighborhood(g: Graph) -> GrowthReport:
    """Measure the quadratic-growth constants of ball sizes.

    R runs from 2 to max(2, diameter/2): the radius-1 ball is the
    singleton {u} for every graph so it carries no growth information,
    and balls past half the diameter saturate against the boundary.
    Exhaustive in (u, R, delta) up to 2000 nodes, sampled above.
    """
    if g.n < 2:
        raise ValueError("growth check needs n >= 2")
    diam = diameter(g)
    sampled = g.n > 2000
    nodes = _sample_nodes(g, 64) if sampled else range(g.n)
    r_max = max(2, (diam + 1) // 2)
    radii = (
        sorted(set(np.unique(np.geomspace(2, r_max, 16).astype(int)).tolist()))
        if sampled
        else range(2, r_max + 1)
    )
    c0_best = math.inf
    c0_arg = (0, 0)
    c1_best = 0.0
    c1_arg = (0, 0, 0)
    for u in nodes:
        dist = distances_from(g, u)
        sizes = np.bincount(dist, minlength=2 * r_max + 2).cumsum()
        # sizes[k] = #{v : d(u,v) <= k} = |B(u, k+1)|
        for R in radii:
            if not 2 <= R <= r_max:
                continue
            ratio = sizes[R - 1] / (R * R)
            if ratio < c0_best:
                c0_best, c0_arg = float(ratio), (int(u), int(R))
            deltas = (
                sorted({1, R // 2 or 1, R}) if sampled else range(1, R + 1)
            )
            for delta in deltas:
                annulus = sizes[R + delta - 1] - sizes[R - 1]
                ratio1 = annulus / (delta * R)
                if ratio1 > c1_best:
                    c1_best, c1_arg = float(ratio1), (int(u), int(R), int(delta))
    passed = math.isfinite(c0_best) and c0_best > 0 and math.isfinite(c1_best)
    return GrowthReport(c0_best, c0_arg, c1_best, c1_arg, passed, sampled)


def check_volume_doubling(g: Graph) -> float:
    """Worst Vol(u,2R)/Vol(u,R) over sampled (u, R), R from 2 up."""
    diam = diameter(g)
    nodes = _sample_nodes(g, 64) if g.n > 2000 else range(g.n)
    worst = 0.0
    r_max = diam + 1
    for u in nodes:
        dist = distances_from(g, u)
        deg = np.asarray(g.degrees)
        volumes = np.zeros(2 * r_max + 2)
        for d, w in zip(dist, deg):
            volumes[d + 1] += w
        volumes = volumes.cumsum()
        # volumes[R] = Vol(u, R) for the strict ball of radius R
        for R in range(2, r_max + 1):
            v1 = volumes[min(R, 2 * r_max + 1)]
            v2 = volumes[min(2 * R, 2 * r_max + 1)]
            if v1 > 0:
                worst = max(worst, v2 / v1)
    return worst


@dataclass(frozen=True)
class IsoperimetryCertificate:
    value: float
    mode: str  # "exact" | "sweep"
    connected: bool
    label: str


def check_isoperimetry(g: Graph, u: int, radius: int) -> IsoperimetryCertificate:
    """Worst normalized cut R*Cut(S,Sc)/min(Vol(S),Vol(Sc)) of the induced ball.

    Exact enumeration of all 2-partitions up to 16 ball nodes; above that
    a Fiedler sweep cut, which only upper-bounds the true minimum (it can
    certify failure, not success).  Volumes are taken within the induced
    subgraph.  A disconnected induced ball is reported with constant 0.
    """
    nodes = sorted(ball(g, u, radius))
    if len(nodes) < 2:
        raise ValueError("isoperimetry needs a ball with at least 2 nodes")
    index = {v: i for i, v in enumerate(nodes)}
    k = len(nodes)
    sub = [[] for _ in range(k)]
    for v in nodes:
        for w in g.adjacency[v]:
            if w in index:
                sub[index[v]].append(index[w])
    # connectivity of the induced subgraph
    seen = {0}
    stack = [0]
    while stack:
        x = stack.pop()
        for y in sub[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    if len(seen) < k:
        return IsoperimetryCertificate(0.0, "exact", False, "disconnected induced ball")
    deg = [len(a) for a in sub]
    if k <= 16:
        best = math.inf
        for mask in range(1, (1 << (k - 1))):  # fix node k-1 out of S: halves the count
            vol_s = 0
            cut = 0
            for i in range(k):
                if mask >> i & 1:
                    vol_s += deg[i]
                    for j in sub[i]:
                        if not (mask >> j & 1):
                            cut += 1
            vol_c = sum(deg) - vol_s
            denom = min(vol_s, vol_c)
            if denom > 0:
                best = min(best, radius * cut / denom)
        return IsoperimetryCertificate(float(best), "exact", True, "exact minimum")
    lap = np.diag(deg).astype(float)
    for i in range(k):
        for j in sub[i]:
            lap[i, j] -= 1.0
    vals, vecs = np.linalg.eigh(lap)
    fiedler = vecs[:, 1]
    order = np.argsort(fiedler)
    best = math.inf
    in_s = np.zeros(k, dtype=bool)
    vol_s = 0
    cut = 0
    total = sum(deg)
    for idx in order[:-1]:
        in_s[idx] = True
        vol_s += deg[idx]
        for j in sub[idx]:
            cut += -1 if in_s[j] else 1
        denom = min(vol_s, total - vol_s)
        if denom > 0:
            best = min(best, radius * cut / denom)
    return IsoperimetryCertificate(
        float(best), "sweep", True, "upper bound - failure certifiable, success not"
    )


def spectral_gap(g: Graph) -> float:
    """1 - lambda_2 of the walk transition matrix (via the symmetric form)."""
    if g.n > 4000:
        raise ValueError("dense spectral gap capped at 4000 nodes")
    deg = np.asarray(g.degrees, dtype=float)
    a = np.zeros((g.n, g.n))
    for u in range(g.n):
        for v in g.adjacency[u]:
            a[u, v] = 1.0
    dinv = 1.0 / np.sqrt(deg)
    sym = a * dinv[:, None] * dinv[None, :]
    vals = np.linalg.eigvalsh(sym)
    return float(1.0 - vals[-2])


@dataclass(frozen=True)
class BinOccupancyReport:
    """Occupancy of square bins of area r^2/mu for a geometric graph."""

    bins_per_side: int
    min_count: int
    max_count: int
    expected: float


def rgg_bin_occupancy(g: Graph, mu: float = 1.0) -> BinOccupancyReport:
    if g.coords is None:
        raise ValueError("bin occupancy needs node coordinates")
    r = _rgg_radius_from_kind(g.kind)
    side = max(1, int(math.floor(math.sqrt(mu) / r)))
    counts = np.zeros((side, side), dtype=int)
    for x, y in g.coords:
        i = min(int(x * side), side - 1)
        j = min(int(y * side), side - 1)
        counts[i, j] += 1
    return BinOccupancyReport(
        bins_per_side=side,
        min_count=int(counts.min()),
        max_count=int(counts.max()),
        expected=g.n / (side * side),
    )


def _rgg_radius_from_kind(kind: str) -> float:
    if not kind.startswith("rgg{r="):
        raise ValueError(f"not a geometric graph kind: {kind!r}")
    return float(kind[len("rgg{r=") : -1])


# ----------------------------------------------------------------------
# Edge-list file format
# ----------------------------------------------------------------------


def save_graph(g: Graph, path) -> None:
    """Write the text edge-list format.

    First line ``n m kind seed``, then one ``u v`` line per edge with
    u < v, then (geometric graphs only) one ``c x y`` line per node.
    Round-trips bit-exactly through :func:`load_graph`.
    """
    lines = [f"{g.n} {g.m} {g.kind} {g.seed}"]
    lines.extend(f"{u} {v}" for u, v in g.edges)
    if g.coords is not None:
        lines.extend(f"c {x!r} {y!r}" for x, y in g.coords)
    Path(path).write_text("\n".join(lines) + "\n")


def load_graph(path) -> Graph:
    text = Path(path).read_text().strip().splitlines()
    n_s, m_s, kind, seed_s = text[0].split()
    n, m, seed = int(n_s), int(m_s), int(seed_s)
    edges = []
    for line in text[1 : 1 + m]:
        u_s, v_s = line.split()
        edges.append((int(u_s), int(v_s)))
    coords = None
    rest = text[1 + m :]
    if rest:
        if len(rest) != n:
            raise ValueError("coordinate block must have one line per node")
        coords = []
        for line in rest:
            tag, x_s, y_s = line.split()
            if tag != "c":
                raise ValueError(f"malformed coordinate line: {line!r}")
            coords.append((float(x_s), float(y_s)))
        coords = tuple(coords)
    return _build(n, edges, kind, seed, coords=coords)
