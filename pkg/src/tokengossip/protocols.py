"""Node state machines and global dynamics of the token protocols.

Every protocol builds on the same per-node automaton: an active node's
clock tick sends its (value, count) payload to a random neighbor and
leaves the sender holding the fusion identity with count zero and no
transmission permit; a reception fuses the payload in and grants the
permit.  SRW starts with one permit, CRW with all of them (permits then
coalesce), GOSSIP-AVE keeps every node permitted forever, CFLD floods
surviving payloads, and the two-phase scheme chains CRW into CFLD to
reach exact consensus at every node.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .engine import (
    RNG_ALGORITHM,
    BlockSampler,
    ClockMode,
    Continuous,
    RngStream,
    SynchronousDiscrete,
)
from .fusion import FusionSpec, FusionValue, TokenPayload, fold, sum_fusion, weighted_avg_fusion
from .graph import Graph


_log = logging.getLogger(__name__)


class ProtocolError(RuntimeError):
    """A protocol invariant was violated (a bug, never a random outcome)."""


class ProtocolKind(str, Enum):
    SRW = "srw"
    CRW = "crw"
    GOSSIP = "gossip"
    TWO_PHASE = "two_phase"
    HYBRID_K = "hybrid_k"


# -- stop conditions ----------------------------------------------------


@dataclass(frozen=True)
class Termination:
    """Run until some node's count reaches n."""


@dataclass(frozen=True)
class MaxTime:
    t: float


@dataclass(frozen=True)
class GossipEps:
    """Stop when ||z - mean|| / ||z(0)|| drops below eps."""

    eps: float
    horizon: int = 1_000_000_000  # max exchanges before flagging incomplete


@dataclass(frozen=True)
class ExplicitTime:
    """Two-phase switch at a fixed deterministic time."""

    t: float


@dataclass(frozen=True)
class TargetGamma:
    """Two-phase switch at the estimated time the expected token count
    drops to gamma, resolved from pilot CRW trials."""

    gamma: float
    pilot_trials: int = 32


@dataclass(frozen=True)
class NodeState:
    value: FusionValue
    count: int
    status: str  # "active" | "inactive"


@dataclass
class GossipMatrix:
    """An admissible stochastic matrix: support restricted to edges."""

    graph: Graph
    rows: Optional[list] = None  # per-node (neighbors, cumulative probs); None = uniform

    @classmethod
    def uniform(cls, graph: Graph) -> "GossipMatrix":
        return cls(graph=graph, rows=None)

    @classmethod
    def from_dense(cls, graph: Graph, p: np.ndarray) -> "GossipMatrix":
        p = np.asarray(p, dtype=float)
        if p.shape != (graph.n, graph.n):
            raise ValueError("matrix shape must be (n, n)")
        rows = []
        for i in range(graph.n):
            nbrs = graph.adjacency[i]
            support = set(np.nonzero(p[i])[0].tolist())
            if not support.issubset(set(nbrs)):
                raise ValueError(f"row {i} puts mass outside the neighborhood")
            if not math.isclose(p[i].sum(), 1.0, rel_tol=0, abs_tol=1e-12):
                raise ValueError(f"row {i} does not sum to 1")
            probs = np.array([p[i, j] for j in nbrs])
            rows.append((list(nbrs), np.cumsum(probs)))
        return cls(graph=graph, rows=rows)

    def sample(self, i: int, sampler: BlockSampler) -> int:
        if self.rows is None:
            nbrs = self.graph.neighbor_lists[i]
            return nbrs[int(sampler.uniform() * len(nbrs))]
        nbrs, cum = self.rows[i]
        return nbrs[int(np.searchsorted(cum, sampler.uniform(), side="right"))]


class SimState:
    """Mutable state of one simulation: per-node automata plus the clock,
    message ledger, and the protocol's bookkeeping.  Confined to a single
    thread; the resulting Trace is immutable."""

    __slots__ = (
        "graph",
        "fusion",
        "kind",
        "clock",
        "params",
        "values",
        "counts",
        "status",
        "active_list",
        "active_pos",
        "t",
        "eta",
        "sends",
        "receives",
        "sampler",
        "stream",
        "holder",
        "times",
        "active_counts",
        "message_counts",
        "rounds",
    )

    def __init__(self, graph, fusion, kind, clock, params, stream):
        self.graph = graph
        self.fusion = fusion
        self.kind = kind
        self.clock = clock
        self.params = params
        self.stream = stream
        n = graph.n
        self.values: list = [None] * n
        self.counts = [0] * n
        self.status = bytearray(n)
        self.active_list: list = []
        self.active_pos = [-1] * n
        self.t = 0.0
        self.eta = 0
        self.sends = [0] * n
        self.receives = [0] * n
        self.sampler: BlockSampler = None  # set by init() after setup draws
        self.holder: Optional[int] = None
        self.times = [0.0]
        self.active_counts = [0]
        self.message_counts = [0]
        self.rounds = 0

    # -- active-set bookkeeping (O(1) activate/deactivate/sample) ------

    def activate(self, i: int) -> None:
        if not self.status[i]:
            self.status[i] = 1
            self.active_pos[i] = len(self.active_list)
            self.active_list.append(i)

    def deactivate(self, i: int) -> None:
        pos = self.active_pos[i]
        last = self.active_list[-1]
        self.active_list[pos] = last
        self.active_pos[last] = pos
        self.active_list.pop()
        self.active_pos[i] = -1
        self.status[i] = 0

    @property
    def active_count(self) -> int:
        return len(self.active_list)

    def node_state(self, i: int) -> NodeState:
        return NodeState(
            value=self.values[i],
            count=self.counts[i],
            status="active" if self.status[i] else "inactive",
        )

    def record_curve_point(self) -> None:
        self.times.append(self.t)
        self.active_counts.append(self.active_count)
        self.message_counts.append(self.eta)


def init(
    kind: ProtocolKind | str,
    graph: Graph,
    x: Sequence,
    fusion: Optional[FusionSpec],
    params: Optional[dict] = None,
    seed: int = 0,
    clock: ClockMode = Continuous(),
    stream_id: int = 0,
) -> SimState:
    """Set up per-node variables and permits for one protocol run.

    Every node starts with value x_i and count 1.  Which nodes hold
    transmission permits depends on the protocol: one for SRW, all for
    CRW and GOSSIP, k random ones for the fixed-k hybrid.
    """
    kind = ProtocolKind(kind)
    params = dict(params or {})
    n = graph.n
    if len(x) != n:
        raise ValueError(f"need {n} initial values, got {len(x)}")
    stream = RngStream(master_seed=seed, stream_id=stream_id)
    rng = stream.generator()

    state = SimState(graph, fusion, kind, clock, params, stream)
    if kind is ProtocolKind.GOSSIP:
        state.values = [float(v) for v in x]
    else:
        if fusion is None:
            raise ValueError("token protocols need a fusion spec")
        for v in x:
            fusion.validate_value(v)
        state.values = list(x)
    state.counts = [1] * n

    if kind is ProtocolKind.SRW:
        origin = params.get("origin")
        if origin is None:
            origin = int(rng.integers(n))
            params["origin"] = origin
        if not 0 <= origin < n:
            raise ValueError(f"origin {origin} out of range")
        state.activate(origin)
    elif kind in (ProtocolKind.CRW, ProtocolKind.TWO_PHASE, ProtocolKind.GOSSIP):
        for i in range(n):
            state.activate(i)
    elif kind is ProtocolKind.HYBRID_K:
        k = params.get("k")
        if k is None or not 1 <= k <= n:
            raise ValueError(f"hybrid needs 1 <= k <= n, got {k}")
        if fusion is None or fusion.kind.value != "wavg":
            raise ValueError("hybrid active-active relaxation is defined for weighted averages only")
        for i in sorted(rng.choice(n, size=k, replace=False).tolist()):
            state.activate(i)
    else:
        raise ValueError(f"unhandled kind {kind}")

    state.sampler = BlockSampler(rng)
    state.active_counts[0] = state.active_count
    if n == 1:
        state.holder = 0
    return state


# -- the Figure-level primitives ---------------------------------------


def _send_to(state: SimState, i: int, j: int) -> None:
    # sender releases its permit and is left holding the identity
    v = state.values[i]
    c = state.counts[i]
    state.values[i] = state.fusion.identity
    state.counts[i] = 0
    state.deactivate(i)
    state.sends[i] += 1
    state.eta += 1
    handle_receive(state, j, (v, c))


def handle_send(state: SimState, i: int) -> None:
    """Active node i sends its payload to a uniformly chosen neighbor."""
    if not state.status[i]:
        raise ProtocolError(f"send from inactive node {i}")
    nbrs = state.graph.neighbor_lists[i]
    j = nbrs[int(state.sampler.uniform() * len(nbrs))]
    _send_to(state, i, j)


def handle_receive(state: SimState, j: int, payload) -> None:
    """Node j fuses an incoming payload and (re)gains its permit."""
    if isinstance(payload, TokenPayload):
        v, c = payload.value, payload.count
    else:
        v, c = payload
    state.values[j] = state.fusion.fuse(state.values[j], v)
    state.counts[j] += c
    state.receives[j] += 1
    if not state.status[j]:
        state.activate(j)
    if state.counts[j] == state.graph.n:
        state.holder = j


def detect_termination(state: SimState) -> Optional[int]:
    """The unique node whose count has reached n, if any."""
    n = state.graph.n
    for i, c in enumerate(state.counts):
        if c == n:
            return i
    return None


def synchronous_round(state: SimState) -> None:
    """One synchronized discrete step: every active token independently
    holds (with the lazy probability) or moves to a uniform neighbor;
    all moves land simultaneously, then co-located tokens have fused.

    Two tokens swapping across an edge do not meet: coalescence needs
    co-location after the round.
    """
    lazy = state.clock.lazy_prob if isinstance(state.clock, SynchronousDiscrete) else 0.0
    sampler = state.sampler
    nbr = state.graph.neighbor_lists
    moves = []
    for i in list(state.active_list):
        if lazy and sampler.uniform() < lazy:
            continue
        nbrs = nbr[i]
        moves.append((i, nbrs[int(sampler.uniform() * len(nbrs))]))
    deliveries = []
    for i, j in moves:
        deliveries.append((j, state.values[i], state.counts[i]))
        state.values[i] = state.fusion.identity
        state.counts[i] = 0
        state.deactivate(i)
        state.sends[i] += 1
        state.eta += 1
    for j, v, c in deliveries:
        handle_receive(state, j, (v, c))
    state.t += 1.0
    state.rounds += 1


# -- invariant instrumentation ------------------------------------------


def _check_event_invariants(state: SimState, expected_fold) -> None:
    n = state.graph.n
    if sum(state.counts) != n:
        raise ProtocolError(f"count conservation broken: sum={sum(state.counts)} != {n}")
    if state.kind in (ProtocolKind.SRW, ProtocolKind.CRW, ProtocolKind.TWO_PHASE):
        got = fold(state.fusion, state.values)
        if got != expected_fold:
            raise ProtocolError(f"value conservation broken: {got!r} != {expected_fold!r}")
    if state.kind is ProtocolKind.SRW and state.active_count != 1:
        raise ProtocolError(f"SRW must keep exactly one active node, has {state.active_count}")


# -- the event loops -----------------------------------------------------


def run(state: SimState, stop, check_invariants: bool = False) -> "Trace":
    """Drive the event loop until the stop condition and build the Trace.

    Hitting a MaxTime bound before natural termination flags the trace
    incomplete rather than silently truncating.
    """
    if state.kind is ProtocolKind.GOSSIP:
        return _run_gossip(state, stop)
    if state.kind is ProtocolKind.HYBRID_K:
        raise ProtocolError("use hybrid_k_run for the fixed-k hybrid")
    expected = fold(state.fusion, state.values) if check_invariants else None
    if isinstance(state.clock, SynchronousDiscrete):
        return _run_walk_discrete(state, stop, check_invariants, expected)
    return _run_walk_continuous(state, stop, check_invariants, expected)


def _bounded_phase_one(state, switch_t):
    """Run CRW to a fixed time: tokens keep walking even after some node's
    count has reached n, since no node can observe that globally."""
    if isinstance(state.clock, SynchronousDiscrete):
        _run_walk_discrete(state, MaxTime(switch_t), False, None, halt_on_termination=False)
    else:
        _run_walk_continuous(state, MaxTime(switch_t), False, None, halt_on_termination=False)


def _stop_params(stop):
    if isinstance(stop, Termination):
        return math.inf
    if isinstance(stop, MaxTime):
        return float(stop.t)
    raise ValueError(f"unsupported stop condition {stop!r} for a token walk")


def _run_walk_continuous(state, stop, check_invariants, expected, halt_on_termination=True):
    # Inlined copy of handle_send/handle_receive: this loop dominates the
    # runtime of every experiment, so the per-event work is kept to plain
    # local-variable arithmetic.  Any change here must mirror those ops.
    max_t = _stop_params(stop)
    terminating = halt_on_termination
    sampler = state.sampler
    active = state.active_list
    active_pos = state.active_pos
    status = state.status
    nbr = state.graph.neighbor_lists
    values = state.values
    counts = state.counts
    sends = state.sends
    receives = state.receives
    fuse = state.fusion.fuse
    identity = state.fusion.identity
    n = state.graph.n
    uniform = sampler.uniform
    exponential = sampler.exponential
    t = state.t
    last_count = len(active)
    while True:
        if terminating and state.holder is not None:
            state.t = t
            return _finish_walk_trace(state, completed=True)
        k = len(active)
        dt = exponential() / k
        nt = t + dt
        if nt > max_t:
            state.t = max_t
            return _finish_walk_trace(state, completed=False)
        if nt == t:
            # float collision: draw order breaks the (probability-zero) tie
            _log.debug("timestamp collision at t=%r", t)
        t = nt
        i = active[int(uniform() * k)]
        nbrs = nbr[i]
        j = nbrs[int(uniform() * len(nbrs))]
        # sender releases its permit
        v = values[i]
        c = counts[i]
        values[i] = identity
        counts[i] = 0
        pos = active_pos[i]
        last = active[-1]
        active[pos] = last
        active_pos[last] = pos
        active.pop()
        active_pos[i] = -1
        status[i] = 0
        sends[i] += 1
        state.eta += 1
        # receiver fuses and gains the permit
        values[j] = fuse(values[j], v)
        cj = counts[j] + c
        counts[j] = cj
        receives[j] += 1
        if not status[j]:
            status[j] = 1
            active_pos[j] = len(active)
            active.append(j)
        if cj == n:
            state.holder = j
        if check_invariants:
            state.t = t
            _check_event_invariants(state, expected)
        if len(active) != last_count:
            last_count = len(active)
            state.t = t
            state.record_curve_point()


def _run_walk_discrete(state, stop, check_invariants, expected, halt_on_termination=True):
    max_t = _stop_params(stop)
    terminating = halt_on_termination
    last_count = state.active_count
    while True:
        if terminating and state.holder is not None:
            return _finish_walk_trace(state, completed=True)
        if state.t + 1.0 > max_t:
            return _finish_walk_trace(state, completed=False)
        synchronous_round(state)
        if check_invariants:
            _check_event_invariants(state, expected)
        if state.active_count != last_count:
            last_count = state.active_count
            state.record_curve_point()


def _finish_walk_trace(state, completed) -> "Trace":
    state.record_curve_point()
    holder = state.holder
    payload = None
    if holder is not None and state.counts[holder] == state.graph.n:
        payload = TokenPayload(state.values[holder], state.counts[holder])
    return Trace(
        protocol=state.kind.value,
        n=state.graph.n,
        master_seed=state.stream.master_seed,
        stream_id=state.stream.stream_id,
        rng_algorithm=RNG_ALGORITHM,
        clock_mode=state.clock.name,
        lazy_prob=getattr(state.clock, "lazy_prob", None),
        completed=completed,
        tau=state.t,
        eta=state.eta,
        times=list(state.times),
        active_counts=list(state.active_counts),
        message_counts=list(state.message_counts),
        per_node_sends=list(state.sends),
        per_node_receives=list(state.receives),
        final_counts=list(state.counts),
        holder=holder,
        final_payload=payload,
        rounds=state.rounds if state.rounds else None,
    )


def gossip_step(state: SimState, p: Optional[GossipMatrix] = None) -> None:
    """One pairwise averaging exchange initiated by a uniform clock owner."""
    if state.kind is not ProtocolKind.GOSSIP:
        raise ProtocolError("gossip_step needs a GOSSIP state")
    p = p or state.params.get("P") or GossipMatrix.uniform(state.graph)
    sampler = state.sampler
    n = state.graph.n
    state.t += sampler.exponential() / n
    i = int(sampler.uniform() * n)
    j = p.sample(i, sampler)
    z = state.values
    mean = (z[i] + z[j]) * 0.5
    z[i] = mean
    z[j] = mean
    factor = state.params.get("gossip_messages_per_exchange", 2)
    state.eta += factor
    state.sends[i] += 1
    state.receives[j] += 1
    if factor == 2:
        state.sends[j] += 1
        state.receives[i] += 1


def _run_gossip(state: SimState, stop) -> "Trace":
    if isinstance(stop, GossipEps):
        eps, horizon, max_t = stop.eps, stop.horizon, math.inf
        if not 0 < eps < 1:
            raise ValueError("gossip eps must lie in (0, 1)")
    elif isinstance(stop, MaxTime):
        eps, horizon, max_t = 0.0, 1_000_000_000, float(stop.t)
    else:
        raise ValueError(f"unsupported stop condition {stop!r} for gossip")

    p = state.params.get("P") or GossipMatrix.uniform(state.graph)
    uniform_p = p.rows is None
    factor = state.params.get("gossip_messages_per_exchange", 2)
    sampler = state.sampler
    n = state.graph.n
    z = state.values
    zbar = math.fsum(z) / n
    norm0 = math.sqrt(math.fsum(v * v for v in z))
    q = math.fsum((v - zbar) ** 2 for v in z)
    threshold = (eps * norm0) ** 2

    def rel_error():
        return math.sqrt(max(q, 0.0)) / norm0 if norm0 > 0 else 0.0

    errors = [(0, rel_error())]
    next_log = 1
    first_passage = None
    if q <= threshold and isinstance(stop, GossipEps):
        first_passage = 0
    exchanges = 0
    sends = state.sends
    receives = state.receives
    nbr = state.graph.neighbor_lists
    completed = first_passage is not None
    while not completed:
        if exchanges >= horizon:
            break
        dt = sampler.exponential() / n
        if state.t + dt > max_t:
            state.t = max_t
            completed = not isinstance(stop, GossipEps)
            break
        state.t += dt
        i = int(sampler.uniform() * n)
        if uniform_p:
            nbrs = nbr[i]
            j = nbrs[int(sampler.uniform() * len(nbrs))]
        else:
            j = p.sample(i, sampler)
        a = z[i]
        b = z[j]
        mean = (a + b) * 0.5
        z[i] = mean
        z[j] = mean
        d = a - b
        q -= 0.5 * d * d
        exchanges += 1
        state.eta += factor
        sends[i] += 1
        receives[j] += 1
        if factor == 2:
            sends[j] += 1
            receives[i] += 1
        if exchanges == next_log:
            errors.append((exchanges, rel_error()))
            next_log *= 2
        if exchanges % 4096 == 0:
            # refresh the incrementally tracked error to kill float drift
            q = math.fsum((v - zbar) ** 2 for v in z)
        if q <= threshold:
            q = math.fsum((v - zbar) ** 2 for v in z)
            if q <= threshold:
                first_passage = exchanges
                completed = True
    errors.append((exchanges, rel_error()))
    state.record_curve_point()
    return Trace(
        protocol=state.kind.value,
        n=n,
        master_seed=state.stream.master_seed,
        stream_id=state.stream.stream_id,
        rng_algorithm=RNG_ALGORITHM,
        clock_mode=state.clock.name,
        lazy_prob=getattr(state.clock, "lazy_prob", None),
        completed=completed,
        tau=state.t,
        eta=state.eta,
        times=list(state.times),
        active_counts=list(state.active_counts),
        message_counts=list(state.message_counts),
        per_node_sends=list(state.sends),
        per_node_receives=list(state.receives),
        final_counts=list(state.counts),
        holder=None,
        final_payload=None,
        final_values=list(z),
        gossip_errors=errors,
        gossip_first_passage=first_passage,
        gossip_exchanges=exchanges,
    )


# -- controlled flooding --------------------------------------------------


def cfld_run(state: SimState, origins: Optional[Sequence[int]] = None) -> "Trace":
    """Flood every origin's payload to all nodes, each node forwarding a
    given origin's flood at most once, to all neighbors except the
    sender(s) of its first receipt.

    On return every node holds the fused combination of all origin
    payloads with count n.  Transmissions are counted per link, so each
    origin's flood uses at most 2|E| messages.
    """
    g = state.graph
    n = g.n
    if origins is None:
        origins = sorted(state.active_list)
    origins = list(origins)
    if not origins:
        raise ProtocolError("flood needs at least one origin")
    total = sum(state.counts[o] for o in origins)
    if total != n or sum(state.counts) != n:
        raise ProtocolError(
            f"origin counts sum to {total} (of total {sum(state.counts)}), expected {n}: "
            "broken two-phase handoff"
        )
    payloads = [(state.values[o], state.counts[o]) for o in origins]
    k = len(origins)
    received = [bytearray(n) for _ in range(k)]
    per_origin_messages = [0] * k
    first_senders: dict = {}
    pending: list = []
    for oi, o in enumerate(origins):
        received[oi][o] = 1
        pending.append((o, oi))

    fuse = state.fusion.fuse
    values = state.values
    counts = state.counts
    sends = state.sends
    receives = state.receives
    nbr = g.neighbor_lists
    phase_start_eta = state.eta
    sampler = state.sampler

    if isinstance(state.clock, SynchronousDiscrete):
        rounds_to_complete = 0
        round_no = 0
        while pending:
            round_no += 1
            arrivals: dict = {}
            for v, oi in pending:
                excl = first_senders.get((oi, v), ())
                cnt = 0
                rec = received[oi]
                for w in nbr[v]:
                    if w in excl:
                        continue
                    cnt += 1
                    receives[w] += 1
                    if not rec[w]:
                        arrivals.setdefault((oi, w), []).append(v)
                sends[v] += cnt
                state.eta += cnt
                per_origin_messages[oi] += cnt
            pending = []
            for (oi, w), senders in arrivals.items():
                received[oi][w] = 1
                first_senders[(oi, w)] = tuple(senders)
                pv, pc = payloads[oi]
                values[w] = fuse(values[w], pv)
                counts[w] += pc
                rounds_to_complete = round_no
                if len(nbr[w]) > len(senders):
                    pending.append((w, oi))
            state.t += 1.0
        state.rounds += rounds_to_complete
    else:
        while pending:
            m = len(pending)
            state.t += sampler.exponential() / m
            idx = int(sampler.uniform() * m)
            v, oi = pending[idx]
            pending[idx] = pending[-1]
            pending.pop()
            excl = first_senders.get((oi, v), ())
            rec = received[oi]
            cnt = 0
            pv, pc = payloads[oi]
            for w in nbr[v]:
                if w in excl:
                    continue
                cnt += 1
                receives[w] += 1
                if not rec[w]:
                    rec[w] = 1
                    first_senders[(oi, w)] = (v,)
                    values[w] = fuse(values[w], pv)
                    counts[w] += pc
                    if len(nbr[w]) > 1:
                        pending.append((w, oi))
            sends[v] += cnt
            state.eta += cnt
            per_origin_messages[oi] += cnt

    for oi in range(k):
        if not all(received[oi]):
            raise ProtocolError(f"flood from origin {origins[oi]} did not reach all nodes")
    if any(c != n for c in counts):
        raise ProtocolError("flood completed but some node's count is not n")
    state.record_curve_point()
    trace = _finish_walk_trace(state, completed=True)
    trace.flood_messages = state.eta - phase_start_eta
    trace.flood_messages_per_origin = per_origin_messages
    trace.flood_origins = len(origins)
    trace.rounds = state.rounds
    trace.final_values = list(values)
    trace.final_payload = TokenPayload(values[0], counts[0])
    trace.holder = None
    return trace


def two_phase_run(
    graph: Graph,
    x: Sequence,
    fusion: FusionSpec,
    switch,
    seed: int = 0,
    clock: ClockMode = Continuous(),
    stream_id: int = 0,
    params: Optional[dict] = None,
) -> "Trace":
    """CRW until a deterministic switch time, then flood the survivors.

    All n nodes finish holding the exact aggregate; the trace records
    phase-1 and phase-2 message counts separately, plus the pathwise
    first time the active count dipped to the target (which differs from
    the expected-count crossing used to resolve TargetGamma).
    """
    if isinstance(switch, TargetGamma):
        if switch.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if switch.gamma >= graph.n:
            switch_t = 0.0
        else:
            switch_t = estimate_switch_time(
                graph, switch.gamma, trials=switch.pilot_trials, seed=seed, clock=clock
            )
    elif isinstance(switch, ExplicitTime):
        if switch.t < 0:
            raise ValueError("switch time must be nonnegative")
        switch_t = float(switch.t)
    else:
        raise ValueError(f"unsupported switch spec {switch!r}")

    state = init(
        ProtocolKind.TWO_PHASE, graph, x, fusion, params=params, seed=seed,
        clock=clock, stream_id=stream_id,
    )
    if switch_t > 0:
        _bounded_phase_one(state, switch_t)
    phase1_messages = state.eta
    gamma = switch.gamma if isinstance(switch, TargetGamma) else None
    passage = None
    if gamma is not None:
        for tt, cc in zip(state.times, state.active_counts):
            if cc <= gamma:
                passage = tt
                break
    trace = cfld_run(state)
    trace.protocol = ProtocolKind.TWO_PHASE.value
    trace.switch_time = switch_t
    trace.phase1_messages = phase1_messages
    trace.phase2_messages = trace.eta - phase1_messages
    trace.gamma = gamma
    trace.gamma_passage_time = passage
    return trace


def estimate_switch_time(
    graph: Graph,
    gamma: float,
    trials: int = 32,
    seed: int = 0,
    clock: ClockMode = Continuous(),
) -> float:
    """Pilot estimate of the first time the expected active-token count of
    CRW drops to gamma, read off a geometric time grid."""
    if gamma >= graph.n:
        return 0.0
    curves = []
    t_end = 0.0
    zero = [0] * graph.n
    for trial in range(trials):
        st = init(
            ProtocolKind.CRW, graph, zero, sum_fusion(), seed=seed,
            clock=clock, stream_id=(1 << 20) + trial,
        )
        tr = run(st, Termination())
        curves.append((tr.times, tr.active_counts))
        t_end = max(t_end, tr.tau)
    grid = _geometric_grid(t_end)
    mean_counts = np.zeros(len(grid))
    for times, counts in curves:
        mean_counts += _step_function_at(times, counts, grid)
    mean_counts /= trials
    for t, c in zip(grid, mean_counts):
        if c <= gamma:
            return float(t)
    return float(grid[-1])


def _geometric_grid(t_end: float, points_per_decade: int = 64) -> np.ndarray:
    """[0] followed by a geometric grid, 64 points per decade by default."""
    if t_end <= 0:
        return np.array([0.0])
    lo = min(1e-3, t_end / 10)
    decades = math.log10(t_end / lo)
    count = max(2, int(math.ceil(decades * points_per_decade)))
    return np.concatenate([[0.0], np.geomspace(lo, t_end, count)])


def _step_function_at(times, values, grid) -> np.ndarray:
    """Evaluate a right-continuous step function on a grid."""
    idx = np.searchsorted(times, grid, side="right") - 1
    return np.asarray(values, dtype=float)[np.clip(idx, 0, len(values) - 1)]


def hybrid_k_run(
    graph: Graph,
    x: Sequence,
    k: int,
    seed: int = 0,
    horizon: float = 100.0,
    stream_id: int = 0,
    params: Optional[dict] = None,
) -> "Trace":
    """Fixed-k token hybrid for weighted averages.

    Active-to-inactive contacts transfer the token as in SRW;
    active-to-active contacts relax both (estimate, weight) pairs as in
    pairwise gossip and keep both permits, so the active count is
    invariant.  There is no count-based completion certificate: the run
    goes to the horizon and reports approximation error against the true
    weighted mean.
    """
    params = dict(params or {})
    params["k"] = k
    fusion = weighted_avg_fusion()
    state = init(
        ProtocolKind.HYBRID_K, graph, x, fusion, params=params, seed=seed,
        stream_id=stream_id,
    )
    total_w = math.fsum(w for _, w in x)
    true_mean = math.fsum(y * w for y, w in x) / total_w if total_w > 0 else 0.0

    sampler = state.sampler
    active = state.active_list
    nbr = state.graph.neighbor_lists
    values = state.values
    active_active = 0
    while True:
        kk = len(active)
        dt = sampler.exponential() / kk
        if state.t + dt > horizon:
            state.t = horizon
            break
        state.t += dt
        i = active[int(sampler.uniform() * kk)]
        nbrs = nbr[i]
        j = nbrs[int(sampler.uniform() * len(nbrs))]
        if state.status[j]:
            yi, wi = values[i]
            yj, wj = values[j]
            w = wi + wj
            ym = (wi * yi + wj * yj) / w if w > 0 else 0.0
            half = w * 0.5
            values[i] = (ym, half)
            values[j] = (ym, half)
            state.eta += 2
            state.sends[i] += 1
            state.sends[j] += 1
            state.receives[i] += 1
            state.receives[j] += 1
            active_active += 1
        else:
            _send_to(state, i, j)
        if len(active) != k:
            raise ProtocolError(f"hybrid active count drifted to {len(active)}")
    state.record_curve_point()
    trace = _finish_walk_trace(state, completed=True)
    trace.final_values = list(values)
    errs = [abs(values[i][0] - true_mean) for i in state.active_list]
    trace.value_error_max = max(errs)
    trace.value_error_mean = sum(errs) / len(errs)
    trace.active_active_events = active_active
    trace.holder = None
    trace.final_payload = None
    return trace


# -- traces ---------------------------------------------------------------


@dataclass
class Trace:
    """The raw material for all complexity metrics: the token-count step
    function, message ledger, termination time, and the final payload."""

    protocol: str
    n: int
    master_seed: int
    stream_id: int
    rng_algorithm: str
    clock_mode: str
    lazy_prob: Optional[float]
    completed: bool
    tau: float
    eta: int
    times: list
    active_counts: list
    message_counts: list
    per_node_sends: list
    per_node_receives: list
    final_counts: list
    holder: Optional[int]
    final_payload: Optional[TokenPayload]
    final_values: Optional[list] = None
    gossip_errors: Optional[list] = None
    gossip_first_passage: Optional[int] = None
    gossip_exchanges: Optional[int] = None
    flood_messages: Optional[int] = None
    flood_messages_per_origin: Optional[list] = None
    flood_origins: Optional[int] = None
    rounds: Optional[int] = None
    switch_time: Optional[float] = None
    phase1_messages: Optional[int] = None
    phase2_messages: Optional[int] = None
    gamma: Optional[float] = None
    gamma_passage_time: Optional[float] = None
    value_error_max: Optional[float] = None
    value_error_mean: Optional[float] = None
    active_active_events: Optional[int] = None

    def sigma(self, k: int) -> Optional[float]:
        """First time at most k active tokens remain, if reached."""
        for t, c in zip(self.times, self.active_counts):
            if c <= k:
                return t
        return None

    def eta_per_node(self) -> float:
        return self.eta / self.n

    def write_trajectory_csv(self, path) -> None:
        lines = ["t,active_count,total_messages"]
        lines.extend(
            f"{t!r},{c},{m}"
            for t, c, m in zip(self.times, self.active_counts, self.message_counts)
        )
        Path(path).write_text("\n".join(lines) + "\n")

    def write_node_summary_csv(self, path) -> None:
        lines = ["node,sends,receives,final_count"]
        lines.extend(
            f"{i},{s},{r},{c}"
            for i, (s, r, c) in enumerate(
                zip(self.per_node_sends, self.per_node_receives, self.final_counts)
            )
        )
        Path(path).write_text("\n".join(lines) + "\n")

    def metadata(self) -> dict:
        meta = {
            "protocol": self.protocol,
            "n": self.n,
            "master_seed": self.master_seed,
            "stream_id": self.stream_id,
            "rng_algorithm": self.rng_algorithm,
            "clock_mode": self.clock_mode,
            "lazy_prob": self.lazy_prob,
            "completed": self.completed,
            "tau": self.tau,
            "eta": self.eta,
            "holder": self.holder,
        }
        for name in (
            "gossip_first_passage",
            "gossip_exchanges",
            "flood_messages",
            "flood_origins",
            "rounds",
            "switch_time",
            "phase1_messages",
            "phase2_messages",
            "gamma",
            "gamma_passage_time",
        ):
            v = getattr(self, name)
            if v is not None:
                meta[name] = v
        return meta

    def write_metadata_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")
