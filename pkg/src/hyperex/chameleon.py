"""
The chameleon process: black particles z plus red / pink / white colouring.

Time is split into phases of length T.  During ((2i-1)T, 2iT] colours may
change: red-white pairs picked out by the block rewrite of the ringing
permutation turn pink.  At 2iT, if there are enough pinks, a fair coin
turns all of them red or all of them white.  Red counts one unit of ink,
pink half a unit.  Ink is tracked in half-units so the bookkeeping is exact.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import Event, EventStream
from .model import Model
from .perm import (ASelection, Permutation, beta_tilde, build_A, decompose,
                   h_window)

CONSTANT = "constant"
COLOUR = "colour"


@dataclass(frozen=True)
class ChameleonState:
    z: tuple
    R: frozenset
    P: frozenset
    W: frozenset

    @property
    def ink_half(self) -> int:
        return 2 * len(self.R) + len(self.P)

    @property
    def ink(self) -> float:
        return self.ink_half / 2

    def ink_at(self, b) -> float:
        if b in self.R:
            return 1.0
        if b in self.P:
            return 0.5
        return 0.0

    def colour(self, v) -> str:
        if v in self.R:
            return "R"
        if v in self.P:
            return "P"
        if v in self.W:
            return "W"
        if v in self.z:
            return "B"
        raise KeyError(v)

    def apply(self, sigma: Permutation) -> "ChameleonState":
        return ChameleonState(sigma.apply_tuple(self.z), sigma.apply_set(self.R),
                              sigma.apply_set(self.P), sigma.apply_set(self.W))

    def outcome(self) -> str | None:
        if self.P:
            return None
        if not self.W:
            return "fill"
        if not self.R:
            return "empty"
        return None

    def check_partition(self, vertices: Sequence) -> None:
        parts = [set(self.z), self.R, self.P, self.W]
        total = sum(len(p) for p in parts)
        union = set().union(*parts)
        if len(set(self.z)) != len(self.z) or total != len(union) or union != set(vertices):
            raise AssertionError(f"state does not partition the vertex set: {self}")

    def to_dict(self) -> dict:
        return {"z": list(self.z), "R": sorted(self.R), "P": sorted(self.P), "W": sorted(self.W)}


def init_chameleon(x: Sequence, vertices: Sequence) -> ChameleonState:
    x = tuple(x)
    if not x:
        raise ValueError("need at least one particle")
    if len(set(x)) != len(x):
        raise ValueError(f"initial positions {x} are not distinct")
    if not set(x) <= set(vertices):
        raise ValueError("initial positions must be vertices")
    rest = frozenset(vertices) - set(x)
    return ChameleonState(x[:-1], frozenset([x[-1]]), frozenset(), rest)


@dataclass(frozen=True)
class PhaseSchedule:
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("phase length must be positive")

    def phase_of(self, t: float) -> str:
        """Phase containing time t > 0 (intervals are open on the left)."""
        if t <= 0:
            raise ValueError("phases are defined for t > 0")
        k = math.ceil(t / self.T)
        return CONSTANT if k % 2 == 1 else COLOUR

    def depink_times(self, until: float) -> list[float]:
        out, i = [], 1
        while 2 * i * self.T <= until:
            out.append(2 * i * self.T)
            i += 1
        return out


# --------------------------------------------------------------- L-sets

@dataclass
class LSets:
    pairs: dict          # (block, j) -> frozenset {red, white}, in lexicographic key order
    chosen: tuple        # keys of the capped selection
    cap: int

    @property
    def full(self) -> frozenset:
        return frozenset().union(*self.pairs.values()) if self.pairs else frozenset()

    @property
    def bar(self) -> frozenset:
        return frozenset().union(*(self.pairs[k] for k in self.chosen)) if self.chosen else frozenset()


def _minority_pair(cands: Sequence[tuple], R: frozenset, W: frozenset) -> frozenset:
    """Of two candidate pairs covering a 3:1 block, the one holding the lone colour."""
    block = [x for c in cands for x in c]
    lone = R if sum(x in R for x in block) == 1 else W
    for c in cands:
        if any(x in lone for x in c):
            return frozenset(c)
    raise AssertionError("split block without a lone colour")


def pinken_cap(state: ChameleonState) -> int:
    return max(0, (min(len(state.R), len(state.W)) - len(state.P)) // 3)


def build_L(state: ChameleonState, sigma: Permutation) -> LSets:
    """Red-white pairs the rewrite of ``sigma`` would swap, plus the capped choice.

    Block 0 is the transposition block, blocks 1.. are the long cycles in
    order of their minima.
    """
    R, W = state.R, state.W
    A = build_A(R, W, sigma)
    d = decompose(sigma)
    pairs = {}
    a = d.flat_rho0()
    for j in sorted(A.a0):
        a1, a2, a3, a4 = a[4 * j - 4:4 * j]
        if a3 < a2:
            pairs[(0, j)] = _minority_pair([(a1, a3), (a2, a4)], R, W)
    for i, (Ai, c) in enumerate(zip(A.cycles, d.cycles), start=1):
        n = len(c)
        if n == 3:
            if Ai:
                reds = [x for x in c if x in R]
                m = reds[0] if len(reds) == 1 else next(x for x in c if x in W)
                pos = c.index(m)
                pairs[(i, 0)] = frozenset({m, c[(pos + 1) % 3]})
            continue
        for j in sorted(Ai):
            e0, e1, e2, e3 = h_window(j, n)
            pairs[(i, j)] = _minority_pair([(c[e0], c[e2]), (c[e1], c[e3])], R, W)
    cap = pinken_cap(state)
    chosen = tuple(sorted(pairs))[:cap]
    return LSets(pairs, chosen, cap)


def restricted_selection(sigma: Permutation, keys: Sequence[tuple]) -> ASelection:
    d = decompose(sigma)
    keys = set(keys)
    a0 = frozenset(j for b, j in keys if b == 0)
    cycles = tuple(frozenset(j for b, j in keys if b == i) for i in range(1, d.K + 1))
    return ASelection(a0, cycles)


# ---------------------------------------------------------------- updates

@dataclass
class StepInfo:
    kind: str = "move"             # "move", "pinken-L", "pinken-edge"
    pinkened: frozenset = frozenset()
    keys: tuple = ()


def cham_step(state: ChameleonState, event: Event, phase: str, modified: bool = False,
              *, edge: Sequence, schedule: PhaseSchedule | None = None,
              info: StepInfo | None = None) -> ChameleonState:
    """One incident of the graphical construction applied to the chameleon state."""
    if schedule is not None and schedule.phase_of(event.time) != phase:
        raise ValueError(f"event at t={event.time} is not in a {phase} phase")
    if phase not in (CONSTANT, COLOUR):
        raise ValueError(f"unknown phase {phase!r}")
    sigma = event.sigma
    if phase == COLOUR and not sigma.is_identity():
        R, P, W = state.R, state.P, state.W
        if modified or len(P) < min(len(R), len(W)):
            if len(edge) > 2 and event.theta != 0:
                L = build_L(state, sigma)
                keys = tuple(L.pairs) if modified else L.chosen
                pink = L.full if modified else L.bar
                if info is not None and pink:
                    info.kind, info.pinkened, info.keys = "pinken-L", pink, keys
                return ChameleonState(state.z, R - pink, P | pink, W - pink).apply(sigma)
            if len(edge) == 2:
                u, v = edge
                if (u in R and v in W) or (u in W and v in R):
                    pink = frozenset(edge)
                    if info is not None:
                        info.kind, info.pinkened = "pinken-edge", pink
                    return ChameleonState(state.z, R - pink, P | pink, W - pink)
    if event.theta == 0:
        return state
    return state.apply(sigma)


def needs_depink(state: ChameleonState) -> bool:
    return bool(state.P) and len(state.P) >= min(len(state.R), len(state.W))


def depink(state: ChameleonState, coin: int) -> ChameleonState:
    """Merge all pinks into red (coin 1) or white (coin 0) when there are enough."""
    if not needs_depink(state):
        return state
    if coin:
        return ChameleonState(state.z, state.R | state.P, frozenset(), state.W)
    return ChameleonState(state.z, state.R, frozenset(), state.W | state.P)


# -------------------------------------------------------------------- runs

@dataclass
class RunRecord:
    T: float
    horizon: float
    modified: bool
    initial: ChameleonState
    final: ChameleonState
    ink_trace: list                  # [(time, ink in half-units)]
    depink_times: list               # D_j, times at which a depinking happened
    outcome: str | None              # "fill", "empty" or None (unabsorbed)
    absorbed_at: float | None
    pinkenings: list = field(default_factory=list)   # (time, kind, keys, sorted pair list)
    snapshots: dict = field(default_factory=dict)    # probe time -> state
    z_path: list | None = None
    cap_excursions: int = 0
    n_events: int = 0
    seeds: dict = field(default_factory=dict)

    @property
    def fill(self) -> bool:
        return self.outcome == "fill"

    @property
    def absorbed(self) -> bool:
        return self.outcome is not None

    @property
    def ink_values(self) -> list[float]:
        return [h / 2 for _, h in self.ink_trace]

    def to_dict(self) -> dict:
        return {
            "T": self.T, "horizon": self.horizon, "modified": self.modified,
            "outcome": self.outcome, "fill": self.fill, "absorbed_at": self.absorbed_at,
            "ink_trace": [[t, h / 2] for t, h in self.ink_trace],
            "depink_times": self.depink_times,
            "final": self.final.to_dict(), "n_events": self.n_events,
            "cap_excursions": self.cap_excursions, "seeds": self.seeds,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def pinkenings_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["time", "kind", "block", "pair"])
        for t, kind, keys, pairs in self.pinkenings:
            for key, pair in zip(keys or [None] * len(pairs), pairs):
                w.writerow([repr(float(t)), kind, "" if key is None else f"{key[0]}:{key[1]}",
                            " ".join(map(str, pair))])
        return buf.getvalue()


def run_chameleon(model: Model, x: Sequence, T: float, horizon: float,
                  modified: bool = False, rng: np.random.Generator | None = None, *,
                  stream: EventStream | None = None,
                  coin_rng: np.random.Generator | None = None,
                  probes: Sequence[float] = (), track_z: bool = False,
                  check: bool = False, log: bool = False) -> RunRecord:
    """Drive a lazy event stream through the phase schedule.

    Movement and depinking coins use independent generators (spawned from
    ``rng`` unless given).  The run stops at absorption once every probe time
    has been passed, or at ``horizon``.
    """
    schedule = PhaseSchedule(T)
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if stream is None or coin_rng is None:
        if rng is None:
            rng = np.random.default_rng()
        move_g, coin_g = rng.spawn(2)
        stream = stream if stream is not None else EventStream(model, horizon, True, move_g)
        coin_rng = coin_rng if coin_rng is not None else coin_g
    if not stream.lazy:
        raise ValueError("the chameleon process runs on a lazy event stream")
    V = model.vertices
    edges = model.edges
    state = init_chameleon(x, V)
    initial = state
    ink = [(0.0, state.ink_half)]
    depinks: list = []
    pinkenings: list = []
    snapshots: dict = {}
    z_path = [(0.0, state.z)] if track_z else None
    probes = sorted(p for p in probes if 0 <= p <= horizon)
    pi = 0
    while pi < len(probes) and probes[pi] == 0:
        snapshots[probes[pi]] = state
        pi += 1
    next_dep = 2 * T
    outcome = state.outcome()
    absorbed_at = 0.0 if outcome else None
    excursions = 0
    n_events = 0
    info = StepInfo() if (log or check) else None

    def flush(until: float, inclusive: bool):
        nonlocal state, next_dep, pi, outcome, absorbed_at
        while True:
            t_dep = next_dep if (next_dep < until or (inclusive and next_dep <= until)) else None
            t_pr = probes[pi] if pi < len(probes) and (
                probes[pi] < until or (inclusive and probes[pi] <= until)) else None
            if t_dep is None and t_pr is None:
                return
            if t_pr is not None and (t_dep is None or t_pr < t_dep):
                snapshots[t_pr] = state
                pi += 1
                continue
            if needs_depink(state):
                coin = int(coin_rng.integers(2))
                state = depink(state, coin)
                depinks.append(t_dep)
                ink.append((t_dep, state.ink_half))
                if outcome is None:
                    outcome = state.outcome()
                    if outcome:
                        absorbed_at = t_dep
            next_dep += 2 * T

    for ev in stream.iter_events(horizon):
        if outcome is not None and pi >= len(probes):
            break
        flush(ev.time, inclusive=False)
        if outcome is not None and pi >= len(probes):
            break
        phase = schedule.phase_of(ev.time)
        before = state
        if info is not None:
            info.kind, info.pinkened, info.keys = "move", frozenset(), ()
        state = cham_step(state, ev, phase, modified, edge=edges[ev.edge], info=info)
        n_events += 1
        if track_z:
            z_path.append((ev.time, state.z))
        if info is not None and info.kind != "move":
            if log:
                pairs = ([sorted(build_L(before, ev.sigma).pairs[k]) for k in info.keys]
                         if info.kind == "pinken-L" else [sorted(info.pinkened)])
                pinkenings.append((ev.time, info.kind, info.keys, pairs))
            if len(state.P) > min(len(state.R), len(state.W)):
                if info.kind == "pinken-L" and not modified and check:
                    raise AssertionError(f"cap invariant broken at t={ev.time}: {state}")
                excursions += 1
        if check:
            state.check_partition(V)
            if state.ink_half != before.ink_half:
                raise AssertionError(f"ink changed at a non-depinking update, t={ev.time}")
            if len(state.R) > len(before.R) or len(state.W) > len(before.W):
                raise AssertionError(f"red or white count grew at t={ev.time}")
        if outcome is None:
            outcome = state.outcome()
            if outcome:
                absorbed_at = ev.time
    if outcome is None or pi < len(probes):
        flush(horizon, inclusive=True)

    return RunRecord(
        T=T, horizon=horizon, modified=modified, initial=initial, final=state,
        ink_trace=ink, depink_times=depinks, outcome=outcome, absorbed_at=absorbed_at,
        pinkenings=pinkenings, snapshots=snapshots, z_path=z_path,
        cap_excursions=excursions, n_events=n_events, seeds=dict(stream.descriptor),
    )


def default_phase_length(model: Model, factor: float = 20.0) -> float:
    """``factor`` times the exact EX(4) mixing time at 1/4."""
    from .exact import mixing_time

    if model.n <= 4:
        raise ValueError("the default phase length needs at least 5 vertices; pass T explicitly")
    return factor * mixing_time("EX", model, 4, 0.25)


# ------------------------------------------------------------------- g map

@dataclass
class GMapReport:
    g: Permutation
    sigma_tilde: Permutation
    A: ASelection
    pinkened: frozenset
    swaps_pinkened: bool
    keeps_others: bool
    intertwines: bool

    @property
    def ok(self) -> bool:
        return self.swaps_pinkened and self.keeps_others and self.intertwines


def g_map(state: ChameleonState, sigma: Permutation, edge: Sequence,
          modified: bool = False) -> GMapReport:
    """Colour-swapping relabelling for a colour-changing event on a big edge.

    ``g`` is the rewritten permutation inverted and composed after ``sigma``,
    with the rewrite restricted to the blocks actually pinkened.
    """
    if len(edge) <= 2:
        raise ValueError("g_map needs an edge with more than 2 vertices")
    L = build_L(state, sigma)
    keys = tuple(L.pairs) if modified else L.chosen
    pink = L.full if modified else L.bar
    A = restricted_selection(sigma, keys)
    st = beta_tilde(A, sigma)
    g = st.inverse() * sigma
    V = sigma.domain
    R, W = state.R, state.W
    swaps = all((u in R) == (g(u) in W) and (u in W) == (g(u) in R) for u in pink)
    keeps = all(_col(state, g(u)) == _col(state, u) for u in V if u not in pink)
    inter = all(st(g(u)) == sigma(u) for u in V)
    return GMapReport(g, st, A, pink, swaps, keeps, inter)


def _col(state: ChameleonState, v) -> str:
    try:
        return state.colour(v)
    except KeyError:
        return "?"


# ------------------------------------------------------------------ batches

@dataclass
class BatchSummary:
    """Aggregates of N independent runs; replica r uses streams 2r and 2r+1."""
    N: int
    seed: int
    T: float
    horizon: float
    modified: bool
    x: tuple
    fills: int = 0
    empties: int = 0
    unabsorbed: int = 0
    probes: tuple = ()
    ink_sum: dict = field(default_factory=dict)      # probe -> sum of total ink
    ink_sq: dict = field(default_factory=dict)
    joint_sum: dict = field(default_factory=dict)    # probe -> {(z, b): sum of ink_t(b) 1{z_t = z}}
    joint_sq: dict = field(default_factory=dict)
    depink_counts: dict = field(default_factory=dict)  # number of depinkings -> runs
    first_depink: list = field(default_factory=list)
    cap_excursions: int = 0

    def add(self, rec: RunRecord) -> None:
        if rec.outcome == "fill":
            self.fills += 1
        elif rec.outcome == "empty":
            self.empties += 1
        else:
            self.unabsorbed += 1
        self.cap_excursions += rec.cap_excursions
        nd = len(rec.depink_times)
        self.depink_counts[nd] = self.depink_counts.get(nd, 0) + 1
        if nd:
            self.first_depink.append(rec.depink_times[0])
        for t in self.probes:
            st = rec.snapshots[t]
            ink = st.ink
            self.ink_sum[t] = self.ink_sum.get(t, 0.0) + ink
            self.ink_sq[t] = self.ink_sq.get(t, 0.0) + ink * ink
            js, jq = self.joint_sum.setdefault(t, {}), self.joint_sq.setdefault(t, {})
            for b in st.R | st.P:
                v = st.ink_at(b)
                key = (st.z, b)
                js[key] = js.get(key, 0.0) + v
                jq[key] = jq.get(key, 0.0) + v * v

    @staticmethod
    def _mean_se(s: float, q: float, N: int) -> tuple[float, float]:
        m = s / N
        var = max(q / N - m * m, 0.0)
        return m, math.sqrt(var / N)

    def fill_fraction(self) -> float:
        return self.fills / self.N if self.N else float("nan")

    def fill_ci(self, confidence: float = 0.99) -> tuple[float, float]:
        from scipy.stats import binomtest
        ci = binomtest(self.fills, self.N).proportion_ci(confidence, "wilson")
        return float(ci.low), float(ci.high)

    def ink_mean(self, t: float) -> tuple[float, float]:
        return self._mean_se(self.ink_sum.get(t, 0.0), self.ink_sq.get(t, 0.0), self.N)

    def joint_mean(self, t: float, z: tuple, b) -> tuple[float, float]:
        key = (tuple(z), b)
        return self._mean_se(self.joint_sum.get(t, {}).get(key, 0.0),
                             self.joint_sq.get(t, {}).get(key, 0.0), self.N)

    def to_dict(self, confidence: float = 0.99) -> dict:
        out = {
            "N": self.N, "seed": self.seed, "T": self.T, "horizon": self.horizon,
            "modified": self.modified, "x": list(self.x),
            "fills": self.fills, "empties": self.empties, "unabsorbed": self.unabsorbed,
            "cap_excursions": self.cap_excursions,
            "depink_count_histogram": {str(k): v for k, v in sorted(self.depink_counts.items())},
            "streams": {"movement": "stream_id = 2r", "coins": "stream_id = 2r + 1"},
        }
        if self.N:
            lo, hi = self.fill_ci(confidence)
            out["fill_fraction"] = {"value": self.fill_fraction(), "ci": [lo, hi],
                                    "confidence": confidence, "method": "monte-carlo"}
            out["ink"] = [{"t": t, "mean": m, "se": se, "method": "monte-carlo"}
                          for t in self.probes for m, se in [self.ink_mean(t)]]
            if self.first_depink:
                counts, edges = np.histogram(self.first_depink, bins=min(20, len(set(self.first_depink))))
                out["first_depink_histogram"] = {"edges": edges.tolist(), "counts": counts.tolist()}
        return out


def run_replica(model: Model, x, T: float, horizon: float, seed: int, r: int,
                modified: bool = False, probes=(), check: bool = False) -> RunRecord:
    from .engine import stream_rng

    stream = EventStream.replay(model, seed, 2 * r, horizon, True)
    return run_chameleon(model, x, T, horizon, modified, stream=stream,
                         coin_rng=stream_rng(seed, 2 * r + 1), probes=probes, check=check)


def run_batch(model: Model, x, T: float, horizon: float, N: int, seed: int,
              modified: bool = False, probes=(), check: bool = False,
              start: int = 0) -> BatchSummary:
    summary = BatchSummary(N, seed, T, horizon, modified, tuple(x), probes=tuple(probes))
    for r in range(start, start + N):
        summary.add(run_replica(model, x, T, horizon, seed, r, modified, probes, check))
    return summary


def merge_batches(parts: Sequence[BatchSummary]) -> BatchSummary:
    first = parts[0]
    out = BatchSummary(sum(p.N for p in parts), first.seed, first.T, first.horizon,
                       first.modified, first.x, probes=first.probes)
    for p in parts:
        out.fills += p.fills
        out.empties += p.empties
        out.unabsorbed += p.unabsorbed
        out.cap_excursions += p.cap_excursions
        out.first_depink += p.first_depink
        for k, v in p.depink_counts.items():
            out.depink_counts[k] = out.depink_counts.get(k, 0) + v
        for t in p.probes:
            out.ink_sum[t] = out.ink_sum.get(t, 0.0) + p.ink_sum.get(t, 0.0)
            out.ink_sq[t] = out.ink_sq.get(t, 0.0) + p.ink_sq.get(t, 0.0)
            for src, dst in ((p.joint_sum, out.joint_sum), (p.joint_sq, out.joint_sq)):
                d = dst.setdefault(t, {})
                for key, v in src.get(t, {}).items():
                    d[key] = d.get(key, 0.0) + v
    return out
