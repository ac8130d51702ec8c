"""
Graphical construction: Poisson event streams shared by every process.

Each edge rings at rate 1 (rate 2 in lazy mode, where a fair coin ``theta``
decides whether the drawn permutation is applied).  All processes are
deterministic functionals of a stream, so running several processes on the
same stream couples them pathwise.

Streams are generated lazily in fixed-size chunks from their own generator,
which makes every stream replayable from ``(seed, stream_id)`` regardless
of how far it was read.
"""

from __future__ import annotations

import bisect
from collections import deque
import csv
import heapq
import io
import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import binomtest

from .model import Model
from .perm import Permutation, perm_from_shuffle

__all__ = [
    "Event", "EventStream", "IntervalMap", "Trajectory", "EasyVerdict",
    "gen_events", "stream_rng", "interval_map", "evolve", "meeting_time",
    "bar_meeting_time", "first_meeting", "classify_easy", "KINDS",
]

KINDS = ("RW", "RWk", "EX", "IP")


class Event(NamedTuple):
    time: float
    edge: int
    sigma: Permutation
    theta: int | None = None

    @property
    def applied(self) -> bool:
        """Whether the permutation acts (always, unless a lazy coin says no)."""
        return self.theta != 0


def stream_rng(seed: int, stream_id: int) -> np.random.Generator:
    """Generator for stream ``stream_id`` of experiment ``seed``."""
    return np.random.default_rng([int(seed), int(stream_id)])


class EventStream:
    """Incident times, edges, permutations (and lazy coins) up to a horizon."""

    CHUNK = 64

    def __init__(self, model: Model, horizon: float, lazy: bool,
                 rng: np.random.Generator, descriptor: dict | None = None):
        if horizon < 0:
            raise ValueError("horizon must be >= 0")
        self.model = model
        self.lazy = bool(lazy)
        self.horizon = float(horizon)
        self.descriptor = dict(descriptor or {})
        self._rng = rng
        self._events: list[Event] = []
        self._times: list[float] = []
        self._pending: deque = deque()
        self._clock = 0.0
        self._max_edge = max(len(e) for e in model.edges)
        self._cum = [np.cumsum([w for _, w in m.weights]).tolist() for m in model.measures]
        self._types = [[t for t, _ in m.weights] for m in model.measures]

    @classmethod
    def replay(cls, model: Model, seed: int, stream_id: int, horizon: float,
               lazy: bool) -> "EventStream":
        desc = {"seed": int(seed), "stream_id": int(stream_id),
                "horizon": float(horizon), "lazy": bool(lazy)}
        return cls(model, horizon, lazy, stream_rng(seed, stream_id), desc)

    @classmethod
    def from_events(cls, model: Model, events, horizon: float, lazy: bool) -> "EventStream":
        """A fixed stream holding exactly ``events`` (for hand-built scenarios)."""
        events = sorted(events, key=lambda ev: ev.time)
        for ev in events:
            if not ev.sigma.support <= set(model.edges[ev.edge]):
                raise ValueError(f"event at t={ev.time} moves labels outside its edge")
            if (ev.theta is not None) != lazy:
                raise ValueError("theta must be present exactly in lazy mode")
        out = cls(model, horizon, lazy, np.random.default_rng(0), {"fixed": True})
        out._events = list(events)
        out._times = [ev.time for ev in events]
        out._clock = float("inf")
        return out

    @property
    def rate(self) -> float:
        return (2 if self.lazy else 1) * len(self.model.edges)

    def _generate_chunk(self) -> None:
        """Draw the raw randomness for the next CHUNK events.

        Permutation objects are only built when an event is first read, so
        streams that are consumed briefly stay cheap.
        """
        rng, B, model = self._rng, self.CHUNK, self.model
        gaps = rng.exponential(1.0 / self.rate, B)
        edge_ix = rng.integers(len(model.edges), size=B).tolist()
        u = rng.random(B).tolist()
        orders = np.argsort(rng.random((B, self._max_edge)), axis=1).tolist()
        thetas = rng.integers(2, size=B).tolist() if self.lazy else [None] * B
        times = (self._clock + np.cumsum(gaps)).tolist()
        self._pending.extend(zip(times, edge_ix, u, orders, thetas))
        self._clock = times[-1]

    def _materialize(self) -> None:
        time, ei, u, order, theta = self._pending.popleft()
        e = self.model.edges[ei]
        s = len(e)
        shuffled = [e[i] for i in order if i < s]
        cum = self._cum[ei]
        t = self._types[ei][min(bisect.bisect_right(cum, u), len(cum) - 1)]
        self._events.append(Event(time, ei, perm_from_shuffle(t, shuffled), theta))
        self._times.append(time)

    def extend(self, horizon: float) -> None:
        self.horizon = max(self.horizon, float(horizon))

    def iter_events(self, until: float | None = None, start: float = 0.0):
        """Events with ``start < time <= until`` (default: the horizon)."""
        until = self.horizon if until is None else until
        n = bisect.bisect_right(self._times, start) if start > 0 else 0
        while True:
            if n >= len(self._events):
                if self._pending:
                    if self._pending[0][0] > until:
                        return
                    self._materialize()
                elif self._clock > until:
                    return
                else:
                    self._generate_chunk()
                continue
            ev = self._events[n]
            n += 1
            if ev.time <= start:
                continue
            if ev.time > until:
                return
            yield ev

    @property
    def events(self) -> list[Event]:
        return list(self.iter_events())

    def __len__(self) -> int:
        return len(self.events)


def gen_events(model: Model, horizon: float, lazy: bool,
               rng: np.random.Generator) -> EventStream:
    return EventStream(model, horizon, lazy, rng)


@dataclass(frozen=True)
class IntervalMap:
    s: float
    t: float
    perm: Permutation


def interval_map(stream: EventStream, s: float, t: float) -> IntervalMap:
    """Composition of the permutations applied during ``(s, t]``."""
    if not 0 <= s <= t <= stream.horizon:
        raise ValueError(f"need 0 <= s <= t <= {stream.horizon}, got s={s}, t={t}")
    V = stream.model.vertices
    cur = {v: v for v in V}
    for ev in stream.iter_events(t, start=s):
        if ev.applied:
            m = ev.sigma._map
            cur = {v: m.get(x, x) for v, x in cur.items()}
    return IntervalMap(s, t, Permutation(V, [cur[v] for v in V]))


@dataclass
class Trajectory:
    kind: str
    states: list  # [(time, state)], piecewise constant from each time on

    def state_at(self, t: float):
        times = [s for s, _ in self.states]
        return self.states[bisect.bisect_right(times, t) - 1][1]

    def rows(self) -> list[tuple]:
        return [(time, _state_json(st)) for time, st in self.states]

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind,
                           "states": [{"time": t, "state": s} for t, s in self.rows()]})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["time", "state"])
        for t, s in self.rows():
            w.writerow([repr(float(t)), json.dumps(s)])
        return buf.getvalue()


def _state_json(st):
    if isinstance(st, frozenset):
        return sorted(st)
    if isinstance(st, tuple):
        return list(st)
    return st


def _tagged(stream: EventStream, i: int, until: float | None = None):
    for ev in stream.iter_events(until):
        yield ev.time, i, ev


def evolve(kind: str, init, stream) -> Trajectory:
    """Run RW / RWk / EX / IP from ``init`` on a stream (a list of streams for RWk)."""
    if kind == "RWk":
        streams = list(stream)
        init = tuple(init)
        if len(streams) != len(init):
            raise ValueError("RWk needs one stream per walker")
        pos = list(init)
        states = [(0.0, tuple(pos))]
        merged = heapq.merge(*[_tagged(s, i) for i, s in enumerate(streams)])
        for time, i, ev in merged:
            if ev.applied:
                pos[i] = ev.sigma(pos[i])
            states.append((time, tuple(pos)))
        return Trajectory(kind, states)

    V = set(stream.model.vertices)
    if kind == "RW":
        if init not in V:
            raise ValueError(f"{init!r} is not a vertex")
        move = lambda s, x: s(x)  # noqa: E731
    elif kind == "EX":
        init = frozenset(init)
        move = lambda s, x: s.apply_set(x)  # noqa: E731
    elif kind == "IP":
        init = tuple(init)
        if len(set(init)) != len(init):
            raise ValueError("interchange particles must start on distinct vertices")
        move = lambda s, x: s.apply_tuple(x)  # noqa: E731
    else:
        raise ValueError(f"unknown process kind {kind!r}; expected one of {KINDS}")
    if kind != "RW" and not set(init) <= V:
        raise ValueError("initial state uses unknown vertices")
    state = init
    states = [(0.0, state)]
    for ev in stream.iter_events():
        if ev.applied:
            state = move(ev.sigma, state)
        states.append((ev.time, state))
    return Trajectory(kind, states)


# ------------------------------------------------------------------ meeting times

def first_meeting(model: Model, positions: Sequence, streams: Sequence[EventStream],
                  horizon: float) -> float | None:
    """First incident time at which the ringing edge of some walker's stream
    holds that walker and another one (left limits).  ``None`` if not met."""
    edge_sets = [frozenset(e) for e in model.edges]
    pos = list(positions)
    merged = heapq.merge(*[_tagged(s, i, horizon) for i, s in enumerate(streams)])
    for time, i, ev in merged:
        e = edge_sets[ev.edge]
        if pos[i] not in e:
            continue
        for j, q in enumerate(pos):
            if j != i and q in e:
                return time
        if ev.applied:
            pos[i] = ev.sigma(pos[i])
    return None


def _walker_streams(model, rng, horizon, count):
    return [EventStream(model, horizon, False, g) for g in rng.spawn(count)]


def meeting_time(model: Model, y: Sequence, rng: np.random.Generator,
                 horizon: float) -> float | None:
    if len(y) != 2:
        raise ValueError("meeting_time takes a pair of vertices")
    streams = _walker_streams(model, rng, horizon, 2)
    return first_meeting(model, y, streams, horizon)


def bar_meeting_time(model: Model, x: Sequence, rng: np.random.Generator,
                     horizon: float) -> float | None:
    if len(x) != 4 or len(set(x)) != 4:
        raise ValueError("bar_meeting_time takes 4 distinct vertices")
    streams = _walker_streams(model, rng, horizon, 4)
    return first_meeting(model, x, streams, horizon)


@dataclass
class EasyVerdict:
    easy: bool
    c_time: float
    c_prob: float
    t_ex2: float
    threshold: float
    replicas: int
    confidence: float
    worst_pair: tuple
    worst_estimate: float
    worst_upper: float
    rows: list = field(default_factory=list)
    exact_worst: float | None = None

    def to_dict(self) -> dict:
        return {
            "easy": self.easy, "c_time": self.c_time, "c_prob": self.c_prob,
            "t_ex2": self.t_ex2, "threshold": self.threshold,
            "replicas": self.replicas, "confidence": self.confidence,
            "worst_pair": list(self.worst_pair),
            "worst_estimate": self.worst_estimate, "worst_upper": self.worst_upper,
            "exact_worst": self.exact_worst, "method": "monte-carlo",
            "rows": self.rows,
        }


STRICT_EASY = {"c_time": 1e10, "c_prob": 1e-3}
DESK_EASY = {"c_time": 100.0, "c_prob": 0.01}  # small enough to certify with a few hundred runs


def classify_easy(model: Model, c_time: float = 1e10, c_prob: float = 1e-3,
                  N: int = 1000, rng: np.random.Generator | None = None,
                  t_ex2: float | None = None, confidence: float = 0.95,
                  exact_check: bool = True) -> EasyVerdict:
    """Estimate sup_y P(M(y) > c_time * T_EX(2)(1/4)) and compare with c_prob.

    The verdict uses the upper Wilson bound of the worst ordered pair.
    """
    from . import exact

    if rng is None:
        rng = np.random.default_rng()
    if t_ex2 is None:
        t_ex2 = exact.mixing_time("EX", model, 2, 0.25)
    threshold = c_time * t_ex2
    rows = []
    worst = None
    for y in ((a, b) for a in model.vertices for b in model.vertices):
        over = 0
        for g in rng.spawn(N):
            m = meeting_time(model, y, g, threshold)
            if m is None:
                over += 1
        est = over / N if N else 0.0
        upper = binomtest(over, N).proportion_ci(confidence, "wilson").high if N else 1.0
        rows.append({"pair": list(y), "exceed": over, "estimate": est, "upper": float(upper)})
        if worst is None or upper > worst[2]:
            worst = (y, est, upper)
    exact_worst = None
    if exact_check:
        exact_worst = max(exact.meeting_survival(model, y, [threshold])[0]
                          for y in ((a, b) for a in model.vertices for b in model.vertices))
    return EasyVerdict(
        easy=bool(worst[2] <= c_prob), c_time=c_time, c_prob=c_prob, t_ex2=t_ex2,
        threshold=threshold, replicas=N, confidence=confidence,
        worst_pair=worst[0], worst_estimate=worst[1], worst_upper=worst[2],
        rows=rows, exact_worst=exact_worst,
    )


def pairwise_meetings(model: Model, positions: Sequence, streams: Sequence[EventStream],
                      horizon: float) -> dict:
    """Meeting time of every pair of walkers, each read off its own two streams."""
    return {(i, j): first_meeting(model, [positions[i], positions[j]],
                                  [streams[i], streams[j]], horizon)
            for i, j in combinations(range(len(positions)), 2)}
