"""Hypergraphs with per-edge class-function measures, and their validation."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .perm import enumerate_class, fixed_points_of_type, format_type, normalize_type

__all__ = [
    "Hypergraph", "ClassMeasure", "Model", "ValidationReport",
    "StateSpaceTooLarge", "DEFAULT_STATE_CAP", "fixed_point_prob",
    "irreducible", "validate", "falling_factorial",
]

DEFAULT_STATE_CAP = 200_000
FIXED_POINT_BOUND = 1 / 5
WEIGHT_TOL = 1e-12


class StateSpaceTooLarge(RuntimeError):
    """An exact computation would exceed the configured state cap."""


def falling_factorial(n: int, k: int) -> int:
    return math.perm(n, k)


@dataclass(frozen=True)
class Hypergraph:
    vertices: tuple
    edges: tuple  # tuple of sorted vertex tuples; duplicates allowed

    def __post_init__(self):
        vs = tuple(self.vertices)
        if len(set(vs)) != len(vs):
            raise ValueError("repeated vertex labels")
        vset = set(vs)
        edges = []
        for e in self.edges:
            e = tuple(sorted(e))
            if len(set(e)) != len(e):
                raise ValueError(f"edge {e} repeats a vertex")
            if len(e) < 2:
                raise ValueError(f"edge {e} has fewer than 2 vertices")
            if not set(e) <= vset:
                raise ValueError(f"edge {e} is not a subset of the vertex set")
            edges.append(e)
        object.__setattr__(self, "vertices", tuple(sorted(vs)))
        object.__setattr__(self, "edges", tuple(edges))

    @property
    def n(self) -> int:
        return len(self.vertices)

    def degree(self, v) -> int:
        return sum(1 for e in self.edges if v in e)

    def degrees(self) -> dict:
        return {v: self.degree(v) for v in self.vertices}

    def is_regular(self) -> bool:
        return len(set(self.degrees().values())) <= 1


@dataclass(frozen=True)
class ClassMeasure:
    """A probability measure on S_e given as weights on cycle types.

    Weights are per conjugacy class (total mass of the class), so the
    measure is constant on classes by construction.
    """
    weights: tuple  # ((cycle_type, weight), ...) sorted, positive weights only

    @classmethod
    def from_dict(cls, weights: dict, size: int | None = None) -> "ClassMeasure":
        merged: dict = {}
        for t, w in weights.items():
            t = normalize_type(t)
            w = float(w)
            if w < 0 or w > 1 or math.isnan(w):
                raise ValueError(f"weight {w} for type {format_type(t)} outside [0, 1]")
            if size is not None and sum(t) > size:
                raise ValueError(f"cycle type {format_type(t)} does not fit an edge of size {size}")
            merged[t] = merged.get(t, 0.0) + w
        total = sum(merged.values())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        return cls(tuple(sorted((t, w) for t, w in merged.items() if w > 0)))

    def as_dict(self) -> dict:
        return dict(self.weights)

    def types(self) -> tuple:
        return tuple(t for t, _ in self.weights)


@dataclass(frozen=True)
class Model:
    graph: Hypergraph
    measures: tuple  # one ClassMeasure per edge, aligned with graph.edges

    def __post_init__(self):
        if len(self.measures) != len(self.graph.edges):
            raise ValueError("need exactly one measure per edge")
        for e, m in zip(self.graph.edges, self.measures):
            for t in m.types():
                if sum(t) > len(e):
                    raise ValueError(f"type {format_type(t)} does not fit edge {e}")

    @classmethod
    def build(cls, vertices: Iterable, edges: Iterable[Iterable], weights) -> "Model":
        """``weights`` is one dict (used for every edge) or a list of dicts."""
        g = Hypergraph(tuple(vertices), tuple(tuple(e) for e in edges))
        if isinstance(weights, dict):
            weights = [weights] * len(g.edges)
        ms = tuple(ClassMeasure.from_dict(w, len(e)) for w, e in zip(weights, g.edges))
        if len(ms) != len(g.edges):
            raise ValueError("need exactly one weight table per edge")
        return cls(g, ms)

    @property
    def vertices(self) -> tuple:
        return self.graph.vertices

    @property
    def edges(self) -> tuple:
        return self.graph.edges

    @property
    def n(self) -> int:
        return self.graph.n

    def support(self, edge_index: int) -> list:
        """(permutation, probability) for every permutation charged by f_e."""
        e = self.edges[edge_index]
        out = []
        for t, w in self.measures[edge_index].weights:
            members = enumerate_class(t, e)
            p = w / len(members)
            out.extend((s, p) for s in members)
        return out


def fixed_point_prob(measure: ClassMeasure, edge: Sequence, v) -> float:
    """Probability under ``measure`` that ``v`` is a fixed point.

    Uniform class sampling is exchangeable over the edge, so each vertex is
    fixed with probability (number of fixed points) / |e| within a class.
    """
    if v not in edge:
        raise ValueError(f"vertex {v!r} is not in edge {tuple(edge)}")
    n = len(edge)
    return sum(w * fixed_points_of_type(t, n) / n for t, w in measure.weights)


def irreducible(model: Model, k: int, cap: int = DEFAULT_STATE_CAP) -> bool:
    """Whether IP(k) on the support of the measures is irreducible (BFS)."""
    n = model.n
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    size = falling_factorial(n, k)
    if size > cap:
        raise StateSpaceTooLarge(f"IP({k}) has {size} states > cap {cap}; undecided at cap")
    moves = [s for i in range(len(model.edges)) for s, _ in model.support(i)]
    moves = [dict(s.items()) for s in moves if not s.is_identity()]
    start = tuple(model.vertices[:k])
    seen = {start}
    queue = deque([start])
    while queue:
        x = queue.popleft()
        for m in moves:
            y = tuple(m.get(v, v) for v in x)
            if y not in seen:
                seen.add(y)
                queue.append(y)
    return len(seen) == size


@dataclass
class ValidationReport:
    class_function: bool
    max_fixed_point_prob: float
    fixed_point_ok: bool
    regular: bool
    degrees: dict
    irreducible: dict = field(default_factory=dict)  # k -> True / False / None (undecided)

    @property
    def ok(self) -> bool:
        return (self.class_function and self.fixed_point_ok and self.regular
                and all(v is True for v in self.irreducible.values()))

    def failures(self) -> list[str]:
        out = []
        if not self.fixed_point_ok:
            out.append(f"fixed-point probability {self.max_fixed_point_prob:.6g} exceeds 1/5")
        if not self.regular:
            out.append("hypergraph is not regular")
        for k, v in sorted(self.irreducible.items()):
            if v is None:
                out.append(f"irreducibility of IP({k}) undecided at state cap")
            elif not v:
                out.append(f"IP({k}) is reducible (irreducibility assumption fails)")
        return out

    def to_dict(self) -> dict:
        return {
            "class_function": self.class_function,
            "max_fixed_point_prob": self.max_fixed_point_prob,
            "fixed_point_ok": self.fixed_point_ok,
            "regular": self.regular,
            "degrees": {str(v): d for v, d in self.degrees.items()},
            "irreducible": {str(k): v for k, v in sorted(self.irreducible.items())},
            "ok": self.ok,
            "failures": self.failures(),
        }


def validate(model: Model, ks: Iterable[int] | None = None,
             cap: int = DEFAULT_STATE_CAP) -> ValidationReport:
    worst = 0.0
    for e, m in zip(model.edges, model.measures):
        for v in e:
            worst = max(worst, fixed_point_prob(m, e, v))
    if ks is None:
        ks = range(1, model.n)
    irr = {}
    for k in ks:
        try:
            irr[k] = irreducible(model, k, cap)
        except StateSpaceTooLarge:
            irr[k] = None
    return ValidationReport(
        class_function=True,
        max_fixed_point_prob=worst,
        fixed_point_ok=worst <= FIXED_POINT_BOUND + 1e-15,
        regular=model.graph.is_regular(),
        degrees=model.graph.degrees(),
        irreducible=irr,
    )
