"""
Permutations of finite label sets, cycle types and the block rewriting maps
used to build the chameleon process.

Composition convention: ``p * q`` is "apply ``q`` first, then ``p``", i.e.
``(p * q)(x) == p(q(x))``.  Multiplying ``sigma`` on the right by ``tau``
therefore means ``sigma * tau``.

Labels must be hashable and mutually comparable (vertex ids are usually
ints).  A permutation acts as the identity on every label outside its
domain, so permutations of an edge extend to the whole vertex set for free.
"""

from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Hashable, Iterable, Sequence

__all__ = [
    "Permutation", "CycleType", "CyclicDecomposition", "ASelection",
    "normalize_type", "parse_type", "format_type", "class_size",
    "fixed_points_of_type", "enumerate_class", "class_table", "sample_class",
    "perm_from_shuffle", "parse_permutation", "decompose", "recompose",
    "beta_index_map", "h_window", "beta_cycle", "beta_trans", "beta_tilde",
    "build_A",
]

Label = Hashable
CycleType = tuple  # non-increasing tuple of ints >= 2; () is the identity class


class Permutation:
    """A bijection of a finite, sorted label set.

    Stored as the one-line form ``images`` over the sorted ``domain``, plus
    a dict of the moved points for fast evaluation.
    """

    __slots__ = ("domain", "images", "_map", "_hash")

    def __init__(self, domain: Iterable[Label], images: Iterable[Label]):
        domain = tuple(domain)
        images = tuple(images)
        if len(domain) != len(images):
            raise ValueError("domain and images differ in length")
        if len(set(domain)) != len(domain):
            raise ValueError("domain has repeated labels")
        if set(images) != set(domain):
            raise ValueError(f"{images!r} is not a permutation of {domain!r}")
        pairs = sorted(zip(domain, images), key=lambda ab: ab[0])
        self.domain = tuple(a for a, _ in pairs)
        self.images = tuple(b for _, b in pairs)
        self._map = {a: b for a, b in pairs if a != b}
        self._hash = None

    @classmethod
    def _unchecked(cls, domain: tuple, moved: dict) -> "Permutation":
        """Trusted constructor: ``domain`` sorted, ``moved`` a bijection on part of it."""
        p = cls.__new__(cls)
        p.domain = domain
        p.images = tuple([moved.get(a, a) for a in domain])
        p._map = moved
        p._hash = None
        return p

    @classmethod
    def identity(cls, domain: Iterable[Label] = ()) -> "Permutation":
        domain = tuple(domain)
        return cls(domain, domain)

    @classmethod
    def from_mapping(cls, mapping: dict, domain: Iterable[Label] | None = None) -> "Permutation":
        dom = set(mapping) | set(mapping.values())
        if domain is not None:
            dom |= set(domain)
        dom = sorted(dom)
        return cls(dom, [mapping.get(a, a) for a in dom])

    @classmethod
    def from_cycles(cls, cycles: Iterable[Sequence[Label]],
                    domain: Iterable[Label] | None = None) -> "Permutation":
        mapping = {}
        for cyc in cycles:
            cyc = tuple(cyc)
            for a, b in zip(cyc, cyc[1:] + cyc[:1]):
                if a in mapping:
                    raise ValueError(f"label {a!r} appears in two cycles")
                mapping[a] = b
        return cls.from_mapping(mapping, domain)

    def __call__(self, x: Label) -> Label:
        return self._map.get(x, x)

    def items(self):
        """(x, sigma(x)) for the moved points only."""
        return self._map.items()

    @property
    def support(self) -> frozenset:
        return frozenset(self._map)

    def is_identity(self) -> bool:
        return not self._map

    def __mul__(self, other: "Permutation") -> "Permutation":
        dom = set(self.domain) | set(other.domain)
        mapping = {x: self(other(x)) for x in dom}
        return Permutation.from_mapping(mapping, dom)

    def inverse(self) -> "Permutation":
        return Permutation(self.images, self.domain)

    def __pow__(self, n: int) -> "Permutation":
        if n < 0:
            return self.inverse() ** (-n)
        mapping = {}
        for cyc in self.cycles():
            d = len(cyc)
            for j, x in enumerate(cyc):
                mapping[x] = cyc[(j + n) % d]
        return Permutation.from_mapping(mapping, self.domain)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Permutation):
            return NotImplemented
        return self._map == other._map

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._map.items()))
        return self._hash

    def cycles(self) -> list[tuple]:
        """Non-trivial cycles, each starting at its minimum, sorted by minimum."""
        seen = set()
        out = []
        for start in sorted(self._map):
            if start in seen:
                continue
            cyc = [start]
            seen.add(start)
            x = self._map[start]
            while x != start:
                cyc.append(x)
                seen.add(x)
                x = self._map[x]
            out.append(tuple(cyc))
        return out

    def cycle_type(self) -> CycleType:
        return normalize_type(len(c) for c in self.cycles())

    def apply_tuple(self, xs: Sequence[Label]) -> tuple:
        m = self._map
        return tuple(m.get(x, x) for x in xs)

    def apply_set(self, xs: Iterable[Label]) -> frozenset:
        m = self._map
        return frozenset(m.get(x, x) for x in xs)

    def to_cycle_string(self) -> str:
        cyc = self.cycles()
        if not cyc:
            return "()"
        return "".join("(" + " ".join(str(x) for x in c) + ")" for c in cyc)

    def to_json(self) -> list:
        """One-line form: images of the sorted domain."""
        return list(self.images)

    def __repr__(self) -> str:
        return f"Permutation({self.to_cycle_string()})"


_CYCLE_RE = re.compile(r"\(([^()]*)\)")


def _parse_label(tok: str):
    try:
        return int(tok)
    except ValueError:
        return tok


def parse_permutation(text: str, domain: Iterable[Label] | None = None) -> Permutation:
    """Parse cycle notation ``"(5 21)(8 10)"`` or a JSON one-line array.

    A JSON array lists the images of its own sorted value set, so
    ``[2, 1, 3]`` is the transposition swapping 1 and 2.
    """
    text = text.strip()
    if text.startswith("["):
        images = json.loads(text)
        return Permutation(sorted(images), images)
    if not text.startswith("("):
        raise ValueError(f"cannot parse permutation {text!r}")
    leftover = _CYCLE_RE.sub("", text).strip()
    if leftover:
        raise ValueError(f"unexpected text {leftover!r} in permutation {text!r}")
    cycles = []
    for body in _CYCLE_RE.findall(text):
        toks = body.replace(",", " ").split()
        if toks:
            cycles.append([_parse_label(t) for t in toks])
    return Permutation.from_cycles(cycles, domain)


# ---------------------------------------------------------------- cycle types

def normalize_type(parts: Iterable[int]) -> CycleType:
    parts = tuple(sorted((int(p) for p in parts if int(p) != 1), reverse=True))
    if any(p < 2 for p in parts):
        raise ValueError(f"cycle lengths must be >= 1, got {parts}")
    return parts


def parse_type(text: str) -> CycleType:
    """``"2+2"`` -> ``(2, 2)``; ``"id"`` or ``""`` -> ``()``."""
    text = text.strip()
    if text in ("", "id"):
        return ()
    parts = []
    for tok in text.split("+"):
        tok = tok.strip()
        if not tok.isdigit() or int(tok) < 2:
            raise ValueError(f"bad cycle type {text!r}")
        parts.append(int(tok))
    return normalize_type(parts)


def format_type(t: CycleType) -> str:
    return "+".join(str(p) for p in t) if t else "id"


def class_size(t: CycleType, n: int) -> int:
    """Number of permutations of ``n`` labels with non-trivial cycle type ``t``."""
    if sum(t) > n:
        return 0
    size = math.factorial(n) // math.factorial(n - sum(t))
    for p in t:
        size //= p
    for mult in _multiplicities(t):
        size //= math.factorial(mult)
    return size


def _multiplicities(t: CycleType):
    return [len(list(g)) for _, g in itertools.groupby(t)]


def fixed_points_of_type(t: CycleType, n: int) -> int:
    return n - sum(t)


@lru_cache(maxsize=None)
def class_table(labels: tuple) -> dict:
    """Every permutation of ``labels`` grouped by cycle type (|labels| <= 8)."""
    if len(labels) > 8:
        raise ValueError("class enumeration is limited to 8 labels")
    table: dict = {}
    for images in itertools.permutations(labels):
        p = Permutation(labels, images)
        table.setdefault(p.cycle_type(), []).append(p)
    return {t: tuple(ps) for t, ps in table.items()}


def enumerate_class(t: CycleType, labels: Iterable[Label]) -> tuple:
    labels = tuple(sorted(labels))
    t = normalize_type(t)
    if sum(t) > len(labels):
        raise ValueError(f"cycle type {t} does not fit on {len(labels)} labels")
    return class_table(labels).get(t, ())


def perm_from_shuffle(t: CycleType, shuffled: Sequence[Label]) -> Permutation:
    """Cut a shuffled label sequence into consecutive cycles of lengths ``t``.

    Uniform shuffles give uniform class members: every member of the class
    arises from the same number of arrangements.
    """
    mapping = {}
    pos = 0
    for p in t:
        cyc = shuffled[pos:pos + p]
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            mapping[a] = b
        pos += p
    if pos > len(shuffled):
        raise ValueError(f"cycle type {t} does not fit on {len(shuffled)} labels")
    return Permutation._unchecked(tuple(sorted(shuffled)), mapping)


def sample_class(t: CycleType, labels: Sequence[Label], rng) -> Permutation:
    """Uniform draw from the conjugacy class with cycle type ``t``."""
    t = normalize_type(t)
    labels = tuple(labels)
    if sum(t) > len(labels):
        raise ValueError(f"cycle type {t} does not fit on {len(labels)} labels")
    order = rng.permutation(len(labels))
    return perm_from_shuffle(t, [labels[i] for i in order])


# --------------------------------------------------------- canonical decomposition

@dataclass(frozen=True)
class CyclicDecomposition:
    """Canonical form: ordered transposition block plus cycles of length >= 3.

    ``rho0`` holds pairs ``(a, b)`` with ``a < b`` sorted by ``a``; each cycle
    starts at its minimal label and cycles are sorted by that minimum.
    """
    rho0: tuple = ()
    cycles: tuple = ()

    @property
    def K(self) -> int:
        return len(self.cycles)

    @property
    def d0(self) -> int:
        return 2 * len(self.rho0)

    @property
    def m0(self):
        return self.rho0[0][0] if self.rho0 else None

    @property
    def minima(self) -> tuple:
        return tuple(c[0] for c in self.cycles)

    @property
    def lengths(self) -> tuple:
        return tuple(len(c) for c in self.cycles)

    def flat_rho0(self) -> tuple:
        return tuple(x for pair in self.rho0 for x in pair)


def decompose(p: Permutation) -> CyclicDecomposition:
    rho0, cycles = [], []
    for c in p.cycles():
        if len(c) == 2:
            rho0.append(c)
        else:
            cycles.append(c)
    return CyclicDecomposition(tuple(rho0), tuple(cycles))


def _check_rho0(rho0) -> None:
    prev = None
    for pair in rho0:
        if len(pair) != 2 or not pair[0] < pair[1]:
            raise ValueError(f"transposition {pair!r} must be written (a b) with a < b")
        if prev is not None and not prev < pair[0]:
            raise ValueError("transpositions are not in increasing order of their minima")
        prev = pair[0]


def recompose(d: CyclicDecomposition, domain: Iterable[Label] | None = None) -> Permutation:
    _check_rho0(d.rho0)
    for c in d.cycles:
        if len(c) < 3:
            raise ValueError(f"cycle {c!r} is shorter than 3")
    labels = [x for pair in d.rho0 for x in pair] + [x for c in d.cycles for x in c]
    if len(set(labels)) != len(labels):
        raise ValueError("decomposition blocks overlap")
    return Permutation.from_cycles(list(d.rho0) + list(d.cycles), domain)


# ------------------------------------------------------------ block rewriting

def beta_index_map(A: Iterable[int], d: int) -> list[int]:
    """Exponent map of the rewrite on a d-cycle, as a list over 0..d-1.

    Exponent 0 (the minimal label) is always fixed.  For d >= 4 each
    ``i in A`` swaps exponents ``2i-1`` and ``2d'+2i-1`` with d' = d // 4;
    for d == 3 the only admissible index is 0, which swaps exponents 1 and 2.
    """
    A = set(A)
    idx = list(range(d))
    if d < 3:
        raise ValueError("cycles must have length >= 3")
    if d == 3:
        if A - {0}:
            raise ValueError(f"index set {sorted(A)} out of range for a 3-cycle")
        if 0 in A:
            idx[1], idx[2] = idx[2], idx[1]
        return idx
    dp = d // 4
    for i in A:
        if not 1 <= i <= dp:
            raise ValueError(f"index {i} out of range 1..{dp} for a {d}-cycle")
        a, b = 2 * i - 1, 2 * dp + 2 * i - 1
        idx[a], idx[b] = idx[b], idx[a]
    return idx


def h_window(j: int, d: int) -> tuple[int, ...]:
    """Exponents touched by index ``j`` on a d-cycle (all three when d == 3)."""
    if d == 3:
        return (1, 2, 0)
    dp = d // 4
    return (2 * j - 2, 2 * j - 1, 2 * dp + 2 * j - 2, 2 * dp + 2 * j - 1)


def _rotate_to_min(rho: Sequence[Label]) -> tuple:
    rho = tuple(rho)
    k = rho.index(min(rho))
    return rho[k:] + rho[:k]


def beta_cycle(A: Iterable[int], rho: Sequence[Label]) -> tuple:
    """Rewrite the cycle ``rho`` (label sequence) by index set ``A``."""
    s = _rotate_to_min(rho)
    idx = beta_index_map(A, len(s))
    return tuple(s[idx[j]] for j in range(len(s)))


def beta_trans(A: Iterable[int], rho0: Sequence[tuple]) -> tuple:
    """Rewrite an ordered product of disjoint transpositions.

    For each ``i in A`` with ``a[4i-1] < a[4i-2]`` (1-based flat labels) the
    block is multiplied on the right by ``(a[4i-3] a[4i-1])(a[4i-2] a[4i])``.
    """
    rho0 = tuple(tuple(p) for p in rho0)
    _check_rho0(rho0)
    a = [x for pair in rho0 for x in pair]
    dp = len(a) // 4
    sigma = Permutation.from_cycles(rho0)
    for i in sorted(set(A)):
        if not 1 <= i <= dp:
            raise ValueError(f"index {i} out of range 1..{dp} for {len(rho0)} transpositions")
        a1, a2, a3, a4 = a[4 * i - 4], a[4 * i - 3], a[4 * i - 2], a[4 * i - 1]
        if a3 < a2:
            sigma = sigma * Permutation.from_cycles([(a1, a3), (a2, a4)])
    return decompose(sigma).rho0


@dataclass(frozen=True)
class ASelection:
    """Index sets for the transposition block and each long cycle."""
    a0: frozenset = frozenset()
    cycles: tuple = ()

    @classmethod
    def of(cls, a0: Iterable[int] = (), *cycles: Iterable[int]) -> "ASelection":
        return cls(frozenset(a0), tuple(frozenset(c) for c in cycles))

    @classmethod
    def empty(cls, d: CyclicDecomposition) -> "ASelection":
        return cls(frozenset(), tuple(frozenset() for _ in d.cycles))

    def is_empty(self) -> bool:
        return not self.a0 and not any(self.cycles)

    def keyed(self, d: CyclicDecomposition) -> dict:
        """Index sets keyed by each cycle's minimal label."""
        return dict(zip(d.minima, self.cycles))

    def reordered(self, d: CyclicDecomposition, minima_order: Sequence[Label]) -> "ASelection":
        """Same selection with cycle slots listed in ``minima_order``."""
        by_min = self.keyed(d)
        if sorted(minima_order) != sorted(by_min):
            raise ValueError("minima_order must list every cycle minimum once")
        return ASelection(self.a0, tuple(by_min[m] for m in minima_order))

    def __str__(self) -> str:
        def fmt(s):
            return "{" + ",".join(str(x) for x in sorted(s)) + "}"
        return "(" + ",".join(fmt(s) for s in (self.a0, *self.cycles)) + ")"


def beta_tilde(A: ASelection, sigma: Permutation) -> Permutation:
    d = decompose(sigma)
    if len(A.cycles) != d.K:
        raise ValueError(f"selection has {len(A.cycles)} cycle slots, permutation has {d.K}")
    rho0 = beta_trans(A.a0, d.rho0)
    cycles = tuple(beta_cycle(Ai, c) for Ai, c in zip(A.cycles, d.cycles))
    return recompose(CyclicDecomposition(rho0, cycles), sigma.domain)


def _is_split(block: Iterable[Label], R: frozenset, W: frozenset, size: int) -> bool:
    """True iff ``block`` is one red + (size-1) white or one white + (size-1) red."""
    nr = nw = 0
    for x in block:
        if x in R:
            nr += 1
        elif x in W:
            nw += 1
    return nr + nw == size and min(nr, nw) == 1


def build_A(R: Iterable[Label], W: Iterable[Label], sigma: Permutation) -> ASelection:
    R, W = frozenset(R), frozenset(W)
    if R & W:
        raise ValueError("red and white sets overlap")
    d = decompose(sigma)
    a = d.flat_rho0()
    a0 = frozenset(
        j for j in range(1, len(a) // 4 + 1)
        if _is_split(a[4 * j - 4:4 * j], R, W, 4)
    )
    cycles = []
    for c in d.cycles:
        n = len(c)
        if n == 3:
            cycles.append(frozenset({0}) if _is_split(c, R, W, 3) else frozenset())
        else:
            cycles.append(frozenset(
                j for j in range(1, n // 4 + 1)
                if _is_split([c[e] for e in h_window(j, n)], R, W, 4)
            ))
    return ASelection(a0, tuple(cycles))
