"""Exact desk-scale computations: generators, heat kernels, TV and mixing times."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, permutations, product

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import expm_multiply
from scipy.stats import poisson

from .model import DEFAULT_STATE_CAP, Model, StateSpaceTooLarge

KINDS = ("RW", "RWk", "EX", "IP")
DENSE_CAP = 5000          # largest chain exponentiated densely
TRUNCATION = 1e-14        # Poisson tail mass dropped per uniformization block


class ReducibleChain(ValueError):
    """The chain is not irreducible, so it has no mixing time."""


def state_count(kind: str, n: int, k: int) -> int:
    if kind == "RW":
        return n
    if kind == "RWk":
        return n ** k
    if kind == "EX":
        return math.comb(n, k)
    if kind == "IP":
        return math.perm(n, k)
    raise ValueError(f"unknown process kind {kind!r}")


def enumerate_states(kind: str, vertices, k: int = 1) -> list:
    V = tuple(vertices)
    if kind == "RW":
        return list(V)
    if kind == "RWk":
        return list(product(V, repeat=k))
    if kind == "EX":
        return [frozenset(c) for c in combinations(V, k)]
    if kind == "IP":
        return list(permutations(V, k))
    raise ValueError(f"unknown process kind {kind!r}")


@dataclass
class GeneratorMatrix:
    kind: str
    k: int
    states: list
    Q: sp.csr_matrix

    @property
    def size(self) -> int:
        return len(self.states)

    def index(self, state) -> int:
        if self.kind == "EX":
            state = frozenset(state)
        elif self.kind in ("IP", "RWk"):
            state = tuple(state)
        return self._lookup()[state]

    def _lookup(self) -> dict:
        if not hasattr(self, "_idx"):
            self._idx = {s: i for i, s in enumerate(self.states)}
        return self._idx

    def dense(self) -> np.ndarray:
        return self.Q.toarray()

    def is_irreducible(self) -> bool:
        if self.size == 1:
            return True
        ncomp, _ = connected_components(self.Q, directed=True, connection="strong")
        return ncomp == 1

    def to_coo_text(self) -> str:
        """One ``row col rate`` line per off-diagonal entry, states listed first."""
        coo = self.Q.tocoo()
        lines = [f"# kind={self.kind} k={self.k} states={self.size}"]
        lines += [f"# {i} {json.dumps(_state_json(s))}" for i, s in enumerate(self.states)]
        lines += [f"{i} {j} {float(v)!r}" for i, j, v in zip(coo.row, coo.col, coo.data) if i != j]
        return "\n".join(lines) + "\n"


def _state_json(s):
    if isinstance(s, frozenset):
        return sorted(s)
    if isinstance(s, tuple):
        return list(s)
    return s


def _moves(model: Model):
    """(image array over vertex indices, rate) for every non-identity permutation charged."""
    pos = {v: i for i, v in enumerate(model.vertices)}
    n = model.n
    out = []
    for ei in range(len(model.edges)):
        for s, p in model.support(ei):
            if s.is_identity():
                continue
            img = np.arange(n)
            for a, b in s.items():
                img[pos[a]] = pos[b]
            out.append((img, p))
    return out


def _encode(rows: np.ndarray, n: int) -> np.ndarray:
    weights = n ** np.arange(rows.shape[1], dtype=np.int64)
    return rows.astype(np.int64) @ weights


def build_generator(kind: str, model: Model, k: int = 1,
                    cap: int = DEFAULT_STATE_CAP) -> GeneratorMatrix:
    """Rate matrix of RW, RW(k), EX(k) or IP(k); rows sum to 0."""
    n = model.n
    if kind == "RW":
        k = 1
    if not 1 <= k <= (n if kind != "RWk" else 64):
        raise ValueError(f"k={k} out of range for {n} vertices")
    size = state_count(kind, n, k)
    if size > cap:
        raise StateSpaceTooLarge(f"{kind}({k}) has {size} states > cap {cap}")
    states = enumerate_states(kind, model.vertices, k)
    if kind == "RWk":
        base = build_generator("RW", model, 1, cap).Q
        Q = sp.csr_matrix((size, size))
        for i in range(k):
            Q = Q + sp.kron(sp.kron(sp.identity(n ** i), base), sp.identity(n ** (k - 1 - i)))
        return GeneratorMatrix(kind, k, states, sp.csr_matrix(Q))

    pos = {v: i for i, v in enumerate(model.vertices)}
    if kind == "RW":
        arr = np.array([[pos[v]] for v in states])
    else:
        arr = np.array([sorted(pos[v] for v in s) if kind == "EX" else [pos[v] for v in s]
                        for s in states])
    codes = _encode(arr, n)
    order = np.argsort(codes)
    sorted_codes = codes[order]
    rows, cols, vals = [], [], []
    src = np.arange(size)
    for img, p in _moves(model):
        new = img[arr]
        if kind == "EX":
            new = np.sort(new, axis=1)
        c = _encode(new, n)
        dst = order[np.searchsorted(sorted_codes, c)]
        moved = dst != src
        rows.append(src[moved])
        cols.append(dst[moved])
        vals.append(np.full(moved.sum(), p))
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=int)
        v = np.zeros(0)
    off = sp.csr_matrix((v, (r, c)), shape=(size, size))
    off.sum_duplicates()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    Q = sp.csr_matrix(off + sp.diags(diag))
    return GeneratorMatrix(kind, k, states, Q)


# ------------------------------------------------------------ heat kernels

def _as_dense(Q) -> np.ndarray:
    if isinstance(Q, GeneratorMatrix):
        Q = Q.Q
    if sp.issparse(Q):
        if Q.shape[0] > DENSE_CAP:
            raise StateSpaceTooLarge(f"{Q.shape[0]} states > dense cap {DENSE_CAP}")
        return Q.toarray()
    return np.asarray(Q, dtype=float)


def transition_probs(Q, t: float, method: str = "uniformization",
                     check: bool = False) -> np.ndarray:
    """exp(tQ) as a dense stochastic matrix.

    Uniformization: with rate L >= max exit rate, P = I + Q/L, expand
    exp(tQ) = sum_n Pois(L s; n) P^n for s = t / 2^m small enough that the
    series is short, then square m times.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    Qd = _as_dense(Q)
    S = Qd.shape[0]
    if t == 0:
        return np.eye(S)
    if method == "eigh":
        w, U = scipy.linalg.eigh(Qd)
        out = (U * np.exp(w * t)) @ U.T
    elif method == "uniformization":
        lam = max(float(-Qd.diagonal().min()), 1e-300)
        m = max(0, math.ceil(math.log2(lam * t))) if lam * t > 1 else 0
        s = t / 2 ** m
        mu = lam * s
        P = np.eye(S) + Qd / lam
        nmax = int(poisson.isf(TRUNCATION, mu)) + 2
        weights = poisson.pmf(np.arange(nmax + 1), mu)
        out = weights[0] * np.eye(S)
        term = np.eye(S)
        for w in weights[1:]:
            term = term @ P
            out += w * term
        out /= weights.sum()
        for _ in range(m):
            out = out @ out
    else:
        raise ValueError(f"unknown method {method!r}")
    if check:
        rs = out.sum(axis=1)
        if np.abs(rs - 1).max() > 1e-10 or out.min() < -1e-12:
            raise AssertionError("heat kernel is not stochastic")
    return out


def propagate(Q, mu: np.ndarray, t: float) -> np.ndarray:
    """Law at time t from initial law ``mu`` (sparse action, no dense kernel)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if isinstance(Q, GeneratorMatrix):
        Q = Q.Q
    if t == 0:
        return np.asarray(mu, dtype=float).copy()
    return expm_multiply(sp.csr_matrix(Q).T * t, np.asarray(mu, dtype=float))


def tv(mu, nu) -> float:
    mu, nu = np.asarray(mu, dtype=float), np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ValueError("distributions have different lengths")
    return 0.5 * float(np.abs(mu - nu).sum())


def worst_tv(P: np.ndarray) -> float:
    """max over starting states of TV(P[x], uniform)."""
    S = P.shape[0]
    return float(0.5 * np.abs(P - 1.0 / S).sum(axis=1).max())


@dataclass
class TvCurve:
    times: list
    values: list
    kind: str = ""
    k: int = 1

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k, "times": self.times, "values": self.values}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["time", "worst_tv"])
        for t, v in zip(self.times, self.values):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()


class _Kernel:
    """Worst-start TV of one chain as a function of time.

    The symmetric generator is diagonalised once so that each evaluation is
    a single matrix product; ``certify`` recomputes a value by uniformization.
    """

    def __init__(self, G: GeneratorMatrix, method: str):
        self.Qd = _as_dense(G)
        self.method = method
        if method == "eigh":
            self.w, self.U = scipy.linalg.eigh(self.Qd)

    def __call__(self, t: float) -> float:
        if self.method == "eigh":
            if t == 0:
                return worst_tv(np.eye(len(self.w)))
            return worst_tv((self.U * np.exp(self.w * t)) @ self.U.T)
        return worst_tv(transition_probs(self.Qd, t, self.method))

    def certify(self, t: float) -> float:
        return worst_tv(transition_probs(self.Qd, t, "uniformization"))


def _chain(kind: str, model: Model, k: int, cap: int) -> GeneratorMatrix:
    G = build_generator(kind, model, k, cap)
    if not G.is_irreducible():
        raise ReducibleChain(
            f"{kind}({G.k}) is reducible: irreducibility assumption violated")
    return G


def tv_curve(kind: str, model: Model, k: int, times, cap: int = DENSE_CAP,
             method: str = "uniformization") -> TvCurve:
    G = build_generator(kind, model, k, cap)
    f = _Kernel(G, method)
    times = [float(t) for t in times]
    return TvCurve(times, [f(t) for t in times], kind, G.k)


@dataclass
class MixingResult:
    time: float
    eps: float
    bracket: tuple
    iterations: int
    states: int
    tv_at_time: float
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"time": self.time, "eps": self.eps, "bracket": list(self.bracket),
                "iterations": self.iterations, "states": self.states,
                "tv_at_time": self.tv_at_time}


def mixing_time_search(kind: str, model: Model, k: int, eps: float,
                       cap: int = DENSE_CAP, rel_tol: float = 1e-9,
                       method: str = "eigh") -> MixingResult:
    """Smallest t with worst-start TV <= eps, by doubling then bisection.

    Returns the upper end of the final bracket, so the reported time
    satisfies the TV condition; that value is re-checked by uniformization.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    G = _chain(kind, model, k, cap)
    S = G.size
    if eps >= 1 - 1 / S:
        return MixingResult(0.0, eps, (0.0, 0.0), 0, S, 1 - 1 / S)
    f = _Kernel(G, method)
    rate = float(-G.Q.diagonal().min())
    hi = 1.0 / rate
    v_hi = f(hi)
    history = [(hi, v_hi)]
    while v_hi > eps:
        hi *= 2
        v_hi = f(hi)
        history.append((hi, v_hi))
    lo = 0.0 if len(history) == 1 else hi / 2
    bracket = (lo, hi)
    tol = rel_tol * (hi - lo)
    it = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        v = f(mid)
        history.append((mid, v))
        if v <= eps:
            hi, v_hi = mid, v
        else:
            lo = mid
        it += 1
    checked = f.certify(hi)
    if checked > eps + 1e-9:
        raise AssertionError(f"uniformization disagrees at t={hi}: TV {checked} > {eps}")
    return MixingResult(hi, eps, bracket, it, S, checked, history)


@lru_cache(maxsize=256)
def _mixing_cached(kind, model, k, eps, cap, method):
    return mixing_time_search(kind, model, k, eps, cap, method=method).time


def mixing_time(kind: str, model: Model, k: int = 1, eps: float = 0.25,
                cap: int = DENSE_CAP, method: str = "eigh") -> float:
    return _mixing_cached(kind, model, k, float(eps), cap, method)


# ----------------------------------------------------------- meeting times

def meeting_generator(model: Model) -> tuple[list, sp.csr_matrix]:
    """Sub-generator of two walkers on separate streams, killed when they meet.

    A walker's stream ringing an edge that holds both walkers is a meeting.
    """
    V = model.vertices
    n = len(V)
    states = [(a, b) for a in V for b in V]
    idx = {s: i for i, s in enumerate(states)}
    Q = np.zeros((n * n, n * n))
    supports = [model.support(i) for i in range(len(model.edges))]
    for (a, b), i in idx.items():
        for e, supp in zip(model.edges, supports):
            ina, inb = a in e, b in e
            if ina and inb:
                Q[i, i] -= 2.0  # either stream ringing e is a meeting
                continue
            for walker, inside in ((0, ina), (1, inb)):
                if not inside:
                    continue
                for s, p in supp:
                    x = (s(a), b) if walker == 0 else (a, s(b))
                    j = idx[x]
                    if j != i:
                        Q[i, j] += p
                        Q[i, i] -= p
    return states, sp.csr_matrix(Q)


def meeting_survival(model: Model, y, times) -> np.ndarray:
    """P(M(y) > t) for each t in ``times`` (non-decreasing)."""
    states, Q = meeting_generator(model)
    i = states.index(tuple(y))
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ValueError("times must be non-negative and non-decreasing")
    out = np.empty(len(times))
    ones = np.ones(len(states))
    Qd = Q.toarray()
    for n_, t in enumerate(times):
        if t == 0:
            out[n_] = 1.0
            continue
        out[n_] = float((scipy.linalg.expm(Qd * t) @ ones)[i])
    return np.clip(out, 0.0, 1.0)
