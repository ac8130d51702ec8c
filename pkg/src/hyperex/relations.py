"""Numerical checks of mixing-time inequalities and the small counterexamples."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import exact
from .model import Model, StateSpaceTooLarge

TOL = 1e-6


@dataclass
class Relation:
    name: str
    params: dict
    lhs: float | None
    rhs: float | None
    status: str = "ok"          # ok | violated | skipped
    note: str = ""

    @property
    def slack(self) -> float | None:
        if self.lhs is None or self.rhs is None:
            return None
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        return {"relation": self.name, "params": self.params, "lhs": self.lhs,
                "rhs": self.rhs, "slack": self.slack, "status": self.status,
                "note": self.note, "method": "exact"}


@dataclass
class RelationReport:
    rows: list = field(default_factory=list)

    def add(self, name, params, lhs, rhs, tol=TOL) -> Relation:
        r = Relation(name, params, lhs, rhs)
        if r.slack < -tol:
            r.status = "violated"
        self.rows.append(r)
        return r

    def skip(self, name, params, why) -> None:
        self.rows.append(Relation(name, params, None, None, "skipped", why))

    @property
    def ok(self) -> bool:
        return all(r.status != "violated" for r in self.rows)

    def violations(self) -> list:
        return [r for r in self.rows if r.status == "violated"]

    def min_slack(self, name: str | None = None) -> float:
        vals = [r.slack for r in self.rows if r.slack is not None
                and (name is None or r.name == name)]
        return min(vals) if vals else math.inf

    def to_dict(self) -> dict:
        return {"ok": self.ok, "rows": [r.to_dict() for r in self.rows]}


def _mix(kind, model, k, eps, cap):
    return exact.mixing_time(kind, model, k, eps, cap)


def check_relations(model: Model, ks=None, eps_set=(0.25, 0.1), cap: int = 800,
                    product_times=(0.25, 0.5, 1.0)) -> RelationReport:
    """Instantiate the comparison inequalities with exact mixing times."""
    n = model.n
    ks = list(range(1, n)) if ks is None else list(ks)
    rep = RelationReport()

    for eps in eps_set:
        t_rw = _mix("RW", model, 1, eps, cap)
        for k in ks:
            p = {"k": k, "eps": eps}
            try:
                t_ex = _mix("EX", model, k, eps, cap)
            except StateSpaceTooLarge as e:
                rep.skip("contraction RW<=EX", p, str(e))
                continue
            rep.add("contraction RW<=EX", p, t_rw, t_ex)
            try:
                t_ip = _mix("IP", model, k, eps, cap)
                rep.add("contraction EX<=IP", p, t_ex, t_ip)
                rep.add("contraction RW<=IP", p, t_rw, t_ip)
            except StateSpaceTooLarge as e:
                rep.skip("contraction EX<=IP", p, str(e))
                rep.skip("contraction RW<=IP", p, str(e))
            if 0 < n - k < n:
                t_c = _mix("EX", model, n - k, eps, cap)
                rep.add("complement EX(k)=EX(n-k)", p, abs(t_ex - t_c), 0.0)

    # T(e2) <= ceil(log e2 / log 2e1) T(e1) for e1, e2 in (0, 1/2)
    grid = sorted({e for e in eps_set if 0 < e < 0.5} | {0.25, 0.125, 0.05})
    for kind, k in (("RW", 1), ("EX", 2)):
        if kind == "EX" and n < 3:
            continue
        for e1 in grid:
            for e2 in grid:
                factor = math.ceil(math.log(e2) / math.log(2 * e1))
                lhs = _mix(kind, model, k, e2, cap)
                rhs = factor * _mix(kind, model, k, e1, cap)
                rep.add("eps-change", {"kind": kind, "k": k, "eps1": e1, "eps2": e2,
                                       "factor": factor}, lhs, rhs)

    # T_RW(2^m)(2^-j) <= (j + m) T_RW(1/4)
    base = _mix("RW", model, 1, 0.25, cap)
    for m in (1, 2):
        for j in (2, 3):
            p = {"m": m, "n": j}
            try:
                lhs = exact.mixing_time("RWk", model, 2 ** m, 2.0 ** -j, max(cap, n ** 4))
            except StateSpaceTooLarge as e:
                rep.skip("independent walkers", p, str(e))
                continue
            rep.add("independent walkers", p, lhs, (j + m) * base)

    # ||mu - nu|| <= sum_i ||mu_i - nu_i|| for two independent walkers
    G1 = exact.build_generator("RW", model)
    G2 = exact.build_generator("RWk", model, 2)
    for t in product_times:
        P1 = exact.transition_probs(G1, t)
        P2 = exact.transition_probs(G2, t)
        u1 = np.full(n, 1 / n)
        u2 = np.full(n * n, 1 / n ** 2)
        worst = math.inf
        for a in range(n):
            for b in range(n):
                joint = exact.tv(P2[a * n + b], u2)
                bound = exact.tv(P1[a], u1) + exact.tv(P1[b], u1)
                worst = min(worst, bound - joint)
        rep.add("product TV", {"t": t}, 0.0, worst, tol=1e-12)
    return rep


def product_tv_check(P1: np.ndarray, P2: np.ndarray, pi1, pi2, x: int, y: int) -> tuple:
    """TV of the product law from (x, y) and the sum of the marginal TVs."""
    joint = np.outer(P1[x], P2[y]).ravel()
    pi = np.outer(pi1, pi2).ravel()
    return exact.tv(joint, pi), exact.tv(P1[x], pi1) + exact.tv(P2[y], pi2)


# ---------------------------------------------------------------- examples

def four_cycle_model() -> Model:
    """One edge on four vertices, uniform over the six 4-cycles."""
    return Model.build([1, 2, 3, 4], [[1, 2, 3, 4]], {(4,): 1.0})


NEG_CORR_TIMES = (0.01, 0.05, 0.10, 0.20, 0.30)


def neg_corr_experiment(times=NEG_CORR_TIMES) -> list[dict]:
    m = four_cycle_model()
    B = {3, 4}
    G_rw = exact.build_generator("RW", m)
    G_ex = exact.build_generator("EX", m, 2)
    iB = [G_rw.index(v) for v in B]
    src = G_ex.index({1, 2})
    dst = G_ex.index(B)
    rows = []
    for t in times:
        if t <= 0:
            continue
        P = exact.transition_probs(G_rw, t)
        pu = P[G_rw.index(1), iB].sum()
        pv = P[G_rw.index(2), iB].sum()
        prod = float(pu * pv)
        ex = float(exact.transition_probs(G_ex, t)[src, dst])
        pb = (1 - math.exp(-t)) ** 2
        eb = t * math.exp(-t) / 3
        rows.append({"t": t, "product": prod, "exclusion": ex, "product_bound": pb,
                     "exclusion_bound": eb, "product_within_bound": prod <= pb,
                     "exclusion_above_bound": ex >= eb, "strict": prod < ex,
                     "method": "exact"})
    return rows


def double_transposition_model(delta: float) -> Model:
    """One 4-vertex edge: 4-cycles with prob delta, double transpositions otherwise."""
    w = {(4,): delta}
    if delta < 1:
        w[(2, 2)] = 1 - delta
    return Model.build([1, 2, 3, 4], [[1, 2, 3, 4]], w)


def three_cycle_model(delta: float) -> Model:
    """One 3-vertex edge: transpositions with prob delta, 3-cycles otherwise."""
    w = {(2,): delta}
    if delta < 1:
        w[(3,)] = 1 - delta
    return Model.build([1, 2, 3], [[1, 2, 3]], w)


DELTAS = (1.0, 0.5, 0.1, 0.02)


def delta_ratio_experiments(deltas=DELTAS) -> dict:
    """Exact ratios T_EX(2)/T_EX(1) and T_IP(2)/T_EX(2) on the two one-edge models."""
    for d in deltas:
        if not 0 <= d <= 1:
            raise ValueError(f"delta {d} outside [0, 1]")
    rows = []
    for d in deltas:
        m4, m3 = double_transposition_model(d), three_cycle_model(d)
        ex2 = exact.mixing_time("EX", m4, 2, 0.25)
        ex1 = exact.mixing_time("EX", m4, 1, 0.25)
        ip2 = exact.mixing_time("IP", m3, 2, 0.25)
        ex2b = exact.mixing_time("EX", m3, 2, 0.25)
        rows.append({"delta": d, "four_ex2": ex2, "four_ex1": ex1, "four_ratio": ex2 / ex1,
                     "three_ip2": ip2, "three_ex2": ex2b, "three_ratio": ip2 / ex2b,
                     "method": "exact"})
    by_delta = sorted(rows, key=lambda r: -r["delta"])
    mono4 = all(a["four_ratio"] < b["four_ratio"] for a, b in zip(by_delta, by_delta[1:]))
    mono3 = all(a["three_ratio"] < b["three_ratio"] for a, b in zip(by_delta, by_delta[1:]))
    return {"rows": rows, "four_increasing": mono4, "three_increasing": mono3,
            "ok": mono4 and mono3}


def corpus() -> dict:
    """Ten small models that satisfy the standing assumptions."""
    C = {}
    C["k4-delta0.3"] = double_transposition_model(0.3)
    C["k4-4cycles"] = four_cycle_model()
    C["k3-mixed"] = three_cycle_model(0.2)
    C["c4-transpositions"] = Model.build(range(1, 5), [(1, 2), (2, 3), (3, 4), (4, 1)], {(2,): 1.0})
    C["c6-transpositions"] = Model.build(
        range(1, 7), [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 1)], {(2,): 1.0})
    C["k5-transpositions"] = Model.build(
        range(1, 6), [(a, b) for a in range(1, 6) for b in range(a + 1, 6)], {(2,): 1.0})
    C["c5-plus-big-edge"] = chameleon_model()
    C["k4-triples"] = Model.build(
        range(1, 5), [(1, 2, 3), (2, 3, 4), (1, 3, 4), (1, 2, 4)], {(3,): 0.5, (2,): 0.5})
    C["six-triples"] = Model.build(
        range(1, 7), [(1, 2, 3), (3, 4, 5), (5, 6, 1), (2, 4, 6)], {(3,): 0.7, (2,): 0.3})
    C["k5-single-edge"] = Model.build(range(1, 6), [range(1, 6)], {(5,): 0.5, (3, 2): 0.5})
    return C


def chameleon_model() -> Model:
    """Five vertices: a 5-cycle of transposition edges plus one edge holding all five."""
    ring = [(1, 2), (2, 3), (3, 4), (4, 5), (5, 1)]
    return Model.build(range(1, 6), ring + [tuple(range(1, 6))],
                       [{(2,): 1.0}] * 5 + [{(5,): 0.5, (2, 2): 0.5}])


def big_edge_model() -> Model:
    """Six vertices covered twice by edges of size 3 and 4 only."""
    edges = [(1, 2, 3, 4), (3, 4, 5, 6), (1, 2, 5, 6), (1, 3, 5), (2, 4, 6)]
    return Model.build(range(1, 7), edges,
                       [{(4,): 0.5, (2, 2): 0.5}] * 3 + [{(3,): 0.8, (2,): 0.2}] * 2)
