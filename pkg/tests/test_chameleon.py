import csv
import io
import json

import numpy as np
import pytest
from conftest import EX25_R, EX25_SIGMA, EX25_TILDE, EX25_V, EX25_W

from hyperex.chameleon import (COLOUR, CONSTANT, ChameleonState, PhaseSchedule, StepInfo,
                               build_L, cham_step, depink, g_map, init_chameleon,
                               pinken_cap, run_batch, run_chameleon)
from hyperex.engine import Event, EventStream, evolve, stream_rng
from hyperex.model import Model
from hyperex.perm import Permutation, parse_permutation, sample_class


def state25():
    z = tuple(sorted(set(EX25_V) - EX25_R - EX25_W))
    return ChameleonState(z, EX25_R, frozenset(), EX25_W)


def random_state(rng, n, k=None, pinks=None):
    V = list(range(1, n + 1))
    order = [int(v) for v in rng.permutation(V)]
    k = k if k is not None else int(rng.integers(1, n - 1))
    z = tuple(order[:k - 1])
    rest = order[k - 1:]
    p = pinks if pinks is not None else int(rng.integers(0, max(1, len(rest) // 3)))
    P = frozenset(rest[:p])
    rest = rest[p:]
    cut = int(rng.integers(1, len(rest)))
    return ChameleonState(z, frozenset(rest[:cut]), P, frozenset(rest[cut:]))


def random_type(rng, n):
    t, left = [], n
    while left >= 2 and (not t or rng.random() < 0.6):
        c = int(rng.integers(2, left + 1))
        t.append(c)
        left -= c
    return tuple(t)


# ----------------------------------------------------------------- init

def test_init_examples():
    s = init_chameleon((1, 2, 3), range(1, 6))
    assert s == ChameleonState((1, 2), frozenset({3}), frozenset(), frozenset({4, 5}))
    one = init_chameleon((4,), range(1, 6))
    assert one.z == () and one.R == {4} and one.ink == 1.0
    assert s.ink_half == 2
    with pytest.raises(ValueError):
        init_chameleon((1, 1), range(1, 6))


def test_phase_schedule():
    ph = PhaseSchedule(1.0)
    assert [ph.phase_of(t) for t in (0.3, 1.0, 1.2, 2.0, 2.01, 3.0, 3.5, 4.0)] == [
        CONSTANT, CONSTANT, COLOUR, COLOUR, CONSTANT, CONSTANT, COLOUR, COLOUR]
    assert ph.depink_times(5.0) == [2.0, 4.0]
    with pytest.raises(ValueError):
        PhaseSchedule(0.0)


def test_depink_examples():
    s = ChameleonState((), frozenset({1}), frozenset({2, 3}), frozenset({4, 5, 6, 7, 8}))
    red = depink(s, 1)
    assert red.R == {1, 2, 3} and not red.P and red.W == s.W
    white = depink(s, 0)
    assert white.W == s.W | {2, 3} and white.R == {1} and not white.P
    none = ChameleonState((), frozenset({1, 2}), frozenset(), frozenset({3, 4}))
    assert depink(none, 1) is none
    few = ChameleonState((), frozenset({1, 2}), frozenset({5}), frozenset({3, 4}))
    assert depink(few, 1) is few


# ----------------------------------------------------------------- L sets

def test_l_sets_25_vertex_example(sigma25):
    L = build_L(state25(), sigma25)
    assert set(L.pairs.values()) == {frozenset({5, 8}), frozenset({3, 12}),
                                     frozenset({1, 24}), frozenset({2, 4})}
    assert L.full == {1, 2, 3, 4, 5, 8, 12, 24}
    # blocks are numbered by cycle minimum: the 16-cycle is block 1, the 3-cycle block 2
    assert L.pairs[(0, 1)] == {5, 8} and L.pairs[(2, 0)] == {3, 12}
    assert L.pairs[(1, 1)] == {1, 24} and L.pairs[(1, 3)] == {2, 4}
    assert L.cap == 2 and L.chosen == ((0, 1), (1, 1))
    assert L.bar == {1, 5, 8, 24}


def test_cap_zero_selects_nothing(sigma25):
    s = state25()
    pinks = frozenset(list(s.R)[:3]) | frozenset(list(s.W)[:3])
    tight = ChameleonState(s.z, s.R - pinks, pinks, s.W - pinks)
    assert pinken_cap(tight) == 0
    L = build_L(tight, sigma25)
    assert L.chosen == () and L.bar == frozenset()


def test_random_l_sets_are_red_white_and_capped(rng):
    for _ in range(1000):
        n = int(rng.integers(5, 13))
        s = random_state(rng, n)
        sigma = sample_class(random_type(rng, n), range(1, n + 1), rng)
        L = build_L(s, sigma)
        for pair in L.pairs.values():
            assert len(pair) == 2 and len(pair & s.R) == 1 and len(pair & s.W) == 1
        assert len(L.bar) == 2 * len(L.chosen)
        assert len(s.P) + 3 * len(L.chosen) <= max(min(len(s.R), len(s.W)), len(s.P))
        assert len(L.chosen) == min(len(L.pairs), L.cap)
        assert list(L.chosen) == sorted(L.pairs)[:len(L.chosen)]


# ----------------------------------------------------------------- steps

def test_step_25_vertex_example(sigma25):
    s = state25()
    ev = Event(1.5, 0, sigma25, 1)
    info = StepInfo()
    post = cham_step(s, ev, COLOUR, True, edge=EX25_V, info=info)
    L = frozenset({1, 2, 3, 4, 5, 8, 12, 24})
    assert info.kind == "pinken-L" and info.pinkened == L
    assert post.P == sigma25.apply_set(L)
    assert post.R == sigma25.apply_set(s.R - L) == {3, 7, 16, 17}
    assert post.W == sigma25.apply_set(s.W - L) == {2, 4, 5, 8, 20}
    assert post.z == sigma25.apply_tuple(s.z)
    assert post.ink_half == s.ink_half
    capped = cham_step(s, ev, COLOUR, False, edge=EX25_V)
    assert capped.P == sigma25.apply_set({1, 5, 8, 24})


def test_phase_mismatch_is_an_error(sigma25):
    ev = Event(0.5, 0, sigma25, 1)
    with pytest.raises(ValueError):
        cham_step(state25(), ev, COLOUR, edge=EX25_V, schedule=PhaseSchedule(1.0))


def test_constant_phase_with_coin_off_is_still(sigma25):
    s = state25()
    assert cham_step(s, Event(0.5, 0, sigma25, 0), CONSTANT, edge=EX25_V) == s
    assert cham_step(s, Event(0.5, 0, sigma25, 1), CONSTANT, edge=EX25_V) == s.apply(sigma25)


def test_two_edge_branch_ignores_coin_and_does_not_move():
    s = ChameleonState((5,), frozenset({1, 3}), frozenset(), frozenset({2, 4, 6}))
    swap = parse_permutation("(1 2)", [1, 2])
    for theta in (0, 1):
        post = cham_step(s, Event(1.5, 0, swap, theta), COLOUR, edge=(1, 2))
        assert post == ChameleonState((5,), frozenset({3}), frozenset({1, 2}), frozenset({4, 6}))
    gated = ChameleonState((5,), frozenset({1, 3}), frozenset({7, 8}), frozenset({2, 4, 6}))
    post = cham_step(gated, Event(1.5, 0, swap, 1), COLOUR, edge=(1, 2))
    assert post == gated.apply(swap)
    assert cham_step(gated, Event(1.5, 0, swap, 1), COLOUR, True, edge=(1, 2)).P == {1, 2, 7, 8}


def test_no_red_white_contact_is_a_plain_move(rng):
    for _ in range(500):
        n = int(rng.integers(6, 11))
        s = random_state(rng, n)
        red_side = sorted(s.R | s.P | set(s.z))
        if len(red_side) < 2:
            continue
        edge = tuple(int(v) for v in rng.choice(red_side, size=min(4, len(red_side)),
                                                  replace=False))
        sigma = sample_class(random_type(rng, len(edge)), edge, rng)
        post = cham_step(s, Event(1.5, 0, sigma, 1), COLOUR, edge=edge)
        assert post == s.apply(sigma)
        assert (len(post.R), len(post.P), len(post.W)) == (len(s.R), len(s.P), len(s.W))


# ----------------------------------------------------------------- g map

def test_g_map_on_25_vertex_example(sigma25, tilde25):
    rep = g_map(state25(), sigma25, EX25_V, modified=True)
    assert rep.ok and rep.sigma_tilde == tilde25
    assert rep.pinkened == {1, 2, 3, 4, 5, 8, 12, 24}


def test_g_map_without_pinkening_is_identity():
    V = tuple(range(1, 7))
    s = ChameleonState((1, 2), frozenset({3, 4}), frozenset(), frozenset({5, 6}))
    sigma = parse_permutation("(1 2)(3 4)", V)
    rep = g_map(s, sigma, V, modified=True)
    assert not rep.pinkened and rep.sigma_tilde == sigma and rep.g.is_identity() and rep.ok
    with pytest.raises(ValueError):
        g_map(s, parse_permutation("(1 2)", V), (1, 2))


def test_g_map_random_events(rng):
    for i in range(1000):
        n = int(rng.integers(5, 13))
        s = random_state(rng, n)
        V = tuple(range(1, n + 1))
        sigma = sample_class(random_type(rng, n), V, rng)
        rep = g_map(s, sigma, V, modified=bool(i % 2))
        assert rep.ok, (s, sigma)


# ----------------------------------------------------------------- runs

def test_horizon_zero_run(cham_model, rng):
    rec = run_chameleon(cham_model, (1, 2), 0.5, 0.0, rng=rng)
    assert rec.ink_values == [1.0] and rec.outcome is None and not rec.absorbed
    assert rec.depink_times == []


def test_black_path_equals_interchange(cham_model):
    for r in range(200):
        stream = EventStream.replay(cham_model, r, 0, 30.0, True)
        rec = run_chameleon(cham_model, (1, 3, 4), 0.5, 30.0, stream=stream,
                            coin_rng=stream_rng(r, 1), track_z=True, check=True)
        ip = evolve("IP", (1, 3), stream)
        assert all(z == ip.state_at(t) for t, z in rec.z_path)
        assert len(rec.z_path) == rec.n_events + 1


def test_run_invariants(big_edge_model, cham_model):
    for model in (big_edge_model, cham_model):
        for r in range(100):
            stream = EventStream.replay(model, r, 0, 200.0, True)
            rec = run_chameleon(model, (1, 2), 0.5, 200.0, stream=stream,
                                coin_rng=stream_rng(r, 1), check=True, log=True)
            halves = [h for _, h in rec.ink_trace]
            assert all(0 <= h <= 2 * (model.n - 1) for h in halves)
            assert [t for t, _ in rec.ink_trace[1:]] == rec.depink_times
            assert all(abs(t / 1.0 - round(t)) < 1e-12 for t in rec.depink_times)
            for _, kind, keys, pairs in rec.pinkenings:
                assert all(len(p) == 2 for p in pairs)
            if rec.absorbed:
                assert rec.final.outcome() == rec.outcome
                assert not rec.final.P
        if model is big_edge_model:
            assert rec.cap_excursions == 0


def test_absorption_outcomes(cham_model):
    s = run_batch(cham_model, (1, 2), 0.5, 500.0, 4000, seed=3, check=True)
    assert s.unabsorbed == 0 and s.fills + s.empties == 4000
    se = np.sqrt(0.25 * 0.75 / 4000)
    assert abs(s.fill_fraction() - 0.25) < 3 * se


def test_modified_variant_keeps_ink_law(cham_model):
    probes = (0.5, 1.0, 2.0)
    s = run_batch(cham_model, (1, 2), 0.5, 500.0, 4000, seed=8, modified=True, probes=probes)
    for t in probes:
        m, se = s.ink_mean(t)
        assert abs(m - 1.0) <= 4 * se


def test_run_record_exports(cham_model):
    stream = EventStream.replay(cham_model, 11, 0, 100.0, True)
    rec = run_chameleon(cham_model, (2, 5), 0.5, 100.0, stream=stream,
                        coin_rng=stream_rng(11, 1), log=True)
    doc = json.loads(rec.to_json())
    assert doc["ink_trace"][0] == [0.0, 1.0]
    assert doc["fill"] == rec.fill and doc["depink_times"] == rec.depink_times
    assert doc["seeds"] == {"seed": 11, "stream_id": 0, "horizon": 100.0, "lazy": True}
    rows = list(csv.reader(io.StringIO(rec.pinkenings_csv())))
    assert rows[0] == ["time", "kind", "block", "pair"]
    assert len(rows) - 1 == sum(len(p) for *_, p in rec.pinkenings)


def test_replicas_are_reproducible(cham_model):
    a = run_batch(cham_model, (1, 2), 0.5, 200.0, 50, seed=4, probes=(1.0,))
    b = run_batch(cham_model, (1, 2), 0.5, 200.0, 50, seed=4, probes=(1.0,))
    assert a.to_dict() == b.to_dict()


def test_chameleon_needs_lazy_stream(cham_model):
    with pytest.raises(ValueError):
        run_chameleon(cham_model, (1, 2), 0.5, 1.0,
                      stream=EventStream.replay(cham_model, 0, 0, 1.0, False),
                      coin_rng=stream_rng(0, 1))
