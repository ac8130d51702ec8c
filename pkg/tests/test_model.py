import json

import pytest

from hyperex import relations
from hyperex.io import ModelParseError, model_to_dict, parse_model
from hyperex.model import (ClassMeasure, Hypergraph, Model, StateSpaceTooLarge,
                           fixed_point_prob, irreducible, validate)
from hyperex.perm import enumerate_class


def test_hypergraph_checks():
    with pytest.raises(ValueError):
        Hypergraph((1, 2, 3), ((1, 4),))
    with pytest.raises(ValueError):
        Hypergraph((1, 2, 3), ((1,),))
    with pytest.raises(ValueError):
        Hypergraph((1, 1, 2), ((1, 2),))
    g = Hypergraph((1, 2, 3), ((1, 2), (1, 2), (2, 3)))
    assert len(g.edges) == 3  # duplicate edges ring independently
    assert g.degrees() == {1: 2, 2: 3, 3: 1}
    assert not g.is_regular()


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        ClassMeasure.from_dict({(2,): 0.5}, 2)
    with pytest.raises(ValueError):
        ClassMeasure.from_dict({(3,): 1.0}, 2)
    ClassMeasure.from_dict({(2, 2): 0.9, (4,): 0.1 + 1e-13}, 4)


def test_four_vertex_delta_model_passes(k4_delta):
    rep = validate(k4_delta)
    assert rep.ok
    assert rep.max_fixed_point_prob == 0
    assert rep.regular
    assert rep.irreducible == {1: True, 2: True, 3: True}


def test_identity_measure_fails_fixed_point_check():
    m = Model.build([1, 2, 3, 4], [[1, 2, 3, 4]], {(): 1.0})
    rep = validate(m)
    assert not rep.ok
    assert rep.max_fixed_point_prob == 1
    assert any("fixed-point probability" in f for f in rep.failures())


@pytest.mark.parametrize("delta", [0.05, 0.2, 0.6])
def test_three_vertex_fixed_point_prob(delta):
    m = relations.three_cycle_model(delta)
    for v in (1, 2, 3):
        assert validate(m).max_fixed_point_prob == pytest.approx(delta / 3, abs=1e-15)
        # direct enumeration over the class
        trans = enumerate_class((2,), (1, 2, 3))
        enum = delta * sum(t(v) == v for t in trans) / len(trans)
        assert fixed_point_prob(m.measures[0], m.edges[0], v) == pytest.approx(enum)


def test_fixed_point_prob_examples():
    m = ClassMeasure.from_dict({(2, 2): 1.0}, 4)
    assert fixed_point_prob(m, (1, 2, 3, 4), 1) == 0
    m = ClassMeasure.from_dict({(2,): 1.0}, 3)
    assert fixed_point_prob(m, (1, 2, 3), 2) == pytest.approx(1 / 3)
    m = ClassMeasure.from_dict({(5,): 0.5, (2, 2): 0.5}, 5)
    assert fixed_point_prob(m, tuple(range(1, 6)), 3) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        fixed_point_prob(m, (1, 2, 3, 4, 5), 9)


def test_fixed_point_prob_exchangeable():
    for m in relations.corpus().values():
        for e, meas in zip(m.edges, m.measures):
            vals = {round(fixed_point_prob(meas, e, v), 15) for v in e}
            assert len(vals) == 1


def test_irreducibility_flips_at_zero():
    assert not irreducible(relations.double_transposition_model(0.0), 2)
    assert irreducible(relations.double_transposition_model(0.01), 2)
    assert not irreducible(relations.three_cycle_model(0.0), 2)
    assert irreducible(relations.three_cycle_model(0.01), 2)


def test_irreducible_cap():
    m = relations.chameleon_model()
    with pytest.raises(StateSpaceTooLarge, match="undecided"):
        irreducible(m, 3, cap=10)
    rep = validate(m, ks=[3], cap=10)
    assert rep.irreducible == {3: None}
    assert not rep.ok


def test_support_probabilities_sum_to_one(cham_model):
    for i in range(len(cham_model.edges)):
        assert sum(p for _, p in cham_model.support(i)) == pytest.approx(1.0)


def test_parse_model_both_layouts():
    a = parse_model(json.dumps({"vertices": [1, 2, 3, 4], "edges": [[1, 2, 3, 4]],
                                "weights": {"2+2": 0.9, "4": 0.1}}))
    b = parse_model(json.dumps({"vertices": [1, 2, 3, 4], "edges": [[1, 2, 3, 4]],
                                "measures": [{"edge": 0, "weights": {"2+2": 0.9, "4": 0.1}}]}))
    assert a == b == relations.double_transposition_model(0.1)
    assert parse_model(json.dumps(model_to_dict(a))) == a


@pytest.mark.parametrize("text, where", [
    ('{"vertices": [1, 2], "edges": [[1, 2]], "weights": {"2": 1.0}', "line 1"),
    ('{"vertices": [1, 2], "edges": [[1, 2]]}', "$"),
    ('{"vertices": [1, 2], "edges": [[1, 2]], "weights": {"2": 0.5}}', "$"),
    ('{"vertices": [1, 2], "edges": [[1, 2]], "weights": {"x": 1.0}}', "$.weights.x"),
    ('{"vertices": [1, 2], "edges": [[1, 2]], "measures": [{"edge": 3, "weights": {}}]}',
     "$.measures[0].edge"),
])
def test_parse_model_errors_carry_position(text, where):
    with pytest.raises(ModelParseError) as info:
        parse_model(text)
    assert where in str(info.value)
