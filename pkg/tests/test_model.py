import pytest

from ordinalfold.model import (KripkeModel, ModelFormatError, export_dot,
                               fixture, load_model, make_model, save_model,
                               save_model_json)

CHAIN_DOC = """
states: 3
edges:
0 -> 1
1 -> 2
valuation:
p: 2
"""


def test_load_text_document():
    m = load_model(CHAIN_DOC)
    assert m.n == 3
    assert m.edges == ((0, 1), (1, 2))
    assert m.atom_states("p") == frozenset({2})
    assert m.atom_states("unknown") == frozenset()


def test_load_json_document():
    m = load_model('{"states": 3, "edges": [[0,1],[1,2]], '
                   '"valuation": {"p": [2]}, "designated": 0}')
    assert m.n == 3
    assert m.designated == 0


def test_out_of_range_edge_rejected():
    with pytest.raises(ModelFormatError):
        load_model("states: 3\nedges:\n0 -> 5\n")


def test_empty_state_space_rejected():
    with pytest.raises(ModelFormatError):
        load_model("states: 0\n")
    with pytest.raises(ModelFormatError):
        KripkeModel(n=0, edges=(), valuation={})


def test_malformed_document():
    with pytest.raises(ModelFormatError):
        load_model("states: three\n")
    with pytest.raises(ModelFormatError):
        load_model("bogus line\n")
    with pytest.raises(ModelFormatError):
        load_model('{"edges": []}')


def test_save_load_round_trip():
    m = fixture("ring", 4)
    again = load_model(save_model(m))
    assert again == m
    assert load_model(save_model_json(m)) == m


def test_chain_fixture():
    m = fixture("chain", 3)
    assert m.n == 4
    assert m.edges == ((0, 1), (1, 2), (2, 3))
    assert m.atom_states("p") == frozenset({3})
    assert m.successors(3) == ()


def test_ring_fixture():
    m = fixture("ring", 4)
    assert m.n == 4
    assert m.atom_states("p") == frozenset({1, 2, 3})
    assert m.successors(3) == (0,)


def test_clique_fixture_has_self_loops():
    m = fixture("clique", 2)
    assert m.n == 2
    assert len(m.edges) == 4
    assert (0, 0) in m.edges


def test_fig2_truncation_fixture():
    m = fixture("fig2-truncation", 5)
    assert m.n == 6
    assert m.atom_states("exit") == frozenset({5})
    assert m.successors(5) == (5,)
    for s in range(5):
        assert 5 in m.successors(s)


def test_fixture_determinism():
    assert fixture("chain", 5) == fixture("chain", 5)
    with pytest.raises(ModelFormatError):
        fixture("mystery", 2)
    with pytest.raises(ModelFormatError):
        fixture("chain", 0)


def test_export_dot():
    text = export_dot(fixture("chain", 1))
    assert text.startswith("digraph kripke {")
    assert "s0 -> s1;" in text
    ring = export_dot(fixture("ring", 3))
    assert ring.count("->") == 3
    clique = export_dot(fixture("clique", 2))
    assert clique.count("->") == 4


def test_make_model_normalizes():
    m = make_model(2, [(1, 0), (0, 1), (1, 0)], {"p": [1, 1]})
    assert m.edges == ((0, 1), (1, 0))
    assert m.atom_states("p") == frozenset({1})
