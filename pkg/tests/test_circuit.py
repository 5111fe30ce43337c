import numpy as np
import pytest

from ordinalfold.circuit import (CircuitError, CombinationalCycleError,
                                 compress, emit_netlist, extract,
                                 load_netlist, simulate, stage_matrices)
from ordinalfold.engine import evaluate, iteration_bound
from ordinalfold.formula import KIND_COMB, KIND_MU, KIND_PIPELINE, parse
from ordinalfold.model import fixture

REACH = parse("mu X. (p \\/ <>X)")


def test_extract_reach_chain1():
    c = extract(REACH, fixture("chain", 1))
    assert c.n_bits == 10
    assert c.kinds == (KIND_MU, KIND_COMB, KIND_COMB, KIND_COMB, KIND_COMB)
    # the Var bit is combinational but performs a registered read of the latch
    var_bit_expr = c.exprs[c.bit(4, 0)]
    assert var_bit_expr == ("reg", c.bit(0, 0))


def test_extract_delay_is_pipeline():
    c = extract(parse("mu X. @X"), fixture("chain", 1))
    assert c.kinds[1] == KIND_PIPELINE


def test_atom_circuit_settles_immediately():
    c = extract(parse("p"), fixture("chain", 1))
    assert c.n_bits == 2
    report = simulate(c, 8)
    assert report.settle_time == 0
    assert report.toggles == []


def test_settle_equals_engine_fold_back():
    cases = [
        (REACH, fixture("chain", 3)),
        (parse("nu X. (p /\\ []X)"), fixture("ring", 4)),
        (parse("mu X. @X"), fixture("chain", 1)),
        (parse("mu X. (p \\/ <>@X)"), fixture("chain", 2)),
    ]
    for f, m in cases:
        trace = evaluate(f, m)
        report = simulate(extract(f, m), iteration_bound(f, m))
        assert report.settle_time == trace.fold_back


def test_stage_vectors_match_engine_stages():
    f, m = REACH, fixture("chain", 3)
    trace = evaluate(f, m)
    c = extract(f, m)
    report = simulate(c, iteration_bound(f, m))
    mats = stage_matrices(report, c.n_subformulas, c.n_states)
    assert len(mats) == len(trace.stages)
    for ours, theirs in zip(mats, trace.stages):
        assert np.array_equal(ours, theirs)


def test_safety_quiescent_binder_row_is_zero():
    f, m = parse("nu X. (p /\\ []X)"), fixture("ring", 4)
    c = extract(f, m)
    report = simulate(c, iteration_bound(f, m))
    assert report.settle_time == 4
    binder_bits = [c.bit(0, s) for s in range(m.n)]
    assert all(not report.quiescent[b] for b in binder_bits)


def test_toggle_cone_characterisation():
    for f, m in [(REACH, fixture("chain", 4)),
                 (parse("p"), fixture("chain", 1))]:
        report = simulate(extract(f, m), iteration_bound(f, m))
        if report.toggles:
            last = max(cycle for cycle, _, _ in report.toggles)
            assert report.settle_time == 1 + last
        else:
            assert report.settle_time == 0


def test_single_toggle_per_bit_on_single_polarity():
    for f, m in [(REACH, fixture("chain", 5)),
                 (parse("nu X. (p /\\ []X)"), fixture("ring", 5))]:
        report = simulate(extract(f, m), iteration_bound(f, m))
        for bit, cycles in report.toggle_log().items():
            assert len(cycles) == 1, f"bit {bit} toggled {len(cycles)} times"


def test_metastable_flags():
    report = simulate(extract(REACH, fixture("chain", 2)),
                      iteration_bound(REACH, fixture("chain", 2)))
    # m^t is 0 for every pre-settle cycle and 1 at the settle check
    assert report.metastable[-1] == 1
    assert all(flag == 0 for flag in report.metastable[:-1])


def test_compress_reach_chain7():
    f, m = REACH, fixture("chain", 7)
    base = extract(f, m)
    report = simulate(base, iteration_bound(f, m))
    assert report.settle_time == 8
    squashed = simulate(compress(base), iteration_bound(f, m))
    assert squashed.settle_time == 1
    assert squashed.settle_time <= int(np.ceil(np.log2(base.n_subformulas)))
    assert squashed.quiescent == report.quiescent


def test_compress_already_quiescent():
    c = extract(parse("p"), fixture("chain", 1))
    assert simulate(compress(c), 8).settle_time == 0


def test_compress_preserves_quiescent_on_mixed_formula():
    f = parse("(mu X. (p \\/ <>X)) /\\ (nu Y. (q /\\ []Y))")
    m = fixture("ring", 4)
    base = extract(f, m)
    bound = iteration_bound(f, m)
    assert simulate(compress(base), bound).quiescent == \
        simulate(base, bound).quiescent


def test_netlist_emit_line_counts():
    text = emit_netlist(extract(parse("p"), fixture("chain", 1)))
    assert sum(1 for ln in text.splitlines() if ln.startswith("bit ")) == 2
    text = emit_netlist(extract(REACH, fixture("chain", 1)))
    assert sum(1 for ln in text.splitlines() if ln.startswith("bit ")) == 10


def test_netlist_round_trip():
    c = extract(REACH, fixture("chain", 2))
    again = load_netlist(emit_netlist(c))
    assert again == c
    assert emit_netlist(again) == emit_netlist(c)


def test_netlist_round_trip_simulates_identically():
    f, m = parse("mu X. (p \\/ <>@X)"), fixture("chain", 3)
    c = extract(f, m)
    bound = iteration_bound(f, m)
    a = simulate(c, bound)
    b = simulate(load_netlist(emit_netlist(c)), bound)
    assert a.settle_time == b.settle_time
    assert a.history == b.history


def test_loader_rejects_malformed_documents():
    with pytest.raises(CircuitError):
        load_netlist("bogus 1\n")
    with pytest.raises(CircuitError):
        load_netlist("subformulas 1\nstates 1\nkind 0 comb\nbit 0 T\n")


def test_loader_rejects_combinational_cycle():
    text = ("subformulas 2\nstates 1\nsize 2\n"
            "kind 0 comb\nkind 1 comb\n"
            "bit 0 (c 1)\nbit 1 (c 0)\n"
            "reset 00\n")
    with pytest.raises(CombinationalCycleError):
        load_netlist(text)


def test_registered_read_breaks_cycle():
    text = ("subformulas 2\nstates 1\nsize 2\n"
            "kind 0 mu-latch\nkind 1 comb\n"
            "bit 0 (c 1)\nbit 1 (r 0)\n"
            "reset 00\n")
    c = load_netlist(text)
    assert simulate(c, 8).settle_time == 0


def test_vcd_lines():
    report = simulate(extract(REACH, fixture("chain", 1)),
                      iteration_bound(REACH, fixture("chain", 1)))
    lines = report.to_vcd_lines()
    assert lines == [f"{c} {b} {int(v)}" for c, b, v in report.toggles]
    assert all(len(ln.split()) == 3 for ln in lines)
