import math
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from lowswing.faults import (DEFECT_CLASSES, MOS_DEFECTS, REFERENCE_FILES, BehaviorMutation, Fault,
                             FaultError, Netlist, NetlistError, enumerate_faults, load_netlists,
                             mutation_for, parse_netlist, reference_netlist_text)
from lowswing.model import apply_mutations, knob_default

REPORT_ORDER = ("gate-open", "drain-open", "source-open", "gate-drain-short",
                 "gate-source-short", "drain-source-short")


def test_single_line_netlist():
    nl = parse_netlist("M1 nmos dc-comparator 0.5 0.5 diffpair-in+")
    assert len(nl) == 1
    d = nl.devices[0]
    assert (d.id, d.kind, d.block, d.width_um) == ("M1", "nmos", "dc-comparators", 0.5)


def test_comments_blank_lines_and_order():
    text = "# header\n\nB pmos weak-cp 1 1 x\nA nmos weak-cp 1 1 y  # trailing\n"
    nl = parse_netlist(text)
    assert [d.id for d in nl] == ["B", "A"]


@pytest.mark.parametrize("text, fragment", [
    ("M1 jfet dc-comparators 0.5 0.5 r", "unknown device kind"),
    ("M1 nmos nowhere 0.5 0.5 r", "unknown block"),
    ("M1 nmos weak-cp 0.5 r", "expected 6 fields"),
    ("M1 nmos weak-cp 0.5 -1 r", "positive"),
    ("M1 nmos weak-cp a b r", "bad device size"),
])
def test_syntax_errors_name_line(text, fragment):
    with pytest.raises(NetlistError) as exc:
        parse_netlist("# c\n" + text)
    assert exc.value.line == 2
    assert fragment in str(exc.value)


def test_duplicate_id():
    with pytest.raises(NetlistError, match="duplicate"):
        parse_netlist("M1 nmos weak-cp 1 1 a\nM1 pmos weak-cp 1 1 b")


@pytest.mark.parametrize("name", REFERENCE_FILES)
def test_reference_file_count_equals_device_lines(name):
    text = reference_netlist_text(name)
    lines = [l for l in text.splitlines() if l.split("#", 1)[0].strip()]
    assert len(parse_netlist(text)) == len(lines)


def test_reference_block_device_counts(netlist):
    mos = lambda b: sum(1 for d in netlist.by_block(b) if d.kind in ("nmos", "pmos"))
    caps = lambda b: sum(1 for d in netlist.by_block(b) if d.kind == "capacitor")
    assert mos("dc-comparators") == 14
    assert mos("window-comparator-rx") == 16
    assert mos("cp-bist-comparator") == 18
    assert (mos("weak-cp"), caps("weak-cp")) == (10, 1)
    assert mos("strong-cp") == 8
    assert (mos("transmitter-ffe"), caps("transmitter-ffe"), mos("weak-driver")) == (4, 2, 2)
    assert mos("termination") == 8
    assert mos("vcdl") == 12


def test_enumerate_examples():
    assert enumerate_faults(Netlist()) == []
    one = parse_netlist("M1 nmos weak-cp 1 1 x")
    assert [f.defect for f in enumerate_faults(one)] == list(REPORT_ORDER)
    two = parse_netlist("M1 nmos weak-cp 1 1 x\nM2 pmos weak-cp 1 1 y\nC1 capacitor weak-cp 1 1 c")
    assert len(enumerate_faults(two)) == 13


def test_defect_report_order():
    assert MOS_DEFECTS == REPORT_ORDER
    assert DEFECT_CLASSES[:6] == REPORT_ORDER and DEFECT_CLASSES[6] == "capacitor-short"


_kind = st.sampled_from(["nmos", "pmos", "capacitor", "resistor-tgate"])


@given(st.lists(_kind, max_size=40))
def test_universe_size_rule(kinds):
    text = "\n".join(f"D{i} {k} weak-cp 1 1 r" for i, k in enumerate(kinds))
    nl = parse_netlist(text)
    n_mos = sum(k in ("nmos", "pmos") for k in kinds)
    n_cap = kinds.count("capacitor")
    assert len(enumerate_faults(nl)) == 6 * n_mos + n_cap


def test_reference_universe(netlist):
    faults = enumerate_faults(netlist)
    n_mos = sum(d.kind in ("nmos", "pmos") for d in netlist)
    n_cap = sum(d.kind == "capacitor" for d in netlist)
    assert len(faults) == 6 * n_mos + n_cap == 639
    assert len(set(faults)) == len(faults)


def test_mutation_total_deterministic_nonempty(netlist):
    for f in enumerate_faults(netlist):
        a, b = mutation_for(f, netlist), mutation_for(f, netlist)
        assert a and a == b
        knobs = apply_mutations(a)
        assert any(not (math.isnan(v) and math.isnan(knob_default(k))) and v != knob_default(k)
                   for k, v in knobs.items()), f


def test_mutation_named_examples(netlist):
    cap = mutation_for(Fault("ffe.C1", "capacitor-short"), netlist)
    assert [(m.target, m.effect) for m in cap] == [("tx.p.cap", "short")]
    tg = mutation_for(Fault("term.M1", "drain-open"), netlist)
    assert [(m.target, m.effect, m.value) for m in tg] == [("term.p.g_n", "param-scale", 0.0)]
    src = mutation_for(Fault("weakcp.M3", "drain-source-short"), netlist)
    assert [(m.target, m.effect) for m in src] == [("wcp.up_bypass", "short")]


def test_fault_outside_universe(netlist):
    with pytest.raises(FaultError):
        mutation_for(Fault("nope", "gate-open"), netlist)
    with pytest.raises(FaultError):
        mutation_for(Fault("ffe.C1", "gate-open"), netlist)


def test_fault_parse():
    assert Fault.parse("weakcp.M3:drain-source-short") == Fault("weakcp.M3", "drain-source-short")
    with pytest.raises(FaultError):
        Fault.parse("weakcp.M3:melted")


def test_mutation_effects():
    assert BehaviorMutation("x.gain", "param-scale", 0.5).apply(2.0) == 1.0
    assert BehaviorMutation("x.offset", "offset-add", 0.3).apply(0.1) == pytest.approx(0.4)
    assert math.isinf(BehaviorMutation("x.r", "short").apply(1.0))
    assert BehaviorMutation("x.r", "open").apply(1.0) == 0.0


def test_load_directory_keeps_signal_flow_order(tmp_path: Path, netlist):
    for name in REFERENCE_FILES:
        (tmp_path / name).write_text(reference_netlist_text(name))
    assert load_netlists([tmp_path]).devices == netlist.devices
    with pytest.raises(NetlistError):
        load_netlists([tmp_path / "missing.net"])
