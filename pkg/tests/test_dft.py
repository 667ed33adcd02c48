import pytest
from hypothesis import given, settings, strategies as st

from lowswing.config import LinkConfig
from lowswing.dft import (CHAIN_A_RX, CHAIN_A_TX, RETIME_EXTRA, STAGES, build_chain_a, build_chain_b,
                          chain_b_names, compare, dc_signature, golden_reference, run_all, run_bist,
                          run_dc_test, run_scan_test, scan_signature)
from lowswing.digital import RingCounter, scan_load, scan_unload
from lowswing.faults import Fault
from lowswing.model import LinkModel

CFG = LinkConfig()
SEEDS = (1, 2, 3, 5, 17, 42, 64, 90, 101, 127)


@pytest.fixture(scope="module")
def golden():
    return golden_reference(CFG)


def _model(spec):
    return LinkModel.build(CFG, [Fault.parse(spec)])


@pytest.mark.parametrize("seed", SEEDS)
def test_golden_passes_every_stage(seed, golden):
    out = run_all(LinkModel(CFG), golden, seed)
    assert [out[s].detected for s in STAGES] == [False, False, False]


def test_ffe_cap_short_detected_at_dc(golden):
    assert run_dc_test(_model("ffe.C1:capacitor-short"), golden).detected


def test_tgate_drain_open_needs_toggle(golden):
    m = _model("term.M1:drain-open")
    assert not run_dc_test(m, golden).detected
    scan = run_scan_test(m, golden)
    assert scan.detected
    assert scan.evidence.startswith("scan.sub2.")


def test_weak_cp_source_short_masked_until_bist(golden):
    m = _model("weakcp.M3:drain-source-short")
    out = run_all(m, golden)
    assert not out["dc"].detected
    assert not out["scan"].detected
    assert out["bist"].detected


def test_balance_path_open_flags_cpbist(golden):
    out = run_bist(_model("weakcp.M7:drain-open"), golden)
    assert out.detected and out.evidence == "bist.cpbist_flag"


def test_signatures_cover_all_scan_subtests():
    subs = {k.split(".")[1] for k in scan_signature(LinkModel(CFG))}
    assert subs == {f"sub{i}" for i in range(1, 9)}


def test_dc_signature_both_input_levels():
    keys = dc_signature(LinkModel(CFG))
    assert any(k.startswith("dc.in1.") for k in keys) and any(k.startswith("dc.in0.") for k in keys)


@settings(max_examples=100)
@given(st.data())
def test_any_mismatch_is_detected(data):
    expected = scan_signature(LinkModel(CFG))
    key = data.draw(st.sampled_from(sorted(expected)))
    observed = dict(expected)
    observed[key] = ("changed", observed[key])
    out = compare("scan", observed, expected)
    assert out.detected and out.evidence == key


def test_missing_observation_is_detected():
    expected = {"a": 1, "b": 0}
    assert compare("dc", {"a": 1}, expected).detected


# chains ---------------------------------------------------------------------------

def _settable_observable(chain):
    L = len(chain)
    for pattern in ([1] * L, [0] * L, [(i % 2) for i in range(L)], [((i + 1) % 2) for i in range(L)]):
        loaded, shifted_out = scan_load(chain, pattern)
        assert len(shifted_out) == L
        assert list(loaded.values) == pattern
        _, seen = scan_unload(loaded)
        assert seen == pattern


@pytest.mark.parametrize("retime_sel", [0, 1])
def test_chain_a_every_cell_in_l_clocks(retime_sel):
    chain = build_chain_a(LinkModel(CFG), RingCounter.one_hot(CFG.n_phases, 0), retime_sel)
    _settable_observable(chain)


def test_chain_b_every_cell_in_l_clocks():
    chain = build_chain_b(CFG)
    assert chain.names == chain_b_names(CFG.n_phases)
    _settable_observable(chain)


def test_retime_select_adds_one_cell():
    m, ring = LinkModel(CFG), RingCounter.one_hot(CFG.n_phases, 0)
    a0, a1 = build_chain_a(m, ring, 0), build_chain_a(m, ring, 1)
    assert len(a1) == len(a0) + 1 == len(CHAIN_A_TX) + len(CHAIN_A_RX) + 1
    assert a1.names[-1] == RETIME_EXTRA


def test_all_zero_ring_leaves_rx_cells_unclocked():
    chain = build_chain_a(LinkModel(CFG), RingCounter.zeros(CFG.n_phases))
    loaded, _ = scan_load(chain, [1] * len(chain))
    assert all(v == 0 for v in loaded.values[len(CHAIN_A_TX):])
