"""The three test stages: DC, scan and at-speed BIST.

Each stage builds an ordered signature (evidence id -> observed bits) from a
:class:`LinkModel`; a fault is detected when any entry differs from the
fault-free signature.  The first differing id is reported as evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import analog
from .analog import ChargePumpState
from .config import LinkConfig
from .digital import (FsmState, LockCounter, PdSample, RingCounter, ScanChain, scan_capture,
                      scan_load, scan_shift, scan_unload, step_alexander_pd, step_ring_counter)
from .linksim import coarse_tick, measure_lock, simulate, strong_pump_step
from .model import LinkModel

STAGES = ("dc", "scan", "bist")

CHAIN_A_TX = ("tx_data", "ffe_probe_p", "ffe_probe_m", "hc_latch_en")
CHAIN_A_RX = ("term_cap_p", "term_cap_m", "wrx_hi", "wrx_lo",
              "pd_edge", "pd_center", "pd_up", "pd_dn", "retime")
RETIME_EXTRA = "retime2"
CHAIN_B_CTRL = ("cw_hi_cap", "cw_lo_cap", "fsm_up_st", "fsm_dn_st",
                "fsm_enable", "fsm_updn", "retime_sel")


def chain_b_names(n_phases: int) -> tuple[str, ...]:
    return CHAIN_B_CTRL + tuple(f"q{i}" for i in range(n_phases)) + ("c0", "c1", "c2")


@dataclass(frozen=True)
class TestOutcome:
    stage: str
    detected: bool
    evidence: str = ""

    def verdict(self) -> str:
        return "DETECTED" if self.detected else "pass"


@dataclass(frozen=True)
class GoldenReference:
    dc_signatures: dict
    scan_signatures: dict
    bist_signature: tuple  # (locked, lock_count within limit, cpbist flag after lock)


def compare(stage: str, observed: dict, expected: dict) -> TestOutcome:
    for key, want in expected.items():
        if observed.get(key) != want:
            return TestOutcome(stage, True, key)
    return TestOutcome(stage, False, "")


# ---------------------------------------------------------------------------
# DC test


def dc_signature(model: LinkModel) -> dict:
    """Static input at logic 1 then 0: termination comparators, receiver window,
    control window, FFE probe flops and the retimed output.

    The CP-BIST flag is left to the BIST; it only has meaning after lock.
    """
    sig = {}
    cw_hi, cw_lo = model.control_window(model.rest_vc())
    for bit in (1, 0):
        vp, vm, vct = model.static_arms(bit)
        obs = model.rx_comparators(vp, vm, vct)
        obs["cw_hi"], obs["cw_lo"] = cw_hi, cw_lo
        obs["ffe_probe_p"], obs["ffe_probe_m"] = model.driver_outputs(bit)
        obs["retimed"] = int(vp - vm > 0) if model.vcdl_alive else 0
        for name, v in obs.items():
            sig[f"dc.in{bit}.{name}"] = v
    return sig


def run_dc_test(model: LinkModel, golden: GoldenReference) -> TestOutcome:
    return compare("dc", dc_signature(model), golden.dc_signatures)


# ---------------------------------------------------------------------------
# scan chains


def build_chain_a(model: LinkModel, ring: RingCounter, retime_sel: int = 0) -> ScanChain:
    """Chain A; its receiver cells are clocked through the switch matrix and VCDL."""
    names = CHAIN_A_TX + CHAIN_A_RX + ((RETIME_EXTRA,) if retime_sel else ())
    frozen = frozenset()
    if not model.vcdl_alive or ring.index is None:
        frozen = frozenset(range(len(CHAIN_A_TX), len(names)))
    crossings = {len(CHAIN_A_TX) - 1: model.line_decode}
    return ScanChain(names, frozen=frozen, crossings=crossings)


def build_chain_b(cfg: LinkConfig) -> ScanChain:
    return ScanChain(chain_b_names(cfg.n_phases))


def chain_b_state(cfg: LinkConfig, ring: RingCounter, fsm: FsmState = FsmState(),
                  lock: LockCounter = LockCounter(), caps=(0, 0), retime_sel: int = 0) -> list[int]:
    c = lock.count
    return (list(caps) + [fsm.up_st, fsm.dn_st, fsm.enable, fsm.updn, retime_sel]
            + list(ring.q) + [c & 1, (c >> 1) & 1, (c >> 2) & 1])


def ring_from_chain_b(cfg: LinkConfig, values) -> RingCounter:
    start = len(CHAIN_B_CTRL)
    return RingCounter(tuple(values[start:start + cfg.n_phases]))


def continuity(chain: ScanChain) -> tuple[int, ...]:
    """Shift an alternating pattern through twice the chain length."""
    pattern = [(i + 1) % 2 for i in range(2 * len(chain))]
    _, out = scan_shift(chain, pattern)
    return tuple(out)


def capture_and_unload(chain: ScanChain, values: dict) -> tuple[int, ...]:
    func = [values.get(n, 0) for n in chain.names]
    chain = scan_capture(chain, func)
    _, out = scan_unload(chain)
    return tuple(out)


# ---------------------------------------------------------------------------
# scan sub-tests


TOGGLE_HALF_BITS = 13  # 100 MHz square wave at 2.5 Gbps, rounded to whole bits


def _toggle_observations(model: LinkModel, common_mode: bool) -> list[dict]:
    cfg = model.cfg
    h = TOGGLE_HALF_BITS
    pattern = np.array([0] * h + [1] * h + [0] * h, dtype=np.int8)
    if common_mode:
        data = np.ones_like(pattern)
        w = model.received(data, drivers=(pattern, pattern))
    else:
        w = model.received(pattern)
    vct = analog.center_tap(cfg, model.term)
    obs = []
    for edge in (h, 2 * h):
        t = edge * cfg.bit_period + cfg.toggle_sample_delay
        i = int(round(t / w.dt))
        vp, vm = w.samples[i]
        obs.append(model.rx_comparators(float(vp), float(vm), vct))
    return obs


def _pd_pass(model: LinkModel, half_cycle: bool) -> list[tuple[int, ...]]:
    """PD flops under scan clocking with toggling data.

    Data launches on the rising scan edge (or the falling edge with the
    half-cycle latch); the edge flop samples on rising edges and the center
    flop on falling edges.  Returns (edge, center, up, dn) per transition.
    """
    rx = [model.line_decode(b) for b in (0, 1)]
    data = [0, 1, 0, 1, 0, 1]
    launch = 0.5 if half_cycle else 0.0

    def level(s):
        # value launched strictly before s (clock-to-q delay)
        k = min(max(math.floor(s - launch - 1e-9), 0), len(data) - 1)
        return rx[data[k]]

    out = []
    for c in range(2, len(data)):
        a, t, b = level(c - 0.5), level(c), level(c + 0.5)
        up, dn, _ = step_alexander_pd(PdSample(a, t, b))
        out.append((t, b, up, dn))
    return out


def _cp_combinational(model: LinkModel, direction: int) -> tuple[tuple, tuple]:
    """Drive vc to a rail in test mode, then run the coarse loop functionally.

    Returns chain-B captures after the first tick and after the reset check.
    """
    cfg = model.cfg
    T = cfg.bit_period
    wp = model.weak_pump
    vc0 = model.rest_vc()
    st = ChargePumpState(vc0, model.rest_vp(vc0))
    up, dn = (1, 0) if direction > 0 else (0, 1)
    st = analog.step_charge_pump(st, up, dn, 1.0 / cfg.scan_freq, "weak", True, cfg, wp)
    if any(analog.pump_paths(0, 0, model.strong_pump.pump, cfg.i_strong, cfg)):
        st = ChargePumpState(model.rest_vc(), st.vp)
    ring = RingCounter.one_hot(cfg.n_phases, 0)
    fsm, lock, strong_dir = FsmState(), LockCounter(), 0
    caps = []
    chain = build_chain_b(cfg)
    for tick in range(1, cfg.reset_check_ticks + 1):
        code = model.control_window(st.vc, scan=False)
        fsm, ring, lock, strong_dir = coarse_tick(model, st, fsm, ring, lock, strong_dir)
        if tick in (1, cfg.reset_check_ticks):
            vals = chain_b_state(cfg, ring, fsm, lock, caps=code)
            caps.append(capture_and_unload(chain, dict(zip(chain.names, vals))))
        for _ in range(cfg.divider):
            st = analog.step_charge_pump(st, 0, 0, T, "weak", False, cfg, wp)
            st, strong_dir = strong_pump_step(model, st, strong_dir, T)
    return caps[0], caps[-1]


def _window_forced(model: LinkModel, direction: int) -> tuple:
    cfg = model.cfg
    vc0 = model.rest_vc()
    st = ChargePumpState(vc0, model.rest_vp(vc0))
    up, dn = (1, 0) if direction > 0 else (0, 1)
    st = analog.step_charge_pump(st, up, dn, 1.0 / cfg.scan_freq, "weak", True, cfg, model.weak_pump)
    code = model.control_window(st.vc, scan=True)
    chain = build_chain_b(cfg)
    vals = chain_b_state(cfg, RingCounter.one_hot(cfg.n_phases, 0), caps=code)
    return capture_and_unload(chain, dict(zip(chain.names, vals)))


def _ring_count(model: LinkModel, updn: int, steps: int = 3) -> tuple:
    cfg = model.cfg
    chain = build_chain_b(cfg)
    fsm = FsmState(enable=1, updn=updn, up_st=0, dn_st=0)
    chain, _ = scan_load(chain, chain_b_state(cfg, RingCounter.one_hot(cfg.n_phases, 0), fsm))
    ring = ring_from_chain_b(cfg, chain.values)
    outs = []
    for _ in range(steps):
        ring = step_ring_counter(ring, fsm.enable, fsm.updn)
        outs.append(ring.q)
    vals = chain_b_state(cfg, ring, fsm)
    return tuple(b for q in outs for b in q) + capture_and_unload(chain, dict(zip(chain.names, vals)))


def scan_signature(model: LinkModel) -> dict:
    cfg = model.cfg
    sig = {}
    reset_ring = RingCounter.one_hot(cfg.n_phases, 0)

    # (1) continuity of both chains; chain B first so chain A sees a configured ring
    sig["scan.sub1.chainB_continuity"] = continuity(build_chain_b(cfg))
    chain_a = build_chain_a(model, reset_ring)
    sig["scan.sub1.chainA_continuity"] = continuity(chain_a)

    # (2) 100 MHz toggling: differential data, then both cap drivers together
    for mode, cm in (("diff", False), ("cm", True)):
        for edge, obs in zip(("rise", "fall"), _toggle_observations(model, cm)):
            probe = model.driver_outputs(int(edge == "rise"), common_mode=cm)
            vals = {"ffe_probe_p": probe[0], "ffe_probe_m": probe[1],
                    "term_cap_p": obs["dcp"], "term_cap_m": obs["dcm"],
                    "wrx_hi": obs["wrx_hi"], "wrx_lo": obs["wrx_lo"]}
            sig[f"scan.sub2.{mode}_toggle_{edge}"] = capture_and_unload(chain_a, vals)

    # (3), (4) PD passes without and with the transmitter half-cycle latch
    for sub, hc, label in (("sub3", False, "up_capture"), ("sub4", True, "dn_capture")):
        caps = []
        for edge, center, up, dn in _pd_pass(model, hc):
            vals = {"hc_latch_en": int(hc), "pd_edge": edge, "pd_center": center,
                    "pd_up": up, "pd_dn": dn, "retime": center}
            caps.append(capture_and_unload(chain_a, vals))
        sig[f"scan.{sub}.{label}"] = tuple(b for c in caps for b in c)

    # (5) charge pump as a combinational block
    for name, direction in (("up", 1), ("dn", -1)):
        first, last = _cp_combinational(model, direction)
        sig[f"scan.sub5.{name}_tick1"] = first
        sig[f"scan.sub5.{name}_reset"] = last

    # (6) window comparator forced to 00 in scan mode
    sig["scan.sub6.vc_high"] = _window_forced(model, 1)
    sig["scan.sub6.vc_low"] = _window_forced(model, -1)

    # (7) ring counter counting both ways
    sig["scan.sub7.count_up"] = _ring_count(model, 1)
    sig["scan.sub7.count_down"] = _ring_count(model, 0)

    # (8) switch matrix: all-zero preload leaves chain A unclocked, then each one-hot
    sig["scan.sub8.all_zero"] = continuity(build_chain_a(model, RingCounter.zeros(cfg.n_phases)))
    for i in range(cfg.n_phases):
        ring = RingCounter.one_hot(cfg.n_phases, i)
        sig[f"scan.sub8.one_hot_{i}"] = continuity(build_chain_a(model, ring))
    return sig


def run_scan_test(model: LinkModel, golden: GoldenReference) -> TestOutcome:
    return compare("scan", scan_signature(model), golden.scan_signatures)


# ---------------------------------------------------------------------------
# BIST


def bist_observation(model: LinkModel, seed: int | None = None):
    cfg = model.cfg
    trace = simulate(cfg, duration=cfg.bist_duration, seed=seed, model=model)
    rep = measure_lock(trace, cfg)
    after = trace.time >= rep.lock_time if rep.locked else np.zeros(len(trace), dtype=bool)
    flag = int(bool(trace.cpbist[after].any()))
    return rep, flag


def run_bist(model: LinkModel, golden: GoldenReference, seed: int | None = None) -> TestOutcome:
    rep, flag = bist_observation(model, seed)
    if not rep.locked:
        return TestOutcome("bist", True, "bist.no_lock")
    if rep.final_lock_count > model.cfg.lock_count_limit:
        return TestOutcome("bist", True, "bist.lock_count")
    if flag:
        return TestOutcome("bist", True, "bist.cpbist_flag")
    return TestOutcome("bist", False, "")


# ---------------------------------------------------------------------------


@lru_cache(maxsize=8)
def golden_reference(cfg: LinkConfig) -> GoldenReference:
    model = LinkModel(cfg)
    return GoldenReference(dc_signature(model), scan_signature(model), (True, True, 0))


def run_all(model: LinkModel, golden: GoldenReference | None = None,
            seed: int | None = None) -> dict[str, TestOutcome]:
    golden = golden or golden_reference(model.cfg)
    return {
        "dc": run_dc_test(model, golden),
        "scan": run_scan_test(model, golden),
        "bist": run_bist(model, golden, seed),
    }
