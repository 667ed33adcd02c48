"""Acceptance criteria 1-9.  Each test prints one PASS/FAIL line, then asserts."""

import itertools
import time

import numpy as np
import pytest

from lowswing.analog import ChargePumpState, eval_window, step_charge_pump
from lowswing.campaign import parse_report_csv
from lowswing.config import LinkConfig
from lowswing.dft import STAGES, build_chain_a, build_chain_b, golden_reference, run_all
from lowswing.digital import PdSample, RingCounter, scan_load, scan_unload, step_alexander_pd, step_ring_counter
from lowswing.faults import Fault
from lowswing.linksim import measure_lock, simulate
from lowswing.model import LinkModel

CFG = LinkConfig()

# tolerances
LOCK_BUDGET_S = 2e-6
MAX_CORRECTIONS = 5
MAX_LOCK_COUNT = 5
SIM_RUNTIME_S = 5.0
DC_BAND = (40.0, 60.0)
DC_SCAN_BAND = (65.0, 85.0)
TOTAL_BAND = (88.0, 100.0)
CAMPAIGN_RUNTIME_S = 300.0
CP_REL_TOL = 1e-3
RING_SEQUENCES = 10_000
WINDOW_SAMPLES = 1_000
GOLDEN_SEEDS = (1, 2, 3, 5, 17, 42, 64, 90, 101, 127)


@pytest.fixture
def verdict(capsys):
    def emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {title} ({detail})")
        assert ok, detail
    return emit


def test_criterion_1_lock_budget(verdict):
    t0 = time.perf_counter()
    rep = measure_lock(simulate(CFG, duration=LOCK_BUDGET_S, initial_phase="worst"), CFG)
    elapsed = time.perf_counter() - t0
    ok = (rep.locked and rep.lock_time <= LOCK_BUDGET_S and rep.coarse_corrections <= MAX_CORRECTIONS
          and rep.final_lock_count <= MAX_LOCK_COUNT and elapsed < SIM_RUNTIME_S)
    verdict(1, "worst-case start locks within 2 us", ok,
            f"lock_time={rep.lock_time:.3e}s corrections={rep.coarse_corrections} "
            f"lock_count={rep.final_lock_count} runtime={elapsed:.2f}s")


def test_criterion_2_sawtooth(verdict):
    trace = simulate(CFG, duration=LOCK_BUDGET_S, initial_phase="worst")
    rep = measure_lock(trace, CFG)
    out = (trace.vc < CFG.window_lo) | (trace.vc > CFG.window_hi)
    exits = trace.time[np.nonzero(out[1:] & ~out[:-1])[0] + 1]
    before, after = int((exits < rep.lock_time).sum()), int((exits >= rep.lock_time).sum())
    settled = trace.time >= rep.lock_time
    idx_after = set(trace.phase_idx[settled].tolist())
    inside = bool(((trace.vc[settled] >= CFG.window_lo) & (trace.vc[settled] <= CFG.window_hi)).all())
    ok = rep.locked and before > 0 and after == 0 and len(idx_after) == 1 and inside
    verdict(2, "vc ramp-resets then settles in window at a fixed phase", ok,
            f"exits before lock={before} after={after} phases after lock={sorted(idx_after)}")


def test_criterion_3_coverage(verdict, cli_campaigns):
    d, elapsed = cli_campaigns[1]
    rep = parse_report_csv((d / "report.csv").read_text())
    cum = rep.per_stage_cumulative
    dc, dcs, tot = cum["dc"], cum["dc+scan"], cum["dc+scan+bist"]
    per = rep.per_class
    full = {c: per[c][2] for c in ("gate-source-short", "drain-source-short", "capacitor-short")}
    ok = (DC_BAND[0] <= dc <= DC_BAND[1] and DC_SCAN_BAND[0] <= dcs <= DC_SCAN_BAND[1]
          and TOTAL_BAND[0] <= tot <= TOTAL_BAND[1] and dc < dcs < tot
          and all(v == 100.0 for v in full.values()) and elapsed < CAMPAIGN_RUNTIME_S)
    verdict(3, "coverage bands on reference netlists", ok,
            f"dc={dc:.1f}% dc+scan={dcs:.1f}% total={tot:.1f}% "
            + " ".join(f"{k}={v:.1f}%" for k, v in full.items())
            + f" faults={rep.total} runtime={elapsed:.0f}s")


def test_criterion_4_masked_weak_cp_short(verdict):
    out = run_all(LinkModel.build(CFG, [Fault.parse("weakcp.M3:drain-source-short")]), golden_reference(CFG))
    ok = not out["scan"].detected and out["bist"].detected
    verdict(4, "weak-CP source drain-source short: scan pass, BIST detect", ok,
            ", ".join(f"{s}={out[s].verdict()}" for s in STAGES))


def test_criterion_5_oracles(verdict):
    failures = []
    for a, t, b in itertools.product((0, 1), repeat=3):
        want = (0, 0, b) if a == b else (int(t == a), int(t == b), b)
        if step_alexander_pd(PdSample(a, t, b)) != want:
            failures.append(f"pd{(a, t, b)}")

    dt, n = 10e-12, 200
    for strength, i_nom in (("weak", CFG.i_weak), ("strong", CFG.i_strong)):
        s = ChargePumpState(CFG.v_mid, CFG.v_mid)
        worst = 0.0
        for k in range(1, n + 1):
            s = step_charge_pump(s, 1, 0, dt, strength, False, CFG)
            expect = i_nom * k * dt / CFG.cp_cap
            worst = max(worst, abs((s.vc - CFG.v_mid) - expect) / expect)
        if worst > CP_REL_TOL:
            failures.append(f"cp-{strength} rel err {worst:.2e}")

    rng = np.random.default_rng(5)
    nph = CFG.n_phases
    for k in range(RING_SEQUENCES):
        zero = k % 10 == 0
        rc = RingCounter.zeros(nph) if zero else RingCounter.one_hot(nph, int(rng.integers(nph)))
        pos = rc.index
        for en, ud in rng.integers(0, 2, size=(int(rng.integers(1, 30)), 2)).tolist():
            rc = step_ring_counter(rc, en, ud)
            if not zero and en:
                pos = (pos + (1 if ud else -1)) % nph
            good = sum(rc.q) == 0 if zero else (sum(rc.q) == 1 and rc.index == pos)
            if not good:
                failures.append(f"ring seq {k}")
                break

    for v in rng.uniform(-1.0, 2.5, WINDOW_SAMPLES):
        code = eval_window(float(v), CFG.window_lo, CFG.window_hi)
        region = (1, 0) if v > CFG.window_hi else (0, 1) if v < CFG.window_lo else (0, 0)
        if code != region:
            failures.append(f"window {v:.3f}")
    verdict(5, "PD, charge pump, ring counter and window oracles", not failures,
            f"{len(failures)} mismatches" + (f": {failures[:3]}" if failures else ""))


def test_criterion_6_tgate_drain_open(verdict):
    out = run_all(LinkModel.build(CFG, [Fault.parse("term.M1:drain-open")]), golden_reference(CFG))
    ok = not out["dc"].detected and out["scan"].detected and out["scan"].evidence.startswith("scan.sub2.")
    verdict(6, "transmission-gate drain open: DC pass, toggle sub-test detects", ok,
            f"dc={out['dc'].verdict()} scan={out['scan'].verdict()} via {out['scan'].evidence or '-'}")


def test_criterion_7_scan_controllability(verdict):
    model = LinkModel(CFG)
    ring = RingCounter.one_hot(CFG.n_phases, 0)
    chains = {"A": build_chain_a(model, ring, 0), "A+retime": build_chain_a(model, ring, 1), "B": build_chain_b(CFG)}
    bad = []
    for name, chain in chains.items():
        L = len(chain)
        for pattern in ([1] * L, [0] * L, [i % 2 for i in range(L)], [(i + 1) % 2 for i in range(L)]):
            loaded, clocks = scan_load(chain, pattern)
            _, seen = scan_unload(loaded)
            if len(clocks) != L or list(loaded.values) != pattern or seen != pattern:
                bad.append(name)
                break
    grow = len(chains["A+retime"]) - len(chains["A"])
    ok = not bad and grow == 1
    verdict(7, "chains A and B settable/observable in L clocks; retime select adds one cell", ok,
            f"L_A={len(chains['A'])} L_A_retime={len(chains['A+retime'])} L_B={len(chains['B'])} failing={bad}")


def test_criterion_8_determinism(verdict, cli_campaigns):
    a = (cli_campaigns[1][0] / "report.csv").read_bytes()
    b = (cli_campaigns[8][0] / "report.csv").read_bytes()
    verdict(8, "campaign --jobs 1 and --jobs 8 give identical report CSVs", a == b,
            f"{len(a)} vs {len(b)} bytes")


def test_criterion_9_zero_false_positives(verdict):
    golden = golden_reference(CFG)
    hits = []
    for seed in GOLDEN_SEEDS:
        out = run_all(LinkModel(CFG), golden, seed)
        hits += [f"seed {seed} {s}" for s in STAGES if out[s].detected]
    verdict(9, f"golden model passes all stages for {len(GOLDEN_SEEDS)} seeds", not hits,
            f"false positives: {hits or 'none'}")
