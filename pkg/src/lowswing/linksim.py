"""Closed-loop link simulation: PRBS through the line into the dual-loop receiver."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np

from . import analog
from .analog import ChargePumpState
from .config import LinkConfig
from .digital import (FsmState, LockCounter, PdSample, RingCounter, step_alexander_pd,
                      step_control_fsm, step_lock_detector, step_ring_counter)
from .faults import Fault, Netlist
from .model import LinkModel

LOCK_TAIL = 0.1  # fraction of the trace that must be stable
LOCK_ERR_UI = 0.1

TRACE_HEADER = ("time_s", "vc_v", "vp_v", "phase_idx", "lock_count", "phase_err_ui")


class SimulationError(RuntimeError):
    pass


def sample(wave: np.ndarray, dt: float, t: float) -> float:
    """Linear interpolation of a uniformly sampled series (held past the ends)."""
    x = t / dt
    if x <= 0:
        return float(wave[0])
    i = int(x)
    if i >= len(wave) - 1:
        return float(wave[-1])
    f = x - i
    return float(wave[i] * (1.0 - f) + wave[i + 1] * f)


def wrap_ui(x: float) -> float:
    return (x + 0.5) % 1.0 - 0.5


@lru_cache(maxsize=8)
def eye_center(cfg: LinkConfig, n_bits: int = 1024) -> float:
    """Absolute time of bit 0's eye center on the fault-free received waveform.

    The phase is the circular mean of the differential zero crossings plus
    half a bit; the whole-bit part is the one that decodes the PRBS.
    """
    T = cfg.bit_period
    bits = analog.prbs7(n_bits, cfg.prbs_seed)
    w = LinkModel(cfg).received(bits)
    d = w.diff
    idx = np.nonzero(np.signbit(d[:-1]) != np.signbit(d[1:]))[0]
    idx = idx[idx > 16]
    frac = d[idx] / (d[idx] - d[idx + 1])
    t_cross = (idx + frac) * w.dt
    ang = np.angle(np.mean(np.exp(2j * np.pi * t_cross / T)))
    phase = (ang / (2 * np.pi) * T + T / 2) % T
    best, best_err = phase, None
    for m in range(12):
        e = phase + m * T
        errs = sum(int(sample(d, w.dt, k * T + e) > 0) != bits[k] for k in range(32, n_bits - 16))
        if best_err is None or errs < best_err:
            best, best_err = e, errs
    return best


def optimal_phase(cfg: LinkConfig) -> int:
    """Phase index whose sampling instant (vc at v_mid) is closest to the eye center."""
    phases = analog.generate_dll_phases(cfg)
    errs = [abs(wrap_ui((cfg.rx_clock_offset + p) / cfg.bit_period)) for p in phases]
    return int(np.argmin(errs))


def worst_case_phase(cfg: LinkConfig) -> int:
    return (optimal_phase(cfg) + cfg.n_phases // 2) % cfg.n_phases


@dataclass
class SimTrace:
    dt: float
    time: np.ndarray
    vc: np.ndarray
    vp: np.ndarray
    phase_idx: np.ndarray
    lock_count: np.ndarray
    sampling_phase_err: np.ndarray
    cpbist: np.ndarray
    retimed_bits: np.ndarray
    tx_bits: np.ndarray = field(repr=False)
    coarse_times: list = field(default_factory=list)
    retime_inverted: bool = False

    def __len__(self):
        return len(self.time)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(TRACE_HEADER)
        for row in zip(self.time, self.vc, self.vp, self.phase_idx, self.lock_count, self.sampling_phase_err):
            t, vc, vp, idx, lc, err = row
            wr.writerow([f"{t:.6e}", f"{vc:.6f}", f"{vp:.6f}", int(idx), int(lc),
                         "nan" if math.isnan(err) else f"{err:.6f}"])
        return buf.getvalue()


@dataclass(frozen=True)
class LockReport:
    locked: bool
    lock_time: float
    coarse_corrections: int
    final_phase_err: float
    final_vc: float
    final_lock_count: int = 0
    bit_errors: int | None = None

    def summary(self) -> str:
        return (f"locked={'true' if self.locked else 'false'} lock_time={self.lock_time:.3e} "
                f"coarse_corrections={self.coarse_corrections} lock_count={self.final_lock_count} "
                f"final_phase_err={self.final_phase_err:+.4f} final_vc={self.final_vc:.4f}")


def _initial_index(cfg: LinkConfig, initial_phase) -> int:
    if initial_phase == "reset":
        return 0
    if initial_phase == "worst":
        return worst_case_phase(cfg)
    if initial_phase == "optimal":
        return optimal_phase(cfg)
    return int(initial_phase) % cfg.n_phases


def strong_pump_step(model: LinkModel, st: ChargePumpState, strong_dir: int,
                     dt: float) -> tuple[ChargePumpState, int]:
    """Advance the strong pump by ``dt``: a commanded reset toward v_mid that
    stops after the stop comparator trips (plus its latency), and any
    always-on path left by a short."""
    cfg = model.cfg
    sp, wp = model.strong_pump, model.weak_pump
    i_up, i_dn = analog.pump_paths(int(strong_dir > 0), int(strong_dir < 0), sp.pump, cfg.i_strong, cfg)
    if strong_dir > 0 and math.isinf(sp.stop_up):
        strong_dir, i_up = 0, analog.pump_paths(0, 0, sp.pump, cfg.i_strong, cfg)[0]
    if strong_dir < 0 and math.isinf(sp.stop_dn):
        strong_dir, i_dn = 0, analog.pump_paths(0, 0, sp.pump, cfg.i_strong, cfg)[1]
    if not (i_up or i_dn):
        return st, strong_dir
    cp = cfg.cp_cap
    vc = analog.move_vc(st.vc, (i_up - i_dn) * dt / cp, 0.0, cfg.vdd, cfg)
    stop_at = cfg.v_mid + sp.stop_offset
    if strong_dir > 0 and vc >= stop_at and sp.stop_up != 0:
        vc = analog.move_vc(vc, i_up * cfg.strong_stop_latency / cp, 0.0, cfg.vdd, cfg)
        strong_dir = 0
    elif strong_dir < 0 and vc <= stop_at and sp.stop_dn != 0:
        vc = analog.move_vc(vc, -i_dn * cfg.strong_stop_latency / cp, 0.0, cfg.vdd, cfg)
        strong_dir = 0
    if wp.cap_short:
        vc = 0.0
    vp = st.vp
    if wp.balance and math.isnan(wp.vp_stuck):
        vp = analog.replica_vp(vc, wp, cfg)
    return ChargePumpState(vc, vp), strong_dir


def coarse_tick(model: LinkModel, st: ChargePumpState, fsm: FsmState, ring: RingCounter,
                lock: LockCounter, strong_dir: int):
    """One divided-clock tick of the coarse loop (functional window input)."""
    code = model.control_window(st.vc, scan=False)
    if code == (1, 1):
        code = (0, 0)  # contradictory window: the request logic is an XOR
    fsm = step_control_fsm(fsm, code)
    if fsm.enable:
        ring = step_ring_counter(ring, 1, fsm.updn)
        strong_dir = 1 if fsm.up_st else -1
    lock = step_lock_detector(lock, fsm.enable)
    return fsm, ring, lock, strong_dir


def simulate(cfg: LinkConfig, faults: Iterable[Fault] = (), duration: float = 2e-6,
             seed: int | None = None, *, netlist: Netlist | None = None,
             initial_phase="reset", model: LinkModel | None = None) -> SimTrace:
    """Run both correction loops for ``duration`` seconds of PRBS traffic.

    ``initial_phase`` is "reset" (index 0), "worst", "optimal" or an index.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    if model is None:
        model = LinkModel.build(cfg, faults, netlist)
    seed = cfg.prbs_seed if seed is None else seed
    T = cfg.bit_period
    n_bits = int(round(duration / T))
    if n_bits < cfg.divider:
        raise ValueError("duration shorter than one coarse-loop tick")
    e_abs = eye_center(cfg)
    t_base = e_abs + cfg.rx_clock_offset
    pad = int(math.ceil((t_base + 2 * T + cfg.vcdl_range) / T)) + 2
    tx_bits = analog.prbs7(n_bits + pad, seed)
    diff = model.received(tx_bits).diff
    dt = T / analog.OVERSAMPLE
    phases = analog.generate_dll_phases(cfg)
    d_mid = analog.vcdl_delay(cfg.v_mid, cfg)

    wp = model.weak_pump
    sp = model.strong_pump
    alive = model.vcdl_alive
    vc = model.rest_vc()
    st = ChargePumpState(vc, model.rest_vp(vc))
    ring = RingCounter.one_hot(cfg.n_phases, _initial_index(cfg, initial_phase))
    lock = LockCounter()
    fsm = FsmState()
    strong_dir = 0
    prev = None
    err = math.nan

    n_ticks = n_bits // cfg.divider
    rec_t = np.empty(n_ticks)
    rec_vc = np.empty(n_ticks)
    rec_vp = np.empty(n_ticks)
    rec_idx = np.empty(n_ticks, dtype=int)
    rec_lock = np.empty(n_ticks, dtype=int)
    rec_err = np.empty(n_ticks)
    rec_flag = np.empty(n_ticks, dtype=np.uint8)
    retimed = []
    coarse_times = []
    s_off = 0.0
    tick = 0

    for k in range(n_bits):
        idx = ring.index
        up = dn = 0
        if alive and idx is not None:
            s_off = phases[idx] + model.vcdl_delay(st.vc) - d_mid
            tc = k * T + t_base + s_off
            b = int(sample(diff, dt, tc) > 0)
            t = int(sample(diff, dt, tc - T / 2) > 0)
            if prev is not None:
                up, dn, _ = step_alexander_pd(PdSample(prev, t, b))
            prev = b
            retimed.append(b)
            err = wrap_ui((cfg.rx_clock_offset + s_off) / T)
        else:
            err = math.nan
        st = analog.step_charge_pump(st, up, dn, T, "weak", False, cfg, wp)

        st, strong_dir = strong_pump_step(model, st, strong_dir, T)

        if k % cfg.divider == cfg.divider - 1:
            fsm, ring, lock, strong_dir = coarse_tick(model, st, fsm, ring, lock, strong_dir)
            if fsm.enable:
                coarse_times.append((k + 1) * T)
            rec_t[tick] = (k + 1) * T
            rec_vc[tick] = st.vc
            rec_vp[tick] = st.vp
            rec_idx[tick] = -1 if ring.index is None else ring.index
            rec_lock[tick] = lock.count
            rec_err[tick] = err
            rec_flag[tick] = model.cpbist_flag(st.vc, st.vp)
            tick += 1

    s_mod = s_off % T
    return SimTrace(
        dt=cfg.divider * T, time=rec_t, vc=rec_vc, vp=rec_vp, phase_idx=rec_idx,
        lock_count=rec_lock, sampling_phase_err=rec_err, cpbist=rec_flag,
        retimed_bits=np.array(retimed, dtype=np.uint8), tx_bits=tx_bits[:n_bits],
        coarse_times=coarse_times, retime_inverted=(T - s_mod) % T < T / 2,
    )


def _stable_mask(trace: SimTrace, cfg: LinkConfig) -> np.ndarray:
    err = trace.sampling_phase_err
    with np.errstate(invalid="ignore"):
        ok = ((trace.vc >= cfg.window_lo) & (trace.vc <= cfg.window_hi)
              & (np.abs(err) <= LOCK_ERR_UI) & ~np.isnan(err))
    return ok & (trace.phase_idx == trace.phase_idx[-1]) & (trace.phase_idx >= 0)


def count_bit_errors(trace: SimTrace, start_bit: int) -> int:
    """Retimed-vs-transmitted mismatches from ``start_bit`` on, at the best alignment."""
    rx = trace.retimed_bits[start_bit:len(trace.retimed_bits) - 8]
    if rx.size == 0:
        return 0
    best = None
    for lag in range(-8, 9):
        lo = start_bit + lag
        if lo < 0 or lo + rx.size > trace.tx_bits.size:
            continue
        errs = int(np.count_nonzero(rx != trace.tx_bits[lo:lo + rx.size]))
        best = errs if best is None else min(best, errs)
    return rx.size if best is None else best


def measure_lock(trace: SimTrace, cfg: LinkConfig) -> LockReport:
    n = len(trace)
    if n == 0:
        raise ValueError("empty trace")
    ok = _stable_mask(trace, cfg)
    tail = max(1, int(math.ceil(LOCK_TAIL * n)))
    locked = bool(ok[-tail:].all())
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        lock_time = 0.0
    elif bad[-1] == n - 1:
        lock_time = math.inf
    else:
        lock_time = float(trace.time[bad[-1] + 1])
    err_tail = trace.sampling_phase_err[-tail:]
    final_err = float(np.mean(err_tail)) if not np.isnan(err_tail).any() else math.nan
    bit_errors = None
    if locked and trace.retimed_bits.size == trace.tx_bits.size:
        bit_errors = count_bit_errors(trace, int(round(lock_time / cfg.bit_period)) + 1)
    return LockReport(
        locked=locked, lock_time=lock_time, coarse_corrections=len(trace.coarse_times),
        final_phase_err=final_err, final_vc=float(trace.vc[-1]),
        final_lock_count=int(trace.lock_count[-1]), bit_errors=bit_errors,
    )
