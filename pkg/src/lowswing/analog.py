"""Behavioral models of the analog blocks.

All functions are pure: outputs depend only on their arguments.  Fault
effects enter through the small ``*Params`` records, whose defaults are the
fault-free values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg, signal

from .config import LinkConfig

OVERSAMPLE = 4  # waveform samples per bit


def prbs7(n: int, seed: int = 0x5A) -> np.ndarray:
    """PRBS7 (x^7 + x^6 + 1) bit stream, one output bit per shift."""
    if not 1 <= seed <= 127:
        raise ValueError("PRBS7 seed must be a nonzero 7-bit value")
    out = np.empty(n, dtype=np.uint8)
    s = seed
    for i in range(n):
        bit = ((s >> 6) ^ (s >> 5)) & 1
        s = ((s << 1) | bit) & 0x7F
        out[i] = bit
    return out


@dataclass(frozen=True)
class Waveform:
    dt: float
    samples: np.ndarray  # shape (N, 2): v_plus, v_minus

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("samples must have shape (N, 2)")
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return len(self.samples)

    @property
    def v_plus(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def v_minus(self) -> np.ndarray:
        return self.samples[:, 1]

    @property
    def diff(self) -> np.ndarray:
        return self.samples[:, 0] - self.samples[:, 1]

    @property
    def cm(self) -> np.ndarray:
        return 0.5 * (self.samples[:, 0] + self.samples[:, 1])

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.dt


@dataclass(frozen=True)
class ArmParams:
    """Per-arm transmitter state.  ``level_stuck`` is nan, 0 or 1."""

    boost: float = 1.0
    level_gain: float = 1.0
    level_offset: float = 0.0
    level_stuck: float = math.nan
    driver_short: bool = False


GOOD_ARMS = (ArmParams(), ArmParams())


def boost_amplitudes(cfg: LinkConfig) -> tuple[float, float]:
    """Main and second-tap boost per arm for a full transition (capacitive divider)."""
    c_tot = cfg.cs + cfg.cs_alpha + cfg.line_c_total
    return cfg.vdd * cfg.cs / c_tot, cfg.vdd * cfg.cs_alpha / c_tot


def ffe_tau(cfg: LinkConfig) -> float:
    return (cfg.cs + cfg.cs_alpha) * cfg.rl


def ffe_transmit(bits, cfg: LinkConfig, half_cycle_delay: bool = False,
                 arms: tuple[ArmParams, ArmParams] = GOOD_ARMS,
                 oversample: int = OVERSAMPLE, drivers=None) -> Waveform:
    """Differential line waveform: weak-driver levels plus decaying capacitive boost.

    ``drivers`` optionally overrides the per-arm cap-driver inputs (the probe
    flops in test); by default they follow the data and its complement.
    """
    bits = np.asarray(bits, dtype=np.int8)
    if bits.size == 0:
        raise ValueError("empty bit sequence")
    T = cfg.bit_period
    dt = T / oversample
    d = 2.0 * bits - 1.0
    if drivers is None:
        drivers = (bits, 1 - bits)
    b_main, b_alpha = boost_amplitudes(cfg)
    n = d.size * oversample
    out = np.empty((n, 2))
    for col, (sign, arm) in enumerate(zip((1.0, -1.0), arms)):
        if not math.isnan(arm.level_stuck):
            level_dir = np.full_like(d, 1.0 if arm.level_stuck >= 0.5 else -1.0)
        else:
            level_dir = sign * d
        amp = cfg.vdd / 4 if arm.driver_short else arm.level_gain * cfg.swing / 2
        level = cfg.vcm + arm.level_offset + amp * level_dir
        v = np.repeat(level, oversample)
        if not arm.driver_short and arm.boost != 0.0:
            drv = 2.0 * np.asarray(drivers[col], dtype=float) - 1.0
            delta = np.zeros_like(drv)
            delta[1:] = 0.5 * (drv[1:] - drv[:-1])
            kicks = np.zeros(n)
            kicks[::oversample] += arm.boost * b_main * delta
            kicks[oversample::oversample] -= arm.boost * b_alpha * delta[:-1]
            a = math.exp(-dt / ffe_tau(cfg))
            v = v + signal.lfilter([1.0], [1.0, -a], kicks)
        out[:, col] = v
    if half_cycle_delay:
        shift = oversample // 2
        out = np.concatenate([np.repeat(out[:1], shift, axis=0), out[:-shift]])
    return Waveform(dt, out)


@lru_cache(maxsize=32)
def _ladder_modes(r_sec: float, c_sec: float, sections: int, dt: float):
    """Modal form of the ZOH-discretized ladder: output = sum_i r_i x_i,
    x_i[n+1] = lam_i x_i[n] + u[n].  Residues are scaled for unity DC gain."""
    g = 1.0 / (r_sec * c_sec)
    A = np.zeros((sections, sections))
    B = np.zeros(sections)
    for i in range(sections):
        A[i, i] -= g
        if i == 0:
            B[0] = g
        else:
            A[i, i - 1] += g
        if i < sections - 1:
            A[i, i] -= g
            A[i, i + 1] += g
    M = np.zeros((sections + 1, sections + 1))
    M[:sections, :sections] = A * dt
    M[:sections, sections] = B * dt
    E = linalg.expm(M)
    Ad, Bd = E[:sections, :sections], E[:sections, sections]
    lam, V = np.linalg.eig(Ad)
    lam, V = lam.real, V.real  # the ladder is similar to a symmetric matrix
    res = V[-1, :] * np.linalg.solve(V, Bd)
    res = res / np.sum(res / (1.0 - lam))
    return lam, res


def channel_modes(cfg: LinkConfig, dt: float, sections: int = 10):
    r = cfg.line_r_per_mm * cfg.line_len_mm / sections
    c = cfg.line_c_per_mm * cfg.line_len_mm / sections
    return _ladder_modes(r, c, sections, dt)


def propagate_channel(w: Waveform, cfg: LinkConfig) -> Waveform:
    """Filter both arms through the 10-section RC ladder (unity DC gain)."""
    lam, res = channel_modes(cfg, w.dt)
    x0 = w.samples[0]
    u = w.samples - x0
    y = np.zeros_like(u)
    for l, r in zip(lam, res):
        y += r * signal.lfilter([0.0, 1.0], [1.0, -l], u, axis=0)
    return Waveform(w.dt, y + x0)


@dataclass(frozen=True)
class TermParams:
    """Receiver termination.  ``r_scale`` multiplies each arm's resistance,
    ``short`` ties an arm to the center tap, ``rail`` pins it (nan, 0 or 1)."""

    r_scale: tuple[float, float] = (1.0, 1.0)
    short: tuple[bool, bool] = (False, False)
    rail: tuple[float, float] = (math.nan, math.nan)
    vct_offset: float = 0.0


GOOD_TERM = TermParams()


def term_tau(cfg: LinkConfig) -> float:
    return cfg.rl * cfg.line_c_total


def center_tap(cfg: LinkConfig, term: TermParams = GOOD_TERM) -> float:
    return cfg.vcm + term.vct_offset


def terminate(w: Waveform, cfg: LinkConfig, term: TermParams = GOOD_TERM) -> Waveform:
    """Arm voltages at the receiver.

    The termination resistance only shapes the switching transient (the
    weak driver sets the DC level), so a resistance change scales the
    high-pass part of each arm.
    """
    a = math.exp(-w.dt / term_tau(cfg))
    vct = center_tap(cfg, term)
    out = w.samples + term.vct_offset
    for col in (0, 1):
        x = w.samples[:, col]
        if not math.isnan(term.rail[col]):
            out[:, col] = cfg.vdd if term.rail[col] >= 0.5 else 0.0
        elif term.short[col]:
            out[:, col] = vct
        elif term.r_scale[col] != 1.0:
            lp = signal.lfilter([1.0 - a], [1.0, -a], x, zi=[a * x[0]])[0]
            out[:, col] += (min(term.r_scale[col], 1e3) - 1.0) * (x - lp)
    return Waveform(w.dt, out)


def eval_comparator(v_plus: float, v_minus: float, offset: float) -> int:
    return int((v_plus - v_minus) > offset)


@dataclass(frozen=True)
class CompParams:
    stuck: float = math.nan
    gain: float = 1.0
    offset: float = 0.0


GOOD_COMP = CompParams()


def eval_faulty_comparator(v_plus: float, v_minus: float, offset: float,
                           p: CompParams = GOOD_COMP) -> int:
    if not math.isnan(p.stuck):
        return int(p.stuck >= 0.5)
    return eval_comparator(p.gain * (v_plus - v_minus), 0.0, offset + p.offset)


def eval_window(v: float, lo: float, hi: float) -> tuple[int, int]:
    if not lo < hi:
        raise ValueError("window needs lo < hi")
    if v > hi:
        return (1, 0)
    if v < lo:
        return (0, 1)
    return (0, 0)


@dataclass(frozen=True)
class ChargePumpState:
    vc: float
    vp: float


@dataclass(frozen=True)
class PumpParams:
    """Charge-pump path state.  Switch and bypass fields: 1 nominal, 0 open, inf short."""

    i_up: float = 1.0
    i_dn: float = 1.0
    up_bypass: bool = False
    dn_bypass: bool = False
    sw_up: float = 1.0
    sw_dn: float = 1.0
    up_diode: bool = False
    dn_diode: bool = False
    balance: bool = True
    drift: float = 0.0
    amp_offset: float = 0.0
    amp_gain: float = 1.0
    vp_stuck: float = math.nan
    cap_short: bool = False


GOOD_PUMP = PumpParams()


def pump_paths(up: int, dn: int, p: PumpParams, i_nom: float, cfg: LinkConfig) -> tuple[float, float]:
    """Effective (up, dn) currents flowing for the given commands."""
    up_on = p.sw_up != 0 and (up or math.isinf(p.sw_up))
    dn_on = p.sw_dn != 0 and (dn or math.isinf(p.sw_dn))
    i_up = (cfg.cp_bypass_current if p.up_bypass else i_nom * p.i_up) if up_on else 0.0
    i_dn = (cfg.cp_bypass_current if p.dn_bypass else i_nom * p.i_dn) if dn_on else 0.0
    return i_up, i_dn


def vc_limits(p: PumpParams, cfg: LinkConfig) -> tuple[float, float]:
    lo = cfg.vth if p.dn_diode else 0.0
    hi = cfg.vdd - cfg.vth if p.up_diode else cfg.vdd
    return lo, hi


def move_vc(vc: float, dv: float, lo: float, hi: float, cfg: LinkConfig) -> float:
    """Apply a charge step; the pump cannot push past its own limits but does
    not pull back a node another source left outside them."""
    new = vc + dv
    if dv > 0:
        new = min(new, max(hi, vc))
    elif dv < 0:
        new = max(new, min(lo, vc))
    return min(max(new, 0.0), cfg.vdd)


def replica_vp(vc: float, p: PumpParams, cfg: LinkConfig) -> float:
    """Charge-balance amplifier output for a given vc (balance path intact)."""
    v = cfg.v_mid + p.amp_gain * (vc - cfg.v_mid) + p.amp_offset
    return min(max(v, cfg.amp_min), cfg.amp_max)


def step_charge_pump(state: ChargePumpState, up: int, dn: int, dt: float, strength: str,
                     test_mode: bool, cfg: LinkConfig, p: PumpParams = GOOD_PUMP) -> ChargePumpState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if strength not in ("weak", "strong"):
        raise ValueError(f"unknown pump strength {strength!r}")
    i_nom = cfg.i_weak if strength == "weak" else cfg.i_strong
    i_up, i_dn = pump_paths(up, dn, p, i_nom, cfg)
    lo, hi = vc_limits(p, cfg)
    if p.cap_short:
        vc = 0.0
    elif test_mode:
        if i_up > 0 and i_dn == 0:
            vc = hi
        elif i_dn > 0 and i_up == 0:
            vc = lo
        else:
            vc = state.vc
    else:
        vc = move_vc(state.vc, (i_up - i_dn) * dt / cfg.cp_cap, lo, hi, cfg)
    if not math.isnan(p.vp_stuck):
        vp = cfg.vdd if p.vp_stuck >= 0.5 else 0.0
    elif p.balance:
        vp = replica_vp(vc, p, cfg)
    else:
        events = int(i_up > 0) + int(i_dn > 0)
        vp = min(max(state.vp + p.drift * cfg.drift_step * events, 0.0), cfg.vdd)
    return ChargePumpState(vc, vp)


def vcdl_delay(vc: float, cfg: LinkConfig, gain: float = 1.0) -> float:
    """Affine control-voltage-to-delay map, saturating at the window thresholds."""
    frac = (vc - cfg.window_lo) / (cfg.window_hi - cfg.window_lo)
    frac = min(max(frac, 0.0), 1.0)
    return cfg.vcdl_min_delay + cfg.vcdl_range * (0.5 + gain * (frac - 0.5))


def generate_dll_phases(cfg: LinkConfig) -> list[float]:
    if cfg.n_phases < 2:
        raise ValueError("need at least two DLL phases")
    T = cfg.bit_period
    return [i * T / cfg.n_phases for i in range(cfg.n_phases)]
