"""A link instance with its active fault mutations applied.

Mutations target ``<instance>.<param>`` knobs.  Knobs that are never
mutated keep the defaults below; the model turns them into the
``*Params`` records consumed by :mod:`lowswing.analog`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

from . import analog
from .analog import ArmParams, CompParams, PumpParams, TermParams
from .config import LinkConfig
from .faults import BehaviorMutation, Fault, Netlist, mutation_for, reference_netlist

NAN = math.nan

# Default value per parameter name (the part after the instance prefix).
PARAM_DEFAULTS = {
    "stuck": NAN, "drv_stuck": NAN, "rail": NAN, "pin": NAN, "vp_stuck": NAN,
    "up_diode": NAN, "dn_diode": NAN, "vc_pin": NAN,
    "cap": 1.0, "r": 1.0, "g": 1.0, "g_n": 1.0, "g_p": 1.0,
    "gain": 1.0, "amp_gain": 1.0, "i_up": 1.0, "i_dn": 1.0,
    "sw_up": 1.0, "sw_dn": 1.0, "up_bypass": 1.0, "dn_bypass": 1.0,
    "bal": 1.0, "alive": 1.0, "stop_up": 1.0, "stop_dn": 1.0,
    "offset": 0.0, "vcm_offset": 0.0, "amp_offset": 0.0, "stop_offset": 0.0, "drift": 0.0,
}


def knob_default(target: str) -> float:
    param = target.rsplit(".", 1)[-1]
    try:
        return PARAM_DEFAULTS[param]
    except KeyError:
        raise KeyError(f"unknown behavioral parameter {target!r}") from None


def apply_mutations(mutations: Iterable[BehaviorMutation]) -> dict[str, float]:
    knobs: dict[str, float] = {}
    for m in mutations:
        cur = knobs.get(m.target, knob_default(m.target))
        knobs[m.target] = m.apply(cur)
    return knobs


def _flag(v: float) -> bool:
    return not math.isnan(v) and v >= 0.5


@dataclass(frozen=True)
class StrongPumpParams:
    pump: PumpParams = analog.GOOD_PUMP
    stop_up: float = 1.0  # 1 nominal, 0 never stops, inf always stopped
    stop_dn: float = 1.0
    stop_offset: float = 0.0


@dataclass(frozen=True)
class LinkModel:
    cfg: LinkConfig
    faults: tuple[Fault, ...] = ()
    knobs: dict = field(default_factory=dict, compare=False)

    @classmethod
    def build(cls, cfg: LinkConfig, faults: Iterable[Fault] = (), netlist: Netlist | None = None) -> "LinkModel":
        faults = tuple(faults)
        if faults and netlist is None:
            netlist = reference_netlist()
        muts = [m for f in faults for m in mutation_for(f, netlist)]
        return cls(cfg, faults, apply_mutations(muts))

    @property
    def is_golden(self) -> bool:
        return not self.knobs

    def k(self, target: str) -> float:
        return self.knobs.get(target, knob_default(target))

    # -- transmitter, line, termination -------------------------------------------
    @cached_property
    def arms(self) -> tuple[ArmParams, ArmParams]:
        out = []
        for arm in ("p", "m"):
            boost = 0.0 if not math.isnan(self.k(f"tx.{arm}.drv_stuck")) else 1.0
            out.append(ArmParams(
                boost=boost,
                level_gain=self.k(f"wd.{arm}.gain"),
                level_offset=self.k(f"wd.{arm}.offset"),
                level_stuck=self.k(f"wd.{arm}.stuck"),
                driver_short=math.isinf(self.k(f"tx.{arm}.cap")),
            ))
        return tuple(out)

    def driver_outputs(self, bit: int, common_mode: bool = False) -> tuple[int, int]:
        """Logic level on the driver side of each series cap, as seen by the probe flops."""
        want = (int(bit), int(bit) if common_mode else 1 - int(bit))
        out = []
        for arm, w in zip(("p", "m"), want):
            stuck = self.k(f"tx.{arm}.drv_stuck")
            out.append(w if math.isnan(stuck) else int(stuck >= 0.5))
        return tuple(out)

    @cached_property
    def term(self) -> TermParams:
        scales, shorts, rails = [], [], []
        for arm in ("p", "m"):
            g = 0.5 * self.k(f"term.{arm}.g_n") + 0.5 * self.k(f"term.{arm}.g_p")
            scales.append(1.0 / g if g > 0 else math.inf)
            shorts.append(math.isinf(self.k(f"term.{arm}.r")))
            rails.append(self.k(f"term.{arm}.rail"))
        return TermParams(tuple(scales), tuple(shorts), tuple(rails), self.k("term.vcm_offset"))

    def comp(self, inst: str) -> CompParams:
        return CompParams(self.k(f"{inst}.stuck"), self.k(f"{inst}.gain"), self.k(f"{inst}.offset"))

    def received(self, bits, half_cycle_delay: bool = False, drivers=None) -> analog.Waveform:
        w = analog.ffe_transmit(bits, self.cfg, half_cycle_delay, self.arms, drivers=drivers)
        return analog.terminate(analog.propagate_channel(w, self.cfg), self.cfg, self.term)

    @cached_property
    def _static(self) -> dict:
        out = {}
        for bit in (0, 1):
            vp, vm = self.received([bit]).samples[-1]
            out[bit] = (float(vp), float(vm), analog.center_tap(self.cfg, self.term))
        return out

    def static_arms(self, bit: int) -> tuple[float, float, float]:
        """DC (v_plus, v_minus, center tap) at the receiver for a held input bit."""
        return self._static[int(bit)]

    def rx_comparators(self, v_plus: float, v_minus: float, vct: float) -> dict[str, int]:
        """Termination offset comparators and the 100 MHz window comparator."""
        cfg = self.cfg
        cm = 0.5 * (v_plus + v_minus)
        return {
            "dcp": analog.eval_faulty_comparator(v_plus, vct, cfg.comp_offset, self.comp("dcp")),
            "dcm": analog.eval_faulty_comparator(v_minus, vct, cfg.comp_offset, self.comp("dcm")),
            "wrx_hi": analog.eval_faulty_comparator(cm, cfg.v_mid, cfg.comp_offset, self.comp("wrx_hi")),
            "wrx_lo": analog.eval_faulty_comparator(cfg.v_mid, cm, cfg.comp_offset, self.comp("wrx_lo")),
        }

    def line_decode(self, bit: int) -> int:
        vp, vm, _ = self.static_arms(bit)
        return int(vp - vm > 0)

    # -- clocking ---------------------------------------------------------------------
    @property
    def vcdl_alive(self) -> bool:
        return self.k("vcdl.alive") != 0

    @property
    def vcdl_gain(self) -> float:
        return self.k("vcdl.gain")

    def vcdl_delay(self, vc: float) -> float:
        return analog.vcdl_delay(vc, self.cfg, self.vcdl_gain)

    # -- charge pumps and control window ------------------------------------------
    def _pump(self, inst: str) -> PumpParams:
        k = self.k
        return PumpParams(
            i_up=k(f"{inst}.i_up"), i_dn=k(f"{inst}.i_dn"),
            up_bypass=math.isinf(k(f"{inst}.up_bypass")), dn_bypass=math.isinf(k(f"{inst}.dn_bypass")),
            sw_up=k(f"{inst}.sw_up"), sw_dn=k(f"{inst}.sw_dn"),
            up_diode=_flag(k(f"{inst}.up_diode")), dn_diode=_flag(k(f"{inst}.dn_diode")),
            balance=k(f"{inst}.bal") != 0, drift=k(f"{inst}.drift"),
            amp_offset=k(f"{inst}.amp_offset"), amp_gain=k(f"{inst}.amp_gain"),
            vp_stuck=k(f"{inst}.vp_stuck"),
            cap_short=math.isinf(k(f"{inst}.cap")) or not math.isnan(k("vcdl.vc_pin")),
        )

    @cached_property
    def weak_pump(self) -> PumpParams:
        return self._pump("wcp")

    @cached_property
    def strong_pump(self) -> StrongPumpParams:
        return StrongPumpParams(self._pump("scp"), self.k("scp.stop_up"), self.k("scp.stop_dn"),
                                self.k("scp.stop_offset"))

    def rest_vc(self) -> float:
        """Control voltage with no pump commands: v_mid unless a static path pins it."""
        cfg = self.cfg
        wp, sp = self.weak_pump, self.strong_pump.pump
        if wp.cap_short:
            return 0.0
        up_w, dn_w = analog.pump_paths(0, 0, wp, cfg.i_weak, cfg)
        up_s, dn_s = analog.pump_paths(0, 0, sp, cfg.i_strong, cfg)
        up, dn = up_w + up_s, dn_w + dn_s
        lo, hi = analog.vc_limits(wp, cfg)
        if up > dn:
            return hi
        if dn > up:
            return lo
        return cfg.v_mid

    def rest_vp(self, vc: float) -> float:
        p = self.weak_pump
        if not math.isnan(p.vp_stuck):
            return self.cfg.vdd if p.vp_stuck >= 0.5 else 0.0
        if p.balance:
            return analog.replica_vp(vc, p, self.cfg)
        return vc

    def cpbist_flag(self, vc: float, vp: float) -> int:
        w = self.cfg.cpbist_window
        hi = analog.eval_faulty_comparator(vp, vc, w, self.comp("cpb_hi"))
        lo = analog.eval_faulty_comparator(vc, vp, w, self.comp("cpb_lo"))
        return hi | lo

    def window_input(self, vc: float, scan: bool) -> float:
        """Control-window comparator input through the functional/scan mux."""
        cfg = self.cfg
        for inst in ("mux.fn", "mux.sc"):
            pin = self.k(f"{inst}.pin")
            if not math.isnan(pin):
                return cfg.vdd if pin >= 0.5 else 0.0
        g_fn, g_sc = self.k("mux.fn.g"), self.k("mux.sc.g")
        g_fn = g_fn if (not scan or math.isinf(g_fn)) else 0.0
        g_sc = g_sc if (scan or math.isinf(g_sc)) else 0.0
        paths = [(g_fn, vc), (g_sc, cfg.v_mid)]
        if any(math.isinf(g) for g, _ in paths):
            paths = [(1.0, v) for g, v in paths if math.isinf(g)]
        total = sum(g for g, _ in paths)
        if total == 0:
            return cfg.v_mid
        return sum(g * v for g, v in paths) / total

    def control_window(self, vc: float, scan: bool = False) -> tuple[int, int]:
        cfg = self.cfg
        vin = self.window_input(vc, scan)
        hi = analog.eval_faulty_comparator(vin, cfg.window_hi, 0.0, self.comp("cw_hi"))
        lo = analog.eval_faulty_comparator(cfg.window_lo, vin, 0.0, self.comp("cw_lo"))
        return hi, lo
