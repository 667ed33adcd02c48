"""Structural netlists, the defect universe and the defect-to-behavior dictionary.

Every analog block is described by a small device list.  A device's
``behavior_role`` has the form ``<instance>:<kind>``; the instance names the
behavioral parameter group the device realizes (``wcp``, ``tx.p``, ``dcp``...)
and the kind selects a row of the fixed mutation table below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

MOS_KINDS = ("nmos", "pmos")
DEVICE_KINDS = ("nmos", "pmos", "capacitor", "resistor-tgate")

# Fixed report order.
MOS_DEFECTS = (
    "gate-open",
    "drain-open",
    "source-open",
    "gate-drain-short",
    "gate-source-short",
    "drain-source-short",
)
CAP_DEFECTS = ("capacitor-short",)
DEFECT_CLASSES = MOS_DEFECTS + CAP_DEFECTS

BLOCKS = (
    "transmitter-ffe",
    "weak-driver",
    "termination",
    "dc-comparators",
    "window-comparator-rx",
    "weak-cp",
    "strong-cp",
    "cp-bist-comparator",
    "vcdl",
    "control-fsm-analog-interface",
)
_BLOCK_ALIASES = {"dc-comparator": "dc-comparators"}

EFFECTS = ("stuck-high", "stuck-low", "open", "short", "param-scale", "offset-add")


class NetlistError(ValueError):
    """Malformed netlist text; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class FaultError(ValueError):
    """A fault that does not belong to the netlist's universe."""


@dataclass(frozen=True)
class Device:
    id: str
    kind: str
    block: str
    width_um: float
    length_um: float
    behavior_role: str

    @property
    def instance(self) -> str:
        return self.behavior_role.split(":", 1)[0]

    @property
    def role_kind(self) -> str | None:
        parts = self.behavior_role.split(":", 1)
        return parts[1] if len(parts) == 2 else None

    def defects(self) -> tuple[str, ...]:
        if self.kind in MOS_KINDS:
            return MOS_DEFECTS
        if self.kind == "capacitor":
            return CAP_DEFECTS
        return ()


@dataclass(frozen=True, order=True)
class Fault:
    device_id: str
    defect: str

    def __str__(self):
        return f"{self.device_id}:{self.defect}"

    @classmethod
    def parse(cls, text: str) -> "Fault":
        dev, sep, defect = text.rpartition(":")
        if not sep or not dev or defect not in DEFECT_CLASSES:
            raise FaultError(f"cannot parse fault {text!r}; expected <device_id>:<defect>")
        return cls(dev, defect)


@dataclass(frozen=True)
class BehaviorMutation:
    target: str
    effect: str
    value: float | None = None

    def apply(self, current: float) -> float:
        if self.effect == "stuck-high":
            return 1.0
        if self.effect == "stuck-low":
            return 0.0
        if self.effect == "open":
            return 0.0
        if self.effect == "short":
            return math.inf
        if self.effect == "param-scale":
            return current * self.value
        if self.effect == "offset-add":
            return current + self.value
        raise ValueError(f"unknown effect {self.effect!r}")


@dataclass(frozen=True)
class Netlist:
    devices: tuple[Device, ...] = ()
    blocks: tuple[str, ...] = BLOCKS
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        index = {}
        for d in self.devices:
            if d.id in index:
                raise NetlistError(f"duplicate device id {d.id!r}")
            if d.block not in self.blocks:
                raise NetlistError(f"device {d.id!r} in undeclared block {d.block!r}")
            index[d.id] = d
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.devices)

    def __iter__(self):
        return iter(self.devices)

    def __contains__(self, device_id):
        return device_id in self._index

    def device(self, device_id: str) -> Device:
        try:
            return self._index[device_id]
        except KeyError:
            raise FaultError(f"no device {device_id!r} in netlist") from None

    def by_block(self, block: str) -> list[Device]:
        return [d for d in self.devices if d.block == block]

    def merge(self, other: "Netlist") -> "Netlist":
        return Netlist(self.devices + other.devices)


def parse_netlist(text: str, source: str | None = None) -> Netlist:
    """Parse ``<id> <kind> <block> <W_um> <L_um> <behavior_role>`` lines.

    ``#`` starts a comment; blank lines are skipped.  Device order is kept.
    """
    devices = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 6:
            raise NetlistError(f"expected 6 fields, got {len(parts)}", lineno, source)
        dev_id, kind, block, w, l, role = parts
        if kind not in DEVICE_KINDS:
            raise NetlistError(f"unknown device kind {kind!r}", lineno, source)
        block = _BLOCK_ALIASES.get(block, block)
        if block not in BLOCKS:
            raise NetlistError(f"unknown block {block!r}", lineno, source)
        try:
            width, length = float(w), float(l)
        except ValueError:
            raise NetlistError(f"bad device size {w!r} x {l!r}", lineno, source) from None
        if width <= 0 or length <= 0:
            raise NetlistError("device sizes must be positive", lineno, source)
        if dev_id in seen:
            raise NetlistError(f"duplicate device id {dev_id!r}", lineno, source)
        seen.add(dev_id)
        devices.append(Device(dev_id, kind, block, width, length, role))
    return Netlist(tuple(devices))


def load_netlists(paths: Iterable[str | Path]) -> Netlist:
    """Parse and concatenate netlist files; a directory means all its ``*.net`` files."""
    files: list[Path] = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(p.glob("*.net"), key=_file_order))
        elif p.exists():
            files.append(p)
        else:
            raise NetlistError(f"no such netlist file or directory: {p}")
    if not files:
        raise NetlistError("no netlist files found")
    merged = Netlist()
    for f in files:
        merged = merged.merge(parse_netlist(f.read_text(encoding="utf-8"), source=f.name))
    return merged


REFERENCE_FILES = (
    "transmitter_ffe.net",
    "weak_driver.net",
    "termination.net",
    "termination_comparator.net",
    "window_comparator_rx.net",
    "weak_cp.net",
    "strong_cp.net",
    "cp_bist_comparator.net",
    "vcdl.net",
    "control_interface.net",
)


def _file_order(path: Path):
    # shipped files keep signal-flow order, anything else follows alphabetically
    try:
        return (0, REFERENCE_FILES.index(path.name), "")
    except ValueError:
        return (1, 0, path.name)


def reference_netlist_text(name: str) -> str:
    return resources.files("lowswing.data.netlists").joinpath(name).read_text(encoding="utf-8")


def reference_netlist() -> Netlist:
    """All shipped reference netlists in signal-flow order."""
    merged = Netlist()
    for name in REFERENCE_FILES:
        merged = merged.merge(parse_netlist(reference_netlist_text(name), source=name))
    return merged


def enumerate_faults(netlist: Netlist) -> list[Fault]:
    return [Fault(d.id, defect) for d in netlist.devices for defect in d.defects()]


# ---------------------------------------------------------------------------
# Defect-to-behavior dictionary
#
# Entries are (parameter, effect, value).  Conventions:
#   gate-open          input floats; output settles at the rail its load favors
#   drain/source-open  branch removed (param-scale 0) or the stage it feeds is stuck
#   gate-drain-short   device diode-connected: +-300 mV offset or gain collapse;
#                      benign on devices that are already diode-connected
#   gate-source-short  device off; on pass devices the control net lands on the
#                      signal path
#   drain-source-short branch always on: output stuck or current source bypassed
#   capacitor-short    capacitor becomes a wire
# ---------------------------------------------------------------------------

GDS_OFFSET = 0.3
_SH, _SL = ("stuck", "stuck-high", None), ("stuck", "stuck-low", None)


def _row(go, do, so, gds, gss, dss):
    return dict(zip(MOS_DEFECTS, (go, do, so, gds, gss, dss)))


def _all(entry):
    return _row(entry, entry, entry, entry, entry, entry)


MUTATION_TABLE: dict[str, dict[str, list[tuple]]] = {
    # comparators: output = gain*(in+ - in-) > programmed offset + offset
    "cmp_inp": _row([_SL], [_SL], [_SL], [("offset", "offset-add", GDS_OFFSET)], [_SL], [_SH]),
    "cmp_inm": _row([_SH], [_SH], [_SH], [("offset", "offset-add", -GDS_OFFSET)], [_SH], [_SL]),
    "cmp_load_diode": _row([_SL], [_SL], [_SL], [("gain", "param-scale", 0.98)], [_SL], [_SL]),
    "cmp_load_out": _row([_SH], [_SL], [_SL], [("gain", "param-scale", 0.3)], [_SL], [_SH]),
    "cmp_tail": _row([_SL], [_SL], [_SL], [("gain", "param-scale", 0.3)], [_SL], [_SH]),
    "cmp_bias_diode": _row([_SL], [_SL], [_SL], [("gain", "param-scale", 0.98)], [_SL], [_SH]),
    "cmp_inv_p": _row([_SL], [_SL], [_SL], [_SL], [_SL], [_SH]),
    "cmp_inv_n": _row([_SH], [_SH], [_SH], [_SH], [_SH], [_SL]),
    # CP-BIST monitor: fail-safe latch that is preset to "fault" each cycle and
    # cleared only by a valid in-window evaluation, so dead stages raise the flag
    "bist_inp": _row([_SH], [_SH], [_SH], [("offset", "offset-add", -GDS_OFFSET)], [_SH], [_SH]),
    "bist_inm": _row([_SH], [_SH], [_SH], [("offset", "offset-add", GDS_OFFSET)], [_SH], [_SH]),
    "bist_load_diode": _row([_SH], [_SH], [_SH], [("gain", "param-scale", 0.98)], [_SH], [_SH]),
    "bist_load_out": _row([_SH], [_SL], [_SL], [("gain", "param-scale", 0.3)], [_SH], [_SH]),
    "bist_tail": _row([_SH], [_SH], [_SH], [("gain", "param-scale", 0.3)], [_SH], [_SH]),
    "bist_bias_diode": _row([_SH], [_SH], [_SH], [("gain", "param-scale", 0.98)], [_SH], [_SH]),
    "bist_inv_p": _row([_SL], [_SL], [_SL], [_SH], [_SH], [_SH]),
    "bist_inv_n": _row([_SH], [_SH], [_SH], [_SH], [_SH], [_SH]),
    "bist_clk": _all([_SH]),
    # clocked latch: never evaluates, or never resets after its first (low) decision
    "cmp_clk": _all([_SL]),
    # transmitter cap drivers; a stuck driver kills that arm's boost
    "drv_pu": _row(*([[("drv_stuck", "stuck-low", None)]] * 5), [("drv_stuck", "stuck-high", None)]),
    "drv_pd": _row(*([[("drv_stuck", "stuck-high", None)]] * 5), [("drv_stuck", "stuck-low", None)]),
    # weak driver transconductor, one per arm
    "wd_gm": _row([("stuck", "stuck-low", None)], [("gain", "param-scale", 0.0)],
                  [("gain", "param-scale", 0.0)], [("offset", "offset-add", GDS_OFFSET)],
                  [("gain", "open", None)], [("stuck", "stuck-high", None)]),
    # termination transmission-gate resistor halves (gates tied to the rails)
    "tg_n": _row([("g_n", "param-scale", 0.0)], [("g_n", "param-scale", 0.0)],
                 [("g_n", "param-scale", 0.0)], [("rail", "stuck-high", None)],
                 [("rail", "stuck-high", None)], [("r", "short", None)]),
    "tg_p": _row([("g_p", "param-scale", 0.0)], [("g_p", "param-scale", 0.0)],
                 [("g_p", "param-scale", 0.0)], [("rail", "stuck-low", None)],
                 [("rail", "stuck-low", None)], [("r", "short", None)]),
    # termination common-mode divider, triode devices with gates on the rails
    "bias_pu": _row([("vcm_offset", "offset-add", -0.1)], [("vcm_offset", "offset-add", -0.6)],
                    [("vcm_offset", "offset-add", -0.6)], [("vcm_offset", "offset-add", -0.6)],
                    [("vcm_offset", "offset-add", -0.6)], [("vcm_offset", "offset-add", 0.15)]),
    "bias_pd": _row([("vcm_offset", "offset-add", 0.1)], [("vcm_offset", "offset-add", 0.6)],
                    [("vcm_offset", "offset-add", 0.6)], [("vcm_offset", "offset-add", 0.6)],
                    [("vcm_offset", "offset-add", 0.6)], [("vcm_offset", "offset-add", -0.15)]),
    "ffe_cap": {"capacitor-short": [("cap", "short", None)]},
    # weak (fine) charge pump
    "cp_src_up": _row([("i_up", "param-scale", 0.0)], [("i_up", "param-scale", 0.0)],
                      [("i_up", "param-scale", 0.0)],
                      [("i_up", "param-scale", 0.4), ("up_diode", "stuck-high", None)],
                      [("i_up", "open", None)], [("up_bypass", "short", None)]),
    "cp_src_dn": _row([("i_dn", "param-scale", 0.0)], [("i_dn", "param-scale", 0.0)],
                      [("i_dn", "param-scale", 0.0)],
                      [("i_dn", "param-scale", 0.4), ("dn_diode", "stuck-high", None)],
                      [("i_dn", "open", None)], [("dn_bypass", "short", None)]),
    "cp_sw_up": _row(*([[("sw_up", "open", None)]] * 5), [("sw_up", "short", None)]),
    "cp_sw_dn": _row(*([[("sw_dn", "open", None)]] * 5), [("sw_dn", "short", None)]),
    "cp_sw_upb": _all([("bal", "open", None), ("drift", "offset-add", 1.0)]),
    "cp_sw_dnb": _all([("bal", "open", None), ("drift", "offset-add", -1.0)]),
    "amp_inp": _row([("bal", "open", None), ("drift", "offset-add", -1.0)],
                    [("bal", "open", None), ("drift", "offset-add", 1.0)],
                    [("bal", "open", None), ("drift", "offset-add", 1.0)],
                    [("amp_offset", "offset-add", GDS_OFFSET)],
                    [("vp_stuck", "stuck-high", None)], [("vp_stuck", "stuck-low", None)]),
    "amp_inm": _row([("bal", "open", None), ("drift", "offset-add", 1.0)],
                    [("bal", "open", None), ("drift", "offset-add", -1.0)],
                    [("bal", "open", None), ("drift", "offset-add", -1.0)],
                    [("amp_offset", "offset-add", -GDS_OFFSET)],
                    [("vp_stuck", "stuck-low", None)], [("vp_stuck", "stuck-high", None)]),
    "amp_load": _row([("bal", "open", None), ("drift", "offset-add", -1.0)],
                     [("bal", "open", None), ("drift", "offset-add", -1.0)],
                     [("bal", "open", None), ("drift", "offset-add", -1.0)],
                     [("amp_gain", "param-scale", 0.98)],
                     [("vp_stuck", "stuck-low", None)], [("vp_stuck", "stuck-high", None)]),
    "amp_tail": _row([("bal", "open", None), ("drift", "offset-add", 1.0)],
                     [("bal", "open", None), ("drift", "offset-add", 1.0)],
                     [("bal", "open", None), ("drift", "offset-add", 1.0)],
                     [("bal", "open", None), ("drift", "offset-add", 1.0)],
                     [("vp_stuck", "stuck-high", None)], [("vp_stuck", "stuck-low", None)]),
    "cp_cap": {"capacitor-short": [("cap", "short", None)]},
    # strong (reset) charge pump
    "scp_src_up": _row([("i_up", "param-scale", 0.0)], [("i_up", "param-scale", 0.0)],
                       [("i_up", "param-scale", 0.0)], [("i_up", "param-scale", 0.4)],
                       [("i_up", "open", None)], [("up_bypass", "short", None)]),
    "scp_src_dn": _row([("i_dn", "param-scale", 0.0)], [("i_dn", "param-scale", 0.0)],
                       [("i_dn", "param-scale", 0.0)], [("i_dn", "param-scale", 0.4)],
                       [("i_dn", "open", None)], [("dn_bypass", "short", None)]),
    "scp_sw_up": _row(*([[("sw_up", "open", None)]] * 5), [("sw_up", "short", None)]),
    "scp_sw_dn": _row(*([[("sw_dn", "open", None)]] * 5), [("sw_dn", "short", None)]),
    "scp_bias_p": _row([("i_up", "param-scale", 0.0)], [("i_up", "param-scale", 0.0)],
                       [("i_up", "param-scale", 0.0)], [("i_up", "param-scale", 0.98)],
                       [("i_up", "open", None)], [("i_up", "open", None)]),
    "scp_bias_n": _row([("i_dn", "param-scale", 0.0)], [("i_dn", "param-scale", 0.0)],
                       [("i_dn", "param-scale", 0.0)], [("i_dn", "param-scale", 0.98)],
                       [("i_dn", "open", None)], [("i_dn", "open", None)]),
    "scp_stop_up": _row([("stop_up", "open", None)], [("stop_up", "open", None)],
                        [("stop_up", "open", None)], [("stop_offset", "offset-add", -GDS_OFFSET)],
                        [("stop_up", "open", None)], [("stop_up", "short", None)]),
    "scp_stop_dn": _row([("stop_dn", "open", None)], [("stop_dn", "open", None)],
                        [("stop_dn", "open", None)], [("stop_offset", "offset-add", GDS_OFFSET)],
                        [("stop_dn", "open", None)], [("stop_dn", "short", None)]),
    # voltage-controlled delay line
    "vcdl_vi_in": _row([("gain", "open", None)], [("alive", "open", None)],
                       [("alive", "open", None)], [("gain", "open", None)],
                       [("vc_pin", "stuck-low", None)], [("gain", "open", None)]),
    "vcdl_vi_diode": _row([("alive", "open", None)], [("alive", "open", None)],
                          [("alive", "open", None)], [("gain", "param-scale", 0.98)],
                          [("alive", "open", None)], [("alive", "open", None)]),
    "vcdl_starve": _row([("gain", "param-scale", 0.5)], [("alive", "open", None)],
                        [("alive", "open", None)], [("gain", "open", None)],
                        [("alive", "open", None)], [("gain", "open", None)]),
    "vcdl_inv": _all([("alive", "open", None)]),
    "vcdl_buf": _all([("alive", "open", None)]),
    # window-input mux: one half of a transmission gate still conducts
    "mux_n": _row([("g", "param-scale", 0.5)], [("g", "param-scale", 0.5)],
                  [("g", "param-scale", 0.5)], [("pin", "stuck-high", None)],
                  [("pin", "stuck-high", None)], [("g", "short", None)]),
    "mux_p": _row([("g", "param-scale", 0.5)], [("g", "param-scale", 0.5)],
                  [("g", "param-scale", 0.5)], [("pin", "stuck-low", None)],
                  [("pin", "stuck-low", None)], [("g", "short", None)]),
}

# Fallback for roles without a known kind: treat the role name as the output node.
GENERIC_ROW = {
    "gate-open": [("stuck", "stuck-low", None)],
    "drain-open": [("gain", "param-scale", 0.0)],
    "source-open": [("gain", "param-scale", 0.0)],
    "gate-drain-short": [("offset", "offset-add", GDS_OFFSET)],
    "gate-source-short": [("gain", "open", None)],
    "drain-source-short": [("stuck", "stuck-high", None)],
    "capacitor-short": [("cap", "short", None)],
}


def mutation_for(fault: Fault, netlist: Netlist) -> list[BehaviorMutation]:
    device = netlist.device(fault.device_id)
    if fault.defect not in device.defects():
        raise FaultError(f"{fault.defect} is not a legal defect for {device.kind} {device.id}")
    kind = device.role_kind
    row = MUTATION_TABLE.get(kind) if kind else None
    entries = row[fault.defect] if row is not None else GENERIC_ROW[fault.defect]
    return [BehaviorMutation(f"{device.instance}.{param}", effect, value)
            for param, effect, value in entries]
