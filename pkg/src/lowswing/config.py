"""Link parameters and the flat ``key = value`` config format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LinkConfig:
    # supply, signalling
    vdd: float = 1.2
    data_rate: float = 2.5e9
    swing: float = 0.060
    vcm: float = 0.6
    rl: float = 600.0
    gm_weak: float = 1e-3
    # capacitive FFE
    cs: float = 400e-15
    cs_alpha: float = 100e-15
    # channel
    line_r_per_mm: float = 100.0
    line_c_per_mm: float = 200e-15
    line_len_mm: float = 10.0
    # comparators and windows
    scan_freq: float = 100e6
    comp_offset: float = 0.015
    window_lo: float = 0.3
    window_hi: float = 0.9
    v_mid: float = 0.6
    cpbist_window: float = 0.150
    # charge pumps
    cp_cap: float = 200e-15
    i_weak: float = 1e-6
    i_strong: float = 20e-6
    cp_bypass_current: float = 300e-6
    strong_stop_latency: float = 0.5e-9
    vth: float = 0.4
    amp_min: float = 0.2
    amp_max: float = 1.0
    drift_step: float = 5e-3
    # DLL / VCDL / loop
    n_phases: int = 10
    vcdl_min_delay: float = 100e-12
    vcdl_range: float = 50e-12
    divider: int = 8
    rx_clock_offset: float = 130e-12
    # test procedures
    toggle_sample_delay: float = 600e-12
    reset_check_ticks: int = 4
    bist_duration: float = 2e-6
    lock_count_limit: int = 5
    prbs_seed: int = 0x5A

    @property
    def bit_period(self) -> float:
        return 1.0 / self.data_rate

    @property
    def phase_step(self) -> float:
        return self.bit_period / self.n_phases

    @property
    def line_c_total(self) -> float:
        return self.line_c_per_mm * self.line_len_mm

    def validate(self) -> "LinkConfig":
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name in _NON_NEGATIVE:
                ok = v >= 0
            else:
                ok = v > 0
            if not ok:
                raise ConfigError(f"{f.name} must be {'non-negative' if f.name in _NON_NEGATIVE else 'positive'}, got {v}")
        if not self.swing > 2 * self.comp_offset:
            raise ConfigError("swing must exceed twice the comparator offset")
        if not self.window_lo < self.v_mid < self.window_hi:
            raise ConfigError("need window_lo < v_mid < window_hi")
        if self.window_hi > self.vdd:
            raise ConfigError("window_hi above vdd")
        if self.n_phases < 2:
            raise ConfigError("n_phases must be at least 2")
        if not self.vcdl_range > self.phase_step:
            raise ConfigError("vcdl_range must exceed one DLL phase step")
        if not 1 <= self.prbs_seed <= 127:
            raise ConfigError("prbs_seed must be a nonzero 7-bit value")
        return self

    def replace(self, **changes) -> "LinkConfig":
        return dataclasses.replace(self, **coerce(changes)).validate()


_NON_NEGATIVE = {"rx_clock_offset", "gm_weak", "cs", "cs_alpha", "strong_stop_latency", "drift_step"}
_FIELDS = {f.name: f for f in dataclasses.fields(LinkConfig)}
_INT_FIELDS = {name for name, f in _FIELDS.items() if f.type in ("int", int)}


def coerce(values: Mapping[str, Any]) -> dict:
    """Convert raw values to field types; rejects unknown keys."""
    out = {}
    for key, raw in values.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if key in _INT_FIELDS:
                out[key] = int(raw, 0) if isinstance(raw, str) else int(raw)
                if isinstance(raw, float) and raw != out[key]:
                    raise ValueError
            else:
                out[key] = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return out


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> LinkConfig:
    values: dict = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
        values.update(parse_config_text(text, str(p)))
    if overrides:
        values.update(overrides)
    return LinkConfig(**coerce(values)).validate()


def dump_config(cfg: LinkConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {v!r}")
    return "\n".join(lines) + "\n"
