"""Cycle-accurate digital blocks: phase detector, control FSM, ring counter,
lock detector and scan chains."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence


@dataclass(frozen=True)
class PdSample:
    prev_center: int  # a
    edge: int  # t
    center: int  # b


def step_alexander_pd(s: PdSample) -> tuple[int, int, int]:
    """Return (up, dn, retimed).  UP asks for a later sampling instant."""
    a, t, b = s.prev_center, s.edge, s.center
    if a == b:
        return 0, 0, b
    if t == a:
        return 1, 0, b
    return 0, 1, b


@dataclass(frozen=True)
class FsmState:
    up_st: int = 0
    dn_st: int = 0
    enable: int = 0
    updn: int = 0  # 1: step to a later phase
    window_code: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.up_st and self.dn_st:
            raise ValueError("up_st and dn_st asserted together")


WINDOW_CODES = ((0, 0), (1, 0), (0, 1))


def step_control_fsm(state: FsmState, window_code, lock_ok: int = 0) -> FsmState:
    """Map the window code to a coarse request and a strong-pump command.

    ``lock_ok`` is accepted for interface compatibility; the request logic
    does not depend on it.
    """
    code = tuple(int(b) for b in window_code)
    if code not in WINDOW_CODES:
        raise ValueError(f"invalid window code {window_code!r}")
    if code == (1, 0):
        return FsmState(up_st=0, dn_st=1, enable=1, updn=1, window_code=code)
    if code == (0, 1):
        return FsmState(up_st=1, dn_st=0, enable=1, updn=0, window_code=code)
    return FsmState(window_code=code)


@dataclass(frozen=True)
class RingCounter:
    q: tuple[int, ...]

    @classmethod
    def one_hot(cls, n: int, index: int) -> "RingCounter":
        return cls(tuple(int(i == index % n) for i in range(n)))

    @classmethod
    def zeros(cls, n: int) -> "RingCounter":
        return cls((0,) * n)

    @property
    def index(self) -> int | None:
        hot = [i for i, b in enumerate(self.q) if b]
        if len(hot) > 1:
            raise OneHotError(f"ring counter has {len(hot)} bits set")
        return hot[0] if hot else None


class OneHotError(ValueError):
    pass


def step_ring_counter(rc: RingCounter, enable: int, updn: int) -> RingCounter:
    if not enable:
        return rc
    q = rc.q
    if updn:
        return RingCounter(q[-1:] + q[:-1])
    return RingCounter(q[1:] + q[:1])


def select_phase(rc: RingCounter, phases: Sequence[float]) -> float | None:
    if len(phases) != len(rc.q):
        raise ValueError("phase list and ring counter lengths differ")
    idx = rc.index
    return None if idx is None else phases[idx]


LOCK_MAX = 7


@dataclass(frozen=True)
class LockCounter:
    count: int = 0

    def __post_init__(self):
        if not 0 <= self.count <= LOCK_MAX:
            raise ValueError("lock counter is 3 bits")


def step_lock_detector(lc: LockCounter, coarse_request: int) -> LockCounter:
    return LockCounter(min(lc.count + (1 if coarse_request else 0), LOCK_MAX))


# ---------------------------------------------------------------------------
# scan chains


class ScanError(RuntimeError):
    pass


Crossing = Callable[[int], int]


@dataclass(frozen=True)
class ScanChain:
    """Ordered scan cells; index 0 is nearest scan-in, the last cell drives scan-out.

    ``stuck`` forces a cell value, ``frozen`` cells do not clock (their
    contents hold and they pass their own value on), and ``crossings[i]``
    transforms the bit travelling from cell i to cell i+1.
    """

    names: tuple[str, ...]
    values: tuple[int, ...] = None
    mode: str = "shift"
    stuck: dict = field(default_factory=dict)
    frozen: frozenset = frozenset()
    crossings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values is None:
            object.__setattr__(self, "values", (0,) * len(self.names))
        if len(self.values) != len(self.names):
            raise ValueError("values and names lengths differ")
        if self.mode not in ("shift", "capture", "functional"):
            raise ValueError(f"bad scan mode {self.mode!r}")
        object.__setattr__(self, "values", tuple(self._force(i, v) for i, v in enumerate(self.values)))

    def __len__(self):
        return len(self.names)

    def _force(self, i, v):
        return int(self.stuck[i]) if i in self.stuck else int(v)

    def value(self, name: str) -> int:
        return self.values[self.names.index(name)]

    def with_mode(self, mode: str) -> "ScanChain":
        return replace(self, mode=mode)


def scan_shift(chain: ScanChain, in_bits: Sequence[int]) -> tuple[ScanChain, list[int]]:
    if chain.mode == "functional":
        raise ScanError("shift attempted in functional mode")
    vals = list(chain.values)
    n = len(vals)
    out = []
    for b in in_bits:
        out.append(vals[-1] if n else int(b))
        new = vals[:]
        for i in range(n):
            if i in chain.frozen:
                continue
            src = int(b) if i == 0 else vals[i - 1]
            if i > 0 and (i - 1) in chain.crossings:
                src = chain.crossings[i - 1](src)
            new[i] = chain._force(i, src)
        vals = new
    return replace(chain, values=tuple(vals), mode="shift"), out


def scan_capture(chain: ScanChain, functional_values: Sequence[int]) -> ScanChain:
    if len(functional_values) != len(chain):
        raise ValueError(f"capture of {len(functional_values)} values into a {len(chain)}-cell chain")
    vals = tuple(chain.values[i] if i in chain.frozen else int(v) for i, v in enumerate(functional_values))
    return replace(chain, values=vals, mode="shift")


def scan_load(chain: ScanChain, pattern: Sequence[int]) -> tuple[ScanChain, list[int]]:
    """Shift a full-length pattern in so that ``pattern[i]`` lands in cell i."""
    if len(pattern) != len(chain):
        raise ValueError("pattern length differs from chain length")
    return scan_shift(chain, list(reversed(pattern)))


def scan_unload(chain: ScanChain, fill: int = 0) -> tuple[ScanChain, list[int]]:
    """Shift the chain out; the returned list is in cell order (index 0 first)."""
    chain, out = scan_shift(chain, [fill] * len(chain))
    return chain, list(reversed(out))
