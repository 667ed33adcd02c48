"""Fault campaign: every fault through all three stages, aggregated per class and stage."""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .config import LinkConfig
from .dft import STAGES, golden_reference, run_bist, run_dc_test, run_scan_test
from .faults import DEFECT_CLASSES, Fault, Netlist, enumerate_faults
from .model import LinkModel

REPORT_HEADER = ("device_id", "defect", "dc", "scan", "bist", "first_stage")
SUMMARY_HEADER = ("defect", "total", "detected", "percent")

DENOMINATOR_NOTE = "denominator: analog structural faults only (digital stuck-at faults excluded)"

# Test-only circuitry of the model, counted by hand from dft.py and the netlists.
DFT_OVERHEAD = (
    ("test flip-flops", 7, "FFE probe (2), termination capture (2), control-window capture (2), retime extra (1)"),
    ("DC comparators", 4, "termination offset comparators (2), CP-BIST window (2)"),
    ("100 MHz comparators", 2, "receiver window comparator"),
    ("latch", 1, "transmitter half-cycle delay"),
    ("multiplexers", 2, "control-window input select, retime clock select"),
    ("3-bit saturating counter", 1, "lock detector"),
    ("control inputs", 2, "S_en (scan enable), T_en (test enable)"),
    ("logic gates", 6, "scan gating of PD, charge pump and FSM"),
)


class CampaignError(RuntimeError):
    def __init__(self, fault: Fault, cause: BaseException):
        super().__init__(f"simulation failed for {fault}: {cause}")
        self.fault = fault


@dataclass(frozen=True)
class FaultVerdict:
    fault: Fault
    detected_by: frozenset = frozenset()
    evidence: tuple = ()

    @property
    def first_stage(self) -> str | None:
        for s in STAGES:
            if s in self.detected_by:
                return s
        return None


@dataclass
class CoverageReport:
    verdicts: list[FaultVerdict] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.verdicts)

    @property
    def per_class(self) -> dict[str, tuple[int, int, float]]:
        out = {}
        for cls in DEFECT_CLASSES:
            vs = [v for v in self.verdicts if v.fault.defect == cls]
            det = sum(1 for v in vs if v.detected_by)
            out[cls] = (len(vs), det, _pct(det, len(vs)))
        return out

    def detected_set(self, stage: str) -> set[Fault]:
        return {v.fault for v in self.verdicts if stage in v.detected_by}

    @property
    def per_stage_cumulative(self) -> dict[str, float]:
        out = {}
        seen: set = set()
        for i, s in enumerate(STAGES):
            seen |= self.detected_set(s)
            out["+".join(STAGES[: i + 1])] = _pct(len(seen), self.total)
        return out

    @property
    def overall(self) -> float:
        return _pct(sum(1 for v in self.verdicts if v.detected_by), self.total)


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den else 0.0


def evaluate_fault(cfg: LinkConfig, netlist: Netlist, fault: Fault, seed: int | None) -> FaultVerdict:
    golden = golden_reference(cfg)
    try:
        model = LinkModel.build(cfg, [fault], netlist)
        outcomes = (run_dc_test(model, golden), run_scan_test(model, golden), run_bist(model, golden, seed))
    except Exception as exc:  # report which fault broke the run
        raise CampaignError(fault, exc) from exc
    return FaultVerdict(
        fault,
        frozenset(o.stage for o in outcomes if o.detected),
        tuple(o.evidence for o in outcomes),
    )


def _worker(args):
    cfg, netlist, fault, seed = args
    return evaluate_fault(cfg, netlist, fault, seed)


def run_campaign(cfg: LinkConfig, netlist: Netlist, seed: int | None = None, jobs: int = 1,
                 faults: Sequence[Fault] | None = None, progress=None) -> CoverageReport:
    """Run DC, scan and BIST on every fault (single-fault assumption)."""
    faults = list(enumerate_faults(netlist) if faults is None else faults)
    golden_reference(cfg)
    tasks = [(cfg, netlist, f, seed) for f in faults]
    verdicts: list[FaultVerdict] = []
    if jobs <= 1 or len(tasks) < 2:
        for t in tasks:
            verdicts.append(_worker(t))
            if progress:
                progress(len(verdicts), len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for v in ex.map(_worker, tasks, chunksize=max(1, len(tasks) // (jobs * 8))):
                verdicts.append(v)
                if progress:
                    progress(len(verdicts), len(tasks))
    return CoverageReport(verdicts)


def default_jobs() -> int:
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# output


def report_csv(report: CoverageReport) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(REPORT_HEADER)
    for v in report.verdicts:
        wr.writerow([v.fault.device_id, v.fault.defect,
                     *(int(s in v.detected_by) for s in STAGES), v.first_stage or ""])
    return buf.getvalue()


def parse_report_csv(text: str) -> CoverageReport:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != REPORT_HEADER:
        raise ValueError(f"report CSV must start with header {','.join(REPORT_HEADER)}")
    verdicts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(REPORT_HEADER):
            raise ValueError(f"line {lineno}: expected {len(REPORT_HEADER)} fields")
        dev, defect, *flags, first = row
        fault = Fault(dev, defect)
        if defect not in DEFECT_CLASSES:
            raise ValueError(f"line {lineno}: unknown defect {defect!r}")
        det = frozenset(s for s, f in zip(STAGES, flags) if f.strip() == "1")
        v = FaultVerdict(fault, det)
        if (v.first_stage or "") != first:
            raise ValueError(f"line {lineno}: first_stage {first!r} inconsistent with flags")
        verdicts.append(v)
    return CoverageReport(verdicts)


def summary_csv(report: CoverageReport) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(SUMMARY_HEADER)
    for cls, (tot, det, pct) in report.per_class.items():
        wr.writerow([cls, tot, det, f"{pct:.1f}"])
    wr.writerow(["total", report.total, sum(1 for v in report.verdicts if v.detected_by), f"{report.overall:.1f}"])
    return buf.getvalue()


_CLASS_LABELS = {
    "gate-open": "Gate open",
    "drain-open": "Drain open",
    "source-open": "Source open",
    "gate-drain-short": "Gate drain short",
    "gate-source-short": "Gate source short",
    "drain-source-short": "Drain source short",
    "capacitor-short": "Capacitor short",
}


def summarize(report: CoverageReport) -> str:
    """Coverage table per defect class, cumulative stage coverage and the DFT overhead."""
    lines = [f"# {DENOMINATOR_NOTE}", "", f"{'Fault type':<20} {'Total':>6} {'Detected':>9} {'Coverage':>9}"]
    for cls, (tot, det, pct) in report.per_class.items():
        lines.append(f"{_CLASS_LABELS[cls]:<20} {tot:>6} {det:>9} {pct:>8.1f}%")
    n_det = sum(1 for v in report.verdicts if v.detected_by)
    lines.append(f"{'Total':<20} {report.total:>6} {n_det:>9} {report.overall:>8.1f}%")
    lines += ["", "Cumulative coverage by stage"]
    for name, pct in report.per_stage_cumulative.items():
        lines.append(f"  {name:<14} {pct:6.1f}%")
    scan, bist = report.detected_set("scan"), report.detected_set("bist")
    lines.append(f"  scan-only vs bist: {len(scan - bist)} faults seen by scan alone, "
                 f"{len(bist - scan)} by BIST alone, {len(scan & bist)} by both")
    lines += ["", "DFT overhead"]
    for item, count, note in DFT_OVERHEAD:
        lines.append(f"  {count:>2} x {item:<26} {note}")
    return "\n".join(lines) + "\n"


def verdict_line(outcomes: Iterable) -> str:
    return ", ".join(f"{o.stage}: {o.verdict()}" for o in outcomes)
