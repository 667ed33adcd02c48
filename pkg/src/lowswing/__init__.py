"""Behavioral simulator and DFT engine for a repeaterless low-swing on-chip link."""

from lowswing.campaign import CoverageReport, FaultVerdict, run_campaign, summarize
from lowswing.config import ConfigError, LinkConfig, load_config
from lowswing.dft import TestOutcome, golden_reference, run_all, run_bist, run_dc_test, run_scan_test
from lowswing.faults import (Device, Fault, Netlist, enumerate_faults, load_netlists, mutation_for,
                             parse_netlist, reference_netlist)
from lowswing.linksim import LockReport, SimTrace, measure_lock, simulate
from lowswing.model import LinkModel

__all__ = [
    "ConfigError",
    "CoverageReport",
    "Device",
    "Fault",
    "FaultVerdict",
    "LinkConfig",
    "LinkModel",
    "LockReport",
    "Netlist",
    "SimTrace",
    "TestOutcome",
    "enumerate_faults",
    "golden_reference",
    "load_config",
    "load_netlists",
    "measure_lock",
    "mutation_for",
    "parse_netlist",
    "reference_netlist",
    "run_all",
    "run_bist",
    "run_campaign",
    "run_dc_test",
    "run_scan_test",
    "simulate",
    "summarize",
]

__version__ = "0.1.0"
