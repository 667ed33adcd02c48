"""Command-line front end.

Exit codes: 0 ok, 1 usage, 2 config error, 3 netlist or fault error,
4 simulation error, 5 unreadable or malformed report CSV.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .campaign import (CampaignError, default_jobs, parse_report_csv, report_csv, run_campaign,
                       summarize, summary_csv, verdict_line)
from .config import ConfigError, LinkConfig, load_config
from .dft import golden_reference, run_bist, run_dc_test, run_scan_test
from .faults import Fault, FaultError, NetlistError, enumerate_faults, load_netlists, reference_netlist
from .linksim import SimulationError, measure_lock, simulate
from .model import LinkModel

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NETLIST, EXIT_SIM, EXIT_REPORT = 0, 1, 2, 3, 4, 5
SEED_ENV = "LOWSWING_SEED"


class UsageError(Exception):
    pass


class ReportError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _config_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("link configuration (override --config values)")
    g.add_argument("--config", type=Path, help="flat key = value config file")
    for f in dataclasses.fields(LinkConfig):
        g.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", metavar="V",
                       default=None)
    return p


def _netlist_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--netlists", nargs="+", type=Path, metavar="PATH",
                   help="netlist files or directories (default: shipped reference netlists)")
    return p


def _seed_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                   help=f"PRBS seed (1..127); falls back to ${SEED_ENV}, then the config")
    return p


def build_parser() -> argparse.ArgumentParser:
    cfgp, netp, seedp = _config_parent(), _netlist_parent(), _seed_parent()
    parser = _Parser(prog="lowswing", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[cfgp, netp, seedp], help="one link run; trace CSV + lock report")
    s.add_argument("--duration", type=float, default=2e-6)
    s.add_argument("--initial-phase", default="reset",
                   help="reset, worst, optimal or a phase index")
    s.add_argument("--fault", action="append", default=[], metavar="DEV:DEFECT",
                   help="inject a fault (repeatable)")
    s.add_argument("--out", type=Path, default=Path("trace.csv"), help="trace CSV path")

    f = sub.add_parser("faults", parents=[netp], help="list the fault universe")
    f.add_argument("--count", action="store_true", help="print only the total")

    t = sub.add_parser("test", parents=[cfgp, netp, seedp], help="run DC, scan and BIST on one fault")
    t.add_argument("--fault", required=True, metavar="DEV:DEFECT")
    t.add_argument("--evidence", action="store_true", help="also print the diverging observation")

    c = sub.add_parser("campaign", parents=[cfgp, netp, seedp], help="full fault campaign")
    c.add_argument("--jobs", type=int, default=1, help=f"worker processes (this host: {default_jobs()})")
    c.add_argument("--out", type=Path, default=Path("campaign"), help="output directory")
    c.add_argument("--quiet", action="store_true")

    r = sub.add_parser("report", help="render tables from a report CSV")
    r.add_argument("report", type=Path)
    r.add_argument("--summary-csv", type=Path, help="also write the per-class summary CSV")
    return parser


def _config(args) -> LinkConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    return load_config(args.config, overrides)


def _netlist(args):
    return load_netlists(args.netlists) if args.netlists else reference_netlist()


def _seed(args) -> int | None:
    if args.seed is not None:
        seed = args.seed
    elif os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV], 0)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    else:
        return None
    if not 1 <= seed <= 127:
        raise ConfigError("seed must be in 1..127")
    return seed


def _faults(specs, netlist) -> list[Fault]:
    faults = [Fault.parse(s) for s in specs]
    for f in faults:
        if f.defect not in netlist.device(f.device_id).defects():
            raise FaultError(f"{f.defect} is not a legal defect for {f.device_id}")
    return faults


def cmd_simulate(args) -> int:
    cfg, netlist = _config(args), _netlist(args)
    faults = _faults(args.fault, netlist)
    phase = args.initial_phase
    if phase not in ("reset", "worst", "optimal"):
        try:
            phase = int(phase)
        except ValueError:
            raise UsageError(f"bad --initial-phase {phase!r}") from None
    seed = _seed(args)
    try:
        trace = simulate(cfg, faults, args.duration, seed, netlist=netlist, initial_phase=phase)
    except ValueError as exc:
        raise SimulationError(str(exc)) from exc
    rep = measure_lock(trace, cfg)
    _write(args.out, trace.to_csv())
    print(rep.summary())
    print(f"trace: {args.out}")
    return EXIT_OK


def cmd_faults(args) -> int:
    faults = enumerate_faults(_netlist(args))
    if not args.count:
        for f in faults:
            print(f)
    print(f"{len(faults)} faults")
    return EXIT_OK


def cmd_test(args) -> int:
    cfg, netlist = _config(args), _netlist(args)
    (fault,) = _faults([args.fault], netlist)
    golden = golden_reference(cfg)
    model = LinkModel.build(cfg, [fault], netlist)
    outcomes = (run_dc_test(model, golden), run_scan_test(model, golden), run_bist(model, golden, _seed(args)))
    print(verdict_line(outcomes))
    if args.evidence:
        for o in outcomes:
            if o.detected:
                print(f"  {o.stage}: {o.evidence}")
    return EXIT_OK


def cmd_campaign(args) -> int:
    cfg, netlist = _config(args), _netlist(args)
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")

    def progress(done, total):
        if not args.quiet and (done == total or done % 50 == 0):
            print(f"  {done}/{total} faults", file=sys.stderr)

    report = run_campaign(cfg, netlist, _seed(args), args.jobs, progress=progress)
    args.out.mkdir(parents=True, exist_ok=True)
    _write(args.out / "report.csv", report_csv(report))
    _write(args.out / "summary.csv", summary_csv(report))
    text = summarize(report)
    _write(args.out / "summary.txt", text)
    print(text, end="")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        text = args.report.read_text(encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot read {args.report}: {exc.strerror}") from None
    try:
        report = parse_report_csv(text)
    except (ValueError, FaultError) as exc:
        raise ReportError(f"{args.report}: {exc}") from None
    print(summarize(report), end="")
    if args.summary_csv:
        _write(args.summary_csv, summary_csv(report))
    return EXIT_OK


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


COMMANDS = {"simulate": cmd_simulate, "faults": cmd_faults, "test": cmd_test,
            "campaign": cmd_campaign, "report": cmd_report}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lowswing: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"lowswing: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NetlistError, FaultError) as exc:
        print(f"lowswing: netlist error: {exc}", file=sys.stderr)
        return EXIT_NETLIST
    except (SimulationError, CampaignError) as exc:
        print(f"lowswing: simulation error: {exc}", file=sys.stderr)
        return EXIT_SIM
    except ReportError as exc:
        print(f"lowswing: report error: {exc}", file=sys.stderr)
        return EXIT_REPORT


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
