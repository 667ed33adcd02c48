import pytest

from lowswing.campaign import REPORT_HEADER
from lowswing.cli import dispatch

from conftest import run_cli


def test_simulate_writes_trace(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert dispatch(["simulate", "--duration", "2e-6", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "locked=true" in text
    assert out.read_text().startswith("time_s,vc_v,vp_v,phase_idx,lock_count,phase_err_ui\n")


def test_simulate_with_shipped_config(tmp_path):
    from pathlib import Path
    cfg = Path(__file__).parents[1] / "default.cfg"
    proc = run_cli("simulate", "--config", cfg, "--duration", "2e-6", "--out", tmp_path / "t.csv")
    assert proc.returncode == 0
    assert "locked=true" in proc.stdout


def test_test_command_masked_fault(capsys):
    assert dispatch(["test", "--fault", "weakcp.M3:drain-source-short"]) == 0
    assert capsys.readouterr().out.strip() == "dc: pass, scan: pass, bist: DETECTED"


def test_test_command_evidence(capsys):
    assert dispatch(["test", "--fault", "term.M1:drain-open", "--evidence"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("dc: pass, scan: DETECTED")
    assert "scan.sub2." in out


def test_faults_count(capsys):
    assert dispatch(["faults", "--count"]) == 0
    assert capsys.readouterr().out.strip() == "639 faults"


@pytest.mark.parametrize("argv, code", [
    ([], 1),
    (["simulate", "--bogus"], 1),
    (["simulate", "--initial-phase", "sideways"], 1),
    (["campaign", "--jobs", "0"], 1),
    (["simulate", "--rl", "-5"], 2),
    (["simulate", "--config", "/nonexistent.cfg"], 2),
    (["simulate", "--seed", "0"], 2),
    (["test", "--fault", "nope.M1:gate-open"], 3),
    (["test", "--fault", "ffe.C1:gate-open"], 3),
    (["faults", "--netlists", "/nonexistent.net"], 3),
    (["simulate", "--duration", "1e-10"], 4),
    (["report", "/nonexistent.csv"], 5),
])
def test_exit_codes(argv, code, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert dispatch(argv) == code


def test_seed_env_validated(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("LOWSWING_SEED", "500")
    assert dispatch(["simulate", "--duration", "2e-7"]) == 2


def test_report_malformed(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("not,a,report\n")
    assert dispatch(["report", str(p)]) == 5


def test_report_renders(tmp_path, capsys):
    p = tmp_path / "r.csv"
    p.write_text(",".join(REPORT_HEADER) + "\nffe.C1,capacitor-short,1,0,0,dc\n")
    s = tmp_path / "s.csv"
    assert dispatch(["report", str(p), "--summary-csv", str(s)]) == 0
    assert "Capacitor short" in capsys.readouterr().out
    assert "capacitor-short,1,1,100.0" in s.read_text()


def test_netlist_syntax_error_exit(tmp_path):
    p = tmp_path / "bad.net"
    p.write_text("M1 jfet weak-cp 1 1 x\n")
    assert dispatch(["faults", "--netlists", str(p)]) == 3


def test_console_entry_help():
    proc = run_cli("--help")
    assert proc.returncode == 0
    for cmd in ("simulate", "faults", "test", "campaign", "report"):
        assert cmd in proc.stdout
