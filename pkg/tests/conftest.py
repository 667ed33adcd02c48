import pytest

from lowswing.config import LinkConfig
from lowswing.faults import reference_netlist


@pytest.fixture(scope="session")
def cfg():
    return LinkConfig()


@pytest.fixture(scope="session")
def netlist():
    return reference_netlist()


def run_cli(*args, cwd=None, env=None):
    import os
    import subprocess
    import sys
    full_env = dict(os.environ, **(env or {}))
    return subprocess.run([sys.executable, "-m", "lowswing", *map(str, args)], capture_output=True,
                          text=True, cwd=cwd, env=full_env)


@pytest.fixture(scope="session")
def cli_campaigns(tmp_path_factory):
    """Full campaign through the CLI with one worker and with eight; (dirs, seconds) per job count."""
    import time
    out = {}
    for jobs in (1, 8):
        d = tmp_path_factory.mktemp(f"campaign_j{jobs}")
        t0 = time.perf_counter()
        proc = run_cli("campaign", "--jobs", jobs, "--quiet", "--out", d)
        elapsed = time.perf_counter() - t0
        assert proc.returncode == 0, proc.stderr
        out[jobs] = (d, elapsed)
    return out
