import sys
import textwrap

import pytest

from hmcalib.simulator import EXTERNAL, InputBounds, SimulatorSpec, TimeGrid

MOCK = textwrap.dedent('''
    import os, sys, time
    mode, L = sys.argv[1], int(sys.argv[2])
    extra = sys.argv[3] if len(sys.argv) > 3 else ""
    line = sys.stdin.readline()
    if mode == "record":
        with open(extra, "a") as fh:
            fh.write(line)
    if mode == "failafter":
        with open(extra, "a+") as fh:
            fh.write("x\\n")
            fh.seek(0)
            calls = len(fh.readlines())
        if calls > 3:
            sys.exit(1)
    if mode == "runid":
        with open(extra, "a") as fh:
            fh.write(os.environ.get("HM_RUN_ID", "") + "\\n")
    x = [float(v) for v in line.strip().split(",")]
    if mode == "identity":
        out = x
    elif mode == "sum":
        out = [sum(x) * (i + 1) for i in range(L)]
    elif mode == "constant":
        out = [float(extra)] * L
    elif mode == "fail":
        sys.stderr.write("mock failure\\n")
        sys.exit(3)
    elif mode == "slow":
        time.sleep(float(extra))
        out = [0.0] * L
    elif mode == "short":
        out = [0.0] * (L - 1)
    elif mode == "garbage":
        print("not-a-number")
        out = [0.0] * (L - 1)
    elif mode == "nan":
        out = ["nan"] * L
    else:
        out = [0.0] * L
    for v in out:
        print(repr(v) if isinstance(v, float) else v)
''')


@pytest.fixture(scope="session")
def mock_script(tmp_path_factory):
    path = tmp_path_factory.mktemp("mock") / "mock_sim.py"
    path.write_text(MOCK)
    return str(path)


@pytest.fixture
def external(mock_script):
    """Factory for external specs driven by the mock script."""

    def make(mode, L=5, extra="", d=2, lower=None, upper=None, **kw):
        grid = TimeGrid(tuple(float(i) for i in range(1, L + 1)))
        bounds = InputBounds(lower or (0.0,) * d, upper or (1.0,) * d)
        args = (mock_script, mode, str(L)) + ((str(extra),) if extra != "" else ())
        return SimulatorSpec(EXTERNAL, d, grid, bounds, exec_path=sys.executable, args=args, **kw)

    return make


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get("acceptance_lines", None) if hasattr(config, "stash") else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
