import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridrestore.network import load_network, load_scenario  # noqa: E402

DATA = Path(str(resources.files("gridrestore") / "data"))


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


def fixture_pair(name: str):
    net = load_network(DATA / f"{name}_grid.json")
    return net, load_scenario(DATA / f"{name}_fault.json", net)


@pytest.fixture
def toy(request):
    return fixture_pair(request.param)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", "") == "call" and "test_acceptance" in rep.nodeid:
                lines += [s for s in rep.capstdout.splitlines() if s.startswith("criterion")]
    if lines:
        terminalreporter.section("acceptance criteria")
        for s in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(s)
