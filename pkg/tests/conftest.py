from pathlib import Path

import numpy as np
import pytest

from aois.model import serialize_evidence, serialize_network


def write_inputs(directory: Path, net, ev, stem: str = "net") -> tuple[Path, Path]:
    net_path = directory / f"{stem}.uai"
    ev_path = directory / f"{stem}.evid"
    net_path.write_text(serialize_network(net))
    ev_path.write_text(serialize_evidence(ev))
    return net_path, ev_path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one pass/fail line for an acceptance criterion; returns the verdict."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def _report(criterion: int, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
        lines.append((criterion, line))
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
