import socket

import numpy as np
import pytest

from tagcbm.graphcore import TextAttributedGraph

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


class NetworkRefused(OSError):
    pass


def _refuse(*args, **kwargs):
    raise NetworkRefused("network access is disabled in the test suite")


@pytest.fixture(autouse=True, scope="session")
def no_network():
    """Every outbound connection attempt fails loudly for the whole session."""
    mp = pytest.MonkeyPatch()
    mp.setattr(socket.socket, "connect", _refuse)
    mp.setattr(socket.socket, "connect_ex", _refuse)
    mp.setattr(socket, "create_connection", _refuse)
    mp.setattr(socket, "getaddrinfo", _refuse)
    yield
    mp.undo()


def record_acceptance(criterion: str, ok: bool, detail: str) -> None:
    """Sub-checks of one criterion merge into a single line; any failure fails the line."""
    prev_ok, prev_detail = ACCEPTANCE.get(criterion, (True, ""))
    ACCEPTANCE[criterion] = (prev_ok and bool(ok), f"{prev_detail}; {detail}" if prev_detail else detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=int):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_graph(rng: np.random.Generator, n: int, p: float, labels: int = 0) -> TextAttributedGraph:
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
    ys = rng.integers(0, labels, n).tolist() if labels else None
    names = [f"c{i}" for i in range(labels)]
    return TextAttributedGraph.build([f"t{i}" for i in range(n)], edges, ys, names)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
