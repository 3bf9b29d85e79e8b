import numpy as np
import pytest

from pwxgb.net import PartyTopology, connect
from pwxgb.secure_ops import SecureContext
from pwxgb.sharing import ZeroSharer

SERVERS = (100, 101, 102)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mesh():
    with connect(PartyTopology(0, (1,), SERVERS)) as m:
        yield m


@pytest.fixture
def ctx(mesh):
    return SecureContext(mesh, ZeroSharer.from_seed(7))


def share_in(ctx, values, rng, boolean=False):
    """Share plaintext words from the active party (id 0)."""
    return ctx.input(0, values, rng, boolean=boolean)


def open_(ctx, x):
    return ctx.reveal_to(0, x)


ACCEPTANCE: list[str] = []


@pytest.fixture
def accept(capsys):
    """Record one pass/fail line for an acceptance criterion."""

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
