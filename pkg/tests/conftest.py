import random

import pytest
from hypothesis import strategies as st

from sightsteeple.crypto import AUDIT, generate_player_keys
from sightsteeple.views import Payload, Transaction, default_family

ACCOUNTS = ["alice", "bob", "carol", "dave"]


@st.composite
def payloads(draw, max_size=8):
    k = draw(st.integers(0, max_size))
    txs, used = [], set()
    for _ in range(k):
        s = draw(st.sampled_from(ACCOUNTS))
        r = draw(st.sampled_from(ACCOUNTS))
        nonce = draw(st.integers(0, 50))
        if (s, nonce) in used:
            continue
        used.add((s, nonce))
        txs.append(Transaction(s, r, draw(st.integers(0, 1000)), nonce))
    return Payload(tuple(txs))


def random_payload(rng: random.Random, max_size=8) -> Payload:
    txs, used = [], set()
    for _ in range(rng.randint(0, max_size)):
        s, r = rng.choice(ACCOUNTS), rng.choice(ACCOUNTS)
        nonce = rng.randint(0, 50)
        if (s, nonce) in used:
            continue
        used.add((s, nonce))
        txs.append(Transaction(s, r, rng.randint(0, 1000), nonce))
    return Payload(tuple(txs))


@pytest.fixture
def family():
    return default_family()


@pytest.fixture
def family_d():
    return default_family(with_decrement=True)


@pytest.fixture
def keys():
    rng = random.Random(1)
    return [generate_player_keys(i, rng) for i in range(8)]


@pytest.fixture(autouse=True)
def _audit():
    AUDIT.reset()
    yield


# -- acceptance summary ------------------------------------------------------------------

ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    num = marker.args[0]
    status = "PASS" if rep.passed else "FAIL"
    prev = ACCEPTANCE.get(num)
    if prev is None or prev[0] == "PASS":
        ACCEPTANCE[num] = (status, marker.args[1])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        status, title = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:>2}: {status}  {title}")
