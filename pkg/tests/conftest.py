import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from hetrecip.model import EventLog

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_log(rng, n, n_seed=2, p=(0.4, 0.3, 0.3), p_rec=0.4, self_loops=True):
    """A valid event log with uniformly chosen endpoints (no attachment rule)."""
    seed_in = np.zeros(n_seed, dtype=int)
    seed_out = np.zeros(n_seed, dtype=int)
    if n_seed >= 2:
        seed_out[0] = seed_in[1] = 1
    V = n_seed
    rows = []
    for _ in range(n):
        J = int(rng.choice(3, p=p)) + 1
        if J == 1:
            s, t = V + 1, int(rng.integers(1, V + 1))
            V += 1
        elif J == 3:
            s, t = int(rng.integers(1, V + 1)), V + 1
            V += 1
        else:
            s, t = (int(x) for x in rng.integers(1, V + 1, size=2))
            if s == t and not self_loops:
                t = s % V + 1
        R = 0 if s == t else int(rng.random() < p_rec)
        rows.append((J, s, t, R))
    arr = np.array(rows, dtype=int).reshape(-1, 4)
    return EventLog(seed_in, seed_out, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


@st.composite
def event_logs(draw, max_events=30):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(0, max_events))
    n_seed = draw(st.integers(1, 3))
    return random_log(np.random.default_rng(seed), n, n_seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ----------------------------------------------------------

ACCEPTANCE: dict = {}


def record_criterion(number, title, ok, detail=""):
    """Remember a pass/fail line for the end-of-session summary."""
    ACCEPTANCE[number] = (title, bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE, key=lambda k: (int(str(k).rstrip("abc")), str(k))):
        title, ok, detail = ACCEPTANCE[n]
        tr.write_line(f"criterion {n:>3} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
