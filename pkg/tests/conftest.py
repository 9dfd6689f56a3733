import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def g():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_corpus():
    from occupancy.synth import build_corpus

    return build_corpus(4, 3, 2.0, master_seed=11)


@pytest.fixture(scope="session")
def party_corpus():
    """The default party-mode speech pool (16 speakers x 2 x 120 s, seed 0)."""
    from occupancy.config import RunConfig
    from occupancy.synth import build_corpus

    p = RunConfig().party
    return build_corpus(p.pool_speakers, p.pool_utterances, p.pool_duration, master_seed=0)


@pytest.fixture(scope="session")
def party_setup(party_corpus):
    from occupancy.crowd import SimulationSetup, SpeechPool
    from occupancy.room import RoomSpec
    from occupancy.seeds import child_seed

    return SimulationSetup(RoomSpec(), SpeechPool(party_corpus), layout_seed=child_seed(0, "layout"))


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    def record(label: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
