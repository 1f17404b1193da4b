import numpy as np
import pytest

from apmtrack.config import PipelineConfig
from apmtrack.fixtures import gen_fixtures, load_sequence


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    return gen_fixtures(7, tmp_path_factory.mktemp("seq7"))


@pytest.fixture(scope="session")
def sequence(fixture_dir):
    return load_sequence(fixture_dir)


@pytest.fixture(scope="session")
def small_cfg():
    """Reduced widths/depths for fast pipeline tests; region sizes stay at the defaults."""
    return PipelineConfig(dim=32, fuse_dim=4, backbone_depth=1, backbone_heads=2)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
