import pytest

from ear3d.config import TrainConfig
from ear3d.dataset import make_dataset


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Five 32^3 phantoms split 3/1/1."""
    return make_dataset(tmp_path_factory.mktemp("tiny"), 5, split=(0.6, 0.2, 0.2), seed=3)


@pytest.fixture
def quick_cfg():
    def make(**overrides):
        base = dict(max_epochs=4, warmup_epochs=1, max_steps=4)
        base.update(overrides)
        return TrainConfig.for_profile("desk8", **base)

    return make


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
