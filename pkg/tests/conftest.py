import numpy as np
import pytest

from popdiff.config import DEFAULTS, set_guard_limit


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: проверки полного масштаба (запуск: pytest -m slow)")


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture(autouse=True)
def default_guard():
    set_guard_limit(DEFAULTS["run"]["guard_limit"])
    yield
    set_guard_limit(DEFAULTS["run"]["guard_limit"])


@pytest.fixture
def sqlite_url(tmp_path):
    return f"sqlite:///{tmp_path / 'runs.db'}"
