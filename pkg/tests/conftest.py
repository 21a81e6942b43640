import pytest

from platoonfog import default_config


@pytest.fixture(scope="session")
def table2():
    """Baseline parameter set used throughout the experiments."""
    return default_config()


@pytest.fixture(scope="session")
def tiny():
    """Smallest non-trivial system: one platoon vehicle, one RU, fleet of one."""
    return default_config(n_platoon=1, f_platoon=(600.0,), n_r=1, k_max=1)
