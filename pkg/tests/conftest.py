import pytest

from tiltcav.dynamics import simulate


@pytest.fixture(scope="session")
def run():
    """Memoised ``simulate`` so expensive trajectories are shared across tests."""
    cache = {}

    def _run(params, settings=None):
        key = (params, settings)
        if key not in cache:
            cache[key] = simulate(params, settings)
        return cache[key]

    return _run
