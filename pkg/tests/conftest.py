import numpy as np
import pytest

from impulsedde import Discretization, PicardControl, get_entry, solve_mild


@pytest.fixture(scope="session")
def solve_cache():
    """Memoized catalog solves shared across test modules."""
    cache = {}

    def get(name, step=2e-3, iterate="constant", **params):
        key = (name, step, iterate, tuple(sorted(params.items())))
        if key not in cache:
            entry = get_entry(name)
            problem, lip = entry.instantiate(**params)
            traj, report = solve_mild(
                problem,
                Discretization(step=step),
                PicardControl(initial_iterate=iterate),
            )
            cache[key] = (problem, lip, traj, report)
        return cache[key]

    return get


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
