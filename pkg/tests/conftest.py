import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import kwcflow as kw


@pytest.fixture(scope="session")
def canonical_run():
    """The 2D 32x32 jump run shared by the dissipation/audit criteria."""
    m = kw.canonical(0.5)
    grid = kw.Grid((32, 32), 1.0 / 32.0)
    eta0, theta0 = kw.make_initial(grid, {"preset": "jump"})
    config = kw.RunConfig(
        grid=grid,
        model=m,
        regularizer=kw.Regularizer("hyperbola", 0.05),
        h=0.05,
        steps=200,
        eta0=eta0,
        theta0=theta0,
    )
    start = time.perf_counter()
    trajectory = kw.run(config)
    elapsed = time.perf_counter() - start
    assert trajectory.completed, trajectory.failure
    return m, config, trajectory, elapsed
