import time
from types import SimpleNamespace

import numpy as np
import pytest

from lipforge import Domain, LinearMap, TargetSet, run_game


@pytest.fixture(scope="session")
def acceptance_run():
    """The standard 8-round run shared by the acceptance criteria:
    unit box, 0.05-grid targets, opposite horizontal operators, stay adversary.
    """
    domain = Domain.box([0.0, 0.0], [1.0, 1.0])
    target = TargetSet.grid([0.0, 0.0], [1.0, 1.0], 0.05)
    operators = (
        LinearMap(np.array([[0.5, 0.0]])),
        LinearMap(np.array([[-0.5, 0.0]])),
    )
    t0 = time.perf_counter()
    transcript = run_game(domain, target, operators, "stay", rounds=8, seed=0)
    construct_seconds = time.perf_counter() - t0
    return SimpleNamespace(
        domain=domain,
        target=target,
        operators=operators,
        transcript=transcript,
        construct_seconds=construct_seconds,
    )
