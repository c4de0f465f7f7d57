import numpy as np
import pytest

from topogate.diagram import Diagram


def alive_counts(diag: Diagram, tau: float) -> tuple[int, int]:
    """Number of H0/H1 pairs alive at tau under the half-open convention."""
    deaths = np.where(diag.essential, np.inf, diag.deaths)
    alive = (diag.births <= tau) & (tau < deaths)
    return int(np.sum(alive & (diag.dims == 0))), int(np.sum(alive & (diag.dims == 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
