import numpy as np
import pytest

from aicp.graph import Dag
from aicp.scm import LinearScm


@pytest.fixture
def dag_collider():
    """X0 -> Y, X1 -> Y, Y -> X3, X4 -> X3 with Y at index 2."""
    return Dag(5, {(0, 2), (1, 2), (2, 3), (4, 3)}, 2)


@pytest.fixture
def dag_chain():
    """X0, X1 -> X2 -> X3 -> Y and X0, X1 -> Y with Y at index 4."""
    return Dag(5, {(0, 2), (0, 4), (1, 2), (1, 4), (2, 3), (3, 4)}, 4)


def unit_scm(dag, variances=None, intercepts=None, weights=None):
    n = dag.num_nodes
    W = dag.adjacency().astype(float)
    if weights is not None:
        for (i, j), w in weights.items():
            W[i, j] = w
    v = np.ones(n) if variances is None else np.asarray(variances, float)
    c = np.zeros(n) if intercepts is None else np.asarray(intercepts, float)
    return LinearScm(dag, W, c, np.zeros(n), v)


@pytest.fixture
def scm_triangle():
    """Triangle X0 -> X1, X0 -> X2, X1 -> X2 with Y = X1, unit weights.

    sigma_0^2 = 2 so that the conditional moments do not depend on it by accident.
    """
    dag = Dag(3, {(0, 1), (0, 2), (1, 2)}, 1)
    return unit_scm(dag, variances=[2.0, 1.0, 1.0])


@pytest.fixture
def scm_collider(dag_collider):
    w = {(0, 2): 0.8, (1, 2): 0.7, (2, 3): 0.9, (4, 3): 0.6}
    return unit_scm(dag_collider, weights=w)


@pytest.fixture
def scm_chain(dag_chain):
    w = {(0, 2): 0.9, (0, 4): 0.7, (1, 2): 0.6, (1, 4): 0.8, (2, 3): 0.75, (3, 4): 0.65}
    return unit_scm(dag_chain, weights=w)
