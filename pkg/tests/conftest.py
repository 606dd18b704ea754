import numpy as np
import pytest

from mmmesh.topology import Link, Node, Topology, compute_routes
from mmmesh.radio import LinkBudget, InterferenceMatrix


@pytest.fixture
def line3():
    """0 -> 1 -> 2 and back; 4 links total."""
    nodes = [Node(0, 0.0, 0.0), Node(1, 100.0, 0.0), Node(2, 200.0, 0.0)]
    links = [Link(0, 0, 1), Link(1, 1, 0), Link(2, 1, 2), Link(3, 2, 1)]
    return Topology(nodes, links, buffer_capacity=650)


@pytest.fixture
def line3_routes(line3):
    return compute_routes(line3)


def tiny_budget(E, p_r=1000.0, n0=120):
    """Uniform LinkBudget for hand-built interference scenarios."""
    p = np.full(E, float(p_r))
    return LinkBudget(p_r=p, c_max=np.log1p(p) / np.log(2.0) * 400e6,
                      n0=np.full(E, n0, dtype=np.int64), bandwidth=np.full(E, 400e6),
                      noise_db=np.zeros(E))


def no_interference(E):
    return InterferenceMatrix(matrix=np.zeros((E, E)), mode="synthetic", level=0.0)
