import sys

import numpy as np
import pytest

from rggspec import geometry


def random_cluster(side, alpha=4.0, seed=0, dim=2):
    cloud = geometry.sample_poisson(dim, side, alpha, seed)
    return geometry.extract_cluster(geometry.build_graph(cloud))


@pytest.fixture
def star_cluster():
    # interior centre with three boundary-layer leaves in a side-9 box
    pts = [(2.5, 4.5), (1.6, 4.5), (1.8, 4.0), (1.8, 5.0)]
    return geometry.cluster_from_points(pts, 9.0)


@pytest.fixture
def pair_cluster():
    # two adjacent interior vertices, each with one layer neighbour
    pts = [(2.55, 3.0), (3.45, 3.0), (1.7, 3.0), (4.3, 3.0)]
    return geometry.cluster_from_points(pts, 6.0)


@pytest.fixture(scope="session")
def small_cluster():
    """About 150 interior vertices; reused by many dense-oracle checks."""
    return random_cluster(10.0, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[n])
