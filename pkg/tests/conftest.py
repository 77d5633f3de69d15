import numpy as np
import pytest

from src.invariant.measure import PointCloudMeasure
from src.model.laws import ConstantB, LognormalLaw, TwoPointLaw
from src.model.mu_spec import MuSpec
from src.model.random_stream import RandomStream


@pytest.fixture
def lognormal_spec() -> MuSpec:
    return MuSpec(a_law=LognormalLaw(s=1.0), b_law=ConstantB(value=[1.0]))


@pytest.fixture
def two_point_spec() -> MuSpec:
    return MuSpec(a_law=TwoPointLaw(p_span=1.0), b_law=ConstantB(value=[1.0]))


@pytest.fixture
def stream() -> RandomStream:
    return RandomStream(1)


def make_cloud(points, weights=None, cluster_ids=None) -> PointCloudMeasure:
    """Cloud with one excursion per point unless ids are given."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if weights is None:
        weights = np.ones(n)
    if cluster_ids is None:
        cluster_ids = np.arange(n)
    cluster_ids = np.asarray(cluster_ids)
    return PointCloudMeasure(
        points=points,
        weights=np.asarray(weights, dtype=float),
        cluster_ids=cluster_ids,
        n_clusters=int(cluster_ids.max()) + 1 if n else 0,
    )


@pytest.fixture
def log_uniform_cloud() -> PointCloudMeasure:
    """Points with log|u| spread evenly over [0, 10] and mass 1/2 per unit of log|u|."""
    edges = np.linspace(0.0, 10.0, 20001)
    mids = 0.5 * (edges[:-1] + edges[1:])
    dt = edges[1] - edges[0]
    return make_cloud(np.exp(mids)[:, None], weights=np.full(mids.size, 0.5 * dt))
