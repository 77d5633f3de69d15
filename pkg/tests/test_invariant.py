import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from src.invariant.cloud_io import export_csv, read_cloud, sidecar_path, write_cloud
from src.invariant.measure import (
    CloudMeta,
    PointCloudMeasure,
    bootstrap_ci,
    cluster_bootstrap,
    cluster_stderr,
    estimate_values,
    integrate,
    ratio_estimate,
)
from src.invariant.sampler import (
    backward_series,
    estimate_nu,
    forward_chain,
    invariance_gap,
    sample_nu_L,
    split_sample_gap,
    stationarity_ks,
)
from src.model.random_stream import NU_L, STATIONARITY, RandomStream
from src.utils.errors import ConfigError
from src.walk.excursion import LadderPair
from tests.conftest import make_cloud


def bump(u: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.exp(-np.abs(np.log(np.linalg.norm(u, axis=1))))


def test_cluster_stderr_edge_cases():
    assert cluster_stderr(np.array([2.0, 2.0, 2.0])) == 0.0
    assert cluster_stderr(np.array([0.0])) == 0.0
    assert math.isnan(cluster_stderr(np.array([1.0])))
    assert cluster_stderr(np.array([1.0, 3.0])) == pytest.approx(2.0)


def test_cloud_rejects_bad_shapes():
    with pytest.raises(ValueError):
        PointCloudMeasure(points=np.ones((3, 1)), weights=np.ones(2), cluster_ids=np.zeros(3), n_clusters=1)
    with pytest.raises(ValueError):
        PointCloudMeasure(points=np.ones((2, 1)), weights=np.array([1.0, 0.0]), cluster_ids=np.zeros(2), n_clusters=1)


@given(
    st.lists(st.floats(min_value=0.1, max_value=10.0), min_size=2, max_size=30),
    st.floats(min_value=-3.0, max_value=3.0),
)
def test_integration_is_linear(radii, c):
    cloud = make_cloud(np.array(radii)[:, None], cluster_ids=np.arange(len(radii)) // 2)
    one, _ = integrate(cloud, lambda u: u[:, 0])
    scaled, _ = integrate(cloud, lambda u: c * u[:, 0] + 1.0)
    assert scaled == pytest.approx(c * one + cloud.total_mass(), rel=1e-9, abs=1e-9)


def test_excursion_level_errors():
    cloud = make_cloud(np.arange(1.0, 7.0)[:, None], cluster_ids=[0, 0, 1, 1, 2, 2])
    value, se = estimate_values(cloud, np.ones(6))
    assert value == 6.0
    assert se == 0.0
    ratio, ratio_se = ratio_estimate(cloud, np.array([1, 0, 1, 0, 1, 0.0]), np.ones(6))
    assert ratio == pytest.approx(0.5)
    assert ratio_se == 0.0


def test_bootstrap_is_seeded():
    cloud = make_cloud(np.arange(1.0, 51.0)[:, None])
    values = cloud.points[:, 0]
    first = cluster_bootstrap(cloud, values, 100, RandomStream(2))
    again = cluster_bootstrap(cloud, values, 100, RandomStream(2))
    np.testing.assert_array_equal(first, again)
    lo, hi = bootstrap_ci(first)
    assert lo < values.sum() < hi


def test_cloud_file_round_trip(tmp_path):
    cloud = make_cloud(
        np.array([[1.0, 2.0], [-3.0, 0.5], [4.0, 4.0]]),
        weights=[0.5, 0.25, 0.25],
        cluster_ids=[0, 0, 1],
    )
    cloud.meta = CloudMeta(seed=4, m_excursions=2, truncated_fraction=0.5)
    path = write_cloud(tmp_path / "nu_cloud.nupc", cloud)
    assert sidecar_path(path).exists()

    loaded = read_cloud(path)
    np.testing.assert_array_equal(loaded.points, cloud.points)
    np.testing.assert_array_equal(loaded.weights, cloud.weights)
    np.testing.assert_array_equal(loaded.cluster_ids, cloud.cluster_ids)
    assert loaded.n_clusters == 2
    assert loaded.meta.seed == 4
    assert loaded.meta.truncated_fraction == 0.5

    frame = pd.read_csv(export_csv(loaded, tmp_path / "cloud.csv"))
    assert list(frame.columns) == ["excursion_id", "weight", "x_1", "x_2"]
    assert len(frame) == 3


def test_cloud_without_id_block(tmp_path):
    cloud = make_cloud(np.array([[1.0], [2.0]]), cluster_ids=[0, 0])
    path = write_cloud(tmp_path / "c.nupc", cloud)
    raw = path.read_bytes()
    # cut the IDS1 block: readers fall back to one cluster per point
    path.write_bytes(raw[: raw.index(b"IDS1")])
    loaded = read_cloud(path)
    assert loaded.n_clusters == 2
    np.testing.assert_array_equal(loaded.cluster_ids, [0, 1])


def test_cloud_reader_errors(tmp_path):
    with pytest.raises(ConfigError):
        read_cloud(tmp_path / "absent.nupc")
    bad = tmp_path / "bad.nupc"
    bad.write_bytes(b"NOTACLOUD")
    with pytest.raises(ConfigError):
        read_cloud(bad)


def test_backward_series_stops_at_tolerance(two_point_spec, stream):
    total, truncated = backward_series(two_point_spec, 1e-6, 10**6, stream.generator(), strict=False)
    assert total.shape == (1,)
    assert total[0] >= 0.0
    assert isinstance(truncated, bool)


def test_nu_L_sample_is_reproducible(two_point_spec):
    first = sample_nu_L(two_point_spec, 40, 1e-6, 10**5, RandomStream(3).child(NU_L), strict=False)
    again = sample_nu_L(two_point_spec, 40, 1e-6, 10**5, RandomStream(3).child(NU_L), strict=False)
    np.testing.assert_array_equal(first.points, again.points)
    assert first.total_mass() == pytest.approx(1.0)
    assert np.all(first.points >= 0.0)
    with pytest.raises(ValueError):
        sample_nu_L(two_point_spec, 10, 1.5, 10**5, RandomStream(3))


@pytest.mark.slow
def test_cloud_does_not_depend_on_workers(two_point_spec):
    nu_L = sample_nu_L(two_point_spec, 50, 1e-6, 10**5, RandomStream(8).child(NU_L), strict=False)
    kwargs = dict(nu_L=nu_L, chunk_size=25)
    serial = estimate_nu(two_point_spec, 100, 10**4, RandomStream(8), workers=1, **kwargs)
    pooled = estimate_nu(two_point_spec, 100, 10**4, RandomStream(8), workers=2, **kwargs)
    np.testing.assert_array_equal(serial.points, pooled.points)
    np.testing.assert_array_equal(serial.cluster_ids, pooled.cluster_ids)
    assert serial.n_clusters == 100


@pytest.mark.slow
def test_cloud_is_nearly_invariant(two_point_spec):
    stream = RandomStream(12)
    nu_L = sample_nu_L(two_point_spec, 500, 1e-6, 10**5, stream.child(NU_L), strict=False)
    cloud = estimate_nu(two_point_spec, 3000, 10**4, stream, nu_L=nu_L)
    assert cloud.meta.truncated_fraction < 0.05
    gap, se = invariance_gap(cloud, two_point_spec, bump, stream.child(99))
    assert abs(gap) <= 5.0 * se + 0.05


def test_forward_chain_is_reproducible(two_point_spec):
    first = forward_chain(two_point_spec, [0.0], 20, RandomStream(5))
    again = forward_chain(two_point_spec, [0.0], 20, RandomStream(5))
    assert first.shape == (20, 1)
    np.testing.assert_array_equal(first, again)
    # B = 1 keeps every ladder increment Q positive
    assert np.all(first > 0.0)


@pytest.mark.parametrize("q, m", [(0.5, 0.25), (2.0, 0.9), (-1.0, 0.5)])
def test_backward_series_of_fixed_ladder_pair(two_point_spec, stream, monkeypatch, q, m):
    monkeypatch.setattr(
        "src.invariant.sampler.draw_ladder_pair", lambda spec, start, n_max, gen: LadderPair(q=np.array([q]), m=m)
    )
    tol = 1e-9
    total, truncated = backward_series(two_point_spec, tol, 10, stream.generator())
    assert not truncated
    assert abs(total[0] - q / (1.0 - m)) <= tol * abs(q) / (1.0 - m)


def test_split_sample_gap():
    assert split_sample_gap((1.0, 0.0), (1.0, 0.0)) == 0.0
    assert split_sample_gap((1.0, 0.0), (2.0, 0.0)) == math.inf
    assert split_sample_gap((1.0, 0.3), (2.0, 0.4)) == pytest.approx(2.0)


@pytest.mark.slow
def test_independent_clouds_agree_on_an_annulus(two_point_spec):
    def annulus(u: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(u, axis=1)
        return ((r > 1.0) & (r <= math.e)).astype(float)

    estimates = []
    for seed in (31, 32):
        stream = RandomStream(seed)
        nu_L = sample_nu_L(two_point_spec, 500, 1e-6, 10**5, stream.child(NU_L), strict=False)
        cloud = estimate_nu(two_point_spec, 3000, 10**4, stream, nu_L=nu_L)
        estimates.append(integrate(cloud, annulus))
    assert split_sample_gap(*estimates) < 3.0


@pytest.mark.slow
def test_nu_L_is_stationary_for_the_ladder_chain(two_point_spec):
    stream = RandomStream(14)
    nu_L = sample_nu_L(two_point_spec, 2000, 1e-8, 10**6, stream.child(NU_L), strict=False)
    statistic, pvalue = stationarity_ks(nu_L, two_point_spec, stream.child(STATIONARITY), 10**6)
    assert 0.0 <= statistic <= 1.0
    assert pvalue > 0.01
