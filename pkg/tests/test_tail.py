import math

import numpy as np
import pytest

from src.invariant.sampler import estimate_nu, sample_nu_L
from src.model.laws import GaussianB, LognormalLaw, UniformB
from src.model.mu_spec import MuSpec
from src.model.random_stream import NU_L, RandomStream
from src.tail.angular import angular_measure
from src.tail.annuli import annulus_mass, annulus_table, dilation, estimate_Cplus, flatness_test, lattice_ratio
from src.tail.bounds import bound_diagnostics, bounds_to_frame
from src.utils.errors import ConfigNotCoveredByG, InsufficientSupport
from tests.conftest import make_cloud


def test_annulus_masses_of_log_uniform_cloud(log_uniform_cloud):
    table = annulus_table(log_uniform_cloud, [math.exp(k) for k in (2, 4, 6)])
    np.testing.assert_allclose(table["mass"], 0.5, atol=1e-3)
    assert (table["n_excursions"] > 1000).all()


def test_c_plus_from_flat_annuli(log_uniform_cloud):
    report = estimate_Cplus(log_uniform_cloud, [math.exp(k) for k in (3, 4, 5, 6)])
    assert report.c_plus == pytest.approx(0.5, abs=1e-3)
    assert report.chi2_pvalue > 0.99
    lo, hi = report.c_plus_ci()
    assert lo < report.c_plus < hi
    assert report.to_dict()["n_annuli_used"] == 4


def test_sparse_annuli_raise(log_uniform_cloud):
    with pytest.raises(InsufficientSupport):
        estimate_Cplus(log_uniform_cloud, [math.exp(20.0)])


def test_lattice_annuli_and_ratio():
    # one unit of mass at each log radius k + 1/2
    cloud = make_cloud(np.exp(np.arange(0, 12) + 0.5)[:, None])
    report = estimate_Cplus(cloud, [math.exp(k) for k in (3, 4, 5)], lattice_p=1.0, min_hits=1)
    assert report.c_plus == pytest.approx(1.0)
    assert report.lattice_span == 1.0
    ratio, _ = lattice_ratio(cloud, math.exp(3.0), 1.0, n=2)
    assert ratio == pytest.approx(2.0)


def test_dilation_scales_the_argument(log_uniform_cloud):
    inside = lambda u: (np.linalg.norm(u, axis=1) <= 1.0).astype(float)
    value, _ = dilation(log_uniform_cloud, math.exp(5.0), inside)
    mass, _, _ = annulus_mass(log_uniform_cloud, 0.0, math.exp(5.0))
    assert value == pytest.approx(mass)
    with pytest.raises(ValueError):
        dilation(log_uniform_cloud, 0.0, inside)


def test_flatness_of_equal_values():
    mean, se, chi2, p = flatness_test(np.array([2.0, 2.0, 2.0]), np.array([0.1, 0.1, 0.1]))
    assert mean == 2.0
    assert se == pytest.approx(0.1 / math.sqrt(3.0))
    assert chi2 == 0.0
    assert p == pytest.approx(1.0)


def test_flatness_detects_a_trend():
    _, _, _, p = flatness_test(np.array([1.0, 2.0, 3.0, 4.0]), np.full(4, 0.05))
    assert p < 1e-6


def test_angular_measure_on_the_line():
    positive = make_cloud(np.linspace(30.0, 300.0, 200)[:, None])
    hist = angular_measure(positive, math.exp(3.0))
    assert list(hist["bin_center_1"]) == [-1.0, 1.0]
    np.testing.assert_allclose(hist["weight"], [0.0, 1.0])

    signs = np.where(np.arange(400) % 2 == 0, 1.0, -1.0)
    mixed = make_cloud((signs * np.linspace(30.0, 300.0, 400))[:, None])
    np.testing.assert_allclose(angular_measure(mixed, math.exp(3.0))["weight"], [0.5, 0.5])


def test_angular_measure_in_the_plane():
    angle = np.linspace(-math.pi, math.pi, 4000, endpoint=False)
    points = 100.0 * np.column_stack([np.cos(angle), np.sin(angle)])
    hist = angular_measure(make_cloud(points), 10.0, n_bins=8)
    assert len(hist) == 8
    np.testing.assert_allclose(hist["weight"], 1.0 / 8.0, atol=1e-3)
    assert hist["weight"].sum() == pytest.approx(1.0)


def test_angular_measure_needs_far_points():
    cloud = make_cloud(np.linspace(1.0, 10.0, 500)[:, None])
    with pytest.raises(InsufficientSupport):
        angular_measure(cloud, math.exp(3.0))


def test_bound_diagnostics(log_uniform_cloud):
    checks = bound_diagnostics(log_uniform_cloud, [math.exp(k) for k in (2, 3, 4, 5, 6)])
    assert checks["annulus_min_mass"] == pytest.approx(0.5, abs=1e-3)
    assert checks["positivity_min_lower"] > 0.0
    assert 0.0 < checks["log_bound_sup"] < math.inf
    assert checks["nu_leb_lhs"] <= checks["nu_leb_rhs"]
    assert set(bounds_to_frame(checks)["name"]) == set(checks)


def test_half_space_diagnostics_need_positive_translations(log_uniform_cloud):
    spec = MuSpec(dim=2, a_law=LognormalLaw(), b_law=GaussianB(mean=[0.0, 0.0], cov=[[1.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(ConfigNotCoveredByG):
        bound_diagnostics(log_uniform_cloud, [math.exp(3.0)], spec)


def simulated_cloud(spec: MuSpec, seed: int, m_excursions: int, n_max: int):
    stream = RandomStream(seed)
    nu_L = sample_nu_L(spec, 300, 1e-6, 10**5, stream.child(NU_L), strict=False)
    return estimate_nu(spec, m_excursions, n_max, stream, nu_L=nu_L)


@pytest.mark.slow
def test_lattice_annuli_are_proportional_on_a_simulated_cloud(two_point_spec):
    cloud = simulated_cloud(two_point_spec, 41, 20_000, 10**5)
    ratio, se = lattice_ratio(cloud, math.exp(3.0), 1.0, n=2)
    assert abs(ratio - 2.0) <= 3.0 * se + 0.1


@pytest.mark.slow
def test_symmetric_translations_split_the_angular_measure():
    spec = MuSpec(a_law=LognormalLaw(s=1.0), b_law=UniformB(low=[-1.0], high=[1.0]))
    cloud = simulated_cloud(spec, 42, 5000, 10**5)
    hist = angular_measure(cloud, math.exp(3.0)).set_index("bin_center_1")
    assert hist["weight"].sum() == pytest.approx(1.0)
    assert abs(hist.loc[1.0, "weight"] - 0.5) <= 3.0 * hist.loc[1.0, "stderr"]
