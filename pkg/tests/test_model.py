import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.model.affine import AffinePair, act, compose
from src.model.laws import ConstantALaw, ConstantB, DiscreteLaw, LognormalLaw, ShiftedExpLaw, TwoPointLaw
from src.model.mu_spec import MuSpec, sample_pair, validate_spec
from src.model.random_stream import RandomStream
from src.potential.kernel import r_hat, r_moments, r_transform_numeric
from src.utils.errors import Degenerate, NonCritical

coords = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)
scales = st.floats(min_value=0.05, max_value=20.0, allow_nan=False)
pairs = st.builds(lambda b, a: AffinePair(b=(b,), a=a), coords, scales)


@given(pairs, pairs, pairs)
def test_composition_is_associative(g, h, k):
    left = (g * h) * k
    right = g * (h * k)
    np.testing.assert_allclose(left.b, right.b, rtol=1e-9, atol=1e-9)
    assert left.a == pytest.approx(right.a, rel=1e-12)


@given(pairs, coords)
def test_identity_and_action(g, x):
    e = AffinePair.identity(1)
    assert (g * e) == g
    assert (e * g) == g
    np.testing.assert_allclose(act(g, [x]), g.a * x + g.b[0])


@given(pairs, pairs, coords)
def test_action_of_product(g, h, x):
    np.testing.assert_allclose(
        act(compose(g, h), [x]), act(g, act(h, [x])), rtol=1e-9, atol=1e-9
    )


def test_pair_rejects_nonpositive_multiplier():
    with pytest.raises(ValueError):
        AffinePair(b=(1.0,), a=0.0)


def test_lognormal_accepted(lognormal_spec):
    report = validate_spec(lognormal_spec)
    assert report.passed
    assert report.sigma2 == pytest.approx(1.0)
    assert report.lattice_span == 0.0


def test_two_point_has_lattice_span_one(two_point_spec):
    report = validate_spec(two_point_spec)
    assert report.passed
    assert report.lattice_span == pytest.approx(1.0)
    assert report.sigma2 == pytest.approx(1.0)


def test_discrete_lattice_span_is_gcd():
    spec = MuSpec(a_law=DiscreteLaw(values=[2.0, -1.0], probs=[1 / 3, 2 / 3]))
    report = validate_spec(spec)
    assert report.lattice_span == pytest.approx(1.0)
    assert report.sigma2 == pytest.approx(2.0)


def test_noncritical_law_rejected():
    spec = MuSpec(a_law=ConstantALaw(value=2.0))
    with pytest.raises(NonCritical):
        validate_spec(spec)


def test_constant_one_is_degenerate():
    spec = MuSpec(a_law=ConstantALaw(value=1.0))
    with pytest.raises(Degenerate):
        validate_spec(spec)


def test_zero_translation_is_degenerate():
    spec = MuSpec(b_law=ConstantB(value=[0.0]))
    report = validate_spec(spec, raise_on_failure=False)
    assert not report.passed
    failed = [c.name for c in report.checks if not c.passed]
    assert failed == ["no_fixed_point"]
    with pytest.raises(Degenerate):
        report.raise_for_failure()


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        MuSpec(dim=2, b_law=ConstantB(value=[1.0]))


def test_two_point_kernel_is_tent(two_point_spec):
    x = np.linspace(-3.0, 3.0, 121)
    np.testing.assert_allclose(two_point_spec.r(x), np.maximum(0.0, 1.0 - np.abs(x)), atol=1e-12)


def test_lognormal_kernel_at_zero(lognormal_spec):
    assert float(lognormal_spec.r(0.0)) == pytest.approx(math.sqrt(2.0 / math.pi), rel=1e-12)


@pytest.mark.parametrize("a_law", [LognormalLaw(s=1.0), TwoPointLaw(p_span=1.0), ShiftedExpLaw(s=0.5)])
def test_closed_form_transform_matches_quadrature(a_law):
    spec = MuSpec(a_law=a_law)
    for theta in np.linspace(0.1, 10.0, 12):
        closed = complex(r_hat(spec, theta))
        numeric = r_transform_numeric(spec, float(theta))
        assert abs(closed - numeric) < 1e-8


def test_kernel_moments():
    assert r_moments(MuSpec(a_law=LognormalLaw(s=2.0))) == pytest.approx((4.0, 0.0))
    sigma2, K = r_moments(MuSpec(a_law=ShiftedExpLaw(s=0.5)))
    assert sigma2 == pytest.approx(0.25)
    assert K == pytest.approx(-2.0 * 0.5**3 / 3.0)


def test_recentering_offset_moves_translation():
    spec = MuSpec(a_law=TwoPointLaw(), b_law=ConstantB(value=[1.0]), recenter_offset=[2.0])
    log_a, b = spec.sample_block(RandomStream(3).generator(), 200)
    np.testing.assert_allclose(b[:, 0], 1.0 - np.expm1(log_a) * 2.0)


def test_streams_are_reproducible(lognormal_spec):
    first = sample_pair(lognormal_spec, RandomStream(7).child(1, 2))
    again = sample_pair(lognormal_spec, RandomStream(7).child(1, 2))
    other = sample_pair(lognormal_spec, RandomStream(7).child(2, 1))
    assert first == again
    assert first != other


@pytest.mark.slow
@pytest.mark.parametrize("a_law", [LognormalLaw(s=1.0), TwoPointLaw(p_span=1.0), ShiftedExpLaw(s=0.5)])
def test_sampled_log_multiplier_is_centered(a_law):
    spec = MuSpec(a_law=a_law)
    n = 10**6
    log_a, _ = spec.sample_block(RandomStream(17).generator(), n)
    assert abs(log_a.mean()) <= 4.0 * log_a.std() / math.sqrt(n)
    assert log_a.var() == pytest.approx(spec.sigma2(), rel=0.01)

    draws = np.log([sample_pair(spec, RandomStream(17).child(i)).a for i in range(20_000)])
    assert abs(draws.mean()) <= 4.0 * draws.std() / math.sqrt(draws.size)


@settings(max_examples=25)
@given(st.integers(min_value=0, max_value=2**63), st.integers(min_value=0, max_value=1000))
def test_stream_tag_names_the_path(seed, key):
    child = RandomStream(seed).child(key)
    assert child.tag.endswith(str(key))
