import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.model.laws import DiscreteLaw
from src.model.mu_spec import MuSpec
from src.model.random_stream import RandomStream
from src.utils.errors import ConfigError, DepthOverflow, Truncated
from src.walk.duality import descent_survival, duality_check
from src.walk.excursion import (
    ascending_ladder_epochs,
    excursions_to_frame,
    ladder_pair,
    run_excursion,
    simulate_walk,
)


def test_excursion_follows_the_recursion(two_point_spec, stream):
    for j in range(20):
        exc = run_excursion(two_point_spec, [0.5], 10_000, stream.child(j))
        if exc.truncated:
            continue
        L = exc.L
        assert exc.n_stop == L
        assert np.all(exc.walk[:L] >= 0.0)
        assert exc.walk[L] < 0.0
        a = np.exp(exc.log_a)
        for n in range(1, L):
            np.testing.assert_allclose(exc.path[n], a[n - 1] * exc.path[n - 1] + exc.b[n - 1], rtol=1e-9)


def test_excursion_is_reproducible(lognormal_spec):
    first = run_excursion(lognormal_spec, [1.0], 1000, RandomStream(5).child(2))
    again = run_excursion(lognormal_spec, [1.0], 1000, RandomStream(5).child(2))
    np.testing.assert_array_equal(first.path, again.path)
    assert first.L == again.L


def test_ladder_pair_matches_excursion(two_point_spec, stream):
    for j in range(10):
        exc = run_excursion(two_point_spec, [0.0], 10_000, stream.child(j))
        if exc.truncated:
            continue
        pair = ladder_pair(two_point_spec, [0.0], 10_000, stream.child(j))
        L = exc.L
        x_L = math.exp(exc.log_a[L - 1]) * exc.path[L - 1] + exc.b[L - 1]
        np.testing.assert_allclose(pair.q, x_L, rtol=1e-9)
        assert pair.m == pytest.approx(math.exp(exc.walk[L]))
        assert pair.m < 1.0


def test_short_cap_truncates_some_ladder_pairs(two_point_spec, stream):
    truncated = 0
    for j in range(50):
        try:
            pair = ladder_pair(two_point_spec, [0.0], 1, stream.child(j))
            assert pair.m == pytest.approx(math.exp(-1.0))
        except Truncated:
            truncated += 1
    assert 0 < truncated < 50


def test_first_descent_law_for_simple_walk(two_point_spec, stream):
    n = 20_000
    gen = stream.generator()
    lengths = np.array([simulate_walk(two_point_spec, [0.0], 50, gen).L or 0 for _ in range(n)])
    for L, p in ((1, 0.5), (3, 0.125)):
        hat = np.mean(lengths == L)
        assert abs(hat - p) < 4.0 * math.sqrt(p * (1 - p) / n)


def test_descent_survival_exact():
    survival = descent_survival(np.array([1.0, -1.0]), np.array([0.5, 0.5]), 5)
    # P(L > i): 1, 1/2, 1/2, 3/8, 3/8
    np.testing.assert_allclose(survival, [1.0, 0.5, 0.5, 0.375, 0.375])


def test_ladder_epochs():
    walk = np.array([0.0, 1.0, 0.0, 1.0, 2.0, 2.0, 3.0])
    np.testing.assert_array_equal(ascending_ladder_epochs(walk), [1, 4, 6])
    np.testing.assert_array_equal(ascending_ladder_epochs(walk, weak=True), [1, 3, 4, 5, 6])


def test_excursion_frame(two_point_spec, stream):
    exc = run_excursion(two_point_spec, [1.0], 100, stream)
    frame = excursions_to_frame([(7, exc)])
    assert list(frame.columns) == ["excursion_id", "n", "S_n", "x_1"]
    assert len(frame) == exc.n_stop
    assert (frame["excursion_id"] == 7).all()


def test_duality_for_simple_walk(two_point_spec):
    result = duality_check(two_point_spec, 0.5, 20)
    assert result.weak
    assert result.lhs == pytest.approx(2.0 * (math.sqrt(3.0) - 1.0), abs=1e-5)
    assert abs(result.lhs - result.rhs) <= 2.0 * 2.0**-20
    assert result.rhs_strict == pytest.approx((math.sqrt(3.0) + 1.0) / 2.0, abs=1e-4)
    assert result.consistent
    assert "lhs" in result.to_text()


def test_duality_rejects_bad_arguments(two_point_spec, lognormal_spec):
    with pytest.raises(DepthOverflow):
        duality_check(two_point_spec, 0.5, 26)
    with pytest.raises(ConfigError):
        duality_check(two_point_spec, 1.5, 10)
    with pytest.raises(ConfigError):
        duality_check(lognormal_spec, 0.5, 10)


@settings(max_examples=20, deadline=None)
@given(
    st.integers(min_value=1, max_value=3),
    st.integers(min_value=1, max_value=3),
    st.floats(min_value=0.1, max_value=0.9),
)
def test_duality_holds_for_centered_lattice_walks(up, down, s):
    spec = MuSpec(
        a_law=DiscreteLaw(values=[float(up), -float(down)], probs=[down / (up + down), up / (up + down)])
    )
    result = duality_check(spec, s, 12)
    assert abs(result.lhs - result.rhs) <= 2.0 * result.bound + 1e-12


def test_simple_walk_descends_by_exactly_one(two_point_spec, stream):
    log_m = []
    for j in range(200):
        try:
            pair = ladder_pair(two_point_spec, [0.0], 10**5, stream.child(j))
        except Truncated:
            continue
        log_m.append(math.log(pair.m))
    assert len(log_m) > 190
    # E S_L = -1 holds draw by draw for steps of +-1
    np.testing.assert_allclose(log_m, -1.0, atol=1e-12)
