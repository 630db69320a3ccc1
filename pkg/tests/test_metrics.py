import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from quadsparse.metrics import TrialOutcome, dist, rel_error, support_match
from quadsparse.validation import (check_index_set, check_measurement_problem, check_sparsity,
                                   check_vector)

vec = arrays(np.float64, 6, elements=st.floats(-1e3, 1e3, allow_nan=False))


def test_dist_examples():
    assert dist([1, 0], [-1, 0]) == 0
    assert dist([1, 1], [1, -1]) == 2
    assert dist([0, 0], [3, 4]) == 5
    with pytest.raises(ValueError):
        dist([1, 2], [1, 2, 3])


def test_rel_error_examples():
    x = np.array([1.0, -2.0, 0.0])
    assert rel_error(x, x) == 0 and rel_error(-x, x) == 0
    assert rel_error(2 * x, x) == pytest.approx(1.0)
    with pytest.raises(ZeroDivisionError):
        rel_error(x, np.zeros(3))


@given(vec, vec)
def test_dist_is_sign_invariant_and_symmetric(a, b):
    assert dist(a, b) == dist(-a, b) == dist(a, -b)
    assert dist(a, b) == pytest.approx(dist(b, a))
    assert dist(a, b) <= np.linalg.norm(a - b) + 1e-9


def test_support_match():
    x = np.array([0.0, 1.0, -2.0])
    assert support_match(x.copy(), x)
    assert not support_match(np.zeros(3), x)
    assert support_match(-x, x)
    assert support_match(x + np.array([1e-14, 0, 0]), x, atol=1e-12)


def test_trial_outcome():
    x = np.array([1.0, 0.0])
    ok = TrialOutcome.evaluate(np.array([1.0 + 1e-5, 0.0]), x)
    assert ok.success and ok.support_exact
    bad = TrialOutcome.evaluate(np.array([np.nan, 0.0]), x, status="numerical_failure")
    assert not bad.success and bad.rel_error == np.inf
    assert not TrialOutcome.evaluate(np.array([1.0011, 0.0]), x).success
    assert set(ok.to_dict()) >= {"rel_error", "success", "status", "iterations"}


def test_validation_helpers():
    with pytest.raises(TypeError):
        check_sparsity(2.0, 5)
    with pytest.raises(TypeError):
        check_sparsity(True, 5)
    with pytest.raises(ValueError):
        check_sparsity(0, 5)
    with pytest.raises(ValueError):
        check_vector([1.0, np.nan], 2)
    with pytest.raises(IndexError):
        check_index_set([0, 5], 5)
    np.testing.assert_array_equal(check_index_set([3, 1, 3], 5), [1, 3])
    with pytest.raises(ValueError):
        check_measurement_problem(np.zeros((3, 2, 2)), [1.0, 2.0])
    with pytest.raises(ValueError):
        check_measurement_problem(np.zeros((2, 2, 2)), [1.0, np.inf])
