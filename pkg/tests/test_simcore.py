import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from softcl.errors import DomainError, ShapeError
from softcl.simcore import col_softmax, cosine, row_softmax, scaled_similarity_matrix


def test_cosine_examples():
    assert cosine([1, 0], [1, 0]) == 1.0
    assert cosine([1, 0], [0, 1]) == 0.0
    # hand oracle: 1 / (sqrt(2) * 1)
    assert cosine([1, 1], [1, 0]) == pytest.approx(1 / math.sqrt(2), abs=1e-5)
    assert cosine([1, 1], [1, 0]) == pytest.approx(0.70711, abs=1e-5)


def test_cosine_errors():
    with pytest.raises(DomainError):
        cosine([0, 0], [1, 0])
    with pytest.raises(ShapeError):
        cosine([1, 0, 0], [1, 0])


def test_scaled_similarity_examples():
    assert np.allclose(scaled_similarity_matrix([[1, 0]], [[1, 0]], 0.1), [[10.0]])
    assert np.allclose(scaled_similarity_matrix([[1, 0]], [[0, 1]], 0.1), [[0.0]])
    expected = (1 / math.sqrt(2)) / 0.5
    assert scaled_similarity_matrix([[1, 1]], [[1, 0]], 0.5)[0, 0] == pytest.approx(expected, abs=1e-5)
    assert expected == pytest.approx(1.41421, abs=1e-5)


@pytest.mark.parametrize("a,b,tau,exc", [
    ([[1, 0]], [[1, 0], [0, 1]], 0.1, ShapeError),
    ([[1, 0]], [[1, 0]], 0.0, DomainError),
    ([[1, 0]], [[1, 0]], -1.0, DomainError),
    ([[0, 0]], [[1, 0]], 0.1, DomainError),
])
def test_scaled_similarity_errors(a, b, tau, exc):
    with pytest.raises(exc):
        scaled_similarity_matrix(a, b, tau)


def test_row_softmax_examples():
    assert np.allclose(row_softmax([[0, 0]]), [[0.5, 0.5]])
    e = math.exp(1)
    assert np.allclose(row_softmax([[1, 0]]), [[e / (e + 1), 1 / (e + 1)]], rtol=0, atol=1e-12)
    assert np.allclose(row_softmax([[1, 0]]), [[0.73106, 0.26894]], rtol=0, atol=1e-5)
    big = row_softmax([[1000, 0]])
    assert np.all(np.isfinite(big))
    assert big[0, 0] == pytest.approx(1.0) and big[0, 1] == pytest.approx(0.0, abs=1e-300)


def test_row_softmax_rejects_non_finite():
    with pytest.raises(DomainError):
        row_softmax([[np.inf, 0]])
    with pytest.raises(DomainError):
        row_softmax([[np.nan, 0]])


def test_col_softmax_is_transposed_row_softmax(rng):
    m = rng.normal(size=(4, 5))
    assert np.allclose(col_softmax(m), row_softmax(m.T).T)
    assert np.allclose(col_softmax(m).sum(axis=0), 1.0)


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_row_softmax_rows_sum_to_one(m):
    p = row_softmax(m)
    assert np.all(p >= 0)
    assert np.max(np.abs(p.sum(axis=1) - 1.0)) <= 1e-12


nonzero_rows = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 5)),
                      elements=st.floats(-10, 10, allow_nan=False)).filter(
    lambda a: np.all(np.linalg.norm(a, axis=1) > 1e-3))


@settings(max_examples=100, deadline=None)
@given(nonzero_rows, st.floats(0.01, 2.0))
def test_self_similarity_diagonal(a, tau):
    s = scaled_similarity_matrix(a, a, tau)
    assert np.allclose(np.diag(s), 1.0 / tau, atol=1e-9)
    assert np.all(np.abs(s) <= 1.0 / tau + 1e-12)


@settings(max_examples=100, deadline=None)
@given(nonzero_rows, st.floats(0.01, 100.0), st.data())
def test_row_scale_invariance(a, c, data):
    i = data.draw(st.integers(0, a.shape[0] - 1))
    b = a.copy()
    b[i] *= c
    assert np.allclose(scaled_similarity_matrix(a, a, 0.1), scaled_similarity_matrix(b, a, 0.1), atol=1e-9)
