import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lpmcsvm.norms import (
    INF,
    block_norm,
    dual_exponent,
    format_exponent,
    parse_exponent,
    schatten_norm,
    singular_values,
)

W34 = np.array([[3.0, 0.0], [0.0, 4.0]])

finite = st.floats(-1e3, 1e3, allow_nan=False)
matrices = st.tuples(st.integers(1, 6), st.integers(1, 6)).flatmap(lambda s: arrays(float, s, elements=finite))
exponents = st.one_of(st.just(1.0), st.just(INF), st.floats(1.0, 50.0))


def test_block_norm_examples():
    assert block_norm(W34, 2) == pytest.approx(5.0, abs=1e-15)
    assert block_norm(W34, 1) == pytest.approx(7.0, abs=1e-15)
    assert block_norm(W34, INF) == 4.0
    assert block_norm(W34, 4) == pytest.approx(337 ** 0.25, rel=1e-14)
    assert block_norm(W34, 4) == pytest.approx(4.28457, abs=1e-5)


def test_block_norm_rejects_small_exponent():
    with pytest.raises(ValueError):
        block_norm(W34, 0.5)
    with pytest.raises(ValueError):
        block_norm(W34, float("nan"))


def test_block_norm_no_overflow():
    w = np.full((3, 4), 1e200)
    assert block_norm(w, 3) == pytest.approx(1e200 * math.sqrt(3) * 4 ** (1 / 3), rel=1e-12)


@pytest.mark.parametrize("p,expected", [(2.0, 2.0), (4.0 / 3.0, 4.0), (1.0, INF), (INF, 1.0), (3.0, 1.5)])
def test_dual_exponent(p, expected):
    assert dual_exponent(p) == pytest.approx(expected, rel=1e-15)


def test_dual_exponent_rejects_small():
    with pytest.raises(ValueError):
        dual_exponent(0.99)


def test_parse_and_format_exponent():
    assert parse_exponent("inf") == INF
    assert parse_exponent("4/3") == pytest.approx(4 / 3)
    assert parse_exponent(" 2.5 ") == 2.5
    assert format_exponent(INF) == "inf"
    assert parse_exponent(format_exponent(1.33)) == 1.33


def test_singular_values_examples():
    np.testing.assert_allclose(singular_values(W34), [4.0, 3.0], rtol=1e-14)
    u = np.array([2.0, 0.0, 0.0])
    v = np.array([0.0, 3.0])
    s = singular_values(np.outer(u, v))
    assert s[0] == pytest.approx(6.0, rel=1e-14)
    assert np.all(s[1:] < 1e-12)
    m = np.random.default_rng(0).standard_normal((5, 3))
    s = singular_values(m)
    assert len(s) == 3
    assert np.sum(s**2) == pytest.approx(np.sum(m**2), rel=1e-8)


def test_singular_values_rejects_non_finite():
    with pytest.raises(ValueError):
        singular_values(np.array([[1.0, np.nan]]))


def test_schatten_examples():
    assert schatten_norm(W34, 2) == pytest.approx(5.0, rel=1e-14)
    assert schatten_norm(W34, 1) == pytest.approx(7.0, rel=1e-14)
    assert schatten_norm(W34, INF) == pytest.approx(4.0, rel=1e-14)
    with pytest.raises(ValueError):
        schatten_norm(W34, 0.9)


@given(matrices, exponents, exponents)
def test_block_norm_non_increasing_in_p(w, p, q):
    lo, hi = min(p, q), max(p, q)
    assert block_norm(w, hi) <= block_norm(w, lo) * (1 + 1e-12) + 1e-300


@given(st.integers(1, 6), st.integers(1, 6), exponents, st.integers(0, 2**32 - 1))
def test_holder_inequality(d, c, p, seed):
    rng = np.random.default_rng(seed)
    w, v = rng.standard_normal((2, d, c))
    assert np.vdot(w, v) <= block_norm(w, p) * block_norm(v, dual_exponent(p)) + 1e-10


@given(matrices)
def test_schatten_two_is_frobenius(m):
    assert schatten_norm(m, 2) == pytest.approx(np.linalg.norm(m), rel=1e-8, abs=1e-10)


@given(st.integers(1, 5), st.integers(1, 5), st.sampled_from([1.0, 1.5, 2.0, 3.0, INF]), st.integers(0, 2**32 - 1))
def test_schatten_rotation_invariant(d, c, q, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((d, c))
    U, _ = np.linalg.qr(rng.standard_normal((d, d)))
    V, _ = np.linalg.qr(rng.standard_normal((c, c)))
    assert schatten_norm(U @ m @ V, q) == pytest.approx(schatten_norm(m, q), rel=1e-7)


@given(matrices)
def test_singular_values_sorted_non_negative(m):
    s = singular_values(m)
    assert len(s) == min(m.shape)
    assert np.all(s >= 0)
    assert np.all(np.diff(s) <= 0)
