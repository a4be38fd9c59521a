from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popdiff.core.ffalg import (
    FpMatrix,
    FpPoly,
    FpScalar,
    all_vectors,
    char_poly,
    check_modulus,
    encode_vectors,
    mat_det,
    mat_inverse,
    mat_rank,
    min_poly,
    negate_argument,
    nullspace,
    poly_gcd,
    random_invertible,
    random_matrix,
    solve,
)
from popdiff.errors import BothZero, InvalidModulus, Singular

primes = st.sampled_from([3, 5, 7])
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_inverse_of_rotation():
    A = FpMatrix.from_rows([[0, 4], [1, 0]], 5)
    B = mat_inverse(A)
    assert B == FpMatrix.from_rows([[0, 1], [4, 0]], 5)
    assert A @ B == FpMatrix.identity(2, 5)
    assert B @ A == FpMatrix.identity(2, 5)


def test_inverse_of_identity_and_singular():
    assert mat_inverse(FpMatrix.identity(2, 5)) == FpMatrix.identity(2, 5)
    with pytest.raises(Singular):
        mat_inverse(FpMatrix.from_rows([[1, 1], [2, 2]], 5))


def test_rank_examples():
    assert mat_rank(FpMatrix.zeros(3, 3, 5)) == 0
    assert mat_rank(FpMatrix.from_rows([[1, 1], [2, 2]], 5)) == 1
    assert mat_rank(FpMatrix.identity(4, 3)) == 4


def test_entries_are_reduced():
    M = FpMatrix.from_rows([[7, -1], [5, 12]], 5)
    assert M.to_list() == [[2, 4], [0, 2]]
    assert mat_det(FpMatrix.from_rows([[1, 2], [3, 4]], 5)) == 3


def test_min_poly_examples():
    J = FpMatrix.from_rows([[0, 4], [1, 0]], 5)
    assert min_poly(J) == FpPoly((1, 0, 1), 5)
    assert min_poly(FpMatrix.identity(2, 5)) == FpPoly((-1, 1), 5)
    assert min_poly(FpMatrix.from_rows([[2]], 5)) == FpPoly((-2, 1), 5)


def test_char_poly_of_rotation():
    J = FpMatrix.from_rows([[0, 4], [1, 0]], 5)
    assert char_poly(J) == FpPoly((1, 0, 1), 5)


def test_poly_gcd():
    f = FpPoly((-1, 0, 1), 5)  # t² − 1
    g = FpPoly((-1, 1), 5)
    assert poly_gcd(f, g) == FpPoly((4, 1), 5)
    assert poly_gcd(FpPoly((1, 0, 1), 5), FpPoly((0, 1), 5)).is_one()
    with pytest.raises(BothZero):
        poly_gcd(FpPoly((), 5), FpPoly((0,), 5))


def test_negate_argument():
    f = FpPoly((1, 2, 3), 7)
    assert negate_argument(f) == FpPoly((1, -2, 3), 7)


def test_modulus_checks():
    assert check_modulus(7) == 7
    for bad in (2, 9, 1, 0):
        with pytest.raises(InvalidModulus):
            check_modulus(bad)


@pytest.mark.parametrize("bad", [2, 4, 9])
def test_constructors_reject_non_field_modulus(bad):
    with pytest.raises(InvalidModulus):
        FpScalar(1, bad)
    with pytest.raises(InvalidModulus):
        FpPoly((1, 1), bad)
    with pytest.raises(InvalidModulus):
        FpMatrix.identity(2, bad)
    with pytest.raises(InvalidModulus):
        FpMatrix(np.eye(2, dtype=np.int64), bad)


def test_scalar_arithmetic():
    a, b = FpScalar(3, 5), FpScalar(2, 5)
    assert (a * b).value == 1
    assert (a + b).value == 0
    assert FpScalar(2, 5).inverse().value == 3
    assert int(a / b) == 4
    with pytest.raises(Singular):
        FpScalar(0, 5).inverse()


def test_vector_enumeration_is_bijective():
    vecs = all_vectors(3, 5)
    assert vecs.shape == (125, 3)
    assert np.array_equal(encode_vectors(vecs, 5), np.arange(125))
    assert vecs[1].tolist() == [1, 0, 0]


@settings(max_examples=60, deadline=None)
@given(p=primes, k=st.integers(min_value=1, max_value=4), seed=seeds)
def test_cayley_hamilton_and_min_poly_divides(p, k, seed):
    rng = np.random.default_rng(seed)
    A = random_matrix(rng, k, k, p)
    chi = char_poly(A)
    Q = min_poly(A)
    assert chi.degree == k
    assert chi.coeffs[-1] == 1
    assert chi.eval_matrix(A) == FpMatrix.zeros(k, k, p)
    assert Q.eval_matrix(A) == FpMatrix.zeros(k, k, p)
    assert (chi % Q).is_zero()


@settings(max_examples=60, deadline=None)
@given(p=primes, k=st.integers(min_value=1, max_value=4), seed=seeds)
def test_inverse_and_det(p, k, seed):
    rng = np.random.default_rng(seed)
    A = random_invertible(rng, k, p)
    assert A @ A.inverse() == FpMatrix.identity(k, p)
    assert mat_det(A) * mat_det(A.inverse()) % p == 1


@settings(max_examples=60, deadline=None)
@given(p=primes, rows=st.integers(1, 5), cols=st.integers(1, 5), seed=seeds)
def test_rank_nullity(p, rows, cols, seed):
    rng = np.random.default_rng(seed)
    A = random_matrix(rng, rows, cols, p)
    kernel = nullspace(A.data, p)
    assert mat_rank(A) + kernel.shape[0] == cols
    assert not np.any((A.data @ kernel.T) % p)


@settings(max_examples=60, deadline=None)
@given(p=primes, rows=st.integers(1, 5), cols=st.integers(1, 5), seed=seeds)
def test_rank_equals_rank_of_transpose(p, rows, cols, seed):
    rng = np.random.default_rng(seed)
    A = random_matrix(rng, rows, cols, p)
    assert mat_rank(A) == mat_rank(A.T)


@settings(max_examples=60, deadline=None)
@given(
    p=primes,
    f=st.lists(st.integers(0, 6), min_size=1, max_size=6),
    g=st.lists(st.integers(0, 6), min_size=1, max_size=6),
    common=st.lists(st.integers(0, 6), min_size=1, max_size=3),
)
def test_gcd_divides_both(p, f, g, common):
    h = FpPoly(tuple(common), p)
    F, G = FpPoly(tuple(f), p) * h, FpPoly(tuple(g), p) * h
    if F.is_zero() and G.is_zero():
        return
    d = poly_gcd(F, G)
    assert (F % d).is_zero()
    assert (G % d).is_zero()
    if not h.is_zero():
        assert d.degree >= h.degree


@settings(max_examples=60, deadline=None)
@given(p=primes, k=st.integers(1, 4), seed=seeds)
def test_solve_consistent_system(p, k, seed):
    rng = np.random.default_rng(seed)
    A = random_matrix(rng, k, k + 1, p)
    x0 = rng.integers(0, p, size=k + 1)
    b = (A.data @ x0) % p
    x = solve(A.data, b, p)
    assert x is not None
    assert np.array_equal((A.data @ x) % p, b)


def test_power_matches_repeated_product():
    J = FpMatrix.from_rows([[0, 4], [1, 0]], 5)
    assert J.power(2) == FpMatrix.scalar(-1, 2, 5)
    assert J.power(4) == FpMatrix.identity(2, 5)
    assert J.trace() == 0
    assert Fraction(mat_det(J)) == 1
