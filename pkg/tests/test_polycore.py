import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from cdkpop.instances import example_fixture
from cdkpop.polycore import (
    MomentSequence,
    Polynomial,
    basis_size,
    enumerate_basis,
    grlex_key,
    monomial_vector,
    poly_eval,
    riesz_apply,
)


def random_poly(rng, n, d, terms=6):
    basis = enumerate_basis(n, d)
    picks = rng.choice(len(basis), size=min(terms, len(basis)), replace=False)
    return Polynomial.from_terms(n, [(basis[i], rng.standard_normal()) for i in picks])


def naive_eval(f, x):
    total = 0.0
    for alpha, c in f.terms.items():
        term = c
        for xi, a in zip(x, alpha):
            for _ in range(a):
                term *= xi
        total += term
    return total


class TestBasis:
    def test_sizes(self):
        assert basis_size(2, 1) == 3
        assert basis_size(2, 2) == 6
        assert basis_size(17, 0) == 1

    def test_matches_binomial(self):
        for n in range(0, 11):
            for d in range(0, 5):
                assert basis_size(n, d) == math.comb(n + d, d)
                assert len(enumerate_basis(n, d)) == basis_size(n, d)

    def test_overflow(self):
        with pytest.raises(OverflowError):
            basis_size(400, 400)

    def test_enumeration(self):
        assert enumerate_basis(2, 1) == ((0, 0), (1, 0), (0, 1))
        assert enumerate_basis(1, 3) == ((0,), (1,), (2,), (3,))
        b = enumerate_basis(3, 2)
        assert len(b) == 10
        assert b[:4] == ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1))

    def test_exhaustive_count(self):
        # brute force over the cube of exponents
        for n, d in [(2, 3), (3, 2), (4, 2)]:
            brute = {a for a in itertools.product(range(d + 1), repeat=n) if sum(a) <= d}
            assert set(enumerate_basis(n, d)) == brute

    def test_strictly_increasing(self):
        b = enumerate_basis(3, 3)
        keys = [grlex_key(a) for a in b]
        assert all(k1 < k2 for k1, k2 in zip(keys, keys[1:]))

    def test_monomial_vector(self):
        assert_allclose(monomial_vector([2.0, 3.0], 2), [1, 2, 3, 4, 6, 9])


class TestPolynomial:
    def test_eval(self):
        x = Polynomial.variable(2, 0)
        f = x * x + Polynomial.variable(2, 1)
        assert poly_eval(f, [2, 3]) == 7
        assert example_fixture().objective([2, 2]) == pytest.approx(-2.0)

    def test_eval_against_naive(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            f = random_poly(rng, 3, 3)
            x = rng.standard_normal(3)
            assert poly_eval(f, x) == pytest.approx(naive_eval(f, x), abs=1e-12)

    def test_square(self):
        x = Polynomial.variable(2, 0)
        assert (x * x).terms == {(2, 0): 1.0}

    def test_constraint_expansion(self):
        x1 = Polynomial.variable(2, 0)
        g = 1 - (x1 - 1) * (x1 - 1)
        assert g.terms == {(2, 0): -1.0, (1, 0): 2.0}

    def test_pruning(self):
        x = Polynomial.variable(1, 0)
        assert (x - x).is_zero()
        assert (x - x).degree() == 0
        assert Polynomial.from_terms(1, [((1,), 1e-15)]).is_zero()

    def test_roundtrip(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            f, g = random_poly(rng, 3, 3), random_poly(rng, 3, 3)
            assert ((f + g) - g).allclose(f, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            Polynomial.variable(2, 0) + Polynomial.variable(3, 0)

    def test_json_roundtrip(self):
        f = example_fixture().objective
        obj = f.to_json()
        assert set(obj) == {"n", "terms"}
        assert Polynomial.from_json(obj).allclose(f, atol=0)

    def test_gradient(self):
        rng = np.random.default_rng(2)
        f = random_poly(rng, 3, 3)
        x = rng.standard_normal(3)
        h = 1e-6
        fd = [(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(3)]
        assert_allclose(f.gradient(x), fd, atol=1e-6)

    def test_embed_restrict(self):
        f = Polynomial.variable(2, 0) * Polynomial.variable(2, 1) + 1
        g = f.embed(4, [1, 3])
        assert g([9.0, 2.0, 9.0, 3.0]) == pytest.approx(7.0)
        assert g.restrict([1, 3]).allclose(f, atol=0)


class TestRiesz:
    def test_constant(self):
        y = MomentSequence.dirac([0.3, 0.1], 2)
        assert riesz_apply(y, Polynomial.constant(2, 5.0)) == pytest.approx(5.0)

    def test_dirac(self):
        y = MomentSequence.dirac([2.0, 2.0], 2)
        f = Polynomial.variable(2, 0) * Polynomial.variable(2, 1)
        assert riesz_apply(y, f) == pytest.approx(4.0)

    def test_example_objective(self):
        from conftest import example_y1

        assert riesz_apply(example_y1(), example_fixture().objective) == pytest.approx(-3.0, abs=2e-3)

    def test_degree_overflow(self):
        y = MomentSequence.dirac([1.0], 2)
        with pytest.raises(ValueError, match="x|3|order|degree"):
            riesz_apply(y, Polynomial.from_terms(1, [((3,), 1.0)]))

    def test_moment_matrix_hankel(self):
        y = MomentSequence(1, 4, np.arange(5.0))
        assert_allclose(y.moment_matrix(2), [[0, 1, 2], [1, 2, 3], [2, 3, 4]])

    def test_json_roundtrip(self):
        y = MomentSequence.dirac([0.5, -1.0], 4)
        z = MomentSequence.from_json(y.to_json())
        assert_allclose(z.values, y.values)


coef = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), coef, coef)
def test_riesz_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    f, g = random_poly(rng, 2, 4), random_poly(rng, 2, 4)
    y = MomentSequence(2, 4, rng.standard_normal(basis_size(2, 4)))
    lhs = riesz_apply(y, f.scale(a) + g.scale(b))
    rhs = a * riesz_apply(y, f) + b * riesz_apply(y, g)
    assert lhs == pytest.approx(rhs, abs=1e-12 * (1 + abs(rhs)) * 100)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=3, max_size=3), st.integers(0, 2**31 - 1))
def test_dirac_riesz_is_evaluation(x, seed):
    rng = np.random.default_rng(seed)
    f = random_poly(rng, 3, 4, terms=8)
    y = MomentSequence.dirac(x, 4)
    assert riesz_apply(y, f) == pytest.approx(poly_eval(f, x), abs=1e-10 * (1 + abs(poly_eval(f, x))))
