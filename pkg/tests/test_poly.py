import math

import numpy as np
import pytest

from sosbound.poly import (
    ONE,
    Exponent,
    Polynomial,
    affine_substitute,
    basis_up_to_degree,
    index_products,
)


def x(i):
    return Polynomial.variable(i)


def test_difference_of_squares():
    p = (x(1) + 1) * (x(1) - 1)
    assert p == Polynomial({Exponent([(1, 2)]): 1.0, ONE: -1.0})


def test_additive_cancellation_gives_empty_map():
    p = x(1) * 3.5 + Polynomial.constant(2.0)
    q = p + p * (-1.0)
    assert q.is_zero()
    assert len(q) == 0


def test_cube_expansion_matches_binomial_oracle():
    p = (x(1) + x(2)) * (x(1) + x(2)) * (x(1) + x(2))
    for k in range(4):
        e = Exponent({1: 3 - k, 2: k})
        assert p.coeff(e) == pytest.approx(math.comb(3, k), abs=1e-12)
    assert len(p) == 4


def test_tiny_coefficients_dropped():
    p = x(0) + Polynomial({Exponent([(0, 1)]): -1.0 + 1e-16})
    assert p.is_zero()


def test_degree_and_variables():
    p = x(0) * x(3) * x(3) + 2.0
    assert p.degree() == 3
    assert p.variables() == (0, 3)


def test_evaluate_and_batch_agree():
    p = 2.0 * x(0) * x(1) - x(1) * x(1) + 0.5
    pts = np.array([[0.3, -1.2], [1.0, 2.0], [0.0, 0.0]])
    single = [p.evaluate(pt) for pt in pts]
    assert np.allclose(p.evaluate_batch(pts), single)


def test_commutativity_and_associativity_on_random_triples():
    rng = np.random.default_rng(7)
    for _ in range(20):
        polys = []
        for _ in range(3):
            terms = {}
            for _ in range(4):
                e = Exponent({int(rng.integers(0, 3)): int(rng.integers(1, 3))})
                terms[e] = float(rng.normal())
            polys.append(Polynomial(terms))
        a, b, c = polys
        pt = rng.normal(size=3)
        assert (a * b).evaluate(pt) == pytest.approx((b * a).evaluate(pt), abs=1e-12)
        assert ((a * b) * c).evaluate(pt) == pytest.approx(
            (a * (b * c)).evaluate(pt), rel=1e-12, abs=1e-12
        )


def test_basis_degree_one_ordering():
    basis = basis_up_to_degree({1, 2}, 1)
    assert basis == (ONE, Exponent([(1, 1)]), Exponent([(2, 1)]))


def test_basis_single_variable():
    basis = basis_up_to_degree({1}, 2)
    assert basis == (ONE, Exponent([(1, 1)]), Exponent([(1, 2)]))


@pytest.mark.parametrize("nvars,deg", [(3, 2), (2, 4), (4, 1), (1, 0)])
def test_basis_count_is_binomial(nvars, deg):
    basis = basis_up_to_degree(range(nvars), deg)
    assert len(basis) == math.comb(nvars + deg, deg)
    assert len(set(basis)) == len(basis)


def test_index_products_two_element_basis():
    basis = (ONE, Exponent([(1, 1)]))
    prods = index_products(basis)
    assert sorted(prods[Exponent([(1, 1)])]) == [(0, 1), (1, 0)]
    assert prods[ONE] == [(0, 0)]
    assert prods[Exponent([(1, 2)])] == [(1, 1)]


def test_index_products_distinct_alpha_count():
    basis = basis_up_to_degree({1, 2}, 1)
    prods = index_products(basis)
    assert len(prods) == 6  # 1, x1, x2, x1^2, x1 x2, x2^2


def test_index_products_total_pairs_is_square():
    basis = basis_up_to_degree({0, 1, 4}, 1)[:5]
    prods = index_products(basis)
    assert sum(len(v) for v in prods.values()) == 25


def test_gram_identity_random():
    rng = np.random.default_rng(3)
    basis = basis_up_to_degree({0, 1, 2}, 2)
    n = len(basis)
    Q = rng.normal(size=(n, n))
    Q = 0.5 * (Q + Q.T)
    point = rng.normal(size=3)
    mvec = np.array([Polynomial.monomial(e).evaluate(point) for e in basis])
    direct = float(mvec @ Q @ mvec)
    via_pairs = 0.0
    for alpha, pairs in index_products(basis).items():
        q_sum = sum(Q[i, j] for i, j in pairs)
        via_pairs += q_sum * Polynomial.monomial(alpha).evaluate(point)
    assert direct == pytest.approx(via_pairs, rel=1e-10, abs=1e-10)


def test_affine_substitute_matches_direct_evaluation():
    rng = np.random.default_rng(11)
    p = 1.5 * x(0) * x(0) * x(1) - 2.0 * x(1) + 0.25
    shift = rng.normal(size=2)
    scale = rng.uniform(0.5, 2.0, size=2)
    q = affine_substitute(p, shift, scale)
    for _ in range(10):
        t = rng.normal(size=2)
        expected = p.evaluate(shift + scale * t)
        assert q.evaluate(t) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_text_rendering():
    p = x(1) * x(1) - 1.0
    assert p.to_text() == "-1 + x1^2"
    assert Polynomial.zero().to_text() == "0"
    assert (2.5 * x(0) * x(2) * x(2)).to_text() == "2.5 x0 x2^2"


def test_exponent_rejects_bad_powers():
    with pytest.raises(ValueError):
        Exponent([(0, -1)])
    with pytest.raises(ValueError):
        Exponent([(0, 1), (0, 2)])
