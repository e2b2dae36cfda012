import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import apply_element, probe_polynomials, random_weyl, weyl_elements
from pdocalc.weyl_algebra import (
    GaussianRational,
    HermiteRealization,
    WeylElement,
    WeylParseError,
    commutator,
    filtration_check,
    harmonic_oscillator,
    homomorphism_check,
    multiply,
    parse,
    realize,
    weyl_family,
)

x = WeylElement.x(1, 1)
d = WeylElement.d(1, 1)
one = WeylElement.one(1)
Delta = harmonic_oscillator(1)


def compose_action(A, B, poly):
    return apply_element(A, apply_element(B, poly))


# --- normal ordering ----------------------------------------------------------


def test_ccr():
    assert d * x == x * d + 1


def test_x_squared():
    assert x * x == x**2
    assert (x * x).terms == {((2,), (0,)): Fraction(1)}


def test_d2_x():
    assert d**2 * x == x * d**2 + 2 * d


def test_d2_x_against_oracle():
    lhs = d**2 * x
    for p in probe_polynomials(1):
        assert apply_element(lhs, p) == compose_action(d**2, x, p)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(weyl_elements(n), weyl_elements(n))))
def test_product_matches_polynomial_action(pair):
    A, B = pair
    AB = A * B
    for p in probe_polynomials(A.n, degree=3 if A.n < 3 else 2):
        assert apply_element(AB, p) == compose_action(A, B, p)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(weyl_elements(n), weyl_elements(n), weyl_elements(n))))
def test_associativity_exact(triple):
    A, B, C = triple
    left = (A * B) * C
    assert left == A * (B * C)
    assert left.is_rational()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(weyl_elements(n, 5), weyl_elements(n, 5))))
def test_product_order_bound(pair):
    A, B = pair
    assert (A * B).order <= A.order + B.order


def test_normal_form_invariants():
    A = parse("d1*x1*d2*x2 - x2*d2")
    for (alpha, beta), c in A.terms.items():
        assert c != 0
    assert A == parse("x1*d1*x2*d2 + x1*d1 + 1")


def test_zero_coefficients_dropped():
    A = WeylElement({((1,), (0,)): 0, ((0,), (1,)): 3}, 1)
    assert list(A.terms) == [((0,), (1,))]
    assert WeylElement.zero(1).order == float("-inf")


def test_variable_mismatch():
    with pytest.raises(ValueError):
        multiply(WeylElement.x(1, 1), WeylElement.x(1, 2))
    with pytest.raises(ValueError):
        WeylElement.x(2, 1)


def test_immutable():
    with pytest.raises(AttributeError):
        x.n = 2


def test_gaussian_coefficients():
    i = GaussianRational(Fraction(0), Fraction(1))
    A = x * i
    assert not A.is_rational()
    assert (A * A) == -(x**2)


# --- commutators and filtration -----------------------------------------------


def test_delta_x():
    assert commutator(Delta, x) == -2 * d


def test_delta_xd():
    assert commutator(Delta, x * d) == -2 * x**2 - 2 * d**2


def test_delta_commutators_against_oracle():
    for A in (x, x * d, x**2 * d):
        C = commutator(Delta, A)
        for p in probe_polynomials(1, 5):
            lhs = apply_element(C, p)
            rhs = compose_action(Delta, A, p)
            for k, v in compose_action(A, Delta, p).items():
                rhs[k] = rhs.get(k, 0) - v
            assert lhs == {k: v for k, v in rhs.items() if v != 0}


def test_commuting_generators():
    assert commutator(x, x**2).is_zero()


@pytest.mark.parametrize(
    "A,orders",
    [(x, (1, 1)), (one, (0, float("-inf"))), (x**2 * d, (3, 3)), (x * d, (2, 2))],
)
def test_filtration_examples(A, orders):
    rep = filtration_check(A)
    assert (rep.order, rep.commutator_order) == orders
    assert rep.passed
    assert rep.to_dict()["verdict"] == "PASS"


def test_filtration_random_sweep():
    rng = random.Random(7)
    for _ in range(100):
        A = random_weyl(rng, rng.randint(1, 3), 5)
        assert filtration_check(A).passed


def test_general_commutator_defect_can_fail():
    # order([A,B]) <= order(A)+order(B)-1 is specific to B = Delta-like pairs;
    # for the Weyl algebra the defect bound is order(A)+order(B)-2 in general
    C = commutator(x**2, d**2)
    assert C.order == 2


# --- parser -------------------------------------------------------------------


def test_parse_text_syntax():
    A = parse("2*x1^2*d1 - d2^2 + 1")
    assert A.n == 2
    assert A.terms == {
        ((2, 0), (1, 0)): Fraction(2),
        ((0, 0), (0, 2)): Fraction(-1),
        ((0, 0), (0, 0)): Fraction(1),
    }


def test_parse_normal_orders():
    assert parse("d1*x1") == x * d + 1
    assert parse("d*x") == x * d + 1


def test_parse_delta_and_brackets():
    assert parse("[Delta, x1]") == -2 * d
    assert parse("Delta", n=2) == harmonic_oscillator(2)


def test_parse_fractions_and_imag():
    assert parse("x1/2") == x * Fraction(1, 2)
    assert parse("0.5*d1") == d * Fraction(1, 2)
    assert not parse("I*x1").is_rational()


def test_str_roundtrip():
    rng = random.Random(3)
    for _ in range(50):
        A = random_weyl(rng, rng.randint(1, 3), 4)
        assert parse(str(A), n=A.n) == A


@pytest.mark.parametrize(
    "text,pos",
    [("x1 + $", 5), ("x1 * (d1", 8), ("x1 ^ 1.5", 5), ("x0", 0), ("x1 x1", 3), ("x1 / d1", 3)],
)
def test_parse_errors_carry_position(text, pos):
    with pytest.raises(WeylParseError) as err:
        parse(text)
    assert err.value.position == pos


def test_parse_index_exceeds_n():
    with pytest.raises(WeylParseError) as err:
        parse("x1 + d3", n=2)
    assert err.value.position == 5


# --- Hermite realization ------------------------------------------------------


def test_realize_delta_spectrum():
    R = HermiteRealization(1, 32)
    M = R.interior(realize(Delta, R).matrix, 2)
    k = np.arange(M.shape[0])
    assert np.allclose(M, np.diag(2 * k + 2), atol=1e-12)
    assert np.allclose(np.linalg.eigvalsh(M), 2 * k + 2, atol=1e-10)


def test_realize_identity_and_ccr():
    R = HermiteRealization(2, 6)
    assert np.array_equal(realize(WeylElement.one(2), R).matrix, np.eye(36))
    C = realize(commutator(WeylElement.d(1, 2), WeylElement.x(1, 2)), R).matrix
    assert np.allclose(C, np.eye(36))
    raw = R.d(1) @ R.x(1) - R.x(1) @ R.d(1)
    assert np.allclose(R.interior(raw, 1), np.eye(int(R.interior_mask(1).sum())), atol=1e-12)


def test_realize_claimed_order():
    R = HermiteRealization(1, 8)
    assert realize(x**2 * d, R).claimed_order == 3
    assert realize(WeylElement.zero(1), R).claimed_order == 0


def test_multivariable_spectrum_sorted():
    R = HermiteRealization(2, 5)
    assert np.all(np.diff(R.spectrum.values(R.dim)) >= 0)
    M = R.interior(realize(harmonic_oscillator(2), R).matrix, 2)
    lam = R.spectrum.values(R.dim)[R.interior_mask(2)]
    assert np.allclose(M, np.diag(lam), atol=1e-12)


@pytest.mark.parametrize("A,B", [(d, x), (x, x), (Delta, x * d)])
def test_homomorphism_examples(A, B):
    rep = homomorphism_check(A, B, HermiteRealization(1, 16))
    assert rep.max_deviation <= 1e-10
    assert rep.interior_size > 0


def test_homomorphism_random_pairs():
    rng = random.Random(11)
    for _ in range(20):
        n = rng.randint(1, 2)
        A, B = random_weyl(rng, n, 3), random_weyl(rng, n, 3)
        rep = homomorphism_check(A, B, HermiteRealization(n, 12))
        assert rep.relative_deviation <= 1e-10


def test_homomorphism_cutoff_too_small():
    with pytest.raises(ValueError):
        homomorphism_check(x**2, d**2, HermiteRealization(1, 4))


def test_weyl_family_nested():
    fam = weyl_family(x + d)
    M = fam.matrix(40)
    assert np.allclose(fam.matrix(20), M[:20, :20])
    assert fam.claimed_order == 1
    with pytest.raises(ValueError):
        weyl_family(WeylElement.x(1, 2))
