"""Shared generators and the polynomial-action oracle for the Weyl tests."""

import random
from fractions import Fraction
from itertools import product

from hypothesis import strategies as st

from pdocalc.weyl_algebra import WeylElement


def random_weyl(rng: random.Random, n: int, max_order: int, max_terms: int = 4) -> WeylElement:
    """Random element with small rational coefficients and order <= max_order."""
    terms = {}
    for _ in range(rng.randint(1, max_terms)):
        total = rng.randint(0, max_order)
        degs = [0] * (2 * n)
        for _ in range(total):
            degs[rng.randrange(2 * n)] += 1
        key = (tuple(degs[:n]), tuple(degs[n:]))
        terms[key] = Fraction(rng.randint(-5, 5) or 1, rng.randint(1, 4))
    return WeylElement(terms, n)


@st.composite
def weyl_elements(draw, n=None, max_order=3):
    n = draw(st.integers(1, 3)) if n is None else n
    seed = draw(st.integers(0, 2**32 - 1))
    return random_weyl(random.Random(seed), n, max_order)


# --- polynomial-action oracle -------------------------------------------------
# Polynomials in x_1..x_n as {exponent tuple: Fraction}; x_i multiplies and
# d_i differentiates.  This evaluates a Weyl element term by term (x^a d^b)
# without any normal-ordering rule, so it checks products independently.


def _apply_monomial(alpha, beta, poly):
    out = {}
    for expo, c in poly.items():
        e = list(expo)
        coeff = c
        ok = True
        for i, b in enumerate(beta):
            for _ in range(b):
                if e[i] == 0:
                    ok = False
                    break
                coeff *= e[i]
                e[i] -= 1
            if not ok:
                break
        if not ok:
            continue
        e = tuple(ei + ai for ei, ai in zip(e, alpha))
        out[e] = out.get(e, 0) + coeff
    return {k: v for k, v in out.items() if v != 0}


def apply_element(A: WeylElement, poly):
    out = {}
    for (alpha, beta), c in A.terms.items():
        for e, v in _apply_monomial(alpha, beta, poly).items():
            out[e] = out.get(e, 0) + c * v
    return {k: v for k, v in out.items() if v != 0}


def probe_polynomials(n, degree=4):
    """Monomials up to the given degree per variable; enough to separate
    elements of order <= degree."""
    return [{e: Fraction(1)} for e in product(range(degree + 1), repeat=n)]
