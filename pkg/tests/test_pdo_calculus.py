import math

import numpy as np
import pytest
from scipy import sparse

from pdocalc.pdo_calculus import (
    FilteredAlgebraSpec,
    SpanLimitError,
    ad_levels,
    binomial_delta_identity_check,
    build_differential_algebra,
    build_pdo_from_do,
    commutator_tower,
    delta_commutator_family,
    delta_square_identity_check,
    delta_tower,
    pdo_axiom_check,
    scalars_algebra,
    taylor_partial_sum,
    taylor_remainder_family,
    taylor_remainder_order,
    tower_boundedness,
    verify_filtration,
)
from pdocalc.spectral_core import (
    complex_power,
    estimate_analytic_order,
    identity_family,
    index_family,
    power_family,
    shift_family,
)
from pdocalc.weyl_algebra import WeylElement

TAYLOR_SIZES = (64, 128, 256, 512)


# --- commutator towers --------------------------------------------------------


def test_ad_levels_match_dense_commutators(circle):
    rng = np.random.default_rng(1)
    M = rng.standard_normal((12, 12))
    f = circle.values(12)
    F = np.diag(f)
    levels = ad_levels(M, f, 3)
    ref = M
    for k in range(4):
        assert np.allclose(levels[k], ref, rtol=1e-12, atol=1e-9)
        ref = F @ ref - ref @ F


def test_ad_levels_keeps_sparse(circle):
    M = sparse.csr_array(shift_family(circle).matrix(20))
    levels = ad_levels(M, circle.values(20), 2)
    assert all(sparse.issparse(L) for L in levels)
    assert np.allclose(levels[1].toarray(), (ad_levels(M.toarray(), circle.values(20), 1))[1])


def test_commutator_tower_orders(circle):
    T = commutator_tower(shift_family(circle).at(32), 3)
    assert T.max_k == 3
    assert T.level(2).claimed_order == 2
    # [Delta, u] has entries (2n+1) on the subdiagonal
    sub = np.diag(T.levels[1], -1)
    assert np.allclose(sub, 2 * np.arange(1, 32) + 1)


def test_delta_tower_identity_vanishes(circle):
    T = delta_tower(identity_family(circle).at(32), 4)
    assert T.norms[0] == 1
    assert all(v == 0 for v in T.norms[1:])


def test_delta_tower_shift(circle):
    N = 512
    T = delta_tower(shift_family(circle).at(N), 2)
    lam = circle.values(N)
    assert np.allclose(np.diag(T.levels[1].toarray() if sparse.issparse(T.levels[1]) else T.levels[1], -1),
                       np.sqrt(lam[1:]) - np.sqrt(lam[:-1]))
    assert T.norms[1] == pytest.approx(math.sqrt(N**2 + 1) - math.sqrt((N - 1) ** 2 + 1), rel=1e-12)
    assert 0.99 < T.norms[1] < 1
    for M in (64, 128, 256, 512):
        assert delta_tower(shift_family(circle).at(M), 2).norms[2] <= 1


def test_delta_tower_first_entry(circle):
    T = delta_tower(shift_family(circle).at(4), 1)
    L = T.levels[1]
    L = L.toarray() if sparse.issparse(L) else L
    assert L[1, 0] == pytest.approx(math.sqrt(5) - math.sqrt(2))


def test_tower_boundedness(circle):
    rep = tower_boundedness(shift_family(circle), 4, (128, 256, 512))
    assert rep.passed
    assert np.all(np.diff(rep.norms, axis=1) >= -1e-14)


def test_tower_unbounded_generator(circle):
    assert not tower_boundedness(index_family(circle), 1, (64, 128, 256)).passed


def test_delta_commutator_family_orders(circle):
    u = shift_family(circle)
    assert delta_commutator_family(u, 2).claimed_order == 2
    assert delta_commutator_family(u, 2, half=True).claimed_order == 0


# --- Taylor expansion ---------------------------------------------------------


def test_partial_sum_zeroth_term(circle):
    u = shift_family(circle)
    got = taylor_partial_sum(u, 0.7, 0, 16).dense()
    assert np.allclose(got, u.matrix(16) @ complex_power(circle, 0.7, 16).dense())


def test_partial_sum_identity_exact(circle):
    got = taylor_partial_sum(identity_family(circle), -0.5 + 1j, 3, 16).dense()
    assert np.allclose(got, complex_power(circle, -0.5 + 1j, 16).dense(), rtol=1e-14)


def test_partial_sum_closed_form(circle):
    S = taylor_partial_sum(shift_family(circle), 0.5, 1, 32).dense()
    n = np.arange(1, 32)
    expected = np.sqrt(n**2 + 1) + (2 * n + 1) / (2 * np.sqrt(n**2 + 1))
    assert np.allclose(np.diag(S, -1), expected, rtol=1e-14)
    assert np.count_nonzero(S) == 31


def test_remainder_identity_zero(circle):
    R = taylor_remainder_family(identity_family(circle), 0.3 + 0.2j, 0)
    assert np.abs(R.matrix(64)).max() < 1e-13


@pytest.mark.parametrize("n", [0, 1, 2])
def test_remainder_order_shift(circle, n):
    rep = taylor_remainder_order(shift_family(circle), 0.5, n, TAYLOR_SIZES)
    assert rep.predicted_order == -n
    assert rep.passed
    assert rep.sharp
    assert rep.to_dict()["verdict"] == "PASS"


@pytest.mark.parametrize("z", [-1, -0.5, 0.5, 1, 0.5 + 0.5j])
def test_remainder_order_sweep(circle, z):
    for n in range(4):
        rep = taylor_remainder_order(shift_family(circle), z, n, TAYLOR_SIZES)
        assert rep.passed, (z, n)


def test_remainder_fails_with_wrong_claim(circle):
    rep = taylor_remainder_order(shift_family(circle), 0.5, 2, TAYLOR_SIZES, order_Y=-2)
    assert not rep.passed


# --- identities ---------------------------------------------------------------


@pytest.mark.parametrize("k", range(5))
@pytest.mark.parametrize("spec_name", ["circle", "oscillator"])
def test_binomial_identity(request, spec_name, k):
    spec = request.getfixturevalue(spec_name)
    rep = binomial_delta_identity_check(shift_family(spec), k, 128)
    assert rep.passed
    assert rep.max_rel_deviation <= 1e-10


def test_binomial_identity_k1_exact(circle):
    assert binomial_delta_identity_check(shift_family(circle), 1, 64).max_abs_deviation <= 1e-13


def test_binomial_identity_negative_k(circle):
    with pytest.raises(ValueError):
        binomial_delta_identity_check(shift_family(circle), -1, 8)


def test_delta_square_identity(circle, oscillator):
    for spec in (circle, oscillator):
        for fam in (shift_family(spec), shift_family(spec).dagger(), identity_family(spec), index_family(spec)):
            rep = delta_square_identity_check(fam, 128)
            assert rep.passed, (spec.label, fam.label)
    assert delta_square_identity_check(identity_family(circle), 16).max_abs_deviation == 0


def test_identity_report_dict(circle):
    d = delta_square_identity_check(shift_family(circle), 8).to_dict()
    assert d["verdict"] == "PASS" and d["N"] == 8


# --- filtered algebras --------------------------------------------------------


def test_scalars_algebra():
    from pdocalc.spectral_core import circle_spectrum

    alg = scalars_algebra(circle_spectrum(), 3)
    assert [len(alg.level(k)) for k in range(4)] == [1, 1, 1, 1]


def test_weyl_algebra_spans():
    x, d = WeylElement.x(1, 1), WeylElement.d(1, 1)
    alg = build_differential_algebra(FilteredAlgebraSpec([(x, 1), (d, 1)]), 3)
    assert alg.symbolic
    assert [len(alg.level(k)) for k in range(4)] == [1, 3, 7, 17]
    for k in range(4):
        assert all(e.element.order <= k for e in alg.level(k))
    assert verify_filtration(alg).passed


def test_weyl_wrong_degree_fails():
    x = WeylElement.x(1, 1)
    alg = build_differential_algebra(FilteredAlgebraSpec([(x * x, 1)]), 1)
    assert not verify_filtration(alg).passed


def test_circle_algebra_depth_one(circle):
    u = shift_family(circle).named("u")
    Du = index_family(circle) @ u - u @ index_family(circle)
    alg = build_differential_algebra(FilteredAlgebraSpec([(u, 0, "u"), (Du.named("[D,u]"), 0, "[D,u]")]), 1)
    words = [e.word for e in alg.new_at(1)]
    assert "[Delta,u]" in words
    ver = verify_filtration(alg, (256, 512, 1024))
    assert ver.passed
    assert {r["word"] for r in ver.rows()} >= {"[Delta,u]"}


def test_span_limit(circle):
    u = shift_family(circle)
    with pytest.raises(SpanLimitError):
        build_differential_algebra(FilteredAlgebraSpec([(u, 0, "u"), (u.dagger(), 0, "v")], closure_depth=4, max_span=5), 1)


def test_negative_degree_rejected(circle):
    with pytest.raises(ValueError):
        build_differential_algebra(FilteredAlgebraSpec([(shift_family(circle), -1)]), 1)


def test_pdo_from_scalars(circle):
    alg = scalars_algebra(circle, 0)
    span = build_pdo_from_do(alg, 0, -10, (64, 128, 256), z_values=[0, 1j, -2j])
    assert span.passed and len(span.elements) == 3
    assert span.rows()[0]["remainder"] == "Op^-10"


def test_pdo_shift_minus_two(circle):
    u = shift_family(circle)
    alg = build_differential_algebra(FilteredAlgebraSpec([(u, 0, "u")], closure_depth=1), 0)
    span = build_pdo_from_do(alg, -2, -10, (128, 256, 512), z_values=[-2])
    assert span.passed
    assert any(e.word.startswith("(u)") for e in span.elements)


def test_pdo_rejects_large_re_z(circle):
    with pytest.raises(ValueError):
        build_pdo_from_do(scalars_algebra(circle, 0), 0, -10, (8, 16, 32), z_values=[0.5])


def test_commutator_axiom(circle):
    P = shift_family(circle) @ power_family(circle, -1)
    comm = power_family(circle, 0.5) @ P - P @ power_family(circle, 0.5)
    assert estimate_analytic_order(comm, -2, (128, 256, 512)).passed
    assert pdo_axiom_check(P, 1, -2, (128, 256, 512)).passed
