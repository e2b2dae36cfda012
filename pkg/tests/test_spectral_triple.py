import json

import numpy as np
import pytest
from scipy import sparse

from pdocalc.spectral_triple import (
    TripleError,
    bounded_commutator_check,
    circle_triple,
    compact_resolvent_check,
    flat_triple,
    graded_tensor,
    load_triple,
    nonexample_triple,
    oscillator_triple,
    parity,
    product_regularity_check,
    product_square_split,
    product_triple,
    regularity_probe,
    sample_elements,
    singular_values,
    tensor_commutator_identity,
    triple_from_config,
    trivial_triple,
)

SMALL = (16, 32, 64)


# --- structure ----------------------------------------------------------------


@pytest.mark.parametrize("factory", [circle_triple, flat_triple, nonexample_triple, oscillator_triple, trivial_triple])
def test_structure_exact(factory):
    T = factory()
    for N in (4, 17):
        assert T.validate(N).passed


def test_circle_truncations_nested():
    T = circle_triple()
    small, big = T.at(5), T.at(9)
    d = small.dim
    assert np.array_equal(big.dirac.toarray()[:d, :d], small.dirac.toarray())
    assert np.array_equal(big.delta[:d], small.delta)
    assert np.array_equal(big.generators["u"].toarray()[:d, :d], small.generators["u"].toarray())


def test_circle_delta():
    t = circle_triple().at(3)
    n = np.array([v for v, _ in t.basis])
    assert np.array_equal(t.delta, n**2 + 1.0)
    assert t.dim == 14


def test_oscillator_delta():
    t = oscillator_triple().at(6)
    expected = sorted([2 * k + 1 for k in range(7)] + [2 * k + 3 for k in range(6)])
    assert sorted(t.delta.tolist()) == pytest.approx(expected)
    assert np.all(np.diff(t.delta) >= 0)


def test_config_triple(tmp_path):
    cfg = {"label": "c2", "dirac": "circle", "grading": "standard", "generators": [{"name": "w", "rule": "u^2 + v"}], "sizes": [8, 16, 32]}
    path = tmp_path / "t.json"
    path.write_text(json.dumps(cfg))
    T = load_triple(str(path))
    assert T.label == "c2" and T.sizes == (8, 16, 32)
    assert T.generator_names == ["w"]
    assert T.validate(8).passed


def test_config_ungraded_product_rejected():
    T = triple_from_config({"dirac": "circle", "grading": None})
    with pytest.raises(TripleError):
        product_triple(T, circle_triple())


@pytest.mark.parametrize(
    "cfg",
    [{}, {"dirac": "torus"}, {"dirac": "circle", "grading": "odd"}, {"dirac": "circle", "generators": [{"name": "g"}]}],
)
def test_bad_configs(cfg):
    with pytest.raises(TripleError):
        triple_from_config(cfg)


def test_unknown_ref():
    with pytest.raises(TripleError):
        load_triple("nowhere")


# --- bounded commutators ------------------------------------------------------


def test_circle_commutator_norm_one():
    rep = bounded_commutator_check(circle_triple(), SMALL)
    assert rep.passed
    assert np.allclose(rep.norms["u"], 1.0)


def test_identity_commutator_zero():
    rep = bounded_commutator_check(circle_triple({"one": "I"}), SMALL)
    assert rep.passed and all(v == 0 for v in rep.norms["one"])


def test_unbounded_commutator_fails():
    rep = bounded_commutator_check(circle_triple({"a": "D0*u"}), SMALL)
    assert not rep.passed
    assert rep.rows()[0]["verdict"] == "FAIL"


# --- compactness --------------------------------------------------------------


def test_singular_values_match_dense():
    rng = np.random.default_rng(0)
    A = sparse.random_array((50, 50), density=0.05, rng=rng, format="csr")
    assert np.allclose(singular_values(A), np.linalg.svd(A.toarray(), compute_uv=False), atol=1e-10)
    B = sparse.diags_array([rng.standard_normal(80) for _ in range(3)], offsets=[-1, 0, 2], shape=(80, 80))
    assert np.allclose(singular_values(B), np.linalg.svd(B.toarray(), compute_uv=False), atol=1e-10)


def test_circle_compact():
    rep = compact_resolvent_check(circle_triple())
    assert rep.passed
    # singular values of u (D + i)^{-1} are (n^2 + 1)^{-1/2}; the largest sits at n = 0
    assert rep.ratios["u"][-1] == pytest.approx(1 / np.sqrt(2048**2 + 1), rel=1e-9)


def test_zero_generator_compact():
    assert compact_resolvent_check(circle_triple({"z": "0*u"}), (8, 16, 32)).passed


def test_flat_not_compact():
    rep = compact_resolvent_check(flat_triple())
    assert not rep.passed
    assert rep.ratios["u"][-1] == pytest.approx(1.0)


def test_finite_dimensional_compact():
    assert compact_resolvent_check(trivial_triple()).passed


def test_finite_rank_generator():
    rep = compact_resolvent_check(oscillator_triple({"P0": "P0"}), (64, 128, 256))
    assert rep.finite_rank("P0") and rep.passed


def test_compact_report_dict():
    # 1/sqrt(32^2 + 1) is still above the threshold
    d = compact_resolvent_check(circle_triple(), (8, 16, 32)).to_dict()
    assert d["verdict"] == "FAIL" and d["threshold"] == 1e-3
    assert len(d["rows"]) == 3


# --- regularity probe ---------------------------------------------------------


def test_circle_regular():
    rep = regularity_probe(circle_triple(), 4)
    assert rep.passed
    assert 0.9 <= rep.norm("u", "a", 1, 512) <= 1.0


def test_trivial_regular():
    rep = regularity_probe(trivial_triple(), 3)
    assert rep.passed
    assert all(v == 0 for e in rep.entries if e.k > 0 for v in e.norms)


def test_nonexample_fails_early():
    rep = regularity_probe(nonexample_triple(), 2)
    assert not rep.passed
    assert rep.first_failure_k is not None and rep.first_failure_k <= 2


def test_oscillator_regular():
    assert regularity_probe(oscillator_triple(), 3, (64, 128, 256)).passed


def test_probe_rejects_bad_sizes():
    with pytest.raises(ValueError):
        regularity_probe(circle_triple(), 2, (16, 32))
    with pytest.raises(ValueError):
        regularity_probe(circle_triple(), -1)


def test_probe_rows():
    rep = regularity_probe(circle_triple(), 1, (8, 16, 32))
    rows = rep.rows()
    assert len(rows) == 2 * 2 * 3
    assert rep.to_dict()["verdict"] == "PASS"


# --- products -----------------------------------------------------------------


def test_square_split_exact():
    rep = product_square_split(circle_triple(), circle_triple(), 8)
    assert rep.square_deviation == 0 and rep.anticommutator == 0 and rep.passed


def test_product_structure():
    P = product_triple(circle_triple(), circle_triple(), SMALL)
    for N in (4, 8):
        assert P.validate(N).passed


def test_product_delta_eigenvalues():
    P = product_triple(circle_triple(), circle_triple(), SMALL)
    t = P.at(3)
    c = circle_triple().at(3)
    m = np.array([c.basis[i][0] for i, _ in t.basis])
    n = np.array([c.basis[j][0] for _, j in t.basis])
    assert np.array_equal(t.delta, m**2 + n**2 + 1.0)
    D = t.dirac.toarray()
    assert np.allclose(np.sort(np.linalg.eigvalsh(D @ D)) + 1, np.sort(t.delta))


def test_product_with_trivial():
    P = product_triple(circle_triple(), trivial_triple(), SMALL)
    t, c = P.at(5), circle_triple().at(5)
    assert np.array_equal(t.dirac.toarray(), c.dirac.toarray())
    assert np.array_equal(t.delta, c.delta)


def test_parity_and_graded_tensor():
    t = circle_triple().at(3)
    u = t.generators["u"]
    assert parity(u, t.grading) == 0
    assert parity(t.dirac, t.grading) == 1
    with pytest.raises(TripleError):
        parity(u + t.dirac, t.grading)
    M = graded_tensor(u, t.dirac, t.grading, 1)
    ref = sparse.kron(u @ sparse.diags_array(t.grading), t.dirac)
    assert abs(M - ref).max() == 0


def test_tensor_identity_examples():
    t = circle_triple().at(8)
    I = sparse.identity(t.dim, format="csr")
    assert tensor_commutator_identity(t, t, I, I).max_abs_deviation == 0
    u = t.generators["u"]
    row = tensor_commutator_identity(t, t, u, t.commutator_with_dirac(u))
    assert row.max_rel_deviation <= 1e-10


def test_sample_elements_degrees():
    t = circle_triple().at(4)
    elems = sample_elements(t, 2)
    assert {d for _, _, d in elems} == {0, 1, 2}
    assert elems[0][0] == "1"


def test_product_regularity_check():
    rep = product_regularity_check(circle_triple(), circle_triple(), 1, 1)
    assert rep.identity_passed and rep.order_passed
    assert rep.probe is not None and rep.probe.passed
    assert rep.to_dict()["verdict"] == "PASS"


def test_product_transfers_regularity():
    T = circle_triple()
    assert regularity_probe(T, 3, SMALL).max_slope < 0.02
    assert regularity_probe(product_triple(T, T, SMALL), 3, SMALL).passed
