"""Commutator towers, Taylor expansion of ``Delta^z Y`` and filtered spans.

``Delta`` is diagonal in the working basis, so ``[Delta, Y]`` and
``[Delta^{1/2}, Y]`` act entrywise and are exact at every truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from . import _kernels
from .spectral_core import (
    DEFAULT_S_GRID,
    SIGMA_CAP,
    OperatorFamily,
    OrderReport,
    TruncatedOperator,
    binom,
    estimate_analytic_order,
    identity_family,
    loglog_slope,
    operator_norm,
    power_family,
)
from .weyl_algebra import WeylElement, harmonic_oscillator, weyl_family

IDENTITY_TOL = 1e-10


class SpanLimitError(RuntimeError):
    """A spanning set outgrew the configured cap."""


# ---------------------------------------------------------------------------
# entrywise commutators with functions of Delta


def ad_levels(M, f: np.ndarray, max_k: int) -> list:
    """``[ad_F^k(M) for k in 0..max_k]`` with ``F = diag(f)``.

    Sparse input stays sparse (same pattern); dense input stays dense.
    """
    if sparse.issparse(M):
        coo = sparse.coo_array(M)
        levels = _kernels.commutator_levels(coo.row, coo.col, coo.data, f, max_k)
        return [sparse.csr_array((levels[k], (coo.row, coo.col)), shape=M.shape) for k in range(max_k + 1)]
    M = np.asarray(M)
    rows, cols = np.nonzero(M)
    levels = _kernels.commutator_levels(rows, cols, M[rows, cols], f, max_k)
    out = []
    for k in range(max_k + 1):
        L = np.zeros(M.shape, dtype=levels.dtype)
        L[rows, cols] = levels[k]
        out.append(L)
    return out


def delta_commutator_family(Y: OperatorFamily, k: int = 1, half: bool = False) -> OperatorFamily:
    """``ad_Delta^k(Y)`` (or ``delta^k(Y)`` with ``half=True``) as a family."""
    spectrum = Y.spectrum

    def build(N):
        lam = spectrum.values(N)
        return ad_levels(Y.matrix(N), np.sqrt(lam) if half else lam, k)[k]

    name = "delta" if half else "ad"
    order = Y.claimed_order if half else Y.claimed_order + k
    return OperatorFamily(spectrum, build, order, Y.bandwidth, f"{name}^{k}({Y.label})")


@dataclass(frozen=True, eq=False)
class CommutatorTower:
    """``Y^(0) = Y`` and ``Y^(k) = [Delta, Y^(k-1)]`` at one truncation."""

    base: TruncatedOperator
    levels: list

    @property
    def max_k(self) -> int:
        return len(self.levels) - 1

    def level(self, k: int) -> TruncatedOperator:
        return TruncatedOperator(self.levels[k], self.base.spectrum, self.base.claimed_order + k)


def commutator_tower(Y: TruncatedOperator, max_k: int) -> CommutatorTower:
    return CommutatorTower(Y, ad_levels(Y.matrix, Y.eigenvalues, max_k))


@dataclass(frozen=True, eq=False)
class DeltaTower:
    """``delta^k(b)`` for ``delta = [Delta^{1/2}, -]`` at one truncation."""

    base: TruncatedOperator
    levels: list

    @property
    def max_k(self) -> int:
        return len(self.levels) - 1

    @property
    def norms(self) -> list[float]:
        return [operator_norm(L) for L in self.levels]


def delta_tower(b: TruncatedOperator, K: int) -> DeltaTower:
    return DeltaTower(b, ad_levels(b.matrix, np.sqrt(b.eigenvalues), K))


@dataclass(frozen=True, eq=False)
class TowerBoundedness:
    """Norms ``||delta^k(b)||`` over truncations with per-level slope verdicts."""

    sizes: tuple[int, ...]
    norms: np.ndarray  # shape (max_k + 1, len(sizes))
    slopes: np.ndarray
    slope_tol: float = 0.05

    @property
    def passed_levels(self) -> list[bool]:
        return [bool(s < self.slope_tol) for s in self.slopes]

    @property
    def passed(self) -> bool:
        return all(self.passed_levels)


def tower_boundedness(b: OperatorFamily, max_k: int, sizes: Sequence[int], slope_tol: float = 0.05) -> TowerBoundedness:
    sizes = tuple(sizes)
    norms = np.array([delta_tower(b.at(N), max_k).norms for N in sizes]).T
    slopes = np.array([loglog_slope(sizes, row) for row in norms])
    return TowerBoundedness(sizes, norms, slopes, slope_tol)


# ---------------------------------------------------------------------------
# Taylor expansion


def _as_truncated(Y, N):
    if isinstance(Y, OperatorFamily):
        return Y.at(N)
    if N is not None and Y.N != N:
        raise ValueError(f"operator has size {Y.N}, truncation {N} requested")
    return Y


def taylor_partial_sum(Y, z, n: int, N: int | None = None) -> TruncatedOperator:
    """``sum_{k<=n} binom(z, k) Y^(k) Delta^{z-k}`` at truncation ``N``."""
    Yn = _as_truncated(Y, N)
    lam = Yn.eigenvalues
    tower = ad_levels(Yn.dense(), lam, n)
    z = complex(z)
    real = z.imag == 0
    zz = z.real if real else z
    out = np.zeros(tower[0].shape, dtype=np.float64 if real and not np.iscomplexobj(tower[0]) else np.complex128)
    for k in range(n + 1):
        coeff = binom(zz, k)
        if coeff == 0:
            continue
        out = out + coeff * tower[k] * _power_row(lam, zz - k)[None, :]
    return TruncatedOperator(out, Yn.spectrum, Yn.claimed_order + 2 * z.real)


def _power_row(lam, w):
    w = complex(w)
    if w.imag == 0:
        return lam**w.real
    return lam**w.real * np.exp(1j * w.imag * np.log(lam))


def taylor_remainder_family(Y: OperatorFamily, z, n: int) -> OperatorFamily:
    """``R_n = Delta^z Y - taylor_partial_sum(Y, z, n)`` as a family."""
    spectrum = Y.spectrum
    z = complex(z)

    def build(N):
        Yn = Y.at(N)
        lam = spectrum.values(N)
        lead = _power_row(lam, z if z.imag else z.real)[:, None] * Yn.dense()
        return lead - taylor_partial_sum(Yn, z, n).matrix

    return OperatorFamily(
        spectrum,
        build,
        Y.claimed_order + 2 * z.real - n - 1,
        Y.bandwidth,
        f"R_{n}(Delta^z {Y.label})",
    )


@dataclass(frozen=True, eq=False)
class TaylorReport:
    z: complex
    n: int
    predicted_order: float
    at_prediction: OrderReport
    sharpness: OrderReport

    @property
    def passed(self) -> bool:
        return self.at_prediction.passed

    @property
    def sharp(self) -> bool:
        """The remainder fails two orders below the prediction."""
        return not self.sharpness.passed

    def to_dict(self) -> dict:
        return {
            "z": [self.z.real, self.z.imag],
            "n": self.n,
            "predicted_order": self.predicted_order,
            "verdict": "PASS" if self.passed else "FAIL",
            "sharp": self.sharp,
            "at_prediction": self.at_prediction.to_dict(),
            "below_prediction": self.sharpness.to_dict(),
        }


def taylor_remainder_order(
    Y: OperatorFamily,
    z,
    n: int,
    sizes: Sequence[int],
    order_Y: float | None = None,
    s_grid=DEFAULT_S_GRID,
) -> TaylorReport:
    """Slope test of the remainder at ``order(Y) + 2 Re z - n - 1`` and two below."""
    z = complex(z)
    t_Y = Y.claimed_order if order_Y is None else order_Y
    predicted = t_Y + 2 * z.real - n - 1
    R = taylor_remainder_family(Y, z, n)
    at = estimate_analytic_order(R, predicted, sizes, s_grid)
    below = estimate_analytic_order(R, predicted - 2, sizes, s_grid)
    return TaylorReport(z, n, predicted, at, below)


# ---------------------------------------------------------------------------
# algebraic identities


@dataclass(frozen=True)
class IdentityReport:
    name: str
    N: int
    max_abs_deviation: float
    max_rel_deviation: float
    tol: float = IDENTITY_TOL

    @property
    def passed(self) -> bool:
        return self.max_rel_deviation <= self.tol

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "N": self.N,
            "max_abs_deviation": self.max_abs_deviation,
            "max_rel_deviation": self.max_rel_deviation,
            "tol": self.tol,
            "verdict": "PASS" if self.passed else "FAIL",
        }


def _commutator_with(S: np.ndarray, X: np.ndarray) -> np.ndarray:
    return S @ X - X @ S


def _compare(name, N, lhs, rhs, interior, scale=None):
    if interior is not None:
        lhs = lhs[:interior, :interior]
        rhs = rhs[:interior, :interior]
    diff = float(np.abs(lhs - rhs).max()) if lhs.size else 0.0
    if scale is None:
        scale = float(np.abs(lhs).max()) if lhs.size else 0.0
    rel = diff / scale if scale > 0 else diff
    return IdentityReport(name, N, diff, rel)


def binomial_delta_identity_check(b, k: int, N: int | None = None, interior: int | None = None) -> IdentityReport:
    """``Delta^{k/2} b`` against ``sum_j C(k, j) delta^j(b) Delta^{(k-j)/2}``.

    The right side builds ``delta^j(b)`` by dense matrix commutators with
    ``diag(sqrt(lambda))``, independently of the entrywise tower kernel.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    bN = _as_truncated(b, N)
    B = bN.dense()
    lam = bN.eigenvalues
    S = np.diag(np.sqrt(lam))
    lhs = np.diag(lam ** (k / 2)) @ B
    rhs = np.zeros_like(lhs, dtype=np.result_type(lhs, np.float64))
    level = B
    for j in range(k + 1):
        rhs = rhs + math.comb(k, j) * level @ np.diag(lam ** ((k - j) / 2))
        level = _commutator_with(S, level)
    return _compare(f"binomial_delta(k={k})", bN.N, lhs, rhs, interior)


def delta_square_identity_check(P, N: int | None = None, interior: int | None = None) -> IdentityReport:
    """``[Delta, P]`` against ``2 Delta^{1/2} delta(P) - delta(delta(P))``."""
    PN = _as_truncated(P, N)
    M = PN.dense()
    lam = PN.eigenvalues
    L = np.diag(lam)
    S = np.diag(np.sqrt(lam))
    lhs = L @ M - M @ L
    dP = _commutator_with(S, M)
    rhs = 2 * S @ dP - _commutator_with(S, dP)
    scale = max(float(np.abs(L @ M).max()), float(np.abs(M @ L).max())) if M.size else 0.0
    return _compare("delta_square", PN.N, lhs, rhs, interior, scale)


# ---------------------------------------------------------------------------
# filtered spans


@dataclass(frozen=True, eq=False)
class FilteredAlgebraSpec:
    """Generators with their filtration degrees.

    Degree-0 generators seed ``D^0`` through words of length up to
    ``closure_depth``; a generator of degree ``k > 0`` enters at level ``k``.
    """

    generators: list  # of (element, degree) or (element, degree, name)
    closure_depth: int = 2
    max_span: int = 256


@dataclass(frozen=True, eq=False)
class SpanElement:
    element: object
    word: str
    degree: int


@dataclass(frozen=True, eq=False)
class FilteredAlgebra:
    """Cumulative spanning lists ``levels[k]`` for ``D^k``."""

    levels: list
    symbolic: bool

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def level(self, k: int) -> list[SpanElement]:
        return self.levels[k]

    def new_at(self, k: int) -> list[SpanElement]:
        return [e for e in self.levels[k] if e.degree == k]


class _WeylBackend:
    symbolic = True

    def __init__(self, n):
        self.n = n
        self.delta = harmonic_oscillator(n)

    def one(self):
        return WeylElement.one(self.n)

    def mul(self, a, b):
        return a * b

    def ad(self, a):
        return self.delta * a - a * self.delta

    def is_zero(self, a):
        return a.is_zero()

    def key(self, a):
        # up to a nonzero scalar
        return a / a.sorted_terms()[0][1]


def sparse_family(fam: OperatorFamily) -> OperatorFamily:
    """The same family with compressed sparse compressions."""
    base = fam

    def build(N):
        return sparse.csr_array(base.matrix(N))

    return OperatorFamily(fam.spectrum, build, fam.claimed_order, fam.bandwidth, fam.label)


class _FamilyBackend:
    symbolic = False

    def __init__(self, spectrum, probe):
        self.spectrum = spectrum
        self.probe = probe

    def one(self):
        return sparse_family(identity_family(self.spectrum)).named("1")

    def mul(self, a, b):
        return a @ b

    def ad(self, a):
        return delta_commutator_family(a, 1)

    def _probe(self, a):
        M = a.matrix(self.probe)
        return M.toarray() if sparse.issparse(M) else np.asarray(M)

    def is_zero(self, a):
        M = self._probe(a)
        return not np.any(np.abs(M) > 1e-12 * max(1.0, float(np.abs(M).max())))

    def key(self, a):
        # up to a nonzero scalar: divide by the first entry of maximal size
        M = self._probe(a).ravel()
        mags = np.abs(M)
        lead = M[np.flatnonzero(mags > (1 - 1e-9) * mags.max())[0]]
        return np.round(M / lead, 9).tobytes()


def build_differential_algebra(spec: FilteredAlgebraSpec, depth: int, probe: int = 24) -> FilteredAlgebra:
    """Spanning lists for ``D^0 .. D^depth`` by the inductive clauses.

    ``D^0`` is generated by the degree-0 generators, ``D^1 = D^0 + [Delta,
    D^0] + D^0 [Delta, D^0]`` and for ``k >= 2``
    ``D^k = D^{k-1} + sum_j D^j D^{k-j} + [Delta, D^{k-1}] + D^0 [Delta, D^{k-1}]``.
    ``D^0`` always contains the unit.  Elements equal up to a scalar are kept
    once; numeric families are compared through their compression at
    ``probe`` and carried as sparse matrices.
    """
    gens = []
    for i, g in enumerate(spec.generators):
        elem, deg = g[0], int(g[1])
        name = g[2] if len(g) > 2 else (str(elem) if isinstance(elem, WeylElement) else (elem.label or f"g{i}"))
        if deg < 0:
            raise ValueError("generator degrees must be nonnegative")
        gens.append((elem, deg, name))
    if not gens:
        raise ValueError("need at least one generator")
    symbolic = isinstance(gens[0][0], WeylElement)
    if symbolic:
        backend = _WeylBackend(gens[0][0].n)
    else:
        backend = _FamilyBackend(gens[0][0].spectrum, probe)
        gens = [(sparse_family(e), d, name) for e, d, name in gens]

    levels: list[list[SpanElement]] = []
    seen: dict = {}

    def add(bucket, elem, word, degree):
        if backend.is_zero(elem):
            return
        key = backend.key(elem)
        if key in seen:
            return
        seen[key] = True
        bucket.append(SpanElement(elem, word, degree))
        if len(bucket) > spec.max_span:
            raise SpanLimitError(f"D^{degree} spanning set exceeds max_span={spec.max_span}")

    # D^0: the unit and words in degree-0 generators
    d0: list[SpanElement] = []
    add(d0, backend.one(), "1", 0)
    frontier = []
    for elem, deg, name in gens:
        if deg == 0:
            before = len(d0)
            add(d0, elem, name, 0)
            if len(d0) > before:
                frontier.append(d0[-1])
    base0 = list(d0)
    for _ in range(spec.closure_depth - 1):
        nxt = []
        for w in frontier:
            for g in base0:
                before = len(d0)
                add(d0, backend.mul(w.element, g.element), f"{w.word}*{g.word}", 0)
                if len(d0) > before:
                    nxt.append(d0[-1])
        frontier = nxt
    levels.append(d0)

    for k in range(1, depth + 1):
        cur = list(levels[k - 1])
        for elem, deg, name in gens:
            if deg == k:
                add(cur, elem, name, k)
        for j in range(1, k):
            for P in levels[j]:
                for Q in levels[k - j]:
                    add(cur, backend.mul(P.element, Q.element), f"({P.word})({Q.word})", k)
        prev = levels[k - 1]
        ads = [(backend.ad(P.element), f"[Delta,{P.word}]") for P in prev]
        for elem, word in ads:
            add(cur, elem, word, k)
        for A in levels[0]:
            for elem, word in ads:
                add(cur, backend.mul(A.element, elem), f"({A.word}){word}", k)
        levels.append(cur)
    return FilteredAlgebra(levels, symbolic)


@dataclass(frozen=True, eq=False)
class ElementCheck:
    word: str
    degree: int
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class FiltrationVerification:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def rows(self) -> list[dict]:
        return [{"word": c.word, "degree": c.degree, "verdict": "PASS" if c.passed else "FAIL", **c.detail} for c in self.checks]


def verify_filtration(
    algebra: FilteredAlgebra,
    sizes: Sequence[int] = (),
    s_grid=DEFAULT_S_GRID,
    sigma_cap: float = SIGMA_CAP,
) -> FiltrationVerification:
    """Check every spanning element of degree ``k`` has order at most ``k``.

    Symbolic elements are read off exactly; numeric ones go through the
    slope test at ``sizes``.
    """
    checks = []
    for k in range(algebra.depth + 1):
        for e in algebra.new_at(k):
            if algebra.symbolic:
                order = e.element.order
                checks.append(ElementCheck(e.word, k, order <= k, {"order": order}))
            else:
                rep = estimate_analytic_order(e.element, float(k), sizes, s_grid, sigma_cap=sigma_cap)
                checks.append(
                    ElementCheck(e.word, k, rep.passed, {"max_slope": float(np.max(rep.slopes)), "max_sigma": rep.max_sigma})
                )
    return FiltrationVerification(checks)


@dataclass(frozen=True, eq=False)
class PdoElement:
    family: OperatorFamily
    word: str
    m: int
    z: complex
    report: OrderReport


@dataclass(frozen=True, eq=False)
class PdoSpan:
    """Spanning elements ``X Delta^{(z-m)/2}`` of ``Psi^t`` modulo ``Op^l``."""

    t: float
    l: float
    elements: list

    @property
    def passed(self) -> bool:
        return all(e.report.passed for e in self.elements)

    def rows(self) -> list[dict]:
        return [
            {
                "word": e.word,
                "m": e.m,
                "z_re": e.z.real,
                "z_im": e.z.imag,
                "order_bound": self.t,
                "remainder": f"Op^{self.l:g}",
                "verdict": e.report.verdict,
            }
            for e in self.elements
        ]


def _as_family(elem) -> OperatorFamily:
    if isinstance(elem, OperatorFamily):
        return elem
    if isinstance(elem, WeylElement):
        return weyl_family(elem)
    raise TypeError(f"cannot realize {type(elem).__name__} as a family")


def build_pdo_from_do(
    algebra: FilteredAlgebra,
    t: float,
    l: float,
    sizes: Sequence[int],
    z_values: Sequence[complex] | None = None,
    s_grid=DEFAULT_S_GRID,
    max_elements: int = 64,
) -> PdoSpan:
    """Emit ``X Delta^{(z-m)/2}`` for ``X`` new in ``D^m`` and certify order ``<= t``."""
    if z_values is None:
        z_values = (complex(t), complex(t, 1.0), complex(t - 1))
    z_values = [complex(z) for z in z_values]
    if any(z.real > t for z in z_values):
        raise ValueError("every z must satisfy Re(z) <= t")
    out = []
    for m in range(algebra.depth + 1):
        for e in algebra.new_at(m):
            X = _as_family(e.element)
            for z in z_values:
                if len(out) >= max_elements:
                    raise SpanLimitError(f"more than {max_elements} pseudo-differential spanning elements")
                P = X @ power_family(X.spectrum, (z - m) / 2)
                rep = estimate_analytic_order(P, t, sizes, s_grid)
                out.append(PdoElement(P, f"({e.word})Delta^(({_z(z)}-{m})/2)", m, z, rep))
    return PdoSpan(float(t), float(l), out)


def _z(z: complex) -> str:
    return f"{z.real:g}" if z.imag == 0 else f"{z.real:g}{z.imag:+g}i"


@dataclass(frozen=True, eq=False)
class AxiomReport:
    product_left: OrderReport
    product_right: OrderReport
    commutator: OrderReport

    @property
    def passed(self) -> bool:
        return self.product_left.passed and self.product_right.passed and self.commutator.passed


def pdo_axiom_check(P: OperatorFamily, z, t: float, sizes, s_grid=DEFAULT_S_GRID) -> AxiomReport:
    """``Delta^{z/2} P`` and ``P Delta^{z/2}`` at ``Re z + t``; ``[Delta^{z/2}, P]`` one lower."""
    z = complex(z)
    D = power_family(P.spectrum, z / 2)
    left = estimate_analytic_order(D @ P, z.real + t, sizes, s_grid)
    right = estimate_analytic_order(P @ D, z.real + t, sizes, s_grid)
    comm = estimate_analytic_order(D @ P - P @ D, z.real + t - 1, sizes, s_grid)
    return AxiomReport(left, right, comm)


def scalars_algebra(spectrum, depth: int = 2) -> FilteredAlgebra:
    """``D^k`` generated by the identity alone."""
    return build_differential_algebra(FilteredAlgebraSpec([(identity_family(spectrum), 0, "1")]), depth)


__all__ = [
    "SpanLimitError",
    "ad_levels",
    "delta_commutator_family",
    "CommutatorTower",
    "commutator_tower",
    "DeltaTower",
    "delta_tower",
    "TowerBoundedness",
    "tower_boundedness",
    "taylor_partial_sum",
    "taylor_remainder_family",
    "TaylorReport",
    "taylor_remainder_order",
    "IdentityReport",
    "binomial_delta_identity_check",
    "delta_square_identity_check",
    "FilteredAlgebraSpec",
    "SpanElement",
    "FilteredAlgebra",
    "build_differential_algebra",
    "FiltrationVerification",
    "verify_filtration",
    "PdoSpan",
    "build_pdo_from_do",
    "AxiomReport",
    "pdo_axiom_check",
    "scalars_algebra",
]
