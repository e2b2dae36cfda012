"""Even spectral triples at truncation scale, regularity probes and products.

Every model is built in a basis where ``Delta = D^2 + 1`` is diagonal, so
``delta = [Delta^{1/2}, -]`` acts entrywise and ``|D|`` is never formed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.linalg import eigvals_banded, eigvalsh

from .opexpr import evaluate, parse_expr
from .pdo_calculus import ad_levels
from .spectral_core import (
    DEFAULT_S_GRID,
    OrderReport,
    SpectrumModel,
    TruncatedOperator,
    estimate_analytic_order,
    loglog_slope,
    operator_norm,
)
from .weyl_algebra import HermiteRealization, WeylElement, realize

BOUNDED_SLOPE_TOL = 0.05
COMPACT_RATIO = 1e-3
BANDED_LIMIT = 64
DENSE_GRAM_LIMIT = 3000


class TripleError(ValueError):
    """Malformed triple data or a failed structural invariant."""


@dataclass(frozen=True, eq=False)
class TripleTruncation:
    """One truncation: sparse ``D``, diagonal grading and ``Delta``, generators."""

    N: int
    dirac: sparse.csr_array
    grading: np.ndarray | None
    delta: np.ndarray
    generators: Mapping[str, sparse.csr_array]
    basis: tuple = ()

    @property
    def dim(self) -> int:
        return self.dirac.shape[0]

    def commutator_with_dirac(self, a) -> sparse.csr_array:
        return sparse.csr_array(self.dirac @ a - a @ self.dirac)


def _finish(N, D, gamma, gens, basis=()) -> TripleTruncation:
    D = sparse.csr_array(D)
    D.eliminate_zeros()
    sq = sparse.csr_array(D @ D)
    diag = sq.diagonal()
    off = sq - sparse.diags_array(diag)
    if off.nnz and np.abs(off.data).max() > 0:
        raise TripleError("D^2 is not diagonal in the working basis")
    delta = np.real(diag) + 1.0
    gens = {name: sparse.csr_array(M) for name, M in gens.items()}
    return TripleTruncation(int(N), D, None if gamma is None else np.asarray(gamma, dtype=float), delta, gens, tuple(basis))


@dataclass(frozen=True)
class StructureReport:
    N: int
    gamma_square: float
    anticommutator: float
    self_adjoint: float
    generator_parity: float
    delta_min: float

    @property
    def passed(self) -> bool:
        return (
            self.gamma_square == 0
            and self.anticommutator == 0
            and self.self_adjoint == 0
            and self.generator_parity == 0
            and self.delta_min >= 1.0
        )


def _maxabs(M) -> float:
    M = sparse.csr_array(M)
    return float(np.abs(M.data).max()) if M.nnz else 0.0


class SpectralTripleModel:
    """A truncation-indexed even spectral triple.

    ``build(N)`` returns a :class:`TripleTruncation`; results are cached.
    """

    def __init__(
        self,
        label: str,
        build: Callable[[int], TripleTruncation],
        sizes: Sequence[int] = (64, 128, 256),
        compact_sizes: Sequence[int] | None = None,
        graded: bool = True,
        finite: bool = False,
    ):
        self.label = label
        self._build = build
        self.sizes = tuple(sizes)
        self.compact_sizes = tuple(compact_sizes or sizes)
        self.graded = graded
        self.finite = finite
        self._cache: dict[int, TripleTruncation] = {}

    def at(self, N: int) -> TripleTruncation:
        N = int(N)
        if N not in self._cache:
            self._cache[N] = self._build(N)
        return self._cache[N]

    @property
    def generator_names(self) -> list[str]:
        return list(self.at(self.sizes[0]).generators)

    def validate(self, N: int) -> StructureReport:
        T = self.at(N)
        D = T.dirac
        if T.grading is None:
            g2 = anti = par = 0.0
        else:
            G = sparse.diags_array(T.grading)
            g2 = float(np.abs(T.grading**2 - 1).max())
            anti = _maxabs(G @ D + D @ G)
            par = max((_maxabs(G @ a - a @ G) for a in T.generators.values()), default=0.0)
        sa = _maxabs(D - D.conj().T)
        return StructureReport(T.N, g2, anti, sa, par, float(T.delta.min()))

    def __repr__(self):
        return f"SpectralTripleModel({self.label!r})"


# ---------------------------------------------------------------------------
# base spaces and built-in models

_SX = sparse.csr_array(np.array([[0.0, 1.0], [1.0, 0.0]]))
_SZ = np.array([1.0, -1.0])
_I2 = sparse.identity(2, format="csr")


def _circle_indices(N):
    n = np.arange(-N, N + 1)
    return n[np.lexsort((n < 0, np.abs(n)))]


def _circle_atoms(N, flat=False):
    n = _circle_indices(N)
    pos = {int(v): i for i, v in enumerate(n)}
    dim = len(n)
    rows, cols = [], []
    for i, v in enumerate(n):
        j = pos.get(int(v) + 1)
        if j is not None:
            rows.append(j)
            cols.append(i)
    u = sparse.csr_array((np.ones(len(rows)), (rows, cols)), shape=(dim, dim))
    p0 = np.zeros(dim)
    p0[pos[0]] = 1.0
    atoms = {
        "u": u,
        "v": sparse.csr_array(u.T),
        "I": sparse.identity(dim, format="csr"),
        "D0": sparse.diags_array(n.astype(float), format="csr"),
        "P0": sparse.diags_array(p0, format="csr"),
        "nonreg": sparse.diags_array(((-1.0) ** np.abs(n)) * np.sqrt(np.abs(n)), format="csr"),
    }
    D0 = sparse.csr_array((dim, dim)) if flat else atoms["D0"]
    return n, atoms, D0


def _eval_generators(rules, atoms, identity):
    out = {}
    for name, rule in rules.items():
        out[name] = sparse.csr_array(evaluate(parse_expr(rule), atoms, identity))
    return out


def doubled_circle_builder(rules: Mapping[str, str], flat: bool = False):
    """``H = l2(Z) (x) C^2``, ``D = D0 (x) sigma_x``, ``gamma = 1 (x) sigma_z``.

    The truncation at ``N`` keeps ``|n| <= N``, ordered by ``(|n|, sign, sheet)``
    so smaller truncations are leading blocks of larger ones.
    """

    def build(N):
        if N < 1:
            raise TripleError("truncation must be at least 1")
        n, atoms, D0 = _circle_atoms(N, flat)
        base = _eval_generators(rules, atoms, atoms["I"])
        D = sparse.kron(D0, _SX, format="csr")
        gamma = np.tile(_SZ, len(n))
        gens = {k: sparse.kron(a, _I2, format="csr") for k, a in base.items()}
        basis = tuple((int(v), s) for v in n for s in (0, 1))
        return _finish(N, D, gamma, gens, basis)

    return build


def oscillator_builder(rules: Mapping[str, str]):
    """``H = l2(N) (+) l2(N)`` with ``D = [[0, A*], [A, 0]]`` and ``A = x + d``.

    ``A`` comes from the Hermite realization of the Weyl element ``x1 + d1``.
    Sheet 0 keeps ``k <= N`` and sheet 1 keeps ``k <= N - 1``, which makes
    the compression of ``D`` exact; ``Delta = diag(2k + 1, 2k + 3)``.
    """

    def build(N):
        if N < 1:
            raise TripleError("truncation must be at least 1")
        R = HermiteRealization(1, N + 2)
        A = realize(WeylElement.x(1, 1) + WeylElement.d(1, 1), R).dense()[: N + 1, : N + 1]
        A = np.real_if_close(A)
        dim = N + 1
        k = np.arange(dim)
        shift = sparse.csr_array((np.ones(dim - 1), (k[1:], k[:-1])), shape=(dim, dim))
        p0 = np.zeros(dim)
        p0[0] = 1.0
        atoms = {
            "u": shift,
            "v": sparse.csr_array(shift.T),
            "I": sparse.identity(dim, format="csr"),
            "P0": sparse.diags_array(p0, format="csr"),
            "N0": sparse.diags_array(k.astype(float), format="csr"),
        }
        base = _eval_generators(rules, atoms, atoms["I"])
        lower = sparse.csr_array(np.array([[0.0, 0.0], [1.0, 0.0]]))
        upper = sparse.csr_array(lower.T)
        D = sparse.kron(sparse.csr_array(A), lower) + sparse.kron(sparse.csr_array(A.T), upper)
        keep = np.array([not (kk == N and s == 1) for kk in k for s in (0, 1)])
        sel = np.flatnonzero(keep)
        D = sparse.csr_array(D)[sel][:, sel]
        gamma = np.tile(_SZ, dim)[sel]
        gens = {name: sparse.csr_array(sparse.kron(a, _I2, format="csr")[sel][:, sel]) for name, a in base.items()}
        basis = tuple((int(kk), s) for kk in k for s in (0, 1) if not (kk == N and s == 1))
        return _finish(N, D, gamma, gens, basis)

    return build


def trivial_builder(rules: Mapping[str, str] | None = None):
    """``H = C``, ``D = 0``, ``gamma = 1`` and scalar generators."""
    rules = rules or {"1": "I"}

    def build(N):
        atoms = {"I": sparse.identity(1, format="csr")}
        return _finish(N, sparse.csr_array((1, 1)), np.ones(1), _eval_generators(rules, atoms, atoms["I"]), ((0, 0),))

    return build


def circle_triple(generators: Mapping[str, str] | None = None) -> SpectralTripleModel:
    return SpectralTripleModel(
        "circle",
        doubled_circle_builder(generators or {"u": "u"}),
        sizes=(128, 256, 512),
        compact_sizes=(256, 512, 1024, 2048),
    )


def flat_triple(generators: Mapping[str, str] | None = None) -> SpectralTripleModel:
    """``D0 = 0``: the resolvent has flat singular values."""
    return SpectralTripleModel(
        "flat",
        doubled_circle_builder(generators or {"u": "u"}, flat=True),
        sizes=(128, 256, 512),
        compact_sizes=(256, 512, 1024, 2048),
    )


def nonexample_triple() -> SpectralTripleModel:
    """Doubled circle with ``a = diag((-1)^n |n|^{1/2})``, not in ``dom(delta)``."""
    return SpectralTripleModel(
        "nonexample",
        doubled_circle_builder({"nonreg": "nonreg"}),
        sizes=(128, 256, 512),
        compact_sizes=(256, 512, 1024, 2048),
    )


def oscillator_triple(generators: Mapping[str, str] | None = None) -> SpectralTripleModel:
    return SpectralTripleModel(
        "oscillator",
        oscillator_builder(generators or {"u": "u", "P0": "P0"}),
        sizes=(128, 256, 512),
        compact_sizes=(256, 512, 1024, 2048),
    )


def trivial_triple() -> SpectralTripleModel:
    return SpectralTripleModel("trivial", trivial_builder(), sizes=(8, 16, 32), finite=True)


BUILTIN_TRIPLES: dict[str, Callable[[], SpectralTripleModel]] = {
    "circle": circle_triple,
    "trivial": trivial_triple,
    "oscillator": oscillator_triple,
    "nonexample": nonexample_triple,
    "flat": flat_triple,
}


def triple_from_config(cfg: Mapping) -> SpectralTripleModel:
    """``{"label", "dirac", "grading", "generators": [{"name", "rule"}], "sizes"}``.

    ``dirac`` is one of ``circle``, ``flat``, ``oscillator``, ``trivial``;
    ``grading`` is ``"standard"`` or null (ungraded).
    """
    try:
        dirac = cfg["dirac"]
        gens = {g["name"]: g["rule"] for g in cfg.get("generators", [])}
    except (KeyError, TypeError) as exc:
        raise TripleError(f"malformed triple config: {exc}") from None
    builders = {
        "circle": lambda r: doubled_circle_builder(r),
        "flat": lambda r: doubled_circle_builder(r, flat=True),
        "oscillator": oscillator_builder,
        "trivial": trivial_builder,
    }
    if dirac not in builders:
        raise TripleError(f"unknown dirac rule {dirac!r}")
    if not gens:
        gens = {"1": "I"}
    for rule in gens.values():
        parse_expr(rule)
    grading = cfg.get("grading", "standard")
    if grading not in ("standard", None):
        raise TripleError(f"unknown grading {grading!r}")
    template = BUILTIN_TRIPLES[dirac]()
    sizes = tuple(cfg.get("sizes", template.sizes))
    compact = tuple(cfg.get("compact_sizes", template.compact_sizes))
    build = builders[dirac](gens)
    if grading is None:
        inner = build

        def build(N):
            T = inner(N)
            return TripleTruncation(T.N, T.dirac, None, T.delta, T.generators, T.basis)

    return SpectralTripleModel(cfg.get("label", dirac), build, sizes, compact, grading is not None, dirac == "trivial")


def load_triple(ref: str) -> SpectralTripleModel:
    """A built-in name or a path to a JSON triple config."""
    if ref in BUILTIN_TRIPLES:
        return BUILTIN_TRIPLES[ref]()
    path = Path(ref)
    if not path.is_file():
        raise TripleError(f"unknown triple {ref!r}")
    with open(path) as fh:
        return triple_from_config(json.load(fh))


# ---------------------------------------------------------------------------
# checks


def _norm_rows(sizes, norms):
    slope = loglog_slope(sizes, norms)
    return slope, bool(slope < BOUNDED_SLOPE_TOL)


@dataclass(frozen=True, eq=False)
class CommutatorReport:
    label: str
    sizes: tuple[int, ...]
    norms: dict
    slopes: dict

    @property
    def passed(self) -> bool:
        return all(s < BOUNDED_SLOPE_TOL for s in self.slopes.values())

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def rows(self) -> list[dict]:
        return [
            {"generator": g, "N": N, "norm": float(v), "verdict": "PASS" if self.slopes[g] < BOUNDED_SLOPE_TOL else "FAIL"}
            for g, vals in self.norms.items()
            for N, v in zip(self.sizes, vals)
        ]

    def to_dict(self) -> dict:
        return {"label": self.label, "sizes": list(self.sizes), "slopes": dict(self.slopes), "verdict": self.verdict, "rows": self.rows()}


def bounded_commutator_check(T: SpectralTripleModel, sizes: Sequence[int] | None = None) -> CommutatorReport:
    """``||[D, a]||`` across truncations with the boundedness slope test."""
    sizes = tuple(sizes or T.sizes)
    norms = {g: [] for g in T.generator_names}
    for N in sizes:
        t = T.at(N)
        for g, a in t.generators.items():
            norms[g].append(operator_norm(t.commutator_with_dirac(a)))
    slopes = {g: loglog_slope(sizes, v) for g, v in norms.items()}
    return CommutatorReport(T.label, sizes, norms, slopes)


def singular_values(M) -> np.ndarray:
    """Descending singular values of a sparse matrix via its Gram matrix.

    Banded Gram matrices use a banded Hermitian eigensolver.
    """
    M = sparse.csr_array(M)
    G = sparse.csr_array(M.conj().T @ M)
    n = G.shape[0]
    if G.nnz == 0:
        return np.zeros(n)
    coo = G.tocoo()
    bw = int(np.abs(coo.row - coo.col).max())
    if bw <= BANDED_LIMIT:
        ab = np.zeros((bw + 1, n), dtype=G.dtype)
        for d in range(bw + 1):
            ab[bw - d, d:] = G.diagonal(d)
        ev = eigvals_banded(ab, lower=False)
    elif n <= DENSE_GRAM_LIMIT:
        ev = eigvalsh(G.toarray())
    else:
        raise TripleError(f"Gram matrix of size {n} with bandwidth {bw} is too large for a full profile")
    return np.sqrt(np.clip(np.sort(np.real(ev))[::-1], 0, None))


@dataclass(frozen=True, eq=False)
class CompactnessReport:
    label: str
    sizes: tuple[int, ...]
    ratios: dict  # generator -> smallest nonzero / largest singular value per size
    ranks: dict  # generator -> numerical rank per size
    profiles: dict  # generator -> sampled sigma_j / sigma_0 at the largest size
    finite: bool
    threshold: float = COMPACT_RATIO

    def finite_rank(self, g) -> bool:
        return len(set(self.ranks[g])) == 1

    def generator_passed(self, g) -> bool:
        return self.finite or self.finite_rank(g) or self.ratios[g][-1] < self.threshold

    @property
    def passed(self) -> bool:
        return all(self.generator_passed(g) for g in self.ratios)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def rows(self) -> list[dict]:
        return [
            {
                "generator": g,
                "N": N,
                "min_ratio": float(r),
                "rank": int(rk),
                "verdict": "PASS" if self.generator_passed(g) else "FAIL",
            }
            for g, vals in self.ratios.items()
            for N, r, rk in zip(self.sizes, vals, self.ranks[g])
        ]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "sizes": list(self.sizes),
            "threshold": self.threshold,
            "finite_dimensional": self.finite,
            "profiles": {g: [[int(j), float(r)] for j, r in p] for g, p in self.profiles.items()},
            "verdict": self.verdict,
            "rows": self.rows(),
        }


def compact_resolvent_check(T: SpectralTripleModel, sizes: Sequence[int] | None = None, zero_tol: float = 1e-12) -> CompactnessReport:
    """Singular-value decay of ``a (D + i)^{-1} = a (D - i) Delta^{-1}``.

    Per generator the ratio of the smallest nonzero singular value to the
    largest is tracked; PASS needs it below the threshold at the largest
    truncation.  A family whose dimension does not grow, or a generator whose
    numerical rank stays fixed across truncations, counts as finite rank.
    """
    sizes = tuple(sizes or T.compact_sizes)
    dims = [T.at(N).dim for N in sizes]
    finite = T.finite or len(set(dims)) == 1
    ratios = {g: [] for g in T.generator_names}
    ranks = {g: [] for g in T.generator_names}
    profiles = {}
    for N in sizes:
        t = T.at(N)
        res = sparse.csr_array((t.dirac - 1j * sparse.identity(t.dim)) @ sparse.diags_array(1.0 / t.delta))
        for g, a in t.generators.items():
            sv = singular_values(a @ res)
            top = sv[0] if sv.size else 0.0
            if top <= 0:
                ratios[g].append(0.0)
                ranks[g].append(0)
                profile = [(0, 0.0)]
            else:
                nz = sv[sv > zero_tol * top]
                ratios[g].append(float(nz[-1] / top))
                ranks[g].append(len(nz))
                idx = np.unique(np.linspace(0, len(nz) - 1, 9).round().astype(int))
                profile = [(int(j), float(nz[j] / top)) for j in idx]
            profiles[g] = profile
    return CompactnessReport(T.label, sizes, ratios, ranks, profiles, finite)


@dataclass(frozen=True, eq=False)
class TowerRow:
    generator: str
    element: str
    k: int
    norms: tuple[float, ...]
    slope: float

    @property
    def passed(self) -> bool:
        return self.slope < BOUNDED_SLOPE_TOL


@dataclass(frozen=True, eq=False)
class RegularityReport:
    label: str
    sizes: tuple[int, ...]
    max_k: int
    entries: list

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    @property
    def first_failure_k(self) -> int | None:
        ks = [e.k for e in self.entries if not e.passed]
        return min(ks) if ks else None

    @property
    def max_slope(self) -> float:
        return max((e.slope for e in self.entries), default=float("-inf"))

    def norm(self, generator: str, element: str, k: int, N: int) -> float:
        for e in self.entries:
            if e.generator == generator and e.element == element and e.k == k:
                return e.norms[self.sizes.index(N)]
        raise KeyError((generator, element, k))

    def rows(self) -> list[dict]:
        return [
            {
                "generator": e.generator,
                "element": e.element,
                "k": e.k,
                "N": N,
                "norm": float(v),
                "slope": e.slope,
                "verdict": "PASS" if e.passed else "FAIL",
            }
            for e in self.entries
            for N, v in zip(self.sizes, e.norms)
        ]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "sizes": list(self.sizes),
            "max_k": self.max_k,
            "verdict": self.verdict,
            "first_failure_k": self.first_failure_k,
            "rows": self.rows(),
        }


def regularity_probe(T: SpectralTripleModel, max_k: int, sizes: Sequence[int] | None = None) -> RegularityReport:
    """Boundedness of ``delta^k(a)`` and ``delta^k([D, a])`` for ``k <= max_k``."""
    if max_k < 0:
        raise ValueError("max_k must be nonnegative")
    sizes = tuple(sizes or T.sizes)
    if len(sizes) < 3 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("need at least three strictly increasing truncations")
    norms: dict = {}
    for N in sizes:
        t = T.at(N)
        root = np.sqrt(t.delta)
        for g, a in t.generators.items():
            for name, M in (("a", a), ("[D,a]", t.commutator_with_dirac(a))):
                for k, L in enumerate(ad_levels(M, root, max_k)):
                    norms.setdefault((g, name, k), []).append(operator_norm(L))
    entries = [TowerRow(g, e, k, tuple(v), loglog_slope(sizes, v)) for (g, e, k), v in norms.items()]
    return RegularityReport(T.label, sizes, max_k, entries)


# ---------------------------------------------------------------------------
# graded products


def parity(M, gamma: np.ndarray) -> int:
    """0 for even (commutes with the grading), 1 for odd."""
    G = sparse.diags_array(gamma)
    M = sparse.csr_array(M)
    if _maxabs(G @ M - M @ G) == 0:
        return 0
    if _maxabs(G @ M + M @ G) == 0:
        return 1
    raise TripleError("operator is not homogeneous for the grading")


def graded_tensor(P1, P2, gamma1: np.ndarray, parity2: int) -> sparse.csr_array:
    """``P1 (x^) P2 = P1 gamma1^{|P2|} (x) P2``."""
    left = sparse.csr_array(P1)
    if parity2 % 2:
        left = left @ sparse.diags_array(gamma1)
    return sparse.csr_array(sparse.kron(left, P2, format="csr"))


def _kron_parts(t1: TripleTruncation, t2: TripleTruncation):
    I1 = sparse.identity(t1.dim, format="csr")
    I2 = sparse.identity(t2.dim, format="csr")
    first = sparse.kron(t1.dirac, I2, format="csr")
    second = sparse.kron(sparse.diags_array(t1.grading), t2.dirac, format="csr")
    return first, second, I1, I2


def _require_graded(*ts):
    for t in ts:
        if t.grading is None:
            raise TripleError("product needs graded factors; grading missing")


def product_triple(T1: SpectralTripleModel, T2: SpectralTripleModel, sizes: Sequence[int] | None = None) -> SpectralTripleModel:
    """Graded product with ``D = D1 (x) 1 + gamma1 (x) D2`` and ``gamma = gamma1 (x) gamma2``.

    Truncation ``N`` pairs the factors' truncations at ``N``; the basis is the
    Kronecker basis sorted stably by ``lambda1 + lambda2 - 1`` and recorded as
    index pairs in ``basis``.
    """
    if not (T1.graded and T2.graded):
        raise TripleError("product needs graded factors; grading missing")

    def build(N):
        t1, t2 = T1.at(N), T2.at(N)
        _require_graded(t1, t2)
        first, second, _, _ = _kron_parts(t1, t2)
        D = sparse.csr_array(first + second)
        gamma = np.kron(t1.grading, t2.grading)
        lam = np.add.outer(t1.delta, t2.delta).ravel() - 1.0
        perm = np.argsort(lam, kind="stable")
        P = lambda M: sparse.csr_array(M)[perm][:, perm]
        gens = {f"{g1}(x){g2}": P(graded_tensor(a1, a2, t1.grading, 0)) for g1, a1 in t1.generators.items() for g2, a2 in t2.generators.items()}
        pairs = [(i, j) for i in range(t1.dim) for j in range(t2.dim)]
        out = _finish(N, P(D), gamma[perm], gens, tuple(pairs[p] for p in perm))
        if np.abs(out.delta - lam[perm]).max() > 1e-9 * lam.max():
            raise TripleError("product Delta does not split")
        return out

    sz = tuple(sizes or tuple(min(a, b) for a, b in zip(T1.sizes, T2.sizes)))
    return SpectralTripleModel(f"{T1.label}x{T2.label}", build, sz, graded=True, finite=T1.finite and T2.finite)


@dataclass(frozen=True)
class SquareSplitReport:
    N: int
    square_deviation: float
    anticommutator: float

    @property
    def passed(self) -> bool:
        return self.square_deviation == 0 and self.anticommutator == 0


def product_square_split(T1: SpectralTripleModel, T2: SpectralTripleModel, N: int) -> SquareSplitReport:
    """``(D1 x D2)^2 - D1^2 (x) 1 - 1 (x) D2^2`` and the summands' anticommutator."""
    t1, t2 = T1.at(N), T2.at(N)
    _require_graded(t1, t2)
    first, second, I1, I2 = _kron_parts(t1, t2)
    D = first + second
    split = sparse.kron(t1.dirac @ t1.dirac, I2) + sparse.kron(I1, t2.dirac @ t2.dirac)
    return SquareSplitReport(N, _maxabs(D @ D - split), _maxabs(first @ second + second @ first))


def sample_elements(t: TripleTruncation, k: int) -> list[tuple[str, sparse.csr_array, int]]:
    """``1``, generators and ``[D, a]`` at degree 0, then ``[Delta, X]`` up to degree ``k``."""
    I = sparse.identity(t.dim, format="csr")
    L = sparse.diags_array(t.delta)
    level = [("1", I, 0)]
    for g, a in t.generators.items():
        level.append((g, a, 0))
        level.append((f"[D,{g}]", t.commutator_with_dirac(a), 0))
    out = list(level)
    for j in range(1, k + 1):
        nxt = []
        for name, M, _ in level:
            C = sparse.csr_array(L @ M - M @ L)
            C.eliminate_zeros()
            if C.nnz:
                nxt.append((f"[Delta,{name}]", C, j))
        out.extend(nxt)
        level = nxt
    return out


@dataclass(frozen=True)
class IdentityRow:
    left: str
    right: str
    max_abs_deviation: float
    max_rel_deviation: float
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return self.max_rel_deviation <= self.tol


def tensor_commutator_identity(t1: TripleTruncation, t2: TripleTruncation, P1, P2, names=("P1", "P2")) -> IdentityRow:
    """``[Delta, P1 (x^) P2]`` against ``[Delta1, P1] (x^) P2 + P1 (x^) [Delta2, P2]``."""
    _require_graded(t1, t2)
    p2 = parity(P2, t2.grading)
    L1, L2 = sparse.diags_array(t1.delta), sparse.diags_array(t2.delta)
    lam = np.add.outer(t1.delta, t2.delta).ravel() - 1.0
    L = sparse.diags_array(lam)
    M = graded_tensor(P1, P2, t1.grading, p2)
    lhs = sparse.csr_array(L @ M - M @ L)
    C1 = sparse.csr_array(L1 @ P1 - P1 @ L1)
    C2 = sparse.csr_array(L2 @ P2 - P2 @ L2)
    rhs = graded_tensor(C1, P2, t1.grading, p2) + graded_tensor(P1, C2, t1.grading, parity(C2, t2.grading) if C2.nnz else p2)
    diff = _maxabs(lhs - rhs)
    scale = _maxabs(L @ M)
    return IdentityRow(names[0], names[1], diff, diff / scale if scale > 0 else diff)


@dataclass(frozen=True, eq=False)
class ProductRegularityReport:
    identities: list
    orders: list  # (left name, right name, order bound, OrderReport)
    probe: RegularityReport | None

    @property
    def identity_passed(self) -> bool:
        return all(r.passed for r in self.identities)

    @property
    def order_passed(self) -> bool:
        return all(rep.passed for *_, rep in self.orders)

    @property
    def passed(self) -> bool:
        return self.identity_passed and self.order_passed and (self.probe is None or self.probe.passed)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "identity": [
                {"P1": r.left, "P2": r.right, "max_abs_deviation": r.max_abs_deviation, "max_rel_deviation": r.max_rel_deviation, "verdict": "PASS" if r.passed else "FAIL"}
                for r in self.identities
            ],
            "order": [{"P1": a, "P2": b, "bound": t, **rep.to_dict()} for a, b, t, rep in self.orders],
            "probe": None if self.probe is None else self.probe.to_dict(),
        }


def product_order_report(
    T1: SpectralTripleModel,
    T2: SpectralTripleModel,
    pick1: str,
    pick2: str,
    bound: float,
    sizes: Sequence[int],
    k: int,
    l: int,
    s_grid=DEFAULT_S_GRID,
) -> OrderReport:
    """Slope test of ``P1 (x^) P2`` against the product ``Delta`` (sorted basis)."""
    ops = []
    for N in sizes:
        t1, t2 = T1.at(N), T2.at(N)
        e1 = {n: M for n, M, _ in sample_elements(t1, k)}
        e2 = {n: M for n, M, _ in sample_elements(t2, l)}
        M = graded_tensor(e1[pick1], e2[pick2], t1.grading, parity(e2[pick2], t2.grading))
        lam = np.add.outer(t1.delta, t2.delta).ravel() - 1.0
        perm = np.argsort(lam, kind="stable")
        spec = SpectrumModel.from_table(lam[perm], label=f"{T1.label}x{T2.label}")
        ops.append(TruncatedOperator(sparse.csr_array(M)[perm][:, perm], spec, bound))
    return estimate_analytic_order(ops, bound, sizes, s_grid, nest_tol=None)


def product_regularity_check(
    T1: SpectralTripleModel,
    T2: SpectralTripleModel,
    k: int,
    l: int,
    identity_N: int = 16,
    order_sizes: Sequence[int] = (8, 16, 32),
    probe_sizes: Sequence[int] | None = (16, 32, 64),
    max_k: int = 3,
    max_pairs: int = 6,
) -> ProductRegularityReport:
    """Tensor commutator identity, additive order and the product probe."""
    t1, t2 = T1.at(identity_N), T2.at(identity_N)
    s1 = sample_elements(t1, k)
    s2 = sample_elements(t2, l)
    identities = [tensor_commutator_identity(t1, t2, M1, M2, (n1, n2)) for n1, M1, _ in s1 for n2, M2, _ in s2]
    pairs = []
    for n1, _, d1 in s1:
        for n2, _, d2 in s2:
            if n1 != "1" or n2 != "1":
                pairs.append((d1 + d2, n1, n2))
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
    orders = []
    for bound, n1, n2 in pairs[:max_pairs]:
        orders.append((n1, n2, float(bound), product_order_report(T1, T2, n1, n2, float(bound), order_sizes, k, l)))
    probe = None
    if probe_sizes is not None:
        probe = regularity_probe(product_triple(T1, T2, probe_sizes), max_k, probe_sizes)
    return ProductRegularityReport(identities, orders, probe)


__all__ = [
    "TripleError",
    "TripleTruncation",
    "StructureReport",
    "SpectralTripleModel",
    "doubled_circle_builder",
    "oscillator_builder",
    "trivial_builder",
    "circle_triple",
    "flat_triple",
    "nonexample_triple",
    "oscillator_triple",
    "trivial_triple",
    "BUILTIN_TRIPLES",
    "triple_from_config",
    "load_triple",
    "CommutatorReport",
    "bounded_commutator_check",
    "singular_values",
    "CompactnessReport",
    "compact_resolvent_check",
    "RegularityReport",
    "regularity_probe",
    "parity",
    "graded_tensor",
    "product_triple",
    "SquareSplitReport",
    "product_square_split",
    "sample_elements",
    "tensor_commutator_identity",
    "ProductRegularityReport",
    "product_order_report",
    "product_regularity_check",
]
