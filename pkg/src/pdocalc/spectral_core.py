"""Sobolev scales, complex powers and analytic-order estimation.

Everything here lives in the eigenbasis of a strictly positive operator
``Delta`` with explicitly known spectrum.  An operator is represented by
its compression to the span of the first ``N`` eigenvectors; the
compressions for increasing ``N`` form a nested family.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import svds

from . import _kernels

DEFAULT_S_GRID = (-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0)
SLOPE_TOL = 0.05
SIGMA_CAP = 1e3
DENSE_NORM_LIMIT = 600


class SpectrumError(ValueError):
    """A spectrum model violates positivity or monotonicity."""


class NestingError(ValueError):
    """Operators supplied as a family are not nested compressions."""


class ContourConvergenceError(RuntimeError):
    """The truncated contour integral cannot meet the requested tolerance."""


# ---------------------------------------------------------------------------
# spectrum models


@dataclass(frozen=True)
class SpectrumModel:
    """Explicit spectrum ``lambda_n`` of the scale operator.

    ``rule="poly"`` evaluates ``sum_j coefficients[j] * n**j`` at
    ``n = start, start + 1, ...``; ``rule="table"`` reads explicit values.
    """

    label: str
    rule: str = "poly"
    coefficients: tuple[float, ...] = ()
    table: tuple[float, ...] = ()
    lower_bound: float = 1.0
    start: int = 1

    def __post_init__(self):
        if self.rule not in ("poly", "table"):
            raise SpectrumError(f"unknown spectrum rule {self.rule!r}")
        if not self.lower_bound > 0:
            raise SpectrumError("lower_bound must be strictly positive")
        if self.rule == "poly" and not self.coefficients:
            raise SpectrumError("poly rule needs at least one coefficient")
        if self.rule == "table" and not self.table:
            raise SpectrumError("table rule needs explicit values")

    def indices(self, N: int) -> np.ndarray:
        return np.arange(self.start, self.start + N, dtype=np.float64)

    def values(self, N: int) -> np.ndarray:
        """First ``N`` eigenvalues, validated against the model invariants."""
        if N < 1:
            raise ValueError("truncation must be at least 1")
        if self.rule == "poly":
            lam = npoly.polyval(self.indices(N), np.asarray(self.coefficients, dtype=np.float64))
        else:
            if N > len(self.table):
                raise SpectrumError(f"{self.label}: table holds {len(self.table)} values, {N} requested")
            lam = np.asarray(self.table[:N], dtype=np.float64)
        if lam.min() < self.lower_bound * (1 - 1e-12):
            raise SpectrumError(f"{self.label}: eigenvalue below lower bound {self.lower_bound}")
        if N > 1 and np.any(np.diff(lam) < -1e-12 * np.abs(lam[1:])):
            raise SpectrumError(f"{self.label}: eigenvalues must be nondecreasing")
        return lam

    def to_config(self) -> dict:
        cfg = {"label": self.label, "rule": self.rule, "lower_bound": self.lower_bound}
        if self.rule == "poly":
            cfg["coefficients"] = list(self.coefficients)
            cfg["start"] = self.start
        else:
            cfg["values"] = list(self.table)
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "SpectrumModel":
        try:
            rule = cfg["rule"]
            label = cfg["label"]
            lower = float(cfg["lower_bound"])
        except KeyError as exc:
            raise SpectrumError(f"spectrum config missing key {exc.args[0]!r}") from None
        if rule == "poly":
            return cls(
                label,
                "poly",
                coefficients=tuple(float(c) for c in cfg["coefficients"]),
                lower_bound=lower,
                start=int(cfg.get("start", 1)),
            )
        if rule == "table":
            return cls(label, "table", table=tuple(float(v) for v in cfg["values"]), lower_bound=lower)
        raise SpectrumError(f"unknown spectrum rule {rule!r}")

    @classmethod
    def from_table(cls, values, label="table", lower_bound=None) -> "SpectrumModel":
        values = tuple(float(v) for v in values)
        if lower_bound is None:
            lower_bound = min(values)
        return cls(label, "table", table=values, lower_bound=lower_bound)


def circle_spectrum() -> SpectrumModel:
    """``lambda_n = n**2 + 1`` for ``n = 1, 2, ...``."""
    return SpectrumModel("circle", "poly", (1.0, 0.0, 1.0), lower_bound=2.0, start=1)


def oscillator_spectrum() -> SpectrumModel:
    """One-mode harmonic oscillator ``1 + x**2 - d**2``: ``2k + 2``, ``k >= 0``."""
    return SpectrumModel("oscillator", "poly", (2.0, 2.0), lower_bound=2.0, start=0)


BUILTIN_SPECTRA = {"circle": circle_spectrum, "oscillator": oscillator_spectrum}


def load_spectrum(ref: str) -> SpectrumModel:
    """Resolve a built-in name or a JSON config path."""
    if ref in BUILTIN_SPECTRA:
        return BUILTIN_SPECTRA[ref]()
    path = Path(ref)
    if not path.exists():
        raise FileNotFoundError(f"no built-in spectrum or config file named {ref!r}")
    with path.open("r", encoding="utf-8") as handle:
        return SpectrumModel.from_config(json.load(handle))


# ---------------------------------------------------------------------------
# vectors and operators


@dataclass(frozen=True)
class SobolevVector:
    coefficients: np.ndarray
    spectrum: SpectrumModel


def sobolev_norm(v: SobolevVector, s: float) -> float:
    """``(sum_n lambda_n**s |a_n|**2) ** 0.5``."""
    a = np.asarray(v.coefficients)
    lam = v.spectrum.values(a.shape[0])
    return float(np.sqrt(np.sum(lam**s * np.abs(a) ** 2)))


@dataclass(frozen=True, eq=False)
class TruncatedOperator:
    """Compression of an operator to the first ``N`` eigenvectors.

    ``claimed_order`` is a tag; :func:`estimate_analytic_order` checks it.
    """

    matrix: np.ndarray | sparse.spmatrix
    spectrum: SpectrumModel
    claimed_order: float = 0.0

    def __post_init__(self):
        shape = self.matrix.shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError(f"operator matrix must be square, got {shape}")

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.spectrum.values(self.N)

    def dense(self) -> np.ndarray:
        if sparse.issparse(self.matrix):
            return self.matrix.toarray()
        return np.asarray(self.matrix)


def _is_zero_scalar(c) -> bool:
    return c == 0


@dataclass(frozen=True, eq=False)
class OperatorFamily:
    """Operator given by its compressions ``build(N)`` for every truncation.

    ``bandwidth`` bounds ``|i - j|`` over the nonzero entries.  When both
    factors of a product have a known bandwidth the product is evaluated
    on a padded block and cropped, which reproduces the compression of the
    true product exactly.  ``bandwidth=None`` means unknown; products then
    multiply compressions directly.
    """

    spectrum: SpectrumModel
    build: Callable[[int], np.ndarray]
    claimed_order: float = 0.0
    bandwidth: int | None = 0
    label: str = ""

    def matrix(self, N: int):
        M = self.build(N)
        if M.shape != (N, N):
            raise ValueError(f"{self.label or 'family'}: build({N}) returned shape {M.shape}")
        return M

    def at(self, N: int) -> TruncatedOperator:
        return TruncatedOperator(self.matrix(N), self.spectrum, self.claimed_order)

    def with_order(self, t: float) -> "OperatorFamily":
        return replace(self, claimed_order=t)

    def named(self, label: str) -> "OperatorFamily":
        return replace(self, label=label)

    def _check_spectrum(self, other: "OperatorFamily"):
        if other.spectrum != self.spectrum:
            raise ValueError("families live on different spectrum models")

    def __matmul__(self, other: "OperatorFamily") -> "OperatorFamily":
        self._check_spectrum(other)
        known = self.bandwidth is not None and other.bandwidth is not None
        pad = self.bandwidth if known else 0
        left, right = self, other

        def build(N):
            M = N + pad
            return (left.matrix(M) @ right.matrix(M))[:N, :N]

        bw = self.bandwidth + other.bandwidth if known else None
        return OperatorFamily(
            self.spectrum,
            build,
            self.claimed_order + other.claimed_order,
            bw,
            f"({self.label})({other.label})",
        )

    def _combine(self, other, sign, symbol):
        self._check_spectrum(other)
        left, right = self, other

        def build(N):
            return left.matrix(N) + sign * right.matrix(N)

        bw = None if self.bandwidth is None or other.bandwidth is None else max(self.bandwidth, other.bandwidth)
        return OperatorFamily(
            self.spectrum,
            build,
            max(self.claimed_order, other.claimed_order),
            bw,
            f"{self.label}{symbol}{other.label}",
        )

    def __add__(self, other):
        return self._combine(other, 1, "+")

    def __sub__(self, other):
        return self._combine(other, -1, "-")

    def __mul__(self, c):
        base = self
        if _is_zero_scalar(c):
            return zero_family(self.spectrum)
        return replace(self, build=lambda N: c * base.matrix(N), label=f"{c}*{self.label}")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def dagger(self) -> "OperatorFamily":
        base = self
        return replace(self, build=lambda N: base.matrix(N).conj().T, label=f"{self.label}^*")

    def commutator(self, other: "OperatorFamily") -> "OperatorFamily":
        out = (self @ other) - (other @ self)
        return replace(out, label=f"[{self.label},{other.label}]")


def family_from_matrices(spectrum, build, claimed_order=0.0, bandwidth=None, label=""):
    return OperatorFamily(spectrum, build, claimed_order, bandwidth, label)


def zero_family(spectrum: SpectrumModel) -> OperatorFamily:
    return OperatorFamily(spectrum, lambda N: np.zeros((N, N)), float("-inf"), 0, "0")


def identity_family(spectrum: SpectrumModel) -> OperatorFamily:
    return OperatorFamily(spectrum, lambda N: np.eye(N), 0.0, 0, "1")


def _eigen_power(lam: np.ndarray, z) -> np.ndarray:
    z = complex(z)
    if z.imag == 0:
        return lam ** z.real
    # principal branch on (0, inf)
    return lam ** z.real * np.exp(1j * z.imag * np.log(lam))


def power_family(spectrum: SpectrumModel, z) -> OperatorFamily:
    """``Delta**z`` as a diagonal family of order ``2 Re z``."""
    return OperatorFamily(
        spectrum,
        lambda N: np.diag(_eigen_power(spectrum.values(N), z)),
        2 * complex(z).real,
        0,
        f"Delta^{_fmt_complex(z)}",
    )


def diagonal_family(spectrum: SpectrumModel, fn, claimed_order=0.0, label="diag") -> OperatorFamily:
    """Diagonal operator with entries ``fn(n)`` at the model's indices."""
    return OperatorFamily(spectrum, lambda N: np.diag(fn(spectrum.indices(N))), claimed_order, 0, label)


def index_family(spectrum: SpectrumModel) -> OperatorFamily:
    """``diag(n)``: the circle Dirac operator ``D0`` on the positive modes."""
    return diagonal_family(spectrum, lambda n: n, 1.0, "D0")


def shift_family(spectrum: SpectrumModel, power: int = 1, weights=None, claimed_order=0.0) -> OperatorFamily:
    """Weighted shift ``e_n -> w(n) e_{n+power}`` (``power < 0`` shifts down)."""

    def build(N):
        M = np.zeros((N, N), dtype=np.complex128 if weights is not None and _complex_weights(weights) else np.float64)
        if abs(power) >= N:
            return M
        cols = np.arange(N - abs(power)) + (0 if power >= 0 else -power)
        rows = cols + power
        w = np.ones(cols.shape[0]) if weights is None else weights(spectrum.indices(N)[cols])
        M[rows, cols] = w
        return M

    name = "u" if power == 1 else ("v" if power == -1 else f"u^{power}")
    return OperatorFamily(spectrum, build, claimed_order, abs(power), name)


def _complex_weights(weights) -> bool:
    return np.iscomplexobj(weights(np.arange(1.0, 3.0)))


def _fmt_complex(z) -> str:
    z = complex(z)
    if z.imag == 0:
        return f"{z.real:g}"
    return f"({z.real:g}{z.imag:+g}i)"


def complex_power(spectrum: SpectrumModel, z, N: int) -> TruncatedOperator:
    """Diagonal ``lambda_n**z`` at truncation ``N`` with order ``2 Re z``."""
    return power_family(spectrum, z).at(N)


# ---------------------------------------------------------------------------
# isometry of complex powers


@dataclass(frozen=True)
class IsometryReport:
    z: complex
    s: float
    N: int
    max_deviation: float


def power_isometry_check(spectrum: SpectrumModel, z, s: float, N: int, vectors=None, seed: int = 0) -> IsometryReport:
    """Compare ``||Delta^z xi||_{W^s}`` with ``||xi||_{W^{s + 2 Re z}}``.

    Test vectors default to the eigenbasis plus eight random vectors; the
    deviation is relative to the right-hand side.
    """
    if vectors is None:
        rng = np.random.default_rng(seed)
        rand = rng.standard_normal((8, N)) + 1j * rng.standard_normal((8, N))
        vectors = np.vstack([np.eye(N), rand])
    P = complex_power(spectrum, z, N).matrix
    shift = s + 2 * complex(z).real
    worst = 0.0
    for xi in np.atleast_2d(vectors):
        lhs = sobolev_norm(SobolevVector(P @ xi, spectrum), s)
        rhs = sobolev_norm(SobolevVector(xi, spectrum), shift)
        if rhs == 0:
            dev = abs(lhs)
        else:
            dev = abs(lhs - rhs) / rhs
        worst = max(worst, dev)
    return IsometryReport(complex(z), s, N, worst)


# ---------------------------------------------------------------------------
# Cauchy integral for complex powers


def binom(z, k: int):
    """Generalized binomial coefficient via the falling factorial."""
    out = 1.0 + 0j if isinstance(z, complex) else 1.0
    for j in range(k):
        out = out * (z - j) / (j + 1)
    return out


@dataclass(frozen=True)
class ContourSpec:
    """Vertical line ``Re(lambda) = abscissa`` traversed downwards.

    The line is cut at ``|Im(lambda)| <= half_length`` and discretized
    with ``node_count`` trapezoid nodes in the variable ``u = asinh(t)``.
    """

    abscissa: float
    half_length: float
    node_count: int = 4096
    resolvent_power: int = 0

    def __post_init__(self):
        if not self.abscissa > 0:
            raise ValueError("abscissa must be positive")
        if not self.half_length > 0:
            raise ValueError("half_length must be positive")
        if self.node_count < 2:
            raise ValueError("node_count must be at least 2")
        if self.resolvent_power < 0:
            raise ValueError("resolvent_power must be nonnegative")


def contour_tail_bound(z, k: int, T: float) -> float:
    """Bound on the discarded part ``|Im(lambda)| > T`` of the integral.

    Uses ``|lambda**z| <= (sqrt(2)|t|)**max(Re z, 0) |t|**min(Re z, 0) e^{pi |Im z|/2}``
    and ``|lambda - mu| >= |t|`` on the line.
    """
    z = complex(z)
    p = z.real - k - 1
    if p >= -1:
        return math.inf
    C = math.exp(math.pi * abs(z.imag) / 2) * 2 ** (max(z.real, 0.0) / 2)
    return C / math.pi * T ** (p + 1) / (-p - 1)


def _target_scale(spectrum, z, k, N) -> float:
    lam = spectrum.values(N)
    expo = complex(z).real - k
    mag = min(lam[0] ** expo, lam[-1] ** expo)
    b = abs(binom(complex(z), k))
    return mag * (b if b > 0 else 1.0)


def default_contour(spectrum: SpectrumModel, z, k: int, N: int, rtol: float = 1e-8, node_count: int = 4096) -> ContourSpec:
    """Line at ``c/2`` with the half length chosen from the tail bound."""
    z = complex(z)
    if not z.real < k:
        raise ValueError(f"need Re(z) < k, got z={z}, k={k}")
    a = spectrum.lower_bound / 2
    tol = rtol * _target_scale(spectrum, z, k, N)
    p = z.real - k - 1
    C = math.exp(math.pi * abs(z.imag) / 2) * 2 ** (max(z.real, 0.0) / 2)
    T = (tol * math.pi * (-p - 1) / C) ** (1.0 / (p + 1))
    # 2x margin keeps the tail strictly below tolerance under rounding
    return ContourSpec(a, max(2 * T, 4 * a), node_count, k)


@dataclass(frozen=True, eq=False)
class CauchyPower:
    """Quadrature value of ``(2 pi i)^-1 int lambda^z (lambda - Delta)^{-k-1} dlambda``."""

    operator: TruncatedOperator
    contour: ContourSpec
    z: complex
    tail_bound: float
    tolerance: float

    @property
    def converged(self) -> bool:
        return self.tail_bound <= self.tolerance


def contour_nodes(contour: ContourSpec, z):
    """Nodes ``lambda_j`` and weights including ``lambda_j**z dlambda / (2 pi i)``."""
    U = math.asinh(contour.half_length)
    u, h = np.linspace(-U, U, contour.node_count, retstep=True)
    w = np.full(u.shape, h)
    w[0] = w[-1] = h / 2
    t = np.sinh(u)
    lam = contour.abscissa - 1j * t
    # dlambda = -i cosh(u) du and the prefactor 1/(2 pi i)
    weights = -w * np.cosh(u) / (2 * np.pi) * lam ** complex(z)
    return lam, weights


def cauchy_power(spectrum: SpectrumModel, z, contour: ContourSpec, N: int, rtol: float = 1e-8, strict: bool = True) -> CauchyPower:
    """Evaluate the contour representation of ``binom(z, k) Delta^{z-k}``.

    Raises :class:`ContourConvergenceError` when ``strict`` and the tail
    estimate at ``+-i*half_length`` exceeds the tolerance.
    """
    z = complex(z)
    k = contour.resolvent_power
    if not z.real < k:
        raise ValueError(f"need Re(z) < k, got z={z}, k={k}")
    lam = spectrum.values(N)
    if not contour.abscissa < lam[0]:
        raise ValueError("contour must separate 0 from the spectrum")
    nodes, weights = contour_nodes(contour, z)
    diag = _kernels.contour_sum(nodes, weights, lam.astype(np.float64), k + 1)
    tol = rtol * _target_scale(spectrum, z, k, N)
    tail = contour_tail_bound(z, k, contour.half_length)
    if strict and tail > tol:
        raise ContourConvergenceError(
            f"tail bound {tail:.3e} exceeds tolerance {tol:.3e}; increase half_length"
        )
    op = TruncatedOperator(np.diag(diag), spectrum, 2 * (z.real - k))
    return CauchyPower(op, contour, z, tail, tol)


# ---------------------------------------------------------------------------
# operator norms and the analytic-order slope test


def _block_norm(M, max_block: int = 64, max_cells: int = 50_000_000) -> float | None:
    """Exact norm as the largest norm over decoupled blocks.

    Rows and columns linked by nonzeros form connected components; when all
    are small the blocks are stacked and reduced with one batched SVD.
    Returns None when the blocks are too large.
    """
    coo = M.tocoo()
    nr, nc = M.shape
    graph = sparse.coo_array(
        (np.ones(coo.nnz), (coo.row, coo.col + nr)), shape=(nr + nc, nr + nc)
    )
    _, labels = connected_components(graph, directed=False)
    rlab = labels[coo.row]

    def local(idx, size, offset):
        # rank of each used index inside its component
        used = np.zeros(size, dtype=bool)
        used[idx] = True
        u = np.flatnonzero(used)
        ul = labels[u + offset]
        order = np.lexsort((u, ul))
        u, ul = u[order], ul[order]
        starts = np.searchsorted(ul, ul, side="left")
        rank = np.empty(size, dtype=np.int64)
        rank[u] = np.arange(len(u)) - starts
        counts = np.bincount(ul, minlength=labels.max() + 1)
        return rank[idx], counts

    rrank, rcount = local(coo.row, nr, 0)
    crank, ccount = local(coo.col, nc, nr)
    rmax, cmax = int(rcount.max()), int(ccount.max())
    comps = np.unique(rlab)
    if rmax > max_block or cmax > max_block or len(comps) * rmax * cmax > max_cells:
        return None
    slot = np.searchsorted(comps, rlab)
    stack = np.zeros((len(comps), rmax, cmax), dtype=M.dtype)
    np.add.at(stack, (slot, rrank, crank), coo.data)
    return float(np.linalg.svd(stack, compute_uv=False).max())


def operator_norm(M) -> float:
    """Spectral norm; exact shortcut for weighted partial permutations."""
    if sparse.issparse(M):
        M = sparse.csr_array(M)
        if M.nnz == 0 or not np.any(M.data):
            return 0.0
        M.eliminate_zeros()
        if np.diff(M.indptr).max() <= 1 and np.bincount(M.indices, minlength=M.shape[1]).max() <= 1:
            return float(np.abs(M.data).max())
        if min(M.shape) <= DENSE_NORM_LIMIT:
            return float(np.linalg.norm(M.toarray(), 2))
        blocked = _block_norm(M)
        if blocked is not None:
            return blocked
        v0 = np.ones(min(M.shape))
        return float(svds(M, k=1, v0=v0, return_singular_vectors=False)[0])
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    nz = M != 0
    if not nz.any():
        return 0.0
    if nz.sum(axis=1).max() <= 1 and nz.sum(axis=0).max() <= 1:
        return float(np.abs(M).max())
    return float(np.linalg.norm(M, 2))


def scaled_norm(M, lam: np.ndarray, s: float, t: float) -> float:
    """``|| Delta^{s/2} M Delta^{-(s+t)/2} ||`` on the truncation."""
    left = lam ** (s / 2)
    right = lam ** (-(s + t) / 2)
    if sparse.issparse(M):
        scaled = sparse.diags_array(left) @ sparse.csr_array(M) @ sparse.diags_array(right)
    else:
        scaled = left[:, None] * np.asarray(M) * right[None, :]
    return operator_norm(scaled)


def loglog_slope(sizes, values, zero_tol: float = 1e-12) -> float:
    """Least-squares slope of ``log(value)`` against ``log(size)``."""
    values = np.asarray(values, dtype=float)
    if np.all(values <= zero_tol):
        return float("-inf")
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.maximum(values, zero_tol))
    return float(np.polyfit(x, y, 1)[0])


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PDOCALC_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class OrderReport:
    """Norms ``sigma[s_index, N_index]`` and the per-``s`` slope verdicts."""

    t: float
    sizes: tuple[int, ...]
    s_grid: tuple[float, ...]
    sigma: np.ndarray
    slopes: np.ndarray
    slope_tol: float = SLOPE_TOL
    sigma_cap: float = SIGMA_CAP
    label: str = ""

    @property
    def max_sigma(self) -> float:
        return float(self.sigma.max()) if self.sigma.size else 0.0

    @property
    def passed(self) -> bool:
        return bool(np.all(self.slopes < self.slope_tol) and self.max_sigma < self.sigma_cap)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def rows(self) -> list[dict]:
        out = []
        for i, s in enumerate(self.s_grid):
            ok = self.slopes[i] < self.slope_tol and self.sigma[i].max() < self.sigma_cap
            for j, N in enumerate(self.sizes):
                out.append({"s": s, "N": N, "sigma": float(self.sigma[i, j]), "verdict": "PASS" if ok else "FAIL"})
        return out

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "t": self.t,
            "sizes": list(self.sizes),
            "s_grid": list(self.s_grid),
            "slopes": [float(x) for x in self.slopes],
            "max_sigma": self.max_sigma,
            "slope_tol": self.slope_tol,
            "sigma_cap": self.sigma_cap,
            "verdict": self.verdict,
            "rows": self.rows(),
        }


def _check_nesting(ops: Sequence[TruncatedOperator], tol: float):
    for small, big in zip(ops, ops[1:]):
        n = small.N
        A = small.dense()
        B = big.dense()[:n, :n]
        scale = max(1.0, float(np.abs(B).max()) if B.size else 1.0)
        if np.abs(A - B).max() > tol * scale:
            raise NestingError(f"truncation {n} is not the top-left block of truncation {big.N}")


def estimate_analytic_order(
    family,
    t: float,
    sizes: Sequence[int] | None = None,
    s_grid: Sequence[float] = DEFAULT_S_GRID,
    slope_tol: float = SLOPE_TOL,
    sigma_cap: float = SIGMA_CAP,
    nest_tol: float | None = 1e-9,
) -> OrderReport:
    """Slope test for ``order <= t`` on a nested family of truncations.

    ``family`` is an :class:`OperatorFamily` (evaluated at ``sizes``) or
    a sequence of :class:`TruncatedOperator` of increasing size, which is
    checked for consistent nesting unless ``nest_tol`` is None.
    """
    if not math.isfinite(t):
        raise ValueError("candidate order must be finite")
    if isinstance(family, OperatorFamily):
        if sizes is None:
            raise ValueError("sizes are required for an OperatorFamily")
        sizes = tuple(int(N) for N in sizes)
        ops = [family.at(N) for N in sizes]
        label = family.label
    else:
        ops = list(family)
        sizes = tuple(op.N for op in ops) if sizes is None else tuple(int(N) for N in sizes)
        if nest_tol is not None:
            _check_nesting(ops, nest_tol)
        label = ""
    if len(sizes) < 3:
        raise ValueError("the slope test needs at least three truncations")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("truncation sizes must be strictly increasing")
    s_grid = tuple(float(s) for s in s_grid)
    lams = [op.eigenvalues for op in ops]
    jobs = [(i, j) for i in range(len(s_grid)) for j in range(len(sizes))]

    def work(ij):
        i, j = ij
        return scaled_norm(ops[j].matrix, lams[j], s_grid[i], t)

    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            vals = list(pool.map(work, jobs))
    else:
        vals = [work(ij) for ij in jobs]
    sigma = np.array(vals, dtype=float).reshape(len(s_grid), len(sizes))
    slopes = np.array([loglog_slope(sizes, row) for row in sigma])
    return OrderReport(float(t), sizes, s_grid, sigma, slopes, slope_tol, sigma_cap, label)


@dataclass(frozen=True, eq=False)
class FactorizationReport:
    t: float
    left: OrderReport
    right: OrderReport

    @property
    def passed(self) -> bool:
        return self.left.passed and self.right.passed

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "verdict": "PASS" if self.passed else "FAIL",
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }


def op_factorization_check(family: OperatorFamily, t: float, sizes, s_grid=DEFAULT_S_GRID) -> FactorizationReport:
    """Check that ``Delta^{-t/2} P`` and ``P Delta^{-t/2}`` have order 0."""
    damp = power_family(family.spectrum, -t / 2)
    left = estimate_analytic_order(damp @ family, 0.0, sizes, s_grid)
    right = estimate_analytic_order(family @ damp, 0.0, sizes, s_grid)
    return FactorizationReport(float(t), left, right)


__all__ = [
    "DEFAULT_S_GRID",
    "SLOPE_TOL",
    "SIGMA_CAP",
    "SpectrumError",
    "NestingError",
    "ContourConvergenceError",
    "SpectrumModel",
    "circle_spectrum",
    "oscillator_spectrum",
    "load_spectrum",
    "SobolevVector",
    "sobolev_norm",
    "TruncatedOperator",
    "OperatorFamily",
    "zero_family",
    "identity_family",
    "power_family",
    "diagonal_family",
    "index_family",
    "shift_family",
    "complex_power",
    "IsometryReport",
    "power_isometry_check",
    "binom",
    "ContourSpec",
    "contour_tail_bound",
    "default_contour",
    "CauchyPower",
    "cauchy_power",
    "operator_norm",
    "scaled_norm",
    "loglog_slope",
    "OrderReport",
    "estimate_analytic_order",
    "FactorizationReport",
    "op_factorization_check",
]
