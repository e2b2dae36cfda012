"""Polynomial Weyl algebra with exact coefficients and a Hermite realization.

Elements are stored in normal order ``x^alpha d^beta`` (all positions to
the left of all derivatives).  Products are normal-ordered with the
closed form

    d^b x^c = sum_j C(b, j) C(c, j) j! x^(c-j) d^(b-j)

applied independently in each variable.

Text syntax (see :func:`parse`)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*        # '/' only by a scalar
    unary   := ('-' | '+') unary | power
    power   := atom ('^' INT)?
    atom    := NUMBER | 'I' | 'x'K | 'd'K | 'x' | 'd' | 'Delta'
             | '(' expr ')' | '[' expr ',' expr ']'

``x`` and ``d`` without an index mean ``x1`` and ``d1``; ``Delta`` is the
harmonic oscillator ``1 + sum_i (x_i^2 - d_i^2)``; ``[A, B]`` is the
commutator.  Numbers may be integers, decimals or ``p/q`` via ``/``.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .spectral_core import OperatorFamily, SpectrumModel, TruncatedOperator, oscillator_spectrum


class WeylParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


# ---------------------------------------------------------------------------
# Gaussian rationals


@dataclass(frozen=True)
class GaussianRational:
    """``re + im*I`` with exact rational parts."""

    re: Fraction
    im: Fraction

    @staticmethod
    def lift(c) -> "GaussianRational":
        if isinstance(c, GaussianRational):
            return c
        return GaussianRational(Fraction(c), Fraction(0))

    def __add__(self, other):
        o = GaussianRational.lift(other)
        return _norm_coeff(GaussianRational(self.re + o.re, self.im + o.im))

    __radd__ = __add__

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-GaussianRational.lift(other))

    def __rsub__(self, other):
        return GaussianRational.lift(other) - self

    def __mul__(self, other):
        o = GaussianRational.lift(other)
        return _norm_coeff(GaussianRational(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = GaussianRational.lift(other)
        den = o.re * o.re + o.im * o.im
        if den == 0:
            raise ZeroDivisionError("division by zero")
        return self * GaussianRational(o.re / den, -o.im / den)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.im == 0 and self.re == other
        if isinstance(other, GaussianRational):
            return self.re == other.re and self.im == other.im
        return NotImplemented

    def __hash__(self):
        if self.im == 0:
            return hash(self.re)
        return hash((self.re, self.im))

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __str__(self):
        if self.re == 0:
            return f"{_fmt_frac(self.im)}*I"
        sign = "+" if self.im > 0 else "-"
        return f"({_fmt_frac(self.re)}{sign}{_fmt_frac(abs(self.im))}*I)"


def _norm_coeff(c):
    if isinstance(c, GaussianRational):
        return c.re if c.im == 0 else c
    return Fraction(c)


def _fmt_frac(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _as_coeff(c):
    if isinstance(c, GaussianRational):
        return _norm_coeff(c)
    if isinstance(c, complex):
        raise TypeError("floating complex coefficients are not exact; use GaussianRational")
    if isinstance(c, float):
        return Fraction(c).limit_denominator() if c != int(c) else Fraction(int(c))
    return Fraction(c)


# ---------------------------------------------------------------------------
# normal-ordered elements

Monomial = tuple[tuple[int, ...], tuple[int, ...]]


@lru_cache(maxsize=None)
def _reorder_1d(b: int, c: int) -> tuple[tuple[int, int], ...]:
    """``d^b x^c`` as pairs ``(j, C(b,j) C(c,j) j!)``."""
    return tuple((j, math.comb(b, j) * math.comb(c, j) * math.factorial(j)) for j in range(min(b, c) + 1))


@lru_cache(maxsize=65536)
def _monomial_product(m1: Monomial, m2: Monomial) -> tuple[tuple[Monomial, int], ...]:
    (a1, b1), (a2, b2) = m1, m2
    per_var = [_reorder_1d(b1[i], a2[i]) for i in range(len(a1))]
    out = []
    for choice in itertools.product(*per_var):
        coeff = 1
        alpha = []
        beta = []
        for i, (j, w) in enumerate(choice):
            coeff *= w
            alpha.append(a1[i] + a2[i] - j)
            beta.append(b1[i] + b2[i] - j)
        out.append(((tuple(alpha), tuple(beta)), coeff))
    return tuple(out)


class WeylElement:
    """Immutable normal-ordered element of the Weyl algebra in ``n`` variables."""

    __slots__ = ("_terms", "n", "_hash")

    def __init__(self, terms: Mapping[Monomial, object], n: int):
        if n < 1:
            raise ValueError("need at least one variable")
        clean = {}
        for (alpha, beta), c in terms.items():
            alpha, beta = tuple(alpha), tuple(beta)
            if len(alpha) != n or len(beta) != n:
                raise ValueError(f"monomial {alpha},{beta} does not have {n} variables")
            if min(alpha + beta, default=0) < 0:
                raise ValueError("negative exponent")
            c = _as_coeff(c)
            if c != 0:
                clean[(alpha, beta)] = c
        object.__setattr__(self, "_terms", clean)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("WeylElement is immutable")

    # constructors
    @classmethod
    def zero(cls, n: int) -> "WeylElement":
        return cls({}, n)

    @classmethod
    def scalar(cls, c, n: int) -> "WeylElement":
        return cls({((0,) * n, (0,) * n): c}, n)

    @classmethod
    def one(cls, n: int) -> "WeylElement":
        return cls.scalar(1, n)

    @classmethod
    def x(cls, i: int, n: int) -> "WeylElement":
        return cls({(_unit(i, n), (0,) * n): 1}, n)

    @classmethod
    def d(cls, i: int, n: int) -> "WeylElement":
        return cls({((0,) * n, _unit(i, n)): 1}, n)

    @property
    def terms(self) -> Mapping[Monomial, object]:
        return MappingProxyType(self._terms)

    @property
    def order(self) -> float:
        """Filtration degree ``max |alpha| + |beta|``; ``-inf`` for zero."""
        if not self._terms:
            return -math.inf
        return max(sum(a) + sum(b) for a, b in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_rational(self) -> bool:
        return all(isinstance(c, Fraction) for c in self._terms.values())

    def _check(self, other: "WeylElement"):
        if not isinstance(other, WeylElement):
            raise TypeError(f"expected WeylElement, got {type(other).__name__}")
        if other.n != self.n:
            raise ValueError(f"variable count mismatch: {self.n} vs {other.n}")

    def _lift(self, other):
        if isinstance(other, WeylElement):
            self._check(other)
            return other
        return WeylElement.scalar(other, self.n)

    def __add__(self, other):
        other = self._lift(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0) + c
        return WeylElement(out, self.n)

    __radd__ = __add__

    def __neg__(self):
        return WeylElement({m: -c for m, c in self._terms.items()}, self.n)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, WeylElement):
            c = _as_coeff(other)
            return WeylElement({m: v * c for m, v in self._terms.items()}, self.n)
        self._check(other)
        out: dict = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                c = c1 * c2
                for m, w in _monomial_product(m1, m2):
                    out[m] = out.get(m, 0) + c * w
        return WeylElement(out, self.n)

    def __rmul__(self, other):
        return self * other

    def __truediv__(self, other):
        if isinstance(other, WeylElement):
            raise TypeError("division by a non-scalar Weyl element")
        c = _as_coeff(other)
        if c == 0:
            raise ZeroDivisionError("division by zero")
        inv = GaussianRational.lift(1) / c if isinstance(c, GaussianRational) else 1 / c
        return self * inv

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only nonnegative integer powers")
        out = WeylElement.one(self.n)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, WeylElement):
            return self.n == other.n and self._terms == other._terms
        if isinstance(other, (int, Fraction, GaussianRational)):
            return self == WeylElement.scalar(other, self.n)
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash((self.n, frozenset(self._terms.items()))))
        return self._hash

    def sorted_terms(self) -> list[tuple[Monomial, object]]:
        """Terms by decreasing filtration degree, then lexicographically."""
        return sorted(self._terms.items(), key=lambda mc: (-(sum(mc[0][0]) + sum(mc[0][1])), _neg(mc[0][0]), _neg(mc[0][1])))

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for (alpha, beta), c in self.sorted_terms():
            word = _monomial_str(alpha, beta)
            negative = isinstance(c, Fraction) and c < 0
            mag = -c if negative else c
            if word == "1":
                body = str(mag) if isinstance(mag, GaussianRational) else _fmt_frac(mag)
            elif mag == 1:
                body = word
            else:
                body = f"{mag if isinstance(mag, GaussianRational) else _fmt_frac(mag)}*{word}"
            parts.append(("-" if negative else "+", body))
        text = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text

    def __repr__(self):
        return f"WeylElement({str(self)!r}, n={self.n})"


def _neg(t):
    return tuple(-v for v in t)


def _unit(i: int, n: int) -> tuple[int, ...]:
    if not 1 <= i <= n:
        raise ValueError(f"variable index {i} outside 1..{n}")
    return tuple(1 if k == i - 1 else 0 for k in range(n))


def _monomial_str(alpha, beta) -> str:
    factors = []
    for prefix, exps in (("x", alpha), ("d", beta)):
        for i, e in enumerate(exps, start=1):
            if e == 1:
                factors.append(f"{prefix}{i}")
            elif e > 1:
                factors.append(f"{prefix}{i}^{e}")
    return "*".join(factors) if factors else "1"


def harmonic_oscillator(n: int) -> WeylElement:
    """``1 + sum_i (x_i^2 - d_i^2)``, an element of filtration degree 2."""
    out = WeylElement.one(n)
    for i in range(1, n + 1):
        out = out + WeylElement.x(i, n) ** 2 - WeylElement.d(i, n) ** 2
    return out


def multiply(A: WeylElement, B: WeylElement) -> WeylElement:
    return A * B


def commutator(A: WeylElement, B: WeylElement) -> WeylElement:
    A._check(B)
    return A * B - B * A


@dataclass(frozen=True)
class FiltrationReport:
    element: str
    order: float
    commutator_order: float

    @property
    def passed(self) -> bool:
        return self.commutator_order <= self.order + 1

    def to_dict(self) -> dict:
        return {
            "element": self.element,
            "order": self.order,
            "commutator_order": self.commutator_order,
            "verdict": "PASS" if self.passed else "FAIL",
        }


def filtration_check(A: WeylElement) -> FiltrationReport:
    """Compare ``order([Delta, A])`` with ``order(A) + 1``."""
    C = commutator(harmonic_oscillator(A.n), A)
    return FiltrationReport(str(A), A.order, C.order)


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?)|(?P<delta>Delta)|(?P<var>[xd])(?P<idx>\d+)?|(?P<imag>I)|(?P<op>[-+*/^()\[\],]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise WeylParseError(f"unexpected character {text[bad]!r}", bad)
        start = m.start() + (len(m.group(0)) - len(m.group(0).lstrip()))
        if m.group("num"):
            out.append(("num", m.group("num"), start))
        elif m.group("delta"):
            out.append(("delta", None, start))
        elif m.group("var"):
            idx = int(m.group("idx")) if m.group("idx") else 1
            if idx < 1:
                raise WeylParseError("variable indices start at 1", start)
            out.append((m.group("var"), idx, start))
        elif m.group("imag"):
            out.append(("imag", None, start))
        else:
            out.append(("op", m.group("op"), start))
        pos = m.end()
    out.append(("end", None, len(text)))
    return out


class _Parser:
    def __init__(self, text: str, n: int | None):
        self.tokens = _tokenize(text)
        self.i = 0
        max_idx = max((tok[1] for tok in self.tokens if tok[0] in ("x", "d")), default=1)
        if n is not None and max_idx > n:
            var = next(tok for tok in self.tokens if tok[0] in ("x", "d") and tok[1] > n)
            raise WeylParseError(f"variable {var[0]}{var[1]} exceeds n={n}", var[2])
        self.n = n if n is not None else max_idx

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        tok = self.take()
        if tok[0] != "op" or tok[1] != op:
            raise WeylParseError(f"expected {op!r}", tok[2])
        return tok

    def parse(self) -> WeylElement:
        value = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise WeylParseError("unexpected trailing input", tok[2])
        return value

    def expr(self):
        value = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self):
        value = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            tok = self.take()
            rhs = self.unary()
            if tok[1] == "*":
                value = value * rhs
            else:
                if rhs.order > 0:
                    raise WeylParseError("division by a non-scalar", tok[2])
                if rhs.is_zero():
                    raise WeylParseError("division by zero", tok[2])
                value = value / rhs.terms[((0,) * self.n, (0,) * self.n)]
        return value

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            value = self.unary()
            return -value if tok[1] == "-" else value
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            tok = self.take()
            if tok[0] != "num" or "." in tok[1]:
                raise WeylParseError("exponent must be a nonnegative integer", tok[2])
            base = base ** int(tok[1])
        return base

    def atom(self):
        tok = self.take()
        kind = tok[0]
        if kind == "num":
            return WeylElement.scalar(Fraction(tok[1]), self.n)
        if kind == "imag":
            return WeylElement.scalar(GaussianRational(Fraction(0), Fraction(1)), self.n)
        if kind == "x":
            return WeylElement.x(tok[1], self.n)
        if kind == "d":
            return WeylElement.d(tok[1], self.n)
        if kind == "delta":
            return harmonic_oscillator(self.n)
        if kind == "op" and tok[1] == "(":
            value = self.expr()
            self.expect(")")
            return value
        if kind == "op" and tok[1] == "[":
            left = self.expr()
            self.expect(",")
            right = self.expr()
            self.expect("]")
            return commutator(left, right)
        if kind == "end":
            raise WeylParseError("unexpected end of input", tok[2])
        raise WeylParseError(f"unexpected token {tok[1]!r}", tok[2])


def parse(text: str, n: int | None = None) -> WeylElement:
    """Parse the text syntax into normal form; ``n`` defaults to the largest index."""
    return _Parser(text, n).parse()


# ---------------------------------------------------------------------------
# Hermite-basis realization


class HermiteRealization:
    """Matrices of ``x_i`` and ``d_i`` in the oscillator eigenbasis.

    Each mode is cut at ``K`` Hermite functions; ``x = (a + a*)/sqrt 2``
    and ``d = (a - a*)/sqrt 2``.  Basis states are ordered by total degree
    (stable over the Kronecker order), so the attached spectrum
    ``2|k| + n + 1`` is nondecreasing.  Entries are exact only on the
    interior block, see :meth:`interior_mask`.
    """

    def __init__(self, n: int, K: int):
        if n < 1:
            raise ValueError("need at least one variable")
        if K < 2:
            raise ValueError("cutoff K must be at least 2")
        self.n = n
        self.K = K
        grid = np.array(list(itertools.product(range(K), repeat=n)), dtype=np.int64).reshape(-1, n)
        degree = grid.sum(axis=1)
        self.perm = np.argsort(degree, kind="stable")
        self.basis = grid[self.perm]
        a = np.diag(np.sqrt(np.arange(1, K, dtype=np.float64)), 1)
        x1 = (a + a.T) / np.sqrt(2)
        d1 = (a - a.T) / np.sqrt(2)
        eye = np.eye(K)
        self._x = [self._embed(x1, i, eye) for i in range(n)]
        self._d = [self._embed(d1, i, eye) for i in range(n)]
        eig = 2 * degree[self.perm] + n + 1
        if n == 1:
            self.spectrum = oscillator_spectrum()
        else:
            self.spectrum = SpectrumModel.from_table(eig, label=f"oscillator-{n}", lower_bound=float(n + 1))
        self._powers: dict = {}

    def _embed(self, op, i, eye):
        out = np.ones((1, 1))
        for k in range(self.n):
            out = np.kron(out, op if k == i else eye)
        return out[np.ix_(self.perm, self.perm)]

    @property
    def dim(self) -> int:
        return self.K**self.n

    def x(self, i: int) -> np.ndarray:
        return self._x[i - 1]

    def d(self, i: int) -> np.ndarray:
        return self._d[i - 1]

    def _power(self, kind: str, i: int, p: int) -> np.ndarray:
        key = (kind, i, p)
        if key not in self._powers:
            base = self._x[i] if kind == "x" else self._d[i]
            self._powers[key] = np.linalg.matrix_power(base, p)
        return self._powers[key]

    def monomial(self, alpha, beta) -> np.ndarray:
        out = np.eye(self.dim)
        for i, p in enumerate(alpha):
            if p:
                out = out @ self._power("x", i, p)
        for i, p in enumerate(beta):
            if p:
                out = out @ self._power("d", i, p)
        return out

    def interior_mask(self, order: float) -> np.ndarray:
        """Basis states whose every mode degree is below ``K - order``."""
        cut = self.K - max(0, int(order)) if math.isfinite(order) else self.K
        return np.all(self.basis < cut, axis=1)

    def interior(self, M: np.ndarray, order: float) -> np.ndarray:
        mask = self.interior_mask(order)
        return M[np.ix_(mask, mask)]


def realize(A: WeylElement, R: HermiteRealization) -> TruncatedOperator:
    """Matrix of ``A`` in the Hermite basis, tagged with ``order(A)``."""
    if A.n != R.n:
        raise ValueError(f"element has {A.n} variables, realization {R.n}")
    complex_coeffs = not A.is_rational()
    M = np.zeros((R.dim, R.dim), dtype=np.complex128 if complex_coeffs else np.float64)
    for (alpha, beta), c in A.terms.items():
        M += (complex(c) if complex_coeffs else float(c)) * R.monomial(alpha, beta)
    order = A.order if math.isfinite(A.order) else 0.0
    return TruncatedOperator(M, R.spectrum, float(order))


@dataclass(frozen=True)
class HomomorphismReport:
    max_deviation: float
    relative_deviation: float
    interior_size: int

    def to_dict(self) -> dict:
        return {
            "max_deviation": self.max_deviation,
            "relative_deviation": self.relative_deviation,
            "interior_size": self.interior_size,
        }


def homomorphism_check(A: WeylElement, B: WeylElement, R: HermiteRealization) -> HomomorphismReport:
    """Compare ``realize(A B)`` with ``realize(A) realize(B)`` on the interior block."""
    oa = A.order if math.isfinite(A.order) else 0
    ob = B.order if math.isfinite(B.order) else 0
    if R.K <= oa + ob:
        raise ValueError(f"cutoff K={R.K} too small for orders {oa} + {ob}")
    lhs = realize(A * B, R).matrix
    rhs = realize(A, R).matrix @ realize(B, R).matrix
    mask = R.interior_mask(oa + ob)
    diff = (lhs - rhs)[np.ix_(mask, mask)]
    dev = float(np.abs(diff).max()) if diff.size else 0.0
    scale = max(1.0, float(np.abs(lhs[np.ix_(mask, mask)]).max()) if diff.size else 1.0)
    return HomomorphismReport(dev, dev / scale, int(mask.sum()))


def weyl_family(A: WeylElement) -> OperatorFamily:
    """One-variable element as a nested family over the oscillator spectrum.

    Truncation ``N`` is realized at cutoff ``N + order`` and cropped, which
    gives the exact compression of the unbounded operator.
    """
    if A.n != 1:
        raise ValueError("nested families are only available for one variable")
    order = int(A.order) if math.isfinite(A.order) else 0
    cache: dict[int, np.ndarray] = {}

    def build(N):
        if N not in cache:
            R = HermiteRealization(1, max(2, N + order))
            cache[N] = realize(A, R).matrix[:N, :N]
        return cache[N]

    return OperatorFamily(oscillator_spectrum(), build, float(max(order, 0)), order, str(A))


__all__ = [
    "WeylParseError",
    "GaussianRational",
    "WeylElement",
    "harmonic_oscillator",
    "multiply",
    "commutator",
    "FiltrationReport",
    "filtration_check",
    "parse",
    "HermiteRealization",
    "realize",
    "HomomorphismReport",
    "homomorphism_check",
    "weyl_family",
]
