"""Exact Laurent polynomials and Alexander polynomials of closed braids."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from ..errors import BraidInputError


class LaurentPoly:
    """Integer Laurent polynomial ``sum c_k t^(low + k)``; immutable."""

    __slots__ = ("low", "coeffs")

    def __init__(self, coeffs: Sequence[int] = (), low: int = 0):
        cs = [int(c) for c in coeffs]
        start = 0
        while start < len(cs) and cs[start] == 0:
            start += 1
        end = len(cs)
        while end > start and cs[end - 1] == 0:
            end -= 1
        self.coeffs = tuple(cs[start:end])
        self.low = int(low) + start if self.coeffs else 0

    @classmethod
    def monomial(cls, coeff: int, power: int) -> "LaurentPoly":
        return cls((coeff,), power)

    @classmethod
    def const(cls, c: int) -> "LaurentPoly":
        return cls((c,), 0)

    @property
    def high(self) -> int:
        return self.low + len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def __add__(self, other):
        other = _lift(other)
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        low = min(self.low, other.low)
        high = max(self.high, other.high)
        out = [0] * (high - low + 1)
        for p in (self, other):
            for k, c in enumerate(p.coeffs):
                out[p.low - low + k] += c
        return LaurentPoly(out, low)

    __radd__ = __add__

    def __neg__(self):
        return LaurentPoly([-c for c in self.coeffs], self.low)

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        other = _lift(other)
        if self.is_zero() or other.is_zero():
            return LaurentPoly()
        out = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a:
                for j, b in enumerate(other.coeffs):
                    out[i + j] += a * b
        return LaurentPoly(out, self.low + other.low)

    __rmul__ = __mul__

    def shift(self, k: int) -> "LaurentPoly":
        """Multiply by ``t^k``."""
        return LaurentPoly(self.coeffs, self.low + k) if self.coeffs else self

    def exact_div(self, other) -> "LaurentPoly":
        """Quotient when ``other`` divides ``self`` exactly; ValueError otherwise."""
        other = _lift(other)
        if other.is_zero():
            raise ZeroDivisionError("division by the zero polynomial")
        if self.is_zero():
            return LaurentPoly()
        num = [Fraction(c) for c in self.coeffs]
        den = other.coeffs
        if len(num) < len(den):
            raise ValueError("not an exact division")
        quot = [Fraction(0)] * (len(num) - len(den) + 1)
        for k in range(len(quot) - 1, -1, -1):
            q = num[k + len(den) - 1] / den[-1]
            quot[k] = q
            if q:
                for j, d in enumerate(den):
                    num[k + j] -= q * d
        if any(num) or any(q.denominator != 1 for q in quot):
            raise ValueError("not an exact division")
        return LaurentPoly([int(q) for q in quot], self.low - other.low)

    def normalized(self) -> "LaurentPoly":
        """Representative up to units ``+-t^k``: lowest degree 0, lowest coefficient positive."""
        if self.is_zero():
            return self
        sign = 1 if self.coeffs[0] > 0 else -1
        return LaurentPoly([sign * c for c in self.coeffs], 0)

    def evaluate(self, t):
        return sum(c * t ** (self.low + k) for k, c in enumerate(self.coeffs))

    def __eq__(self, other):
        if isinstance(other, int):
            other = LaurentPoly.const(other)
        if not isinstance(other, LaurentPoly):
            return NotImplemented
        return self.low == other.low and self.coeffs == other.coeffs

    def __hash__(self):
        return hash((self.low, self.coeffs))

    def __repr__(self):
        return f"LaurentPoly({list(self.coeffs)}, low={self.low})"

    def __str__(self):
        if self.is_zero():
            return "0"
        terms = []
        for k in range(len(self.coeffs) - 1, -1, -1):
            c = self.coeffs[k]
            if c == 0:
                continue
            e = self.low + k
            mag = abs(c)
            if e == 0:
                body = str(mag)
            else:
                var = "t" if e == 1 else f"t^{e}"
                body = var if mag == 1 else f"{mag}*{var}"
            terms.append(("-" if c < 0 else "+", body))
        first_sign, first = terms[0]
        out = ("-" if first_sign == "-" else "") + first
        for sgn, body in terms[1:]:
            out += f" {sgn} {body}"
        return out

    def to_dict(self) -> dict:
        return {"coefficients": list(self.coeffs), "offset": self.low}


def _lift(v) -> LaurentPoly:
    if isinstance(v, LaurentPoly):
        return v
    if isinstance(v, int):
        return LaurentPoly.const(v)
    raise TypeError(f"cannot combine LaurentPoly with {type(v).__name__}")


_ZERO = LaurentPoly()
_ONE = LaurentPoly.const(1)
_T = LaurentPoly.monomial(1, 1)
_MINUS_T = LaurentPoly.monomial(-1, 1)
_T_INV = LaurentPoly.monomial(1, -1)
_MINUS_T_INV = LaurentPoly.monomial(-1, -1)


def _identity(m: int) -> list:
    return [[_ONE if i == j else _ZERO for j in range(m)] for i in range(m)]


def burau_generator(i: int, n: int, inverse: bool = False) -> list:
    """Reduced Burau matrix of ``sigma_i^{+-1}`` on ``n`` strands, size n - 1.

    ``sigma_i`` differs from the identity only in row ``i``, which reads
    ``(..., t, -t, 1, ...)`` centred on the diagonal; its inverse row is
    ``(..., 1, -1/t, 1/t, ...)``.
    """
    m = n - 1
    B = _identity(m)
    r = i - 1
    if i > 1:
        B[r][r - 1] = _ONE if inverse else _T
    B[r][r] = _MINUS_T_INV if inverse else _MINUS_T
    if i < n - 1:
        B[r][r + 1] = _T_INV if inverse else _ONE
    return B


def _matmul(A: list, B: list) -> list:
    m = len(A)
    out = []
    for i in range(m):
        row = []
        for j in range(m):
            acc = _ZERO
            for k in range(m):
                if not A[i][k].is_zero() and not B[k][j].is_zero():
                    acc = acc + A[i][k] * B[k][j]
            row.append(acc)
        out.append(row)
    return out


def burau_matrix(word: Sequence[int], n_strands: int) -> list:
    """Product of reduced Burau matrices for a signed generator word."""
    n = int(n_strands)
    if n < 1:
        raise BraidInputError("a braid needs at least one strand")
    for g in word:
        if int(g) == 0 or abs(int(g)) > n - 1:
            raise BraidInputError(f"generator {g} out of range for {n} strands")
    M = _identity(n - 1)
    for g in word:
        M = _matmul(M, burau_generator(abs(int(g)), n, inverse=int(g) < 0))
    return M


def determinant(M: list) -> LaurentPoly:
    """Determinant of a square Laurent-polynomial matrix (fraction-free elimination)."""
    m = len(M)
    if m == 0:
        return _ONE
    # shift rows to ordinary polynomials; det picks up the unit t^shift
    rows = []
    shift = 0
    for row in M:
        lows = [e.low for e in row if not e.is_zero()]
        k = -min(lows) if lows else 0
        shift += k
        rows.append([e.shift(k) for e in row])
    sign = 1
    prev = _ONE
    for k in range(m - 1):
        if rows[k][k].is_zero():
            swap = next((r for r in range(k + 1, m) if not rows[r][k].is_zero()), None)
            if swap is None:
                return _ZERO
            rows[k], rows[swap] = rows[swap], rows[k]
            sign = -sign
        for i in range(k + 1, m):
            for j in range(k + 1, m):
                rows[i][j] = (rows[i][j] * rows[k][k] - rows[i][k] * rows[k][j]).exact_div(prev)
            rows[i][k] = _ZERO
        prev = rows[k][k]
    return (rows[m - 1][m - 1] * sign).shift(-shift)


def alexander_polynomial(word: Sequence[int], n_strands: int) -> LaurentPoly:
    """Alexander polynomial of the closure of a braid word.

    ``word`` lists signed generator indices (``+i`` for ``sigma_i``, ``-i``
    for its inverse). Uses ``det(I - B) = Delta(t) (1 + t + ... + t^(n-1))``
    for the reduced Burau matrix ``B``; the result is normalized up to units.
    """
    n = int(n_strands)
    B = burau_matrix(word, n)
    m = n - 1
    A = [[(_ONE if i == j else _ZERO) - B[i][j] for j in range(m)] for i in range(m)]
    det = determinant(A)
    if det.is_zero():
        return det
    return det.exact_div(LaurentPoly([1] * n, 0)).normalized()
