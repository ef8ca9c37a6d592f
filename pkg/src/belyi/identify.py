"""Exact recovery of algebraic numbers from high-precision approximations.

find_minimal_polynomial searches for an integer relation among the powers
1, x, x^2, ..., x^d by reducing an integer lattice whose last two columns
carry the real and imaginary parts of those powers scaled by a large power
of two.  A short vector in the reduced basis is a candidate relation; it is
accepted only when the polynomial it encodes vanishes at x as tightly as
the input precision allows, which separates genuine relations from the
short-but-meaningless vectors any lattice contains.

The reduction itself is the classical LLL algorithm in its all-integer
form: instead of rational Gram-Schmidt data it maintains the subdeterminants
d_k of the Gram matrix and the scaled coefficients lam[i][j] = d_{j+1} *
mu_{i,j}, so every intermediate quantity is an exact integer and the usual
floating-point stability worries disappear.

rational_reconstruct is the cheap sibling for numbers expected to be
rational: continued-fraction convergents of the exact binary value, accepted
when one locks onto the input far below its own error bar.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Callable, Optional, Sequence

from mpmath import mp, mpc, mpf

from .errors import DegreeBudgetExceeded, NoRelationFound

#: bits held back from the working precision when scaling the power columns;
#: candidate relations must beat the scaled roundoff by this margin.
SCALE_GUARD_BITS = 32

#: accepted residuals must be within 2^ACCEPT_SLACK_BITS of the smallest
#: residual the input precision permits for a polynomial of that height.
ACCEPT_SLACK_BITS = 8


@dataclass(frozen=True)
class IntegerPolynomial:
    """Primitive integer polynomial with positive leading coefficient.

    Coefficients are stored in ascending degree order, so
    coefficients[k] multiplies x^k.
    """

    coefficients: tuple[int, ...]

    def __post_init__(self):
        cs = self.coefficients
        if not cs or cs[-1] == 0:
            raise ValueError("leading coefficient must be nonzero")
        if cs[-1] < 0:
            raise ValueError("leading coefficient must be positive")
        content = 0
        for c in cs:
            content = gcd(content, abs(c))
        if content != 1:
            raise ValueError(f"coefficients have content {content}, want 1")

    @classmethod
    def from_coefficients(cls, coefficients: Sequence[int]) -> "IntegerPolynomial":
        """Canonicalize: strip leading zeros, divide out the content, flip
        the sign so the leading coefficient is positive."""
        cs = [int(c) for c in coefficients]
        while cs and cs[-1] == 0:
            cs.pop()
        if not cs:
            raise ValueError("the zero polynomial has no canonical form")
        content = 0
        for c in cs:
            content = gcd(content, abs(c))
        sign = 1 if cs[-1] > 0 else -1
        return cls(tuple(c * sign // content for c in cs))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def height(self) -> int:
        return max(abs(c) for c in self.coefficients)

    def __call__(self, x):
        """Horner evaluation at the ambient precision."""
        acc = mpc(0)
        for c in reversed(self.coefficients):
            acc = acc * x + c
        return acc

    def text(self) -> str:
        """Human form, highest degree first: "x^2 - 914416 x + 590816592"."""
        parts = []
        for k in range(self.degree, -1, -1):
            c = self.coefficients[k]
            if c == 0:
                continue
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            if k == 0:
                body = str(mag)
            else:
                xpow = "x" if k == 1 else f"x^{k}"
                body = xpow if mag == 1 else f"{mag} {xpow}"
            if not parts:
                parts.append(body if c > 0 else f"-{body}")
            else:
                parts.append(f"{sign} {body}")
        return " ".join(parts)

    def json_coefficients(self) -> list[str]:
        """Ascending coefficients as decimal strings (arbitrary size)."""
        return [str(c) for c in self.coefficients]


@dataclass(frozen=True)
class IdentificationResult:
    """A certified relation: the polynomial, how well it vanished at the
    input, and how many bits of slack that left over the acceptance bar."""

    polynomial: IntegerPolynomial
    residual_at_input: mpf
    confidence: int


def lll_reduce(basis: Sequence[Sequence[int]], delta_num: int = 99,
               delta_den: int = 100) -> list[list[int]]:
    """All-integer LLL reduction of linearly independent integer rows.

    Maintains the Gram subdeterminants d_k and lam[i][j] = d_{j+1} *
    mu_{i,j}; every division below is exact, and a nonzero remainder would
    mean corrupted bookkeeping, so it is checked.  The Lovasz condition is
    tested as delta_den * (d_{k+1} d_{k-1} + lam^2) < delta_num * d_k^2,
    which is delta = delta_num/delta_den without leaving the integers.
    """
    b = [[int(v) for v in row] for row in basis]
    m = len(b)
    if m == 0:
        return b

    def dot(u, v):
        return sum(a * c for a, c in zip(u, v))

    def exact_div(num, den):
        q, r = divmod(num, den)
        if r:
            raise RuntimeError("inexact division in LLL bookkeeping")
        return q

    # D[i] = det Gram(b_0..b_{i-1}); lam[i][j] defined for j < i
    big_d = [0] * (m + 1)
    big_d[0] = 1
    lam = [[0] * m for _ in range(m)]
    for i in range(m):
        for j in range(i + 1):
            u = dot(b[i], b[j])
            for t in range(j):
                u = exact_div(big_d[t + 1] * u - lam[i][t] * lam[j][t], big_d[t])
            if j < i:
                lam[i][j] = u
            else:
                big_d[i + 1] = u
        if big_d[i + 1] <= 0:
            raise ValueError("basis rows are linearly dependent")

    def reduce_row(k, l):
        if 2 * abs(lam[k][l]) > big_d[l + 1]:
            q = (2 * lam[k][l] + big_d[l + 1]) // (2 * big_d[l + 1])
            b[k] = [a - q * c for a, c in zip(b[k], b[l])]
            lam[k][l] -= q * big_d[l + 1]
            for t in range(l):
                lam[k][t] -= q * lam[l][t]

    k = 1
    while k < m:
        reduce_row(k, k - 1)
        lk = lam[k][k - 1]
        if delta_den * (big_d[k + 1] * big_d[k - 1] + lk * lk) < delta_num * big_d[k] ** 2:
            b[k], b[k - 1] = b[k - 1], b[k]
            for j in range(k - 1):
                lam[k][j], lam[k - 1][j] = lam[k - 1][j], lam[k][j]
            newd = exact_div(big_d[k - 1] * big_d[k + 1] + lk * lk, big_d[k])
            for i in range(k + 1, m):
                t = lam[i][k]
                lam[i][k] = exact_div(big_d[k + 1] * lam[i][k - 1] - lk * t, big_d[k])
                lam[i][k - 1] = exact_div(newd * t + lk * lam[i][k], big_d[k + 1])
            big_d[k] = newd
            k = max(1, k - 1)
        else:
            for l in range(k - 2, -1, -1):
                reduce_row(k, l)
            k += 1
    return b


def _nint(v) -> int:
    """Nearest integer of an mpf, exact for any magnitude."""
    return int(mp.nint(v))


def _acceptance_bound(poly: IntegerPolynomial, x, precision_bits: int):
    """Largest residual a genuine relation can show: the input carries an
    error of order 2^-precision_bits, which the polynomial amplifies by at
    most its derivative bound (degree+1) * height * (1+|x|)^degree."""
    return (
        (poly.degree + 1)
        * poly.height
        * (1 + abs(x)) ** poly.degree
        * mpf(2) ** (-precision_bits + ACCEPT_SLACK_BITS)
    )


def _relation_at_degree(x, degree: int, precision_bits: int) -> Optional[IdentificationResult]:
    size_bits = max(0, int(mp.log(1 + abs(x), 2)) + 1) * degree
    wp = precision_bits + 64 + size_bits
    # tallest coefficients a relation recoverable at this precision can
    # carry; approximation vectors (continued-fraction convergents and
    # their higher-degree Dirichlet analogues) need to grow past this to
    # beat the residual test, so the cap is what rejects them
    height_cap_bits = (precision_bits - 64) // (degree + 2)
    if height_cap_bits < 1:
        return None
    with mp.workprec(wp):
        xc = mpc(x)
        powers = [mpc(1)]
        for _ in range(degree):
            powers.append(powers[-1] * xc)
        scale = mpf(2) ** (precision_bits - SCALE_GUARD_BITS)
        rows = []
        for i, p in enumerate(powers):
            row = [0] * (degree + 1) + [_nint(scale * p.real), _nint(scale * p.imag)]
            row[i] = 1
            rows.append(row)
        reduced = lll_reduce(rows)
        for row in sorted(reduced, key=lambda r: sum(v * v for v in r)):
            coeffs = row[: degree + 1]
            if not any(coeffs):
                continue
            poly = IntegerPolynomial.from_coefficients(coeffs)
            if poly.degree == 0:
                continue
            if poly.height.bit_length() > height_cap_bits:
                continue
            residual = abs(poly(xc))
            bound = _acceptance_bound(poly, xc, precision_bits)
            if residual <= bound:
                residual = max(residual, mpf(2) ** (-wp))
                confidence = max(0, int(mp.log(bound / residual, 2)))
                return IdentificationResult(poly, residual, confidence)
    return None


def find_minimal_polynomial(x, max_degree: int, precision_bits: int) -> IdentificationResult:
    """Lowest-degree primitive integer polynomial vanishing at x.

    Degrees are swept in increasing order and the first certified hit wins,
    so an algebraic number of low degree is never reported through one of
    its higher-degree multiples.  Certification is twofold: the candidate's
    residual at x must be as small as the input precision permits for its
    height, and the height itself must fit the precision budget (about
    (precision - 64)/(degree + 2) bits); mere approximation vectors fail
    one test or the other.

    Raises NoRelationFound when nothing certifies and the precision budget
    is too small to have ruled the degrees out (rule of thumb: 64 bits per
    degree plus 64), DegreeBudgetExceeded when precision was adequate and x
    simply has no relation within max_degree.
    """
    if max_degree < 1:
        raise DegreeBudgetExceeded("max_degree must be at least 1")
    for degree in range(1, max_degree + 1):
        found = _relation_at_degree(x, degree, precision_bits)
        if found is not None:
            return found
    if precision_bits < 64 * max_degree + 64:
        raise NoRelationFound(
            f"no relation certified at {precision_bits} bits; "
            f"degree {max_degree} would need about {64 * max_degree + 64}"
        )
    raise DegreeBudgetExceeded(f"no relation of degree <= {max_degree}")


def _to_fraction(v) -> Fraction:
    """Exact value of an mpf as a Fraction."""
    sign, man, exp, _ = mp.mpf(v)._mpf_
    # the gmpy backend hands out mpz here, which Fraction mishandles
    man, exp = int(man), int(exp)
    if man == 0:
        return Fraction(0)
    val = Fraction(man * (1 << exp)) if exp >= 0 else Fraction(man, 1 << -exp)
    return -val if sign else val


def rational_reconstruct(x, max_denominator_bits: int,
                         precision_bits: Optional[int] = None) -> Optional[Fraction]:
    """Continued-fraction reconstruction of a rational from its approximation.

    Walks the convergents of the exact binary value of Re x and returns the
    first one within 2^-(precision_bits - 32) of it whose denominator fits
    the budget.  precision_bits defaults to the ambient mp.prec.  Returns
    None when no convergent locks on (including inputs that are not close
    to real), which for a typical irrational happens immediately: its
    convergents approach like 1/q^2, far above the tolerance.
    """
    prec = mp.prec if precision_bits is None else precision_bits
    xc = mpc(x)
    if not mp.isfinite(xc.real) or not mp.isfinite(xc.imag):
        return None
    if abs(xc.imag) >= mpf(2) ** (-(prec // 2)):
        return None
    target = _to_fraction(xc.real)
    tol = Fraction(1, 2 ** (prec - SCALE_GUARD_BITS))
    qmax = 1 << max_denominator_bits

    # p/q convergent recurrence on the continued fraction of target
    rem = target
    h0, h1 = 0, 1
    k0, k1 = 1, 0
    for _ in range(prec + max_denominator_bits):
        a = rem.numerator // rem.denominator
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        if k1 > qmax:
            return None
        cand = Fraction(h1, k1)
        if abs(target - cand) < tol:
            return cand
        frac = rem - a
        if frac == 0:
            return None
        rem = 1 / frac
    return None


def verify_identification(result: IdentificationResult,
                          recompute: Callable[[], object]) -> bool:
    """Does the relation survive a doubled-precision recomputation of x?

    The acceptance bar that certified the result implies the precision it
    was found at; the recomputed value must push the residual down to the
    square of that scale (up to the same height factors).  A wrong
    polynomial stays stuck near its original residual and fails.
    """
    poly = result.polynomial
    with mp.workprec(64):
        implied = -mp.log(result.residual_at_input, 2) - result.confidence
    x2 = mp.mpmathify(recompute())
    with mp.workprec(128):
        amp = mp.log((poly.degree + 1) * poly.height * (1 + abs(x2)) ** poly.degree, 2)
        p_orig = max(32, int(implied + ACCEPT_SLACK_BITS + amp))
    wp = 2 * p_orig + 64 + max(0, int(amp))
    with mp.workprec(wp):
        x2c = mpc(x2)
        residual = abs(poly(x2c))
        bound = _acceptance_bound(poly, x2c, 2 * p_orig)
        return bool(residual <= bound)
