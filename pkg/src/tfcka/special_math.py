"""Scalar primitives shared by the rate code: binary entropy and log-gamma binomials.

Binomials are evaluated in the log domain throughout. The tail-bound equation
for the finite-key correction feeds them arguments of order 1e9 and larger,
where ``lgamma(a+1) - lgamma(b+1) - lgamma(a-b+1)`` loses ~1e-6 absolute to
cancellation, so :func:`ln_binomial` uses the Stirling-remainder split instead.
"""

from __future__ import annotations

import math

#: Slack allowed on probability-valued inputs before raising.
DOMAIN_TOL = 1e-12
#: Target relative accuracy of :func:`ln_gamma`.
LGAMMA_RTOL = 1e-13
#: Slack on computed probabilities before clamping becomes a hard error.
CLAMP_TOL = 1e-9

_HALF_LN_2PI = 0.5 * math.log(2.0 * math.pi)
_STIRLERR_SWITCH = 15.0


def binary_entropy(x: float) -> float:
    """Binary entropy ``h(x) = -x log2 x - (1-x) log2 (1-x)`` with ``h(0) = h(1) = 0``."""
    if not (-DOMAIN_TOL <= x <= 1.0 + DOMAIN_TOL):
        raise ValueError(f"binary entropy argument must lie in [0, 1], got {x!r}")
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log1p(-x) / math.log(2.0)


def ln_gamma(x: float) -> float:
    """Natural log of the gamma function for ``x > 0``."""
    if not x > 0:
        raise ValueError(f"ln_gamma requires x > 0, got {x!r}")
    return math.lgamma(x)


def _stirling_remainder(x: float) -> float:
    # ln Γ(x+1) - [x ln x - x + ½ ln(2πx)], x > 0
    if x < _STIRLERR_SWITCH:
        return math.lgamma(x + 1.0) - (x * math.log(x) - x + _HALF_LN_2PI + 0.5 * math.log(x))
    inv = 1.0 / x
    inv2 = inv * inv
    return inv * (
        1.0 / 12.0
        - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0)))
    )


def ln_binomial(a: float, b: float) -> float:
    """Log of the generalized binomial coefficient ``Γ(a+1) / (Γ(b+1) Γ(a-b+1))``.

    Parameters
    ----------
    a, b : float
        Real arguments with ``a >= b >= 0``. Non-integer values are allowed.

    Notes
    -----
    Writing ``c = a - b``, the value is split as
    ``b ln(1 + c/b) + c ln(1 + b/c) + ½ ln(a / (2π b c))`` plus Stirling remainders.
    The two leading terms are nonnegative, so no cancellation occurs even when
    ``a`` is huge and ``b`` small.
    """
    if b < 0 or b > a:
        raise ValueError(f"ln_binomial requires a >= b >= 0, got a={a!r}, b={b!r}")
    c = a - b
    if b == 0 or c == 0:
        return 0.0
    if a < _STIRLERR_SWITCH:
        # small arguments: the plain difference has no cancellation to speak of
        return math.lgamma(a + 1.0) - math.lgamma(b + 1.0) - math.lgamma(c + 1.0)
    lead = b * math.log1p(c / b) + c * math.log1p(b / c)
    corr = 0.5 * (math.log(a) - math.log(2.0 * math.pi) - math.log(b) - math.log(c))
    return lead + corr + _stirling_remainder(a) - _stirling_remainder(b) - _stirling_remainder(c)


def log_pow(x: float, k: float) -> float:
    """``k * ln(x)`` with the convention ``0 * ln(0) = 0``; ``-inf`` when ``x == 0 < k``."""
    if k == 0:
        return 0.0
    if x == 0.0:
        return -math.inf
    return k * math.log(x)


def clamp_probability(value: float, what: str = "probability") -> float:
    """Clamp roundoff excursions outside ``[0, 1]``; larger excursions are bugs."""
    if value < -CLAMP_TOL or value > 1.0 + CLAMP_TOL or math.isnan(value):
        raise ArithmeticError(f"{what} out of range before clamping: {value!r}")
    return min(1.0, max(0.0, value))


def _deviance(x: float, mu: float) -> float:
    # x ln(x/mu) + mu - x, accurate when x ~ mu
    if x == 0.0:
        return mu
    if abs(x - mu) < 0.1 * (x + mu):
        v = (x - mu) / (x + mu)
        s = (x - mu) * v
        ej = 2.0 * x * v
        v2 = v * v
        j = 1
        while True:
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
    return x * math.log(x / mu) + mu - x


def _ln_binomial_pmf(x: float, y: float, p: float, q: float) -> float:
    """``ln[C(x+y, x) p^x q^y]`` for real ``x, y >= 0`` with ``p + q = 1``.

    The complement ``y`` is passed in rather than formed as ``n - x``, which
    would lose absolute accuracy when ``n`` is large and ``y`` small.
    """
    n = x + y
    if p == 0.0:
        return 0.0 if x == 0 else -math.inf
    if q == 0.0:
        return 0.0 if y == 0 else -math.inf
    if x == 0:
        if n == 0:
            return 0.0
        return -_deviance(n, n * q) - n * p if p < 0.1 else n * math.log(q)
    if y == 0:
        return -_deviance(n, n * p) - n * q if q < 0.1 else n * math.log(p)
    if x < 0 or y < 0:
        return -math.inf
    lc = (
        _stirling_remainder(n)
        - _stirling_remainder(x)
        - _stirling_remainder(y)
        - _deviance(x, n * p)
        - _deviance(y, n * q)
    )
    return lc - 0.5 * (math.log(2.0 * math.pi) + math.log(x) + math.log(y) - math.log(n))


def ln_hypergeometric_cells(a: float, b: float, c: float, d: float) -> float:
    """Log hypergeometric probability of the 2x2 table ``[[a, b], [c, d]]``.

    Rows are successes and failures, columns drawn and not drawn:
    ``ln[C(a+b, a) C(c+d, c) / C(a+b+c+d, a+c)]``. Cells may be non-integer
    (gamma-function extension) and must be nonnegative. Evaluated as a ratio
    of binomial pmfs at ``p = (a+c) / total``, which keeps every piece of
    order ``ln(pmf)`` instead of order ``ln C(total, a+c)``.
    """
    if min(a, b, c, d) < 0 or a + b + c + d <= 0:
        raise ValueError(f"invalid hypergeometric cells {(a, b, c, d)!r}")
    total = a + b + c + d
    p = (a + c) / total
    q = (b + d) / total
    return _ln_binomial_pmf(a, b, p, q) + _ln_binomial_pmf(c, d, p, q) - _ln_binomial_pmf(a + c, b + d, p, q)


def ln_hypergeometric_pmf(x: float, successes: float, failures: float, draws: float) -> float:
    """``ln[C(K, x) C(F, d-x) / C(K+F, d)]`` with ``K = successes``, ``F = failures``, ``d = draws``."""
    if not (0 <= x <= successes and 0 <= draws - x <= failures):
        raise ValueError(
            f"invalid hypergeometric arguments x={x!r}, K={successes!r}, F={failures!r}, d={draws!r}"
        )
    return ln_hypergeometric_cells(x, successes - x, draws - x, failures - (draws - x))
