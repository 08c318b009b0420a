"""Scalar special functions used by the rate and power-allocation formulas.

Only the handful of functions the toolkit needs: J0, log-gamma, digamma,
the generalized exponential integral E_m (plus an exponentially scaled
variant that stays finite for huge arguments), and the inverse Gaussian
Q-function. Everything is plain float64 math.
"""

import math

EULER_GAMMA = 0.57721566490153286061

# Bernoulli numbers B_2 .. B_20 for the Stirling / digamma asymptotic series.
_BERNOULLI_EVEN = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
)

_J0_SERIES_LIMIT = 12.0
_ASYMPTOTIC_SHIFT = 10.0


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


def _check_finite(x: float, name: str) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name}: argument must be finite, got {x!r}")
    return x


def bessel_j0(x: float) -> float:
    """Bessel function of the first kind of order zero.

    Power series for |x| <= 12, Hankel asymptotic expansion beyond.
    """
    x = abs(_check_finite(x, "bessel_j0"))
    if x <= _J0_SERIES_LIMIT:
        q = 0.25 * x * x
        term = 1.0
        total = 1.0
        k = 0
        while True:
            k += 1
            term *= -q / (k * k)
            total += term
            if abs(term) < 1e-17 * max(1.0, abs(total)) and k > q:
                break
        return total
    # DLMF 10.17.3 with nu = 0; a_k = prod_{j<=k} (-(2j-1)^2) / (k! 8^k)
    p_sum = 0.0
    q_sum = 0.0
    a = 1.0
    prev = math.inf
    k = 0
    while True:
        term = a / x**k
        if abs(term) >= prev:
            break
        if k % 2 == 0:
            p_sum += (-1) ** (k // 2) * term
        else:
            q_sum += (-1) ** (k // 2) * term
        prev = abs(term)
        if prev < 1e-17:
            break
        k += 1
        a *= -((2 * k - 1) ** 2) / (8.0 * k)
    chi = x - 0.25 * math.pi
    return math.sqrt(2.0 / (math.pi * x)) * (p_sum * math.cos(chi) - q_sum * math.sin(chi))


def ln_gamma(x: float) -> float:
    """Natural log of the gamma function for x > 0."""
    x = _check_finite(x, "ln_gamma")
    if x <= 0.0:
        raise DomainError(f"ln_gamma: x must be positive, got {x}")
    shift = 0.0
    while x < _ASYMPTOTIC_SHIFT:
        shift += math.log(x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    power = inv
    for n, b in enumerate(_BERNOULLI_EVEN, start=1):
        series += b / ((2 * n) * (2 * n - 1)) * power
        power *= inv2
    return (x - 0.5) * math.log(x) - x + 0.5 * math.log(2.0 * math.pi) + series - shift


def digamma(x: float) -> float:
    """Logarithmic derivative of the gamma function, Gamma'(x)/Gamma(x), x > 0."""
    x = _check_finite(x, "digamma")
    if x <= 0.0:
        raise DomainError(f"digamma: x must be positive, got {x}")
    shift = 0.0
    while x < _ASYMPTOTIC_SHIFT:
        shift += 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for n, b in enumerate(_BERNOULLI_EVEN, start=1):
        series += b / (2 * n) * power
        power *= inv2
    return math.log(x) - 0.5 / x - series - shift


def _en_continued_fraction(m: int, x: float) -> float:
    # modified Lentz on the E_m continued fraction; returns e^x * E_m(x)
    tiny = 1e-300
    b = x + m
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (m - 1 + i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError(f"E_{m}({x}) continued fraction did not converge")


def _en_series(m: int, x: float) -> float:
    # power series around 0, valid for x <= 1; returns E_m(x) (unscaled)
    total = 1.0 / (m - 1) if m != 1 else -math.log(x) - EULER_GAMMA
    fact = 1.0
    for i in range(1, 10_000):
        fact *= -x / i
        if i != m - 1:
            term = -fact / (i - m + 1)
        else:
            psi = -EULER_GAMMA + sum(1.0 / j for j in range(1, m))
            term = fact * (-math.log(x) + psi)
        total += term
        if abs(term) < abs(total) * 1e-17:
            return total
    raise ArithmeticError(f"E_{m}({x}) series did not converge")


def _check_en_args(m: int, x: float, name: str) -> float:
    if int(m) != m or m < 1:
        raise DomainError(f"{name}: order must be a positive integer, got {m!r}")
    x = _check_finite(x, name)
    if x <= 0.0:
        raise DomainError(f"{name}: x must be positive, got {x}")
    return x


def expint_en_scaled(m: int, x: float) -> float:
    """e^x * E_m(x); finite for arbitrarily large x (behaves like 1/(x+m))."""
    x = _check_en_args(m, x, "expint_en_scaled")
    m = int(m)
    if x > 1.0:
        return _en_continued_fraction(m, x)
    return math.exp(x) * _en_series(m, x)


def expint_en(m: int, x: float) -> float:
    """Generalized exponential integral E_m(x) = int_1^inf e^{-xt} t^{-m} dt."""
    x = _check_en_args(m, x, "expint_en")
    m = int(m)
    if x > 1.0:
        return math.exp(-x) * _en_continued_fraction(m, x)
    return _en_series(m, x)


def expint_en_scaled_sum(m_max: int, x: float) -> float:
    """Sum_{m=1}^{m_max} e^x E_m(x), via stable two-sided recurrence.

    With S_m = e^x E_m(x), S_{m+1} = (1 - x S_m)/m is stable upward for
    m >= x and the reversed form is stable downward for m < x, so the sum
    starts from one directly evaluated pivot near m = x.
    """
    x = _check_en_args(m_max, x, "expint_en_scaled_sum")
    m_max = int(m_max)
    pivot = min(max(int(x), 1), m_max)
    s_pivot = expint_en_scaled(pivot, x)
    parts = [s_pivot]
    s = s_pivot
    for m in range(pivot, m_max):
        s = (1.0 - x * s) / m
        parts.append(s)
    s = s_pivot
    for m in range(pivot - 1, 0, -1):
        s = (1.0 - m * s) / x
        parts.append(s)
    return math.fsum(parts)


def q_function(x: float) -> float:
    """Gaussian tail probability Q(x) = P(Z > x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def q_inv(p: float) -> float:
    """Inverse of the Gaussian Q-function, 0 < p < 1."""
    p = _check_finite(p, "q_inv")
    if not 0.0 < p < 1.0:
        raise DomainError(f"q_inv: probability must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -q_inv(1.0 - p)
    # Q is decreasing; bracket [0, hi] then safeguarded Newton.
    lo, hi = 0.0, 1.0
    while q_function(hi) > p:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    for _ in range(200):
        fx = q_function(x) - p
        if fx > 0.0:
            lo = x
        else:
            hi = x
        density = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        step = fx / density
        candidate = x + step
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        if abs(candidate - x) < 1e-15 * max(1.0, abs(x)) or hi - lo < 1e-15:
            return candidate
        x = candidate
    return x
