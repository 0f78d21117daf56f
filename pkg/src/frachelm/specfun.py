r"""Special functions used by the scattering solvers.

Gamma (Lanczos), integer-order Bessel functions of the first and second kind,
Hankel functions of the first kind, the fractional-Laplacian normalisation

.. math::
    C_{n,\alpha} = \frac{\alpha 2^{2\alpha}\Gamma(\frac{n+2\alpha}{2})}
                        {\pi^{n/2}\Gamma(1-\alpha)},

and the Fourier coefficients :math:`k H_n^{(1)\prime}(kR)/H_n^{(1)}(kR)` of the
exterior Dirichlet-to-Neumann map on a circle.

All functions are pure and act on real scalars.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FracConstantInput",
    "gamma",
    "frac_constant",
    "bessel_j",
    "bessel_y",
    "bessel_j_all",
    "bessel_y_all",
    "hankel1",
    "hankel1_deriv",
    "hankel1_all",
    "dtn_coefficient",
    "dtn_coefficients",
]

EULER_GAMMA = 0.57721566490153286061

_LANCZOS_G = 7
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

# switch between ascending series and Hankel's asymptotic expansion
_SERIES_LIMIT = 12.0
MAX_ORDER = 60


def gamma(x):
    """Gamma function for positive real arguments (Lanczos, g=7, 9 terms).

    Raises
    ------
    ValueError
        If ``x <= 0``.
    """
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"gamma is only defined here for x > 0, got {x}")
    if x < 0.5:
        # reflection keeps the Lanczos sum in its accurate range
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x -= 1.0
    a = _LANCZOS_COEF[0]
    t = x + _LANCZOS_G + 0.5
    for i in range(1, _LANCZOS_G + 2):
        a += _LANCZOS_COEF[i] / (x + i)
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * a


@dataclass(frozen=True)
class FracConstantInput:
    """Arguments of :func:`frac_constant`: spatial dimension and order."""

    n_dim: int
    alpha: float

    def __post_init__(self):
        if int(self.n_dim) != self.n_dim or self.n_dim < 1:
            raise ValueError(f"n_dim must be a positive integer, got {self.n_dim}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


def frac_constant(inp, alpha=None):
    """Normalisation constant of the fractional Laplacian of order ``alpha``.

    Accepts either a :class:`FracConstantInput` or ``(n_dim, alpha)``.
    """
    if not isinstance(inp, FracConstantInput):
        inp = FracConstantInput(int(inp), float(alpha))
    n, a = inp.n_dim, inp.alpha
    return (a * 2.0 ** (2.0 * a) * gamma((n + 2.0 * a) / 2.0)
            / (math.pi ** (n / 2.0) * gamma(1.0 - a)))


def _check_arg(x):
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"Bessel argument must be positive, got {x}")
    return x


def _check_order(n):
    if int(n) != n or n < 0:
        raise ValueError(f"order must be a nonnegative integer, got {n}")
    if n > MAX_ORDER:
        raise ValueError(f"order {n} exceeds the supported maximum {MAX_ORDER}")
    return int(n)


def _series_j01(x):
    """J0 and J1 by their ascending series."""
    q = -0.25 * x * x
    term0 = 1.0
    term1 = 0.5 * x
    j0 = term0
    j1 = term1
    k = 1
    while True:
        term0 *= q / (k * k)
        term1 *= q / (k * (k + 1))
        j0 += term0
        j1 += term1
        if abs(term0) < 1e-17 * max(abs(j0), 1e-300) and abs(term1) < 1e-17 and k > 3:
            break
        k += 1
        if k > 200:
            break
    return j0, j1


def _series_y01(x, j0, j1):
    """Y0 and Y1 by the logarithmic series (needs J0, J1 at the same x)."""
    q = -0.25 * x * x
    lg = math.log(0.5 * x)
    # Y0: (2/pi)[(ln(x/2)+gamma) J0 - sum_{k>=1} H_k q^k/(k!)^2]
    s0 = 0.0
    t = 1.0
    hk = 0.0
    # Y1 tail: -(x/2)/pi * sum_k (psi(k+1)+psi(k+2)) q^k / (k!(k+1)!)
    s1 = 0.0
    t1 = 1.0
    psi_k1 = -EULER_GAMMA
    for k in range(0, 200):
        if k > 0:
            t *= q / (k * k)
            hk += 1.0 / k
            s0 += hk * t
            t1 *= q / (k * (k + 1))
            psi_k1 += 1.0 / k
        psi_k2 = psi_k1 + 1.0 / (k + 1)
        s1 += (psi_k1 + psi_k2) * t1
        if k > 3 and abs(t) < 1e-18 and abs(t1) < 1e-18:
            break
    y0 = (2.0 / math.pi) * ((lg + EULER_GAMMA) * j0 - s0)
    y1 = -2.0 / (math.pi * x) + (2.0 / math.pi) * lg * j1 - (0.5 * x / math.pi) * s1
    return y0, y1


def _asymptotic_jy(n, x):
    """Hankel's large-argument expansion for J_n, Y_n (n = 0, 1)."""
    mu = 4.0 * n * n
    p = 0.0
    qq = 0.0
    term = 1.0
    k = 0
    last = math.inf
    while k < 60:
        if k % 2 == 0:
            p += term if (k // 2) % 2 == 0 else -term
        else:
            qq += term if (k // 2) % 2 == 0 else -term
        nxt = term * (mu - (2 * k + 1) ** 2) / ((k + 1) * 8.0 * x)
        if abs(nxt) >= last and k > 2:
            # asymptotic series: stop at the smallest term
            break
        last = abs(term)
        term = nxt
        k += 1
        if abs(term) < 1e-17:
            break
    chi = x - (0.5 * n + 0.25) * math.pi
    amp = math.sqrt(2.0 / (math.pi * x))
    return (amp * (p * math.cos(chi) - qq * math.sin(chi)),
            amp * (p * math.sin(chi) + qq * math.cos(chi)))


def _jy01(x):
    if x < _SERIES_LIMIT:
        j0, j1 = _series_j01(x)
        y0, y1 = _series_y01(x, j0, j1)
    else:
        j0, y0 = _asymptotic_jy(0, x)
        j1, y1 = _asymptotic_jy(1, x)
    return j0, j1, y0, y1


def bessel_y_all(nmax, x):
    """Y_0..Y_nmax at ``x`` by upward recurrence (stable for Y)."""
    x = _check_arg(x)
    _, _, y0, y1 = _jy01(x)
    out = np.empty(nmax + 1)
    out[0] = y0
    if nmax >= 1:
        out[1] = y1
    for n in range(1, nmax):
        out[n + 1] = (2.0 * n / x) * out[n] - out[n - 1]
    return out


def bessel_j_all(nmax, x):
    """J_0..J_nmax at ``x``.

    Orders below ``x`` use upward recurrence from J0, J1; the remaining orders
    come from Miller's downward recurrence, matched to the upward values (or
    normalised by ``J0 + 2 sum J_2k = 1`` when ``x`` is small).
    """
    x = _check_arg(x)
    j0, j1, _, _ = _jy01(x)
    out = np.empty(nmax + 1)
    out[0] = j0
    if nmax >= 1:
        out[1] = j1
    n_up = min(nmax, int(x))
    for n in range(1, n_up):
        out[n + 1] = (2.0 * n / x) * out[n] - out[n - 1]
    if nmax <= max(n_up, 1):
        return out
    # Miller: start well above max(nmax, x)
    top = max(nmax, int(x)) + 20 + int(math.sqrt(40.0 * max(nmax, x, 1.0)))
    top += top % 2
    jp1, jc = 0.0, 1e-300
    vals = np.zeros(top + 1)
    vals[top] = jc
    norm = 0.0
    for n in range(top, 0, -1):
        jm1 = (2.0 * n / x) * jc - jp1
        jp1, jc = jc, jm1
        if abs(jc) > 1e250:
            # rescale to avoid overflow
            jc *= 1e-250
            jp1 *= 1e-250
            vals[n:] *= 1e-250
            norm *= 1e-250
        vals[n - 1] = jc
        if (n - 1) % 2 == 0 and n - 1 > 0:
            norm += 2.0 * jc
    norm += vals[0]
    if n_up >= 1:
        # match at the last upward order for continuity
        ref = n_up
        scale = out[ref] / vals[ref] if vals[ref] != 0.0 else 1.0 / norm
        if abs(out[ref]) < 1e-3 * max(abs(out[ref - 1]), 1e-300):
            scale = 1.0 / norm
    else:
        scale = 1.0 / norm
    lo = n_up + 1 if n_up >= 1 else 0
    out[lo:] = vals[lo:nmax + 1] * scale
    if n_up < 1:
        out[0] = j0
        if nmax >= 1:
            out[1] = j1
    return out


def bessel_j(order, x):
    """Bessel function of the first kind J_order(x) for x > 0."""
    n = _check_order(order)
    return float(bessel_j_all(max(n, 1), x)[n])


def bessel_y(order, x):
    """Bessel function of the second kind Y_order(x) for x > 0."""
    n = _check_order(order)
    return float(bessel_y_all(max(n, 1), x)[n])


def hankel1_all(nmax, x):
    """H^(1)_0..H^(1)_nmax at ``x`` as a complex array."""
    return bessel_j_all(nmax, x) + 1j * bessel_y_all(nmax, x)


def hankel1(order, x):
    """Hankel function of the first kind H^(1)_order(x)."""
    n = _check_order(order)
    return complex(hankel1_all(max(n, 1), x)[n])


def hankel1_deriv(order, x):
    """Derivative of H^(1)_order at ``x``: H_{n-1} - (n/x) H_n, and -H_1 for n = 0."""
    n = _check_order(order)
    x = _check_arg(x)
    h = hankel1_all(n + 1, x)
    if n == 0:
        return complex(-h[1])
    return complex(h[n - 1] - (n / x) * h[n])


def dtn_coefficients(nmax, k, R):
    """DtN Fourier coefficients k H_n'(kR)/H_n(kR) for n = 0..nmax.

    Negative modes share the coefficient of ``|n|``.
    """
    if not (k > 0 and R > 0):
        raise ValueError(f"k and R must be positive, got k={k}, R={R}")
    if nmax > MAX_ORDER:
        raise ValueError(f"DtN truncation {nmax} exceeds supported order {MAX_ORDER}")
    x = k * R
    with np.errstate(over="ignore", invalid="ignore"):
        h = hankel1_all(max(nmax, 1), x)
    bad = ~np.isfinite(h) | (h == 0)
    if bad.any():
        n_bad = int(np.argmax(bad))
        raise OverflowError(f"H_{n_bad}(kR) not representable at kR={x:g} (mode {n_bad})")
    out = np.empty(nmax + 1, dtype=complex)
    out[0] = -k * h[1] / h[0]
    n = np.arange(1, nmax + 1)
    out[1:] = k * (h[:nmax] / h[1:nmax + 1] - n / x)
    if not np.all(np.isfinite(out)):
        n_bad = int(np.argmax(~np.isfinite(out)))
        raise OverflowError(f"DtN coefficient for mode {n_bad} overflowed at kR={x:g}")
    return out


def dtn_coefficient(mode, k, R):
    """Single DtN coefficient k H_n'(kR)/H_n(kR); ``mode`` may be negative."""
    n = abs(int(mode))
    return complex(dtn_coefficients(n, k, R)[n])
