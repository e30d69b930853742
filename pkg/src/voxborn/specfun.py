"""Complex-argument special functions: spherical Bessel/Hankel functions,
branch-free entire ratios, cylindrical Bessel wrappers, spherical harmonics
and the Lommel integral.

All spherical-family routines accept complex arguments and are vectorized
over the argument.  Orders are capped at ``ELL_MAX`` (default 200); the
double factorials that normalize the entire ratios are handled in log space
so that scaled variants remain finite up to that order.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.special as _sp

ELL_MAX = 200
M_MAX = 60

# series summation is reliable up to this |w|; beyond it the downward
# recurrence route is used instead
_SERIES_W_MAX = 400.0
_SERIES_TERMS_MAX = 500


class AccuracyError(ArithmeticError):
    """Raised when a series evaluation cannot reach the target accuracy."""


def _check_order(ell: int, cap: int = ELL_MAX) -> None:
    if not (isinstance(ell, (int, np.integer)) and 0 <= ell <= cap):
        raise ValueError(f"order must be an integer in [0, {cap}], got {ell!r}")


def log_double_factorial(n: int) -> float:
    """log((n)!!) for odd n >= -1."""
    if n == -1 or n == 1:
        return 0.0
    if n < -1 or n % 2 == 0:
        raise ValueError("only odd n >= -1 supported")
    k = (n - 1) // 2
    return math.lgamma(n + 1) - k * math.log(2.0) - math.lgamma(k + 1)


def jhat_scaled(ell: int, w):
    """(2ell+1)!! * jhat_ell(w), where jhat_ell(w) = j_ell(z)/z^ell and w = z^2.

    The scaled ratio equals sum_m (-w)^m / (2^m m! prod_{j<=m}(2ell+2j+1));
    it is 1 at w = 0 for every order and stays well inside double range for
    all orders up to ELL_MAX.
    """
    _check_order(ell, ELL_MAX + 2)
    w = np.asarray(w, dtype=complex)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    out = np.empty_like(w)
    small = np.abs(w) <= _SERIES_W_MAX
    if np.any(small):
        ws = w[small]
        term = np.ones_like(ws)
        total = np.ones_like(ws)
        max_term = np.ones(ws.shape, dtype=float)
        for m in range(1, _SERIES_TERMS_MAX):
            term = term * (-ws) / (2.0 * m * (2 * ell + 2 * m + 1))
            total = total + term
            np.maximum(max_term, np.abs(term), out=max_term)
            if np.all(np.abs(term) <= 1e-17 * np.maximum(1.0, np.abs(total))):
                break
        else:
            raise AccuracyError(f"series for order {ell} did not converge")
        out[small] = total
    if np.any(~small):
        # beyond the series radius: route through the recurrence path
        logdf = log_double_factorial(2 * ell + 1)
        if logdf > 690.0:
            raise AccuracyError(
                f"order {ell} with |w| > {_SERIES_W_MAX}: scaled value overflows"
            )
        z = np.sqrt(w[~small])  # branch-independent: the ratio is even in z
        out[~small] = math.exp(logdf) * spherical_j(ell, z) / z**ell
    if scalar:
        return complex(out[0])
    return out


def entire_j_ratio(ell: int, w):
    """jhat_ell(w) = j_ell(z)/z^ell as an entire function of w = z^2.

    jhat_ell(0) = 1/(2ell+1)!!.  Values for large orders may underflow to 0
    in double precision; the scaled variant ``jhat_scaled`` does not.
    """
    _check_order(ell, ELL_MAX + 2)
    w = np.asarray(w, dtype=complex)
    # underflows gracefully to 0.0 for ell >~ 150; use jhat_scaled there
    scale = math.exp(-log_double_factorial(2 * ell + 1))
    small = np.abs(w) <= _SERIES_W_MAX
    out = np.empty_like(w)
    if np.any(small):
        out[small] = jhat_scaled(ell, w[small]) * scale
    if np.any(~small):
        z = np.sqrt(w[~small])  # either branch: the ratio is even in z
        out[~small] = spherical_j(ell, z) / z**ell
    if out.ndim == 0:
        return complex(out)
    return out


def entire_j_ratio_deriv(ell: int, w):
    """Termwise derivative d jhat_ell / dw; equals -jhat_{ell+1}(w)/2."""
    return -0.5 * np.asarray(entire_j_ratio(ell + 1, w))


def spherical_j(ell: int, z):
    """Spherical Bessel function j_ell(z) for complex z (vectorized).

    Small arguments use the entire series; otherwise a Miller-style downward
    recurrence normalized against j_0 (or j_1 near zeros of sin z).
    """
    _check_order(ell, ELL_MAX + 2)
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty_like(z)

    small = np.abs(z) <= 0.5
    if np.any(small):
        zs = z[small]
        out[small] = zs**ell * entire_j_ratio(ell, zs * zs)
    big = ~small
    if np.any(big):
        out[big] = _miller_down(ell, z[big])
    if scalar:
        return complex(out[0])
    return out


def _miller_down(ell: int, z: np.ndarray) -> np.ndarray:
    n_start = ell + 20 + int(np.ceil(1.8 * np.max(np.abs(z))))
    fp = np.zeros_like(z)               # f_{n+1}
    fc = np.full_like(z, 1e-30)         # f_n
    rec0 = np.zeros_like(z)
    rec1 = np.zeros_like(z)
    recl = np.zeros_like(z)
    for n in range(n_start, -1, -1):
        fm = (2 * n + 3) / z * fc - fp  # f_{n-? } downward: f_{n} index shift
        fp, fc = fc, fm
        if n == ell:
            recl = fc.copy()
        if n == 1:
            rec1 = fc.copy()
        if n == 0:
            rec0 = fc.copy()
        over = np.abs(fc) > 1e250
        if np.any(over):
            s = np.where(over, 1e-250, 1.0)
            fp *= s
            fc *= s
            recl *= s
            rec1 *= s
            rec0 *= s
    j0 = np.sin(z) / z
    j1 = np.sin(z) / z**2 - np.cos(z) / z
    use0 = np.abs(rec0) * np.abs(j1) >= np.abs(rec1) * np.abs(j0)
    denom = np.where(use0, rec0, rec1)
    ref = np.where(use0, j0, j1)
    return recl * ref / denom


def spherical_j_all(ell_max: int, z) -> np.ndarray:
    """All orders j_0..j_ell_max at once (one downward pass), shape (ell_max+1, ...)."""
    _check_order(ell_max, ELL_MAX + 2)
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty((ell_max + 1,) + z.shape, dtype=complex)
    small = np.abs(z) <= 0.5
    big = ~small
    for ell in range(ell_max + 1):
        if np.any(small):
            zs = z[small]
            out[ell][small] = zs**ell * entire_j_ratio(ell, zs * zs)
    if np.any(big):
        zb = z[big]
        n_start = ell_max + 20 + int(np.ceil(1.8 * np.max(np.abs(zb))))
        fp = np.zeros_like(zb)
        fc = np.full_like(zb, 1e-30)
        rec = np.zeros((ell_max + 1,) + zb.shape, dtype=complex)
        rec0 = np.zeros_like(zb)
        rec1 = np.zeros_like(zb)
        for n in range(n_start, -1, -1):
            fp, fc = fc, (2 * n + 3) / zb * fc - fp
            if n <= ell_max:
                rec[n] = fc
            if n == 1:
                rec1 = fc.copy()
            if n == 0:
                rec0 = fc.copy()
            over = np.abs(fc) > 1e250
            if np.any(over):
                s = np.where(over, 1e-250, 1.0)
                fp *= s
                fc *= s
                rec *= s
                rec1 *= s
                rec0 *= s
        j0 = np.sin(zb) / zb
        j1 = np.sin(zb) / zb**2 - np.cos(zb) / zb
        use0 = np.abs(rec0) * np.abs(j1) >= np.abs(rec1) * np.abs(j0)
        denom = np.where(use0, rec0, rec1)
        ref = np.where(use0, j0, j1)
        out[:, big] = rec * (ref / denom)
    return out


def spherical_h2(ell: int, z, derivative: bool = False):
    """Spherical Hankel function of the second kind h2_ell(z) = j_ell - i y_ell, z != 0.

    Outgoing under the exp(i omega t) time convention.  The dominant y part
    uses upward recurrence; the minimal j part reuses the downward path so
    both real and imaginary parts keep full relative accuracy on the real axis.
    """
    _check_order(ell)
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ValueError("h2 is singular at z = 0")
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    ym = np.sin(z) / z                  # y_{-1}
    yc = -np.cos(z) / z                 # y_0
    for n in range(ell):
        ym, yc = yc, (2 * n + 1) / z * yc - ym
    if derivative:
        jl = spherical_j(ell, z)
        jm = np.cos(z) / z if ell == 0 else spherical_j(ell - 1, z)
        hl = jl - 1j * yc
        hm = jm - 1j * ym
        res = hm - (ell + 1) / z * hl
    else:
        res = spherical_j(ell, z) - 1j * yc
    if scalar:
        return complex(res[0])
    return res


def hankel2_scaled(ell: int, x: float) -> np.ndarray:
    """Scaled Hankel values hhat_n(x) = h2_n(x) x^{n+1} / (2n-1)!! for n = 0..ell.

    The scaling keeps the values O(1) at large order, where h2_n itself grows
    like (2n-1)!!/x^{n+1}.
    """
    _check_order(ell, ELL_MAX + 2)
    e = np.exp(-1j * complex(x))
    vals = np.empty(ell + 1, dtype=complex)
    vals[0] = 1j * e
    if ell >= 1:
        vals[1] = (1j - x) * e
    for n in range(1, ell):
        vals[n + 1] = vals[n] - x * x * vals[n - 1] / ((2 * n + 1) * (2 * n - 1))
    return vals


def cyl_J(m: int, z):
    """Cylindrical Bessel function J_m(z), complex-capable."""
    _check_order(m, M_MAX)
    return _sp.jv(m, np.asarray(z, dtype=complex))


def cyl_H2(m: int, z, derivative: bool = False):
    """Cylindrical Hankel function of the second kind H2_m(z), z != 0."""
    _check_order(m, M_MAX)
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ValueError("H2 is singular at z = 0")
    if derivative:
        if m == 0:
            return -_sp.hankel2(1, z)
        return 0.5 * (_sp.hankel2(m - 1, z) - _sp.hankel2(m + 1, z))
    return _sp.hankel2(m, z)


def cyl_j_ratio(m: int, w):
    """Jhat_m(w) = J_m(z)/z^m as an entire function of w = z^2."""
    _check_order(m, M_MAX)
    w = np.asarray(w, dtype=complex)
    pref = math.exp(-m * math.log(2.0) - math.lgamma(m + 1))
    term = np.full_like(w, pref)
    total = term.copy()
    for s in range(1, _SERIES_TERMS_MAX):
        term = term * (-w / 4.0) / (s * (m + s))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    else:
        raise AccuracyError(f"cylindrical series for order {m} did not converge")
    return total


# ---------------------------------------------------------------------------
# spherical harmonics

def _legendre_u(ell: int, m: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalized associated Legendre with the sin^m factor removed.

    Returns (u_{ell-1,m}, u_{ell,m}) where Pbar_l^m(x) = u_{l,m}(x) sin^m(theta),
    Pbar carrying the full orthonormalization and Condon-Shortley phase.
    u is polynomial in x, hence finite at the poles.
    """
    # u_mm = (-1)^m sqrt((2m+1)/(4 pi) * (2m-1)!!/(2m)!!)
    val = (2 * m + 1) / (4.0 * math.pi)
    for j in range(1, m + 1):
        val *= (2 * j - 1) / (2 * j)
    u_prev = np.zeros_like(x)
    u_curr = np.full_like(x, (-1) ** m * math.sqrt(val))
    for l in range(m + 1, ell + 1):
        a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
        if l - 1 >= m + 1:
            b = math.sqrt(
                (2 * l + 1) * (l + m - 1) * (l - m - 1) / ((2 * l - 3) * (l * l - m * m))
            )
        else:
            b = 0.0
        u_prev, u_curr = u_curr, a * x * u_curr - b * u_prev
    return u_prev, u_curr


def spherical_harmonic(ell: int, m: int, theta, phi):
    """Orthonormal spherical harmonic Y_lm(theta, phi) (physics convention)."""
    _check_order(ell)
    if abs(m) > ell:
        raise ValueError(f"|m| = {abs(m)} exceeds ell = {ell}")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ma = abs(m)
    x = np.cos(theta)
    s = np.sin(theta)
    _, u = _legendre_u(ell, ma, x)
    y = u * s**ma * np.exp(1j * ma * phi)
    if m < 0:
        y = (-1) ** ma * np.conj(y)
    return y


def angular_functions(ell: int, m: int, theta, phi):
    """Y_lm together with the pole-safe tangential functions.

    Returns (Y, pi, tau) with pi = m Y/sin(theta) and tau = dY/dtheta,
    both finite at the poles (computed without dividing by sin theta).
    """
    _check_order(ell)
    if abs(m) > ell:
        raise ValueError(f"|m| = {abs(m)} exceeds ell = {ell}")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ma = abs(m)
    x = np.cos(theta)
    s = np.sin(theta)
    u_lm1, u_l = _legendre_u(ell, ma, x)
    eph = np.exp(1j * ma * phi)
    if ma >= 1:
        sm1 = s ** (ma - 1)
        y = u_l * sm1 * s * eph
        pi_f = ma * u_l * sm1 * eph
        e_lm = math.sqrt((ell * ell - ma * ma) * (2 * ell + 1) / (2 * ell - 1))
        tau_f = sm1 * (ell * x * u_l - e_lm * u_lm1) * eph
    else:
        y = u_l * eph
        pi_f = np.zeros_like(y)
        if ell >= 1:
            _, u_l1 = _legendre_u(ell, 1, x)
            tau_f = math.sqrt(ell * (ell + 1)) * u_l1 * s * eph
        else:
            tau_f = np.zeros_like(y)
    if m < 0:
        sign = (-1) ** ma
        y = sign * np.conj(y)
        pi_f = -sign * np.conj(pi_f)
        tau_f = sign * np.conj(tau_f)
    return y, pi_f, tau_f


def lommel_integral(ell: int, x):
    """int_0^x j_ell(xi)^2 xi^2 d xi via the closed Lommel form (vectorized in x).

    Equal to (pi x^2/4)[J_{l+1/2}^2 - J_{l-1/2} J_{l+3/2}], written here with
    spherical Bessel functions; bounded by min(x^3/3, x^2/2, 5x/8).
    """
    _check_order(ell)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    scalar = x.ndim == 0
    jl = spherical_j(ell, x)
    jp = spherical_j(ell + 1, x)
    jm = np.cos(x) / x if ell == 0 else spherical_j(ell - 1, x)
    res = np.real(0.5 * x**3 * (jl * jl - jm * jp))
    return float(res) if scalar else res


def gamma_s_norm_bound(kr: float, ell_cap: int = ELL_MAX) -> float:
    """max_ell int_0^{kr} j_ell^2 xi^2 d xi, maximized over ell.

    The integrand maximum moves to ell ~ kr; scanning to kr + 20 suffices.
    """
    top = min(ell_cap, int(kr) + 20)
    return max(lommel_integral(ell, kr) for ell in range(0, top + 1))
