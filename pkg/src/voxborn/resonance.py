"""Optical-resonance denominators and their complex roots.

The spherical families f_TE/f_TM and the cylindrical families f_cyl_par /
f_cyl_perp are evaluated branch-free as entire functions of the
susceptibility through the even ratios jhat(w) = j(z)/z^l, w = z^2.  Scaled
forms carry the (kR)^l weight so they stay O(1) at large multipole order;
roots are located in the lambda = 1/chi plane by an argument-principle scan
with Newton polishing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import specfun as sf

FAMILIES = ("TM", "TE", "CYL_PAR", "CYL_PERP")

DEFAULT_RECT = ((-1.2, 0.6), (-0.1, 1.0))
DEFAULT_GRID = (600, 400)
EXCLUSION_RADIUS = 0.02


class IncompleteSearchError(RuntimeError):
    """Winding-number count on the search boundary disagrees with the root count."""

    def __init__(self, family, index, winding, found):
        super().__init__(
            f"{family} index {index}: boundary winding {winding} but {found} roots polished"
        )
        self.family = family
        self.index = index


@dataclass(frozen=True)
class ResonanceMode:
    family: str
    index: int
    chi_root: complex
    lambda_root: complex
    residual: float            # |scaled denominator| at the root
    kr: float


@dataclass(frozen=True)
class Zeta:
    """zeta = (n^2-1)^2/(n^2+1) = chi^2/(chi+2), defined for chi != -2."""

    chi: complex

    def __post_init__(self):
        if abs(self.chi + 2.0) < 1e-14:
            raise ZeroDivisionError("zeta is undefined at chi = -2")

    @property
    def value(self) -> complex:
        return self.chi * self.chi / (self.chi + 2.0)


# ---------------------------------------------------------------------------
# spherical families (scaled by (kR)^l)

def _sphere_parts(ell: int, chi, kr: float):
    chi = np.asarray(chi, dtype=complex)
    x = float(kr)
    w = (1.0 + chi) * x * x
    s0 = sf.jhat_scaled(ell, w)
    s1 = -sf.jhat_scaled(ell + 1, w) / (2.0 * (2 * ell + 3))
    hh = sf.hankel2_scaled(ell, x)
    t1 = x * x * hh[ell - 1] - ell * (2 * ell - 1) * hh[ell]
    return chi, x, w, s0, s1, hh[ell], t1


def f_tm_scaled(ell: int, chi, kr: float):
    """(kR)^l f_TM_l(chi): branch-free, O(1) at large l."""
    if ell < 1:
        raise ValueError("multipole index starts at 1")
    chi, x, w, s0, s1, hl, t1 = _sphere_parts(ell, chi, kr)
    first = (1.0 + chi) * s0 * t1 / ((2 * ell + 1) * (2 * ell - 1))
    second = hl * ((ell + 1) * s0 + 2.0 * w * s1) / (2 * ell + 1)
    return (first - second) / x


def f_te_scaled(ell: int, chi, kr: float):
    """(kR)^l f_TE_l(chi)."""
    if ell < 1:
        raise ValueError("multipole index starts at 1")
    chi, x, w, s0, s1, hl, t1 = _sphere_parts(ell, chi, kr)
    first = s0 * t1 / ((2 * ell + 1) * (2 * ell - 1))
    second = hl * ((ell + 1) * s0 + 2.0 * w * s1) / (2 * ell + 1)
    return (first - second) / x


def _f_tm_scaled_dchi(ell: int, chi, kr: float):
    chi, x, w, s0, s1, hl, t1 = _sphere_parts(ell, chi, kr)
    s2 = sf.jhat_scaled(ell + 2, w) / (4.0 * (2 * ell + 3) * (2 * ell + 5))
    x2 = x * x
    first = (s0 + (1.0 + chi) * x2 * s1) * t1 / ((2 * ell + 1) * (2 * ell - 1))
    second = hl * x2 * ((ell + 3) * s1 + 2.0 * w * s2) / (2 * ell + 1)
    return (first - second) / x


def _f_te_scaled_dchi(ell: int, chi, kr: float):
    chi, x, w, s0, s1, hl, t1 = _sphere_parts(ell, chi, kr)
    s2 = sf.jhat_scaled(ell + 2, w) / (4.0 * (2 * ell + 3) * (2 * ell + 5))
    x2 = x * x
    first = x2 * s1 * t1 / ((2 * ell + 1) * (2 * ell - 1))
    second = hl * x2 * ((ell + 3) * s1 + 2.0 * w * s2) / (2 * ell + 1)
    return (first - second) / x


def f_TM(ell: int, chi, kr: float):
    """f_TM_l(chi) (unscaled); may over/underflow at very large l and small kR."""
    return f_tm_scaled(ell, chi, kr) / kr**ell


def f_TE(ell: int, chi, kr: float):
    """f_TE_l(chi) (unscaled)."""
    return f_te_scaled(ell, chi, kr) / kr**ell


# ---------------------------------------------------------------------------
# cylindrical families (normalized so the chi -> -1 limits are
# kR H2_{m+1}(kR)/(2^m m!) and H2_m(kR)/(2^m (m-1)!) respectively)

def _cyl_parts(m: int, chi, kr: float):
    chi = np.asarray(chi, dtype=complex)
    x = float(kr)
    w = (1.0 + chi) * x * x
    jm = sf.cyl_j_ratio(m, w)
    jm1 = sf.cyl_j_ratio(m - 1, w)
    h = complex(sf.cyl_H2(m, x))
    hp = complex(sf.cyl_H2(m, x, derivative=True))
    return x, w, jm, jm1, h, hp


def f_cyl_par(m: int, chi, kr: float):
    """Branch-free parallel-polarization cylindrical denominator."""
    if m < 1:
        raise ValueError("azimuthal index starts at 1")
    x, w, jm, jm1, h, hp = _cyl_parts(m, chi, kr)
    return (jm1 - m * jm) * h - x * jm * hp


def f_cyl_perp(m: int, chi, kr: float):
    """Branch-free perpendicular-polarization cylindrical denominator."""
    if m < 1:
        raise ValueError("azimuthal index starts at 1")
    x, w, jm, jm1, h, hp = _cyl_parts(m, chi, kr)
    return (jm1 - m * jm) * h - (w / x) * jm * hp


def _f_cyl_par_dchi(m: int, chi, kr: float):
    x, w, jm, jm1, h, hp = _cyl_parts(m, chi, kr)
    djm = -sf.cyl_j_ratio(m + 1, w) / 2.0
    djm1 = -jm / 2.0
    return x * x * ((djm1 - m * djm) * h - x * djm * hp)


def _f_cyl_perp_dchi(m: int, chi, kr: float):
    x, w, jm, jm1, h, hp = _cyl_parts(m, chi, kr)
    djm = -sf.cyl_j_ratio(m + 1, w) / 2.0
    djm1 = -jm / 2.0
    return x * x * ((djm1 - m * djm) * h - (jm / (x * x) + (w / x) * djm / x) * hp * x)


_SCALED = {
    "TM": f_tm_scaled,
    "TE": f_te_scaled,
    "CYL_PAR": f_cyl_par,
    "CYL_PERP": f_cyl_perp,
}
_SCALED_DCHI = {
    "TM": _f_tm_scaled_dchi,
    "TE": _f_te_scaled_dchi,
    "CYL_PAR": _f_cyl_par_dchi,
    "CYL_PERP": _f_cyl_perp_dchi,
}


def scaled_denominator(family: str, index: int, chi, kr: float):
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    return _SCALED[family](index, chi, kr)


# ---------------------------------------------------------------------------
# asymptotics

def asymptotic_root_TM(ell: int, kr: float) -> complex:
    """Two-term large-l prediction chi_l ~ -2 - (1/l)(1 + (kR)^2/l)."""
    if ell < 1:
        raise ValueError("multipole index starts at 1")
    return complex(-2.0 - (1.0 / ell) * (1.0 + kr * kr / ell))


def heuristic_expansion_TM(ell: int, chi, kr: float):
    """Two-term large-l expansion of (kR)^l f_TM_l(chi)."""
    chi = np.asarray(chi, dtype=complex)
    x = kr
    lead = -1j * (ell * (chi + 2.0) + 1.0) / ((2 * ell + 1) * x)
    sub = (
        1j
        * chi
        * (ell * (-chi + 2 * ell * (chi + 2.0) + 4.0) + 3.0)
        * x
        / (2.0 * (2 * ell - 1) * (2 * ell + 1) * (2 * ell + 3))
    )
    return lead + sub


def amplification_A(ell: int, chi, kr: float) -> float:
    """A_l = 1/|(kR)^l f_TM_l(chi)|; infinite exactly at a resonance root."""
    d = abs(complex(f_tm_scaled(ell, complex(chi), kr)))
    if d == 0.0:
        return float("inf")
    return 1.0 / d


# ---------------------------------------------------------------------------
# root finding

def _wrap_phase(d):
    return (d + np.pi) % (2 * np.pi) - np.pi


def _path_winding(g, za, zb, depth: int = 0, fa=None, fb=None) -> float:
    """Accumulated phase change of g along the segment [za, zb], adaptively
    refined until each step turns by less than pi/2."""
    if fa is None:
        fa = g(za)
    if fb is None:
        fb = g(zb)
    d = np.angle(fb) - np.angle(fa)
    d = _wrap_phase(d)
    if abs(d) <= np.pi / 2 or depth >= 40:
        return d
    zm = 0.5 * (za + zb)
    fm = g(zm)
    return _path_winding(g, za, zm, depth + 1, fa, fm) + _path_winding(
        g, zm, zb, depth + 1, fm, fb
    )


def _loop_winding(g, vertices) -> int:
    total = 0.0
    for a, b in zip(vertices, np.roll(vertices, -1)):
        total += _path_winding(g, a, b)
    return int(np.rint(total / (2 * np.pi)))


def find_roots(family: str, indices, kr: float, rect=DEFAULT_RECT,
               grid_density=DEFAULT_GRID, newton_tol: float = 1e-12,
               residual_tol: float = 1e-10, max_newton: int = 50,
               exclusion_radius: float = EXCLUSION_RADIUS):
    """Locate resonance roots of the given family in a lambda-plane rectangle.

    Phase-diagram scan over a grid, Newton polishing of flagged cells, and an
    argument-principle consistency check: per index, the boundary winding
    (minus the winding around the exclusion disk at lambda = 0, when the
    rectangle contains it) must equal the number of returned roots.
    Deterministic ordering: (family, index, Re lambda).
    """
    (re_lo, re_hi), (im_lo, im_hi) = rect
    if re_lo >= re_hi or im_lo >= im_hi:
        raise ValueError("empty rectangle")
    nx, ny = grid_density
    contains_zero = re_lo < 0.0 < re_hi and im_lo < 0.0 < im_hi
    if contains_zero and exclusion_radius <= 0:
        raise ValueError(
            "rectangle must exclude lambda = 0 (roots accumulate there); "
            "set a positive exclusion radius"
        )
    xs = np.linspace(re_lo, re_hi, nx + 1)
    ys = np.linspace(im_lo, im_hi, ny + 1)
    lam = xs[None, :] + 1j * ys[:, None]
    modes = []
    for index in indices:
        fn = _SCALED[family]
        dfn = _SCALED_DCHI[family]

        def g(z):
            return fn(index, 1.0 / z, kr)

        vals = g(lam)
        usable = np.abs(lam) > (exclusion_radius if contains_zero else 0.0)
        ph = np.angle(vals)
        d_right = _wrap_phase(np.diff(ph, axis=1))    # along +Re
        d_up = _wrap_phase(np.diff(ph, axis=0))       # along +Im
        # counterclockwise cell circulation
        circ = (
            d_right[:-1, :]
            + d_up[:, 1:]
            - d_right[1:, :]
            - d_up[:, :-1]
        )
        cell_ok = (
            usable[:-1, :-1] & usable[:-1, 1:] & usable[1:, :-1] & usable[1:, 1:]
        )
        hits = np.argwhere((np.abs(circ) > np.pi) & cell_ok)
        roots = []
        for iy, ix in hits:
            z = 0.5 * (lam[iy, ix] + lam[iy + 1, ix + 1])
            ok = False
            for _ in range(max_newton):
                chi = 1.0 / z
                fv = complex(fn(index, chi, kr))
                dv = complex(dfn(index, chi, kr)) * (-1.0 / (z * z))
                if dv == 0:
                    break
                step = fv / dv
                z = z - step
                if not np.isfinite(z) or abs(z) < 1e-14:
                    break
                if abs(step) < newton_tol:
                    ok = True
                    break
            if not ok:
                continue
            if not (re_lo < z.real < re_hi and im_lo < z.imag < im_hi):
                continue
            if contains_zero and abs(z) <= exclusion_radius:
                continue
            res = abs(complex(fn(index, 1.0 / z, kr)))
            if res > residual_tol:
                continue
            roots.append(z)
        # de-duplicate within 1e-8
        unique = []
        for z in sorted(roots, key=lambda t: (t.real, t.imag)):
            if all(abs(z - u) > 1e-8 for u in unique):
                unique.append(z)
        corners = np.array(
            [re_lo + 1j * im_lo, re_hi + 1j * im_lo, re_hi + 1j * im_hi, re_lo + 1j * im_hi]
        )
        winding = _loop_winding(lambda z: complex(g(np.asarray(z))), corners)
        if contains_zero:
            th = np.linspace(0, 2 * np.pi, 33)[:-1]
            circle = exclusion_radius * np.exp(1j * th)
            winding -= _loop_winding(lambda z: complex(g(np.asarray(z))), circle)
        if winding != len(unique):
            raise IncompleteSearchError(family, index, winding, len(unique))
        for z in unique:
            chi = 1.0 / z
            modes.append(
                ResonanceMode(
                    family=family,
                    index=int(index),
                    chi_root=complex(chi),
                    lambda_root=complex(z),
                    residual=abs(complex(fn(index, chi, kr))),
                    kr=float(kr),
                )
            )
    modes.sort(key=lambda m: (m.family, m.index, m.lambda_root.real, m.lambda_root.imag))
    return modes


def cluster_count(modes, center: complex, radius: float) -> int:
    """How many located roots fall within |lambda - center| < radius."""
    return sum(1 for m in modes if abs(m.lambda_root - center) < radius)
