"""Special-function identities against high-precision and quadrature oracles."""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import roots_legendre, sici

from voxborn import specfun as sf


def mp_spherical_j(ell, z):
    z = mp.mpc(z)
    return complex(mp.sqrt(mp.pi / (2 * z)) * mp.besselj(ell + mp.mpf(1) / 2, z))


def mp_spherical_h2(ell, z):
    z = mp.mpc(z)
    j = mp.sqrt(mp.pi / (2 * z)) * mp.besselj(ell + mp.mpf(1) / 2, z)
    y = mp.sqrt(mp.pi / (2 * z)) * mp.bessely(ell + mp.mpf(1) / 2, z)
    return complex(j - 1j * y)


class TestSphericalJ:
    def test_at_zero(self):
        assert sf.spherical_j(0, 0.0) == 1.0

    def test_at_pi(self):
        assert abs(sf.spherical_j(0, math.pi)) < 1e-14

    def test_against_series_oracle(self):
        val = sf.spherical_j(3, 2.5)
        ref = mp_spherical_j(3, 2.5)
        assert abs(val - ref) < 1e-12

    @pytest.mark.parametrize(
        "ell,z",
        [(0, 0.1), (1, 4.0), (7, 2.0 + 1.0j), (25, 9.0), (60, 1.5), (12, -3.0 + 0.25j)],
    )
    def test_complex_arguments(self, ell, z):
        ref = mp_spherical_j(ell, z)
        assert abs(sf.spherical_j(ell, z) - ref) <= 1e-12 * max(1.0, abs(ref))

    def test_all_orders_consistent(self):
        z = np.array([0.2, 3.0, 11.0, 2.0 - 0.5j])
        table = sf.spherical_j_all(12, z)
        for ell in (0, 5, 12):
            np.testing.assert_allclose(table[ell], sf.spherical_j(ell, z), rtol=1e-12)

    def test_order_cap(self):
        with pytest.raises(ValueError):
            sf.spherical_j(sf.ELL_MAX + 5, 1.0)


class TestSphericalH2:
    def test_order_zero_closed_form(self):
        assert abs(sf.spherical_h2(0, 1.0) - 1j * np.exp(-1j)) < 1e-15

    def test_wronskian_real_axis(self):
        # det [[Re h, Im h], [Re h', Im h']] = -1/x^2
        x = np.linspace(0.1, 50.0, 120)
        for ell in (0, 1, 5, 20):
            h = sf.spherical_h2(ell, x)
            hp = sf.spherical_h2(ell, x, derivative=True)
            det = h.real * hp.imag - h.imag * hp.real
            np.testing.assert_allclose(det, -1.0 / x**2, rtol=1e-11)

    def test_derivative_against_oracle(self):
        # closed form h2_l' = h2_{l-1} - (l+1)/z h2_l evaluated in high precision
        z = 3 + 0.5j
        hp = sf.spherical_h2(5, z, derivative=True)
        ref = mp_spherical_h2(4, z) - 6 / z * mp_spherical_h2(5, z)
        assert abs(hp - ref) <= 1e-11 * abs(ref)

    def test_zero_argument_rejected(self):
        with pytest.raises(ValueError):
            sf.spherical_h2(2, 0.0)

    def test_scaled_table(self):
        x = 0.5
        hh = sf.hankel2_scaled(40, x)
        for n in (0, 3, 17, 40):
            ref = sf.spherical_h2(n, x) * x ** (n + 1) / math.exp(
                sf.log_double_factorial(2 * n - 1)
            )
            assert abs(hh[n] - ref) <= 1e-12 * abs(ref)


class TestEntireRatio:
    def test_value_at_origin(self):
        assert abs(sf.entire_j_ratio(1, 0.0) - 1.0 / 3.0) < 1e-15

    def test_cross_check_spherical_j(self):
        assert abs(sf.entire_j_ratio(2, 4.0) - sf.spherical_j(2, 2.0) / 4.0) < 1e-14

    def test_negative_argument(self):
        # w = -1 corresponds to z = i and j_0(i) = sinh(1)
        assert abs(sf.entire_j_ratio(0, -1.0) - math.sinh(1.0)) < 1e-14

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(min_value=0, max_value=20),
        st.complex_numbers(max_magnitude=8.0, allow_nan=False, allow_infinity=False),
    )
    def test_matches_spherical_j(self, ell, z):
        if abs(z) < 1e-3:
            z = z + 0.5
        lhs = sf.entire_j_ratio(ell, z * z) * z**ell
        rhs = sf.spherical_j(ell, z)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(rhs), 1e-30)

    def test_deriv_is_termwise(self):
        w = 1.7 - 0.4j
        h = 1e-6
        fd = (sf.entire_j_ratio(3, w + h) - sf.entire_j_ratio(3, w - h)) / (2 * h)
        assert abs(sf.entire_j_ratio_deriv(3, w) - fd) < 1e-9

    def test_large_w_routes(self):
        # |w| beyond the series radius goes through the recurrence path
        w = 2500.0
        ref = mp_spherical_j(2, math.sqrt(w)) / math.sqrt(w) ** 2
        assert abs(sf.entire_j_ratio(2, w) - ref) <= 1e-10 * abs(ref)


class TestCylindrical:
    def test_small_argument_series(self):
        z = 0.01
        assert abs(sf.cyl_J(0, z) - (1 - z * z / 4)) < 1e-9

    def test_wronskian(self):
        x = np.linspace(0.1, 50.0, 97)
        for m in (0, 1, 4, 11):
            j = sf.cyl_J(m, x)
            jp = 0.5 * (sf.cyl_J(max(m - 1, 0), x) - sf.cyl_J(m + 1, x))
            if m == 0:
                jp = -sf.cyl_J(1, x)
            h = sf.cyl_H2(m, x)
            hp = sf.cyl_H2(m, x, derivative=True)
            # J Y' - J' Y = 2/(pi x), expressed through H2 = J - iY
            w = j * hp - jp * h
            np.testing.assert_allclose(w.imag, -2.0 / (np.pi * x), rtol=1e-12)

    def test_against_series_oracle(self):
        val = sf.cyl_J(3, 2 - 1j)
        ref = complex(mp.besselj(3, mp.mpc(2 - 1j)))
        assert abs(val - ref) <= 1e-11 * abs(ref)

    def test_entire_ratio(self):
        z = 1.3 + 0.7j
        for m in (1, 2, 6):
            lhs = sf.cyl_j_ratio(m, z * z) * z**m
            ref = complex(mp.besselj(m, mp.mpc(z)))
            assert abs(lhs - ref) <= 1e-12 * abs(ref)

    def test_h2_zero_rejected(self):
        with pytest.raises(ValueError):
            sf.cyl_H2(1, 0.0)


class TestSphericalHarmonic:
    def test_monopole(self):
        assert abs(sf.spherical_harmonic(0, 0, 0.7, 1.1) - 1 / math.sqrt(4 * math.pi)) < 1e-15

    def test_dipole(self):
        th = 0.9
        ref = math.sqrt(3 / (4 * math.pi)) * math.cos(th)
        assert abs(sf.spherical_harmonic(1, 0, th, 2.0) - ref) < 1e-15

    def test_orthonormality_by_quadrature(self):
        xg, wg = roots_legendre(24)
        th = np.arccos(xg)
        nphi = 48
        ph = 2 * np.pi * np.arange(nphi) / nphi
        TH, PH = np.meshgrid(th, ph, indexing="ij")
        W = np.broadcast_to(wg[:, None] * (2 * np.pi / nphi), TH.shape)
        y21 = sf.spherical_harmonic(2, 1, TH, PH)
        assert abs(np.sum(W * np.abs(y21) ** 2) - 1.0) < 1e-10
        y3m2 = sf.spherical_harmonic(3, -2, TH, PH)
        assert abs(np.sum(W * np.conj(y21) * y3m2)) < 1e-12

    def test_m_out_of_range(self):
        with pytest.raises(ValueError):
            sf.spherical_harmonic(2, 3, 0.1, 0.1)

    def test_tangential_functions_match_finite_differences(self):
        rng = np.random.default_rng(3)
        th = rng.uniform(0.05, 3.05, size=5)
        ph = rng.uniform(0.0, 2 * np.pi, size=5)
        h = 1e-6
        for (l, m) in [(1, 1), (4, -3), (6, 0), (5, 5)]:
            y, pi_f, tau_f = sf.angular_functions(l, m, th, ph)
            np.testing.assert_allclose(y, sf.spherical_harmonic(l, m, th, ph), atol=1e-14)
            fd = (
                sf.spherical_harmonic(l, m, th + h, ph)
                - sf.spherical_harmonic(l, m, th - h, ph)
            ) / (2 * h)
            np.testing.assert_allclose(tau_f, fd, atol=2e-9)
            np.testing.assert_allclose(
                pi_f, m * y / np.sin(th), atol=1e-13, rtol=1e-12
            )

    def test_tangential_functions_finite_at_poles(self):
        y, pi_f, tau_f = sf.angular_functions(3, 1, np.array([0.0, np.pi]), np.zeros(2))
        assert np.all(np.isfinite(pi_f)) and np.all(np.isfinite(tau_f))
        assert abs(pi_f[0]) > 0.1  # |m| = 1 is the nonvanishing case


class TestLommel:
    def test_small_argument(self):
        x = 1e-3
        # x^3/3 with an O(x^5) correction
        assert abs(sf.lommel_integral(0, x) - x**3 / 3) < x**5

    def test_against_quadrature(self):
        for (ell, x) in [(2, 5.0), (0, 1.0), (7, 12.0), (20, 30.0)]:
            val = sf.lommel_integral(ell, x)
            ref = quad(
                lambda t: float(np.real(sf.spherical_j(ell, t))) ** 2 * t * t,
                0.0,
                x,
                limit=400,
            )[0]
            assert abs(val - ref) < 1e-10

    @settings(max_examples=100, deadline=None)
    @given(st.integers(min_value=0, max_value=40), st.floats(min_value=1e-3, max_value=40.0))
    def test_bessel_bound(self, ell, x):
        val = sf.lommel_integral(ell, x)
        assert val <= min(x**3 / 3, x**2 / 2, 5 * x / 8) + 1e-12


class TestSumRules:
    XI = np.linspace(0.217, 20.0, 23)

    def test_unit_sum_rule(self):
        for xi in self.XI:
            lmax = int(xi) + 40
            j = sf.spherical_j_all(lmax, xi)[:, 0].real
            total = np.sum((2 * np.arange(lmax + 1) + 1) * j * j)
            assert abs(total - 1.0) < 1e-12

    def test_sine_integral_sum_rule(self):
        for xi in self.XI:
            lmax = int(xi) + 40
            j = sf.spherical_j_all(lmax, xi)[:, 0].real
            si = sici(2 * xi)[0]
            assert abs(np.sum(j * j) - si / (2 * xi)) < 1e-12

    def test_alternating_sum_rule(self):
        for xi in self.XI:
            lmax = int(xi) + 40
            j = sf.spherical_j_all(lmax, xi)[:, 0].real
            ell = np.arange(lmax + 1)
            total = np.sum((-1.0) ** ell * (2 * ell + 1) * j * j)
            assert abs(total - np.sin(2 * xi) / (2 * xi)) < 1e-12
