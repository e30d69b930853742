"""Operator-level tests: kernel blocks against a symbolic-derivative oracle,
dense vs FFT agreement, spectral identities, and the quadratic-form physics."""

import numpy as np
import pytest
import sympy as sp
from scipy.integrate import quad

from voxborn import geometry as geo
from voxborn import kernel as kn


@pytest.fixture(scope="module")
def box6():
    return geo.grid_from_mask(np.ones((6, 6, 6), bool), 0.17, 0.4 - 0.2j)


@pytest.fixture(scope="module")
def ball8():
    return geo.voxelize(geo.Sphere(1.0, chi=0.5 - 0.5j), 1.0 / 8)


def _random_field(grid, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(grid.n_occupied, 3)) + 1j * rng.normal(
        size=(grid.n_occupied, 3)
    )
    return kn.ComplexVectorField(grid, v)


class TestDyadicKernel:
    def test_static_limit_along_z(self):
        kd = 0.2
        blk = kn.dyadic_kernel(kd, (0, 0, 3), static=True)
        r = 3 * kd
        expect = kd**3 * (3 * np.outer([0, 0, 1], [0, 0, 1]) - np.eye(3)) / (
            4 * np.pi * r**3
        )
        np.testing.assert_allclose(blk, expect, rtol=1e-14)

    def test_block_structure(self):
        blk = kn.dyadic_kernel(0.3, (1, 2, -1))
        np.testing.assert_allclose(blk, blk.T, atol=0)
        d = np.array([1.0, 2.0, -1.0])
        rhat = d / np.linalg.norm(d)
        w, v = np.linalg.eig(blk)
        # one eigenvector is the separation direction
        aligned = np.max(np.abs(v.conj().T @ rhat))
        assert aligned > 1 - 1e-12

    def test_against_symbolic_hessian_oracle(self):
        # full curl-curl dyadic: k^2 e/(4 pi R) I + Hessian(e/(4 pi R))
        x, y, z = sp.symbols("x y z", real=True)
        R = sp.sqrt(x * x + y * y + z * z)
        g = sp.exp(-sp.I * R) / (4 * sp.pi * R)
        coords = (x, y, z)
        kd = 0.7 / np.sqrt(3)  # offset (1,1,1) gives kR = 0.7
        off = np.array([1.0, 1.0, 1.0])
        pt = {x: off[0] * kd, y: off[1] * kd, z: off[2] * kd}
        oracle = np.empty((3, 3), dtype=complex)
        for i in range(3):
            for j in range(3):
                expr = sp.diff(g, coords[i], coords[j])
                if i == j:
                    expr = expr + g
                oracle[i, j] = complex(expr.subs(pt).evalf(30))
        blk = kn.dyadic_kernel(kd, off) / kd**3
        np.testing.assert_allclose(blk, oracle, atol=1e-13 * np.max(np.abs(oracle)))

    def test_zero_offset_rejected(self):
        with pytest.raises(ValueError):
            kn.dyadic_kernel(0.1, (0, 0, 0))


class TestSelfTerm:
    def test_static_limit(self):
        s = kn.self_term(1e-4)
        assert abs(s - (-1.0 / 3.0)) < 1e-7

    def test_radiative_loss_against_quadrature(self):
        # rotation-averaged kernel over the volume-equivalent sphere
        kd = 0.25
        a = kd * (3 / (4 * np.pi)) ** (1 / 3)
        re = quad(lambda r: (2 / 3) * r * np.cos(r), 0, a)[0]
        im = -quad(lambda r: (2 / 3) * r * np.sin(r), 0, a)[0]
        s = kn.self_term(kd)
        assert abs(s - (-1 / 3 + re + 1j * im)) < 1e-10
        assert s.imag < 0  # radiative loss has a definite sign

    def test_single_dipole_energy_balance(self):
        # Im s must equal -2(ka)^3/9 to leading order for the optical theorem
        kd = 0.05
        a = kd * (3 / (4 * np.pi)) ** (1 / 3)
        assert abs(kn.self_term(kd).imag + 2 * a**3 / 9) < a**5


class TestDenseVsFFT:
    def test_full_box(self, box6):
        k = kn.get_kernel(box6)
        E = _random_field(box6)
        dense = k.dense_G()
        lhs = (dense @ E.values.ravel()).reshape(-1, 3)
        rhs = k.apply_G(E.values)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))

    def test_random_masks(self):
        rng = np.random.default_rng(42)
        for trial in range(3):
            mask = rng.random((6, 6, 6)) < 0.6
            if not mask.any():
                mask[3, 3, 3] = True
            grid = geo.grid_from_mask(mask, 0.21, 0.1)
            k = kn.get_kernel(grid)
            E = _random_field(grid, seed=trial)
            lhs = (k.dense_G() @ E.values.ravel()).reshape(-1, 3)
            rhs = k.apply_G(E.values)
            assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(np.max(np.abs(rhs)), 1)

    def test_scalar_dense_vs_fft(self, box6):
        k = kn.get_kernel(box6)
        rng = np.random.default_rng(3)
        u = rng.normal(size=box6.n_occupied) + 1j * rng.normal(size=box6.n_occupied)
        lhs = k.dense_scalar() @ u
        rhs = k.apply_scalar_kernel(u)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))

    def test_transpose_identity_exact(self, box6):
        dense = kn.get_kernel(box6).dense_G()
        assert np.array_equal(dense, dense.T)

    def test_transpose_pairing(self, box6):
        # <F, (lam I - G) E> = <conj(E), (lam I - G) conj(F)>
        k = kn.get_kernel(box6)
        rng = np.random.default_rng(9)
        E = _random_field(box6, 1)
        F = _random_field(box6, 2)
        lam = 0.3 + 0.1j
        lhs = F.inner(kn.ComplexVectorField(box6, lam * E.values - k.apply_G(E.values)))
        Fc = np.conj(F.values)
        rhs_field = lam * Fc - k.apply_G(Fc)
        rhs = kn.ComplexVectorField(box6, np.conj(E.values)).inner(
            kn.ComplexVectorField(box6, rhs_field)
        )
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)

    def test_parseval_round_trip(self, box6):
        assert kn.get_kernel(box6).table("dynamic").roundtrip_error() < 1e-12

    def test_linearity_and_translation_covariance(self):
        rng = np.random.default_rng(5)
        mask_small = rng.random((4, 4, 4)) < 0.7
        mask_small[0, 0, 0] = True
        big_a = np.zeros((7, 7, 7), bool)
        big_b = np.zeros((7, 7, 7), bool)
        big_a[:4, :4, :4] = mask_small
        big_b[3:, 2:6, 1:5] = mask_small
        ga = geo.grid_from_mask(big_a, 0.3, 0.2)
        gb = geo.grid_from_mask(big_b, 0.3, 0.2)
        E = rng.normal(size=(ga.n_occupied, 3)) + 1j * rng.normal(size=(ga.n_occupied, 3))
        ya = kn.get_kernel(ga).apply_G(E)
        yb = kn.get_kernel(gb).apply_G(E)
        np.testing.assert_allclose(ya, yb, atol=1e-13 * np.max(np.abs(ya)))
        # linearity
        F = rng.normal(size=E.shape) + 1j * rng.normal(size=E.shape)
        lhs = kn.get_kernel(ga).apply_G(2.0 * E + 0.5j * F)
        rhs = 2.0 * ya + 0.5j * kn.get_kernel(ga).apply_G(F)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12 * np.max(np.abs(lhs)))


class TestBornComposition:
    def test_chi_zero_is_identity(self, box6):
        E = _random_field(box6)
        out = kn.apply_born(box6, E, chi=0.0)
        np.testing.assert_array_equal(out.values, E.values)

    def test_uniform_equals_constant_per_voxel(self, box6):
        E = _random_field(box6)
        chi_arr = np.full(box6.n_occupied, 0.4 - 0.2j)
        a = kn.apply_born(box6, E, chi=0.4 - 0.2j)
        b = kn.apply_born(box6, E, chi=chi_arr)
        np.testing.assert_array_equal(a.values, b.values)

    def test_dense_oracle(self, box6):
        k = kn.get_kernel(box6)
        E = _random_field(box6)
        chi = 0.4 - 0.2j
        dense = np.eye(3 * box6.n_occupied) - chi * k.dense_G()
        lhs = (dense @ E.values.ravel()).reshape(-1, 3)
        rhs = k.apply_born(E.values, chi)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))

    def test_dissipative_coercivity(self, ball8):
        # ||B E|| >= (-Im chi/|chi|) ||E|| for every field when Im chi < 0
        for chi in (-1j, 0.5 - 0.5j, 2.0 - 0.1j):
            bound = -chi.imag / abs(chi)
            for seed in range(4):
                E = _random_field(ball8, seed)
                BE = kn.apply_born(ball8, E, chi=chi)
                assert BE.norm() >= bound * E.norm() * (1 - 1e-9)

    def test_got_quadratic_form_positive(self, ball8):
        for seed in range(4):
            E = _random_field(ball8, seed)
            val = np.imag(kn.apply_G(ball8, E).inner(E))
            assert val >= -1e-12 * E.norm() ** 2


class TestStaticDipole:
    def test_spectrum_window(self, ball8):
        rng = np.random.default_rng(1)
        for seed in range(4):
            E = _random_field(ball8, seed)
            q = np.real(kn.apply_static_dipole(ball8, E).inner(E)) / E.norm() ** 2
            assert -1e-10 <= q <= 1 + 1e-10

    def test_rayleigh_quotients_ball(self):
        grid = geo.voxelize(geo.Sphere(1.0), 1.0 / 12)
        pts = grid.occupied_centers()
        x, y, z = pts.T
        fields = {
            1: np.column_stack([np.zeros_like(x), np.zeros_like(x), np.ones_like(x)]),
            2: np.column_stack([-2 * x, -2 * y, 4 * z]),
            3: np.column_stack([-6 * x * z, -6 * y * z, 6 * z**2 - 3 * x**2 - 3 * y**2]),
        }
        for ell, vals in fields.items():
            E = kn.ComplexVectorField(grid, vals.astype(complex))
            q = np.real(kn.apply_static_dipole(grid, E).inner(E)) / E.norm() ** 2
            target = ell / (2 * ell + 1)
            assert abs(q - target) <= 0.05 * target


class TestGammaS:
    def test_psd(self, ball8):
        for seed in range(4):
            E = _random_field(ball8, seed)
            q = np.real(kn.apply_gamma_S(ball8, E).inner(E))
            assert q >= -1e-12 * E.norm() ** 2

    def test_top_eigenvalue_vs_lommel(self, ball8):
        from voxborn.bounds import estimate_norm
        from voxborn.specfun import gamma_s_norm_bound

        k = kn.get_kernel(ball8)
        op = k.linear_operator("gamma_s")
        top = estimate_norm(op.matvec, 3 * ball8.n_occupied, hermitian=True)
        ref = gamma_s_norm_bound(1.0)
        assert abs(top - ref) <= 0.10 * ref

    def test_gradient_fields_are_dark(self):
        # smooth compactly supported gradients approach the -1 eigenspace of G
        ratios = []
        for kd in (1 / 8, 1 / 16):
            grid = geo.voxelize(geo.Sphere(1.0), kd)
            pts = grid.occupied_centers()
            r2 = np.sum(pts**2, axis=1)
            rho2 = 0.36
            inside = r2 < rho2 * 0.999
            envelope = np.zeros_like(r2)
            envelope[inside] = np.exp(-1.0 / (1.0 - r2[inside] / rho2))
            # E = grad f with f the bump: grad = f * (-2 r / rho2) / (1 - r2/rho2)^2
            coef = np.zeros_like(r2)
            coef[inside] = (
                envelope[inside]
                * (-2.0 / rho2)
                / (1.0 - r2[inside] / rho2) ** 2
            )
            E = kn.ComplexVectorField(grid, (coef[:, None] * pts).astype(complex))
            out = kn.apply_G(grid, E) + E
            ratios.append(out.norm() / E.norm())
        assert ratios[1] < 0.5 * ratios[0]
        assert ratios[1] < 0.1


class TestScalarKernel:
    def test_chi_zero_identity(self, box6):
        rng = np.random.default_rng(0)
        u = rng.normal(size=box6.n_occupied) + 0j
        np.testing.assert_array_equal(kn.apply_scalar(box6, u, chi=0.0), u)

    def test_newton_potential_of_ball(self):
        # static limit: C u at the center approaches R^2/2 for u = 1
        grid = geo.voxelize(geo.Sphere(1.0), 1.0 / 16)
        u = np.ones(grid.n_occupied, dtype=complex)
        ku = kn.apply_scalar_kernel(grid, u)
        # pick the voxel closest to the center; compare |C u| to R^2/2
        pts = grid.occupied_centers()
        i0 = int(np.argmin(np.sum(pts**2, axis=1)))
        # at k = 1 and kR = 1 the static part dominates the real part
        assert abs(ku[i0].real - 0.5) < 0.03 * 0.5
