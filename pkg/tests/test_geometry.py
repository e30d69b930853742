"""Voxelization and geometric-functional tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxborn import geometry as geo


class TestVoxelize:
    def test_sphere_matches_brute_force_center_count(self):
        kd = 0.5
        grid = geo.voxelize(geo.Sphere(1.0), kd)
        centers = grid.origin + kd * np.array(
            np.meshgrid(*map(np.arange, grid.dims), indexing="ij")
        ).reshape(3, -1).T
        expected = int(np.count_nonzero(np.sum(centers**2, axis=1) < 1.0))
        assert grid.n_occupied == expected

    def test_lattice_aligned_box_is_exact(self):
        grid = geo.voxelize(geo.Box(1, 1, 1), 0.25)
        assert grid.n_occupied == 4**3

    def test_union_of_disjoint_spheres(self):
        a = geo.Sphere(0.5, chi=1.0, center=(-1.0, 0, 0))
        b = geo.Sphere(0.5, chi=2.0, center=(1.0, 0, 0))
        u = geo.voxelize(geo.Union((a, b)), 0.2)
        na = geo.voxelize(a, 0.2).n_occupied
        nb = geo.voxelize(b, 0.2).n_occupied
        assert u.n_occupied == na + nb
        assert set(np.unique(u.occupied_chi())) == {1.0 + 0j, 2.0 + 0j}

    def test_degenerate_shape(self):
        # sub-voxel features that straddle the lattice miss every center
        tiny = geo.Union(
            (geo.Sphere(0.05, center=(-0.4, 0, 0)), geo.Sphere(0.05, center=(0.4, 0, 0)))
        )
        with pytest.raises(geo.DegenerateShapeError):
            geo.voxelize(tiny, 1.0)

    def test_deterministic(self):
        g1 = geo.voxelize(geo.Sphere(1.0), 0.21)
        g2 = geo.voxelize(geo.Sphere(1.0), 0.21)
        assert np.array_equal(g1.mask, g2.mask)
        assert np.array_equal(g1.origin, g2.origin)

    def test_mask_revoxelization_is_idempotent(self, tmp_path):
        grid = geo.voxelize(geo.Sphere(0.8, chi=0.3 - 0.1j), 0.2)
        path = tmp_path / "m.voxb"
        geo.save_mask(path, grid)
        back = geo.load_mask(path)
        assert np.array_equal(back.mask, grid.mask)
        np.testing.assert_array_equal(back.chi, grid.chi)
        assert back.kd == grid.kd
        # byte-exact: saving again reproduces the file
        path2 = tmp_path / "m2.voxb"
        geo.save_mask(path2, back)
        assert path.read_bytes() == path2.read_bytes()


class TestFunctionals:
    def test_sphere_radius_converges(self):
        for kd in (0.2, 0.1, 0.05):
            grid = geo.voxelize(geo.Sphere(1.0), kd)
            assert abs(geo.circumscribed_radius(grid) - 1.0) <= 2 * kd

    def test_single_voxel(self):
        grid = geo.grid_from_mask(np.ones((1, 1, 1), bool), 0.3, 1.0)
        assert abs(geo.circumscribed_radius(grid) - np.sqrt(3) / 2 * 0.3) < 1e-12
        assert geo.inscribed_radius(grid) == 0.0

    def test_cylinder_circumscribed(self):
        kd = 0.05
        grid = geo.voxelize(geo.Cylinder(1.0, 4.0), kd)
        assert abs(geo.circumscribed_radius(grid) - np.sqrt(5)) <= 2 * kd

    def test_box_inscribed(self):
        kd = 0.05
        grid = geo.voxelize(geo.Box(1, 1, 1), kd)
        assert abs(geo.inscribed_radius(grid) - 0.5) <= 2 * kd

    def test_ball_volume(self):
        grid = geo.voxelize(geo.Sphere(1.0), 1 / 24)
        assert abs(geo.volume(grid) - 4 * np.pi / 3) / (4 * np.pi / 3) < 0.03

    def test_box_volume_exact(self):
        grid = geo.voxelize(geo.Box(1, 1, 1), 0.25)
        assert abs(geo.volume(grid) - 1.0) < 1e-12

    def test_refinement_monotone_error(self):
        errs = []
        for kd in (0.25, 0.125, 0.0625):
            grid = geo.voxelize(geo.Sphere(1.0), kd)
            errs.append(
                abs(geo.circumscribed_radius(grid) - 1.0)
                + abs(geo.inscribed_radius(grid) - 1.0)
                + abs(geo.volume(grid) - 4 * np.pi / 3)
            )
        assert errs[0] > errs[1] > errs[2]

    @settings(max_examples=25, deadline=None)
    @given(
        st.floats(min_value=0.3, max_value=2.0),
        st.floats(min_value=0.08, max_value=0.3),
    )
    def test_invariants(self, radius, kd):
        grid = geo.voxelize(geo.Sphere(radius), kd)
        r_out = geo.circumscribed_radius(grid)
        r_in = geo.inscribed_radius(grid)
        assert r_in <= r_out
        assert geo.volume(grid) <= 4 * np.pi / 3 * r_out**3 + 1e-12


class TestMinimalEnclosingBall:
    def test_two_points(self):
        c, r = geo.minimal_enclosing_ball(np.array([[0.0, 0, 0], [2.0, 0, 0]]))
        np.testing.assert_allclose(c, [1, 0, 0], atol=1e-12)
        assert abs(r - 1.0) < 1e-12

    def test_lattice_cube(self):
        pts = np.array(np.meshgrid(*[np.arange(4)] * 3, indexing="ij")).reshape(3, -1).T
        c, r = geo.minimal_enclosing_ball(pts.astype(float))
        np.testing.assert_allclose(c, [1.5] * 3, atol=1e-9)
        assert abs(r - np.sqrt(3) * 1.5) < 1e-9

    def test_random_cloud_is_enclosing_and_tight(self):
        rng = np.random.default_rng(7)
        pts = rng.normal(size=(500, 3))
        c, r = geo.minimal_enclosing_ball(pts)
        d = np.linalg.norm(pts - c, axis=1)
        assert np.all(d <= r * (1 + 1e-9))
        # at least two points must (nearly) touch the boundary
        assert np.sum(d >= r * (1 - 1e-6)) >= 2
