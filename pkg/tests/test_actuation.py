import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tricoil import MU0
from tricoil.actuation import (CoilArray, DirectSource, LibraryConfig, LibraryGrid, UnreachableFieldError,
                               actuation_matrix, build_library, field, field_gradient, gradient_basis,
                               least_norm_currents, local_coords, maxwell_residuals, pinv_batch)
from tricoil.coilfield import CoilSpec, FieldDomainError, coil_unit_field, loop_field
from tricoil.mechanism import CoilMount, coil_poses, rotation_z, z_limit

TH45 = math.radians(45.0)


def loop_source(R):
    return lambda r, z, strict=True: loop_field(R, 1.0, r, z)


def on_axis_dbz_dz(R, z):
    """Derivative of mu0 R^2 / (2 (R^2 + z^2)^1.5) with respect to z."""
    return -3.0 * MU0 * R * R * z / (2.0 * (R * R + z * z) ** 2.5)


class TestLocalCoords:
    pose = coil_poses(math.radians(35.0), 0.08, -0.05)[2]

    def test_axis_point(self):
        r, z, e_r = local_coords(self.pose.center + 0.07 * self.pose.axis, self.pose)
        assert r == pytest.approx(0.0, abs=1e-15)
        assert z == pytest.approx(0.07, abs=1e-15)
        assert np.linalg.norm(e_r) == pytest.approx(1.0)

    def test_centre(self):
        r, z, e_r = local_coords(self.pose.center, self.pose)
        assert r == 0.0 and z == 0.0
        assert abs(e_r @ self.pose.axis) < 1e-15

    @given(arrays(float, 3, elements=st.floats(-0.3, 0.3)))
    def test_reconstruction(self, p):
        r, z, e_r = local_coords(p, self.pose)
        np.testing.assert_allclose(self.pose.center + z * self.pose.axis + r * e_r, p, atol=1e-15)


class TestActuationMatrix:
    def test_c3_on_axis(self, default_fmap):
        poses = CoilMount().poses(TH45)
        p = np.array([0.0, 0.0, -0.22])
        A = actuation_matrix(p, TH45, default_fmap, poses).matrix
        R = rotation_z(2 * math.pi / 3)
        for k in range(3):
            np.testing.assert_allclose(R @ A[:, k], A[:, (k + 1) % 3], atol=1e-12 * np.abs(A).max())
        B = A @ np.ones(3)
        assert np.hypot(B[0], B[1]) < 1e-12 * abs(B[2])

    def test_direct_superposition(self, default_fmap):
        poses = CoilMount().poses(TH45)
        rng = np.random.default_rng(3)
        for _ in range(5):
            p = np.array([*rng.uniform(-0.04, 0.04, 2), rng.uniform(-0.28, -0.2)])
            i = rng.normal(size=3)
            B = actuation_matrix(p, TH45, default_fmap, poses).matrix @ i
            oracle = np.zeros(3)
            for ik, pose in zip(i, poses):
                d = p - pose.center
                z = d @ pose.axis
                rv = d - z * pose.axis
                r = np.linalg.norm(rv)
                br, bz = coil_unit_field(CoilSpec(), r, z)
                oracle += ik * (br * rv / r + bz * pose.axis)
            assert np.linalg.norm(B - oracle) <= 5e-3 * np.linalg.norm(oracle)

    def test_linearity(self, direct):
        p = np.array([0.01, -0.02, -0.25])
        A = direct.array(TH45).matrix(p)
        np.testing.assert_allclose(field(p, TH45, [2.5, 0, 0], direct), 2.5 * A[:, 0], rtol=1e-14)
        np.testing.assert_array_equal(field(p, TH45, [0, 0, 0], direct), 0.0)

    def test_inside_winding_names_coil(self, direct):
        arr = direct.array(TH45)
        with pytest.raises(FieldDomainError, match="coil 0"):
            arr.matrix(arr.poses[0].center + 0.03 * arr.poses[0].x_dir)


class TestGradient:
    R = 0.02

    def _axial(self, z, delta):
        pose = coil_poses(math.radians(35.0), 0.08, -0.05)[1]
        arr = CoilArray([pose], loop_source(self.R))
        G = arr.coil_gradient(0, pose.center + z * pose.axis, delta)
        return pose.axis @ G @ pose.axis

    @pytest.mark.parametrize("z", [0.03, 0.05, 0.08])
    def test_on_axis_loop_oracle(self, z):
        assert self._axial(z, 1.25e-4) == pytest.approx(on_axis_dbz_dz(self.R, z), rel=1e-4)

    @pytest.mark.parametrize("z", [0.03, 0.05, 0.08])
    def test_second_order(self, z):
        exact = on_axis_dbz_dz(self.R, z)
        e1 = self._axial(z, 1e-3) - exact
        e2 = self._axial(z, 5e-4) - exact
        assert 3.5 < e1 / e2 < 4.5

    def test_uniform_region(self):
        pose = coil_poses(0.0, 0.0, 0.0)[0]
        arr = CoilArray([pose], loop_source(100.0))
        G = arr.coil_gradient(0, np.array([0.01, 0.02, -0.01]), 1e-3)
        B = np.linalg.norm(arr.coil_field(0, np.array([0.01, 0.02, -0.01])))
        # over a 1 cm excursion the field changes by < 1 ppm
        assert np.linalg.norm(G) * 0.01 < 1e-6 * B

    def test_total_field_fd_oracle(self, direct):
        p = np.array([0.012, -0.007, -0.23])
        i = np.array([0.3, -1.2, 0.8])
        G = field_gradient(p, TH45, i, direct, delta=1e-4)
        oracle = np.empty((3, 3))
        for n in range(3):
            e = np.zeros(3)
            e[n] = 1e-4
            oracle[:, n] = (field(p + e, TH45, i, direct) - field(p - e, TH45, i, direct)) / 2e-4
        np.testing.assert_allclose(G, oracle, atol=1e-5 * np.linalg.norm(oracle))

    def test_maxwell_direct(self, direct):
        p = np.array([0.02, 0.01, -0.24])
        G = direct.array(TH45).gradients(p, 1e-4)
        asym, trace = maxwell_residuals(np.einsum("k,kmn->mn", [1.0, -0.5, 0.3], G))
        assert asym < 1e-5 and trace < 1e-5

    def test_basis_combine(self, default_fmap):
        poses = CoilMount().poses(TH45)
        gb = gradient_basis(np.array([0.0, 0.0, -0.25]), TH45, default_fmap, poses, 2.5e-3)
        i = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(gb.combine(i), np.einsum("k,kmn->mn", i, gb.tensors))
        np.testing.assert_array_equal(gb.combine(np.zeros(3)), 0.0)


class TestLeastNorm:
    def test_zero_target(self):
        cv = least_norm_currents(np.eye(3) * 1e-3, np.zeros(3), 5.0)
        np.testing.assert_array_equal(cv.currents, 0.0)

    def test_diagonal(self):
        cv = least_norm_currents(np.eye(3) * 1e-3, [1e-3, 0, 0], 5.0)
        np.testing.assert_allclose(cv.currents, [1.0, 0.0, 0.0], rtol=1e-14)
        assert cv.feasible

    def test_infeasible_flag(self):
        cv = least_norm_currents(np.eye(3) * 1e-3, [1e-2, 0, 0], 5.0)
        assert not cv.feasible

    def test_random_well_conditioned(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            A = rng.normal(size=(3, 3)) * 1e-3
            if np.linalg.cond(A) > 1e3:
                continue
            b = rng.normal(size=3) * 1e-3
            cv = least_norm_currents(A, b, 5.0)
            assert np.linalg.norm(A @ cv.currents - b) <= 1e-9 * np.linalg.norm(b)

    def test_null_space_perturbation(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            U, _, Vt = np.linalg.svd(rng.normal(size=(3, 3)))
            A = U @ np.diag([2e-3, 1e-3, 0.0]) @ Vt
            b = A @ rng.normal(size=3)
            i = least_norm_currents(A, b, 5.0).currents
            for t in rng.normal(size=10):
                other = i + t * Vt[2]
                assert np.linalg.norm(A @ other - b) < 1e-12
                assert np.linalg.norm(i) <= np.linalg.norm(other) + 1e-15

    def test_unreachable(self):
        A = np.diag([1e-3, 1e-3, 0.0])
        with pytest.raises(UnreachableFieldError):
            least_norm_currents(A, [0, 0, 1e-3], 5.0)

    @settings(max_examples=50)
    @given(arrays(float, (4, 3, 3), elements=st.floats(-1.0, 1.0, allow_subnormal=False)))
    def test_pinv_batch_matches_numpy(self, A):
        np.testing.assert_allclose(pinv_batch(A), np.linalg.pinv(A, rcond=1e-8), atol=1e-6 * (1 + np.abs(np.linalg.pinv(A, rcond=1e-8)).max()))

    @given(st.floats(0.1, 10.0))
    def test_scaling(self, c):
        A = np.array([[1.0, 0.2, 0.0], [0.0, 1.1, 0.3], [0.1, 0.0, 0.9]]) * 1e-3
        b = np.array([1e-3, -2e-4, 5e-4])
        i1 = least_norm_currents(A, b, 5.0).currents
        i2 = least_norm_currents(A, c * b, 5.0).currents
        np.testing.assert_allclose(i2, c * i1, rtol=1e-12)


class TestLibrary:
    @pytest.fixture(scope="class")
    @staticmethod
    def small():
        zl = z_limit(TH45)
        cfg = LibraryConfig(grid=LibraryGrid(xy_half=0.0025, z_min=zl - 0.005, spacing=0.0025), thetas_deg=(45.0,))
        return cfg, build_library(cfg)

    def test_sampling_identity(self, small, default_fmap):
        cfg, lib = small
        s = lib.slice_for(TH45)
        assert s.nodes().reshape(-1, 3).shape == (27, 3)
        poses = cfg.mount.poses(TH45, cfg.clearance)
        for p in s.nodes().reshape(-1, 3):
            A = actuation_matrix(p, TH45, default_fmap, poses).matrix
            # batched and pointwise evaluation may differ in the last ulp
            np.testing.assert_allclose(s.interpolate(p)[0], A, rtol=1e-13, atol=0)

    def test_missing_theta(self, small):
        with pytest.raises(KeyError, match="45"):
            small[1].slice_for(math.radians(40.0))

    def test_node_exact(self, default_lib):
        s = default_lib.slice_for(TH45)
        A, G = default_lib.matrices(s.nodes()[10, 7, 20], TH45)
        np.testing.assert_array_equal(A, s.A[10, 7, 20])
        np.testing.assert_array_equal(G, s.G[10, 7, 20])

    def test_cell_centre(self, default_lib, direct):
        s = default_lib.slice_for(TH45)
        rng = np.random.default_rng(11)
        for _ in range(10):
            k, j, i = rng.integers(0, s.z.size - 1), rng.integers(0, s.y.size - 1), rng.integers(0, s.x.size - 1)
            p = 0.5 * (s.nodes()[k, j, i] + s.nodes()[k + 1, j + 1, i + 1])
            A = default_lib.matrices(p, TH45)[0]
            Ad = direct.array(TH45).matrix(p)
            assert np.linalg.norm(A - Ad) <= 1e-2 * np.linalg.norm(Ad)

    def test_outside(self, default_lib):
        with pytest.raises(FieldDomainError):
            default_lib.matrices(np.array([0.0, 0.0, 0.0]), TH45)

    def test_query_types(self, default_lib):
        am, gb = default_lib.query(np.array([0.0, 0.0, -0.25]), TH45)
        assert am.matrix.shape == (3, 3) and gb.tensors.shape == (3, 3, 3)
        assert gb.delta == default_lib.metadata["fd_step"]

    def test_grid_covers_collision_free_region(self, default_lib):
        for s in default_lib.slices:
            assert s.z[-1] == pytest.approx(z_limit(s.theta), abs=1e-12)
            assert s.z[0] == pytest.approx(-0.30)
            assert s.x[0] == pytest.approx(-0.05) and s.x[-1] == pytest.approx(0.05)
            assert 0.0 in s.x


def test_direct_source_masks():
    src = DirectSource(CoilSpec())
    br, bz = src(np.array([0.03, 0.0]), np.array([0.0, 0.1]), strict=False)
    assert np.isnan(br[0]) and np.isfinite(bz[1])
    with pytest.raises(FieldDomainError):
        src(np.array([0.03]), np.array([0.0]))
