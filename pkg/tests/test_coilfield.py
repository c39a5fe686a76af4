import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from tricoil import MU0
from tricoil.coilfield import (AxisymmetricFieldMap, CoilSpec, FieldDomainError, build_field_map,
                               coil_unit_field, loop_field)


def biot_savart_loop(R, I, r, z):
    """Independent oracle: integrate dl x (p - l) around the loop numerically."""
    p = np.array([r, 0.0, z])

    def integrand(phi, comp):
        l = R * np.array([math.cos(phi), math.sin(phi), 0.0])
        dl = R * np.array([-math.sin(phi), math.cos(phi), 0.0])
        d = p - l
        return np.cross(dl, d)[comp] / np.linalg.norm(d) ** 3

    k = MU0 * I / (4 * math.pi)
    bx = quad(integrand, 0, 2 * math.pi, args=(0,), epsabs=0, epsrel=1e-12, limit=200)[0]
    bz = quad(integrand, 0, 2 * math.pi, args=(2,), epsabs=0, epsrel=1e-12, limit=200)[0]
    return k * bx, k * bz


def thick_solenoid_axis(spec: CoilSpec, z):
    """Closed-form on-axis field of a uniform thick solenoid (unit current)."""
    R1, R2, L = spec.inner_radius, spec.outer_radius, spec.axial_length
    J = spec.turns / ((R2 - R1) * L)

    def f(a):
        return a * np.log((R2 + np.hypot(R2, a)) / (R1 + np.hypot(R1, a)))

    return MU0 * J / 2 * (f(z + L / 2) - f(z - L / 2))


class TestLoopField:
    def test_centre(self):
        br, bz = loop_field(0.02, 1.0, 0.0, 0.0)
        assert br == 0.0
        assert bz == pytest.approx(3.14159265e-5, rel=1e-8)

    def test_one_radius_up_axis(self):
        _, bz = loop_field(0.02, 1.0, 0.0, 0.02)
        assert bz == pytest.approx(1.11072073e-5, rel=1e-8)

    def test_zero_current(self):
        assert loop_field(0.02, 0.0, 0.01, 0.01) == (0.0, 0.0)

    @pytest.mark.parametrize("r,z", [(0.005, 0.01), (0.03, -0.02), (0.019, 0.001), (0.1, 0.2)])
    def test_matches_biot_savart(self, r, z):
        br, bz = loop_field(0.02, 1.0, r, z)
        ox, oz = biot_savart_loop(0.02, 1.0, r, z)
        assert br == pytest.approx(ox, rel=1e-9, abs=1e-20)
        assert bz == pytest.approx(oz, rel=1e-9, abs=1e-20)

    def test_on_conductor(self):
        with pytest.raises(FieldDomainError):
            loop_field(0.02, 1.0, 0.02, 0.0)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            loop_field(0.0, 1.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            loop_field(0.02, 1.0, -0.1, 0.0)

    @given(st.floats(0.0, 0.2), st.floats(0.001, 0.2))
    def test_axial_symmetry(self, r, z):
        br1, bz1 = loop_field(0.02, 1.0, r, z)
        br2, bz2 = loop_field(0.02, 1.0, r, -z)
        assert br1 == pytest.approx(-br2, rel=1e-12, abs=1e-25)
        assert bz1 == pytest.approx(bz2, rel=1e-12, abs=1e-25)

    @given(st.floats(-3.0, 3.0), st.floats(0.0, 0.1), st.floats(-0.1, 0.1))
    def test_linear_in_current(self, I, r, z):
        if abs(math.hypot(r - 0.02, z)) < 1e-4:
            return
        br, bz = loop_field(0.02, I, r, z)
        b1r, b1z = loop_field(0.02, 1.0, r, z)
        assert br == pytest.approx(I * b1r, rel=1e-12, abs=1e-25)
        assert bz == pytest.approx(I * b1z, rel=1e-12, abs=1e-25)


class TestCoilUnitField:
    def test_degenerate_single_loop(self):
        spec = CoilSpec(inner_radius=0.02, outer_radius=0.02, axial_length=1e-12, turns=1,
                        radial_samples=1, axial_samples=1)
        assert coil_unit_field(spec, 0.0, 0.0) == loop_field(0.02, 1.0, 0.0, 0.0)

    @pytest.mark.parametrize("z", [0.05, 0.1, -0.2])
    def test_thick_solenoid_oracle(self, z):
        exact = thick_solenoid_axis(CoilSpec(), z)
        coarse = coil_unit_field(CoilSpec(), 0.0, z)[1]
        fine = coil_unit_field(CoilSpec(radial_samples=32, axial_samples=64), 0.0, z)[1]
        assert coarse == pytest.approx(exact, rel=1e-3)
        assert fine == pytest.approx(exact, rel=1e-4)
        # midpoint quadrature is second order in both directions
        assert 12 < (coarse - exact) / (fine - exact) < 20

    def test_midplane_antisymmetry(self):
        br_lo, _ = coil_unit_field(CoilSpec(), 0.01, -0.05)
        br_hi, _ = coil_unit_field(CoilSpec(), 0.01, 0.05)
        assert br_lo == pytest.approx(-br_hi, rel=1e-12)

    def test_inside_winding(self):
        with pytest.raises(FieldDomainError):
            coil_unit_field(CoilSpec(), 0.03, 0.0)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            CoilSpec(inner_radius=0.05, outer_radius=0.04)
        with pytest.raises(ValueError):
            CoilSpec(turns=0)


@pytest.fixture(scope="module")
def fmap():
    return build_field_map(CoilSpec(), np.linspace(0, 0.15, 200), np.linspace(-0.3, 0.3, 400))


class TestFieldMap:
    def test_sampling_identity(self):
        spec = CoilSpec()
        r, z = np.array([0.1, 0.12]), np.array([0.1, 0.15])
        m = build_field_map(spec, r, z)
        R, Z = np.meshgrid(r, z, indexing="ij")
        br, bz = coil_unit_field(spec, R, Z)
        np.testing.assert_array_equal(m.B_r, br)
        np.testing.assert_array_equal(m.B_z, bz)

    def test_interpolation_accuracy(self, fmap):
        rng = np.random.default_rng(0)
        spec = fmap.spec
        checked = 0
        while checked < 50:
            r, z = rng.uniform(0, 0.15), rng.uniform(-0.3, 0.3)
            if abs(z) < spec.axial_length / 2 + 0.01 and spec.inner_radius - 0.01 < r < spec.outer_radius + 0.01:
                continue
            br, bz = fmap.sample(r, z)
            er, ez = coil_unit_field(spec, r, z)
            scale = math.hypot(er, ez)
            assert math.hypot(br - er, bz - ez) <= 5e-3 * scale
            checked += 1

    def test_node_identity(self, fmap):
        i, j = 17, 311
        assert fmap.sample(fmap.r_grid[i], fmap.z_grid[j]) == (fmap.B_r[i, j], fmap.B_z[i, j])

    def test_axis_has_no_radial_field(self, fmap):
        br, _ = fmap.sample(np.zeros(20), np.linspace(0.05, 0.29, 20))
        np.testing.assert_array_equal(br, 0.0)

    def test_cell_midpoint_is_corner_mean(self):
        m = AxisymmetricFieldMap(np.array([0.0, 1.0]), np.array([0.0, 1.0]),
                                 np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0, 2.0], [2.0, 4.0]]))
        assert m.sample(0.5, 0.5) == (2.5, 2.0)

    def test_mask(self, fmap):
        assert fmap.masked.any()
        with pytest.raises(FieldDomainError):
            fmap.sample(0.03, 0.0)
        br, bz = fmap.sample(np.array([0.03, 0.1]), np.array([0.0, 0.1]), strict=False)
        assert np.isnan(br[0]) and np.isfinite(br[1])

    def test_outside_domain(self, fmap):
        with pytest.raises(FieldDomainError):
            fmap.sample(0.2, 0.0)

    def test_unmasked_overlap_rejected(self):
        with pytest.raises(FieldDomainError):
            build_field_map(CoilSpec(), np.linspace(0, 0.05, 5), np.linspace(-0.01, 0.01, 5), mask_winding=False)

    @settings(max_examples=50)
    @given(st.floats(0.0, 0.15), st.floats(0.1, 0.29))
    def test_interpolant_bounded_by_corners(self, r, z):
        m = build_field_map(CoilSpec(), np.linspace(0, 0.15, 16), np.linspace(0.1, 0.3, 21))
        bz = m.sample(r, z)[1]
        i = min(np.searchsorted(m.r_grid, r, side="right") - 1, 14)
        j = min(np.searchsorted(m.z_grid, z, side="right") - 1, 19)
        corners = m.B_z[i:i + 2, j:j + 2]
        assert corners.min() - 1e-18 <= bz <= corners.max() + 1e-18
