import math

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid, trapezoid

from explicit_dno.config import random_field
from explicit_dno.dno import Bathymetry, DepthError, SurfaceState, dno_apply_1d, dno_apply_nd
from explicit_dno.moving import MovingBathymetry, bottom_streamfunction, dno_moving_1d, dno_moving_nd
from explicit_dno.series import OperatorConfig
from explicit_dno.spectral import GaugeError, Grid, ScalarField

from conftest import field_1d, rel_inf

CFG = OperatorConfig()
COMBINED = 3 * CFG.solver_tol


def still(grid):
    z = ScalarField.constant(grid, 0.0)
    return SurfaceState(z, z)


def varying_state(grid, rng):
    depth = ScalarField(grid, 1.0 + random_field(grid, rng, 2, 0.1).values)
    surf = SurfaceState(random_field(grid, rng, 2, 0.05), random_field(grid, rng, 3))
    return depth, surf


class TestMovingBathymetry:
    def test_nonzero_mean_rate_rejected(self, grid64):
        d = ScalarField.constant(grid64, 1.0)
        with pytest.raises(GaugeError, match="volume-conserving"):
            MovingBathymetry(d, field_1d(grid64, lambda x: 0.1 + np.cos(x)))

    def test_depth_must_be_positive(self, grid64):
        with pytest.raises(DepthError):
            MovingBathymetry(ScalarField.constant(grid64, -1.0), ScalarField.constant(grid64, 0.0))

    def test_static_flag(self, grid64):
        d = ScalarField.constant(grid64, 1.0)
        assert MovingBathymetry(d, ScalarField.constant(grid64, 0.0)).is_static
        assert not MovingBathymetry(d, field_1d(grid64, np.cos)).is_static


class TestBottomStreamfunction:
    def test_zero_rate(self, grid64):
        d = ScalarField.constant(grid64, 1.0)
        psi = bottom_streamfunction(MovingBathymetry(d, ScalarField.constant(grid64, 0.0)))
        assert psi.max_abs() == 0.0

    @pytest.mark.parametrize("k, r", [(1, 0.3), (4, -2.0)])
    def test_cosine_rate(self, grid64, k, r):
        d = ScalarField.constant(grid64, 1.0)
        psi = bottom_streamfunction(MovingBathymetry(d, field_1d(grid64, lambda x: r * np.cos(k * x))))
        expect = field_1d(grid64, lambda x: r * np.sin(k * x) / k)
        assert (psi - expect).max_abs() < 1e-14

    def test_bump_against_trapezoid_quadrature(self):
        # a smooth localized bump minus its mean; the reference is a composite
        # trapezoid running integral on 64x and 128x finer grids, Richardson
        # combined to fourth order, then shifted to zero mean
        n = 256
        grid = Grid.periodic(n)
        (x,) = grid.coordinates()

        def bump(t):
            return np.exp(-4 * (t - np.pi) ** 2)

        rate = ScalarField(grid, bump(x) - bump(x).mean())
        psi = bottom_streamfunction(MovingBathymetry(ScalarField.constant(grid, 1.0), rate))

        def running_integral(refine):
            xf = np.linspace(0.0, 2 * np.pi, refine * n + 1)
            bf = bump(xf)
            mean = trapezoid(bf, xf) / (2 * np.pi)
            return cumulative_trapezoid(bf - mean, xf, initial=0.0)[::refine][:n]

        integral = (4 * running_integral(128) - running_integral(64)) / 3
        integral -= integral.mean()
        assert np.max(np.abs(psi.values - integral)) < 1e-10

    def test_two_dimensional_rejected(self, grid2d):
        mb = MovingBathymetry(ScalarField.constant(grid2d, 1.0), ScalarField.constant(grid2d, 0.0))
        with pytest.raises(ValueError):
            bottom_streamfunction(mb)


class TestMoving1D:
    def test_static_reduction_is_exact(self, grid64, rng):
        depth, surf = varying_state(grid64, rng)
        mb = MovingBathymetry(depth, ScalarField.constant(grid64, 0.0))
        a = dno_moving_1d(mb, surf, CFG).result
        b = dno_apply_1d(Bathymetry(depth), surf, CFG).result
        assert np.array_equal(a.values, b.values)

    @pytest.mark.parametrize("k, d, r", [(1, 1.0, 0.5), (3, 0.4, -1.0)])
    def test_wavemaker(self, grid64, k, d, r):
        rate = field_1d(grid64, lambda x: r * np.cos(k * x))
        mb = MovingBathymetry(ScalarField.constant(grid64, d), rate)
        out = dno_moving_1d(mb, still(grid64), CFG).result
        assert rel_inf(out, -rate / math.cosh(k * d)) < 1e-10

    def test_volume_budget(self, grid64, rng):
        depth, surf = varying_state(grid64, rng)
        rate = random_field(grid64, rng, 5, 0.3)
        out = dno_moving_1d(MovingBathymetry(depth, rate), surf, CFG).result
        assert abs(out.mean()) < 1e-11
        assert abs(out.mean() + rate.mean()) < 1e-11

    def test_forcing_is_linear(self, grid64, rng):
        depth, surf = varying_state(grid64, rng)
        r1, r2 = random_field(grid64, rng, 3), random_field(grid64, rng, 3)
        g0 = dno_apply_1d(Bathymetry(depth), surf, CFG).result

        def correction(rate):
            return dno_moving_1d(MovingBathymetry(depth, rate), surf, CFG).result - g0

        c = correction(r1 + 2.0 * r2)
        assert (c - (correction(r1) + 2.0 * correction(r2))).norm() < 1e-12 * max(c.norm(), g0.norm())

    def test_pure_bottom_motion_over_varying_bottom(self, grid64, rng):
        # phi_s = 0: the response is the bottom-generated surface motion only
        depth, surf = varying_state(grid64, rng)
        rate = random_field(grid64, rng, 3)
        out = dno_moving_1d(MovingBathymetry(depth, rate), SurfaceState(surf.eta, ScalarField.constant(grid64, 0.0)), CFG)
        assert out.converged and out.result.norm() > 0


class TestMovingND:
    def test_matches_1d(self, grid64, rng):
        depth, surf = varying_state(grid64, rng)
        mb = MovingBathymetry(depth, random_field(grid64, rng, 3, 0.5))
        a = dno_moving_1d(mb, surf, CFG).result
        b = dno_moving_nd(mb, surf, CFG).result
        assert (a - b).norm() / a.norm() < 10 * COMBINED

    def test_static_reduction_is_exact(self):
        grid = Grid.periodic((16, 16))
        x, y = grid.coordinates()
        depth = ScalarField(grid, 1 + 0.05 * np.cos(x) * np.sin(y))
        surf = SurfaceState(ScalarField(grid, 0.05 * np.cos(x + y)), ScalarField(grid, np.sin(x) + np.cos(2 * y)))
        a = dno_moving_nd(MovingBathymetry(depth, ScalarField.constant(grid, 0.0)), surf, CFG).result
        b = dno_apply_nd(Bathymetry(depth), surf, CFG).result
        assert np.array_equal(a.values, b.values)

    def test_wavemaker_2d(self, grid2d):
        x, y = grid2d.coordinates()
        k1, k2, d, r = 2, 1, 0.6, 0.7
        rate = ScalarField(grid2d, r * np.cos(k1 * x + k2 * y))
        out = dno_moving_nd(MovingBathymetry(ScalarField.constant(grid2d, d), rate), still(grid2d), CFG).result
        assert rel_inf(out, -rate / math.cosh(math.hypot(k1, k2) * d)) < 1e-10

    def test_volume_budget_2d(self, grid2d, rng):
        depth = ScalarField.constant(grid2d, 1.0)
        surf = SurfaceState(random_field(grid2d, rng, 2, 0.05), random_field(grid2d, rng, 3))
        out = dno_moving_nd(MovingBathymetry(depth, random_field(grid2d, rng, 4, 0.3)), surf, CFG).result
        assert abs(out.mean()) < 1e-11
