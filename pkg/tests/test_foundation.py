import numpy as np
import pytest

from bcslab.foundation import (
    FOURIER_PREFACTOR,
    BoxGrid,
    RadialProfile,
    build_radial_grid,
    check_box_cap,
    fit_power_law,
    gaussian_potential,
    radial_convolution,
    radial_fourier_transform,
    table_potential,
)
from bcslab.utils.config import Config
from bcslab.utils.errors import ExtrapolationError, InvalidArgumentError


def gaussian(p):
    return np.exp(-0.5 * np.asarray(p) ** 2)


class TestRadialGrid:
    def test_weights_integrate_over_r3(self, grid):
        assert grid.integrate(np.exp(-grid.nodes**2)) == pytest.approx(np.pi**1.5, rel=1e-12)

    def test_nodes_inside_interval(self, grid):
        assert grid.nodes.min() > 0
        assert grid.nodes.max() < grid.pmax
        assert np.all(np.diff(grid.nodes) > 0)

    def test_graded_rule_refines_around_center(self):
        plain = build_radial_grid(10.0, 256)
        graded = build_radial_grid(10.0, 256, rule="gauss-legendre-graded", center=1.0)
        near = lambda g: np.sum(np.abs(g.nodes - 1.0) < 0.1)
        assert near(graded) > near(plain)
        assert graded.integrate(np.exp(-graded.nodes**2)) == pytest.approx(np.pi**1.5, rel=1e-12)

    def test_graded_rule_needs_center(self):
        with pytest.raises(InvalidArgumentError):
            build_radial_grid(10.0, 256, rule="gauss-legendre-graded")

    @pytest.mark.parametrize("pmax,count", [(0.0, 64), (-1.0, 64), (10.0, 4), (10.0, 12.5)])
    def test_invalid_grid(self, pmax, count):
        with pytest.raises(InvalidArgumentError):
            build_radial_grid(pmax, count)

    def test_unknown_rule(self):
        with pytest.raises(InvalidArgumentError):
            build_radial_grid(10.0, 64, rule="simpson")


class TestRadialProfile:
    def test_interpolation_between_nodes(self, grid):
        profile = RadialProfile(grid, gaussian(grid.nodes))
        s = np.array([0.0, 0.37, 1.2345, 4.4, 9.99])
        np.testing.assert_allclose(profile(s), gaussian(s), atol=1e-9)

    def test_extrapolation_is_refused(self, grid):
        profile = RadialProfile(grid, gaussian(grid.nodes))
        with pytest.raises(ExtrapolationError):
            profile(grid.pmax + 0.5)
        assert profile.evaluate(grid.pmax + 0.5, outside="zero") == 0.0

    def test_shape_mismatch(self, grid):
        with pytest.raises(InvalidArgumentError):
            RadialProfile(grid, np.ones(grid.count + 1))

    def test_l2_norm(self, grid):
        profile = RadialProfile(grid, gaussian(grid.nodes))
        assert profile.l2_norm() ** 2 == pytest.approx(np.pi**1.5, rel=1e-12)


class TestFourier:
    def test_gaussian_is_self_dual(self, grid):
        r = np.array([0.0, 0.5, 1.0, 2.0])
        np.testing.assert_allclose(radial_fourier_transform(gaussian(grid.nodes), grid, r), gaussian(r), atol=1e-12)

    @pytest.mark.parametrize("p", [0.0, 0.7, 1.3, 3.0])
    def test_convolution_of_gaussians(self, grid, p):
        g = RadialProfile(grid, gaussian(grid.nodes))
        expected = 2.0**-1.5 * np.exp(-0.25 * p**2)
        assert radial_convolution(gaussian, g, p) == pytest.approx(expected, abs=1e-10)

    def test_convolution_with_profile(self, grid):
        g = RadialProfile(grid, gaussian(grid.nodes))
        assert radial_convolution(g, g, 1.0) == pytest.approx(2.0**-1.5 * np.exp(-0.25), abs=1e-8)

    def test_convolution_outside_grid(self, grid):
        g = RadialProfile(grid, gaussian(grid.nodes))
        with pytest.raises(InvalidArgumentError):
            radial_convolution(gaussian, g, grid.pmax + 1.0)

    def test_convolution_grid_mismatch(self, grid):
        other = build_radial_grid(8.0, 64)
        with pytest.raises(InvalidArgumentError):
            radial_convolution(RadialProfile(other, gaussian(other.nodes)), RadialProfile(grid, gaussian(grid.nodes)), 1.0)


class TestPotential:
    def test_gaussian_well(self, well):
        assert well.fourier(0.0) == pytest.approx(-5.0)
        assert well.real_space(0.0) == pytest.approx(-5.0)
        assert not well.is_zero
        assert gaussian_potential(0.0, 2.0).is_zero

    def test_fourier_matches_real_space(self, well, grid):
        r = np.array([0.3, 1.1, 2.5])
        np.testing.assert_allclose(radial_fourier_transform(well.fourier(grid.nodes), grid, r), well.real_space(r), atol=1e-10)

    def test_angular_average_at_zero_momentum(self, well):
        p = np.array([0.2, 1.0, 3.0])
        np.testing.assert_allclose(well.angular_average(p, 0.0), well.fourier(p), rtol=1e-12)

    def test_angular_average_symmetric(self, well):
        assert well.angular_average(0.4, 2.3) == pytest.approx(well.angular_average(2.3, 0.4), rel=1e-14)

    def test_lp_norm_power(self, well):
        rgrid = build_radial_grid(well.support_radius(), 128)
        numeric = rgrid.integrate(np.abs(well.real_space(rgrid.nodes)) ** 2)
        assert well.lp_norm_power(2.0) == pytest.approx(numeric, rel=1e-10)

    def test_table_potential_follows_gaussian(self, well):
        momenta = np.linspace(0.0, 8.0, 200)
        table = table_potential(momenta, well.fourier(momenta))
        np.testing.assert_allclose(table.fourier(np.array([0.5, 2.0])), well.fourier(np.array([0.5, 2.0])), atol=1e-5)
        assert table.fourier(9.0) == 0.0

    @pytest.mark.parametrize(
        "momenta,values",
        [([0.1, 1.0, 2.0, 3.0], [1, 1, 1, 1]), ([0.0, 1.0, 1.0, 3.0], [1, 1, 1, 1]), ([0.0, 1.0], [1, 1])],
    )
    def test_invalid_tables(self, momenta, values):
        with pytest.raises(InvalidArgumentError):
            table_potential(momenta, values)

    def test_invalid_width(self):
        with pytest.raises(InvalidArgumentError):
            gaussian_potential(-1.0, 0.0)


class TestBoxGrid:
    def test_unitary_is_orthonormal(self):
        box = BoxGrid(L=4.0, n=4, dims=2, h=0.5)
        U = box.unitary
        np.testing.assert_allclose(U.conj().T @ U, np.eye(box.size), atol=1e-12)

    def test_spectral_gradient_is_exact_for_plane_waves(self):
        box = BoxGrid(L=2.0 * np.pi, n=16, dims=2, h=1.0)
        x, y = box.positions.T
        values = np.sin(2 * x + 3 * y).reshape(box.shape)
        gx, gy = box.gradient(values, axes=(0, 1))
        np.testing.assert_allclose(gx.real.ravel(), 2 * np.cos(2 * x + 3 * y), atol=1e-12)
        np.testing.assert_allclose(gy.real.ravel(), 3 * np.cos(2 * x + 3 * y), atol=1e-12)

    def test_wrap_and_distances(self):
        box = BoxGrid(L=4.0, n=8, dims=1, h=1.0)
        assert box.wrap(np.array([3.5]))[0] == pytest.approx(-0.5)
        assert box.pair_distances.max() <= 2.0 + 1e-12
        np.testing.assert_allclose(box.pair_distances, box.pair_distances.T)

    def test_momenta_follow_fft_order(self):
        box = BoxGrid(L=2.0 * np.pi, n=8, dims=1, h=1.0)
        np.testing.assert_allclose(box.axis_momenta, [0, 1, 2, 3, -4, -3, -2, -1])
        assert box.nyquist == pytest.approx(4.0)

    @pytest.mark.parametrize("kwargs", [{"n": 7}, {"L": 0.0}, {"dims": 4}, {"h": -0.1}])
    def test_invalid_box(self, kwargs):
        params = {"L": 4.0, "n": 8, "dims": 1, "h": 0.5, **kwargs}
        with pytest.raises(InvalidArgumentError):
            BoxGrid(**params)

    def test_dense_cap(self):
        check_box_cap(3, 12, Config.MAX_POINTS_PER_DIM, Config.DENSE_CAP)
        with pytest.raises(InvalidArgumentError):
            check_box_cap(3, 20, Config.MAX_POINTS_PER_DIM, Config.DENSE_CAP)


class TestPowerLaw:
    def test_exact_power_law(self):
        xs = np.array([0.05, 0.1, 0.2, 0.4])
        slope, r2 = fit_power_law(xs, 3.0 * xs**1.5)
        assert slope == pytest.approx(1.5, abs=1e-12)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_constant_data(self):
        slope, r2 = fit_power_law([0.1, 0.2, 0.4], [2.0, 2.0, 2.0])
        assert slope == pytest.approx(0.0, abs=1e-12)
        assert r2 == 1.0

    def test_nonpositive_data(self):
        with pytest.raises(InvalidArgumentError):
            fit_power_law([0.1, 0.2, 0.4], [1.0, 0.0, 2.0])


def test_fourier_prefactor():
    assert FOURIER_PREFACTOR == pytest.approx((2 * np.pi) ** -1.5)
