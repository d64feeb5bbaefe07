import csv
import json

import numpy as np
import pytest

from bcslab.foundation import RadialProfile, build_radial_grid
from bcslab.tibcs import (
    critical_temperature,
    dispersion,
    gap_equation_defect,
    iterate_gap_map,
    kt_multiplier,
    lowest_eigenvalue_ktv,
    normal_state_free_energy,
    order_parameter_scaling,
    pair_l2_norm,
    quasiparticle_energy,
    solve_gap,
    spectral_decay_moments,
    state_from_delta,
    ti_free_energy,
    ti_free_energy_terms,
)
from bcslab.utils.errors import BracketError, InvalidArgumentError, NumericalError

MU = 1.0


class TestMultiplier:
    def test_value_at_zero(self):
        assert kt_multiplier(0.0, 0.3) == pytest.approx(0.6)

    def test_never_below_2t(self):
        E = np.linspace(-5, 5, 101)
        assert np.all(kt_multiplier(E, 0.5) >= 1.0 - 1e-15)

    def test_series_branch_is_continuous(self):
        T = 0.5
        below, above = 2 * T * 0.99e-4, 2 * T * 1.01e-4
        exact = lambda E: E / np.tanh(E / (2 * T))
        assert kt_multiplier(below, T) == pytest.approx(exact(below), rel=1e-14)
        assert kt_multiplier(above, T) == pytest.approx(exact(above), rel=1e-14)

    def test_scalar_in_scalar_out(self):
        assert isinstance(kt_multiplier(1.0, 1.0), float)
        assert kt_multiplier(np.ones(3), 1.0).shape == (3,)

    @pytest.mark.parametrize("T", [0.0, -1.0, np.inf])
    def test_invalid_temperature(self, T):
        with pytest.raises(InvalidArgumentError):
            kt_multiplier(1.0, T)

    def test_dispersion_and_energy(self):
        assert dispersion(2.0, 1.0) == pytest.approx(3.0)
        assert quasiparticle_energy(1.0, 1.0, 0.5) == pytest.approx(0.5)


class TestCriticalTemperature:
    def test_eigenvalue_changes_sign_at_tc(self, well, grid, tc):
        assert lowest_eigenvalue_ktv(0.99 * tc, well, MU, grid) < 0
        assert lowest_eigenvalue_ktv(1.01 * tc, well, MU, grid) > 0

    def test_bracket_consistency(self, well, grid, tc):
        narrow = critical_temperature(well, MU, grid, bracket=(0.5 * tc, 2.0 * tc))
        assert narrow == pytest.approx(tc, abs=1e-7)

    def test_bracket_without_sign_change(self, well, grid, tc):
        with pytest.raises(BracketError):
            critical_temperature(well, MU, grid, bracket=(2.0 * tc, 4.0 * tc))

    def test_invalid_bracket(self, well, grid):
        with pytest.raises(InvalidArgumentError):
            critical_temperature(well, MU, grid, bracket=(1.0, 0.5))

    def test_no_pairing_without_interaction(self, no_field, grid):
        assert lowest_eigenvalue_ktv(0.01, no_field, MU, grid) > 0


class TestGapEquation:
    def test_residual_below_tc(self, gap_solution):
        assert gap_solution.converged
        assert gap_solution.residual <= 1e-10
        assert not gap_solution.is_normal
        assert gap_solution.delta.values.max() > 0

    def test_independent_gap_equation_check(self, gap_solution, well):
        defect = gap_equation_defect(gap_solution, well, MU)
        assert defect <= 1e-6 * np.max(np.abs(gap_solution.delta.values))

    def test_normal_phase_above_tc(self, well, grid, tc):
        solution = solve_gap(1.1 * tc, well, MU, grid, Tc=tc)
        assert solution.converged
        assert solution.is_normal
        assert solution.residual == 0.0

    def test_normal_phase_reports_tc(self, well, grid, tc):
        solution = solve_gap(1.1 * tc, well, MU, grid)
        assert solution.is_normal
        assert solution.Tc == pytest.approx(tc, rel=1e-6)

    def test_zero_potential_is_normal(self, no_field, grid):
        solution = solve_gap(0.05, no_field, MU, grid)
        assert solution.is_normal
        assert solution.Tc is None

    def test_constant_initial_guess_reaches_same_gap(self, well, grid, tc, gap_solution):
        solution = solve_gap(0.9 * tc, well, MU, grid, init="constant", anderson=True, Tc=tc)
        np.testing.assert_allclose(solution.delta.values, gap_solution.delta.values, atol=1e-6 * np.max(gap_solution.delta.values))

    def test_invalid_solver_settings(self, well, grid, tc):
        with pytest.raises(InvalidArgumentError):
            solve_gap(0.9 * tc, well, MU, grid, damping=1.5, Tc=tc)
        with pytest.raises(InvalidArgumentError):
            solve_gap(0.9 * tc, well, MU, grid, init="random", Tc=tc)

    def test_iteration_cap_is_reported(self, well, grid, tc):
        solution = solve_gap(0.9 * tc, well, MU, grid, maxiter=2, Tc=tc)
        assert not solution.converged
        assert len(solution.trace) == 2


class TestFixedPoint:
    def test_plain_iteration(self):
        x, residual, iterations, converged, trace = iterate_gap_map(np.cos, np.array([1.0]), 1.0, 1e-12, 1000)
        assert converged
        assert x[0] == pytest.approx(0.7390851332151607, abs=1e-11)
        assert trace[-1] == residual

    def test_anderson_needs_fewer_steps(self):
        plain = iterate_gap_map(np.cos, np.array([1.0]), 0.5, 1e-12, 1000)
        mixed = iterate_gap_map(np.cos, np.array([1.0]), 0.5, 1e-12, 1000, anderson=True)
        assert mixed[3] and mixed[2] < plain[2]

    def test_nan_is_reported(self):
        with pytest.raises(NumericalError):
            iterate_gap_map(lambda x: x * np.nan, np.array([1.0]), 0.5, 1e-12, 10)


class TestState:
    def test_state_is_admissible(self, gap_solution):
        state = state_from_delta(gap_solution.delta, gap_solution.T, MU)
        state.check()
        upper, lower = state.block_eigenvalues()
        np.testing.assert_allclose(upper + lower, 1.0)
        assert np.all(state.constraint_defect() >= -1e-12)

    def test_normal_state_free_energy(self, no_field, grid, tc):
        T = 1.1 * tc
        zero = RadialProfile(grid, np.zeros(grid.count))
        state = state_from_delta(zero, T, MU)
        assert ti_free_energy(state, T, no_field, MU, grid) == pytest.approx(
            normal_state_free_energy(T, MU, grid), rel=1e-12
        )

    def test_superfluid_state_lowers_free_energy(self, gap_solution, well, grid):
        T = gap_solution.T
        state = state_from_delta(gap_solution.delta, T, MU)
        terms = ti_free_energy_terms(state, T, well, MU, grid)
        assert terms["interaction"] < 0
        assert terms["total"] < normal_state_free_energy(T, MU, grid)

    def test_spectral_moments_are_finite(self, gap_solution, grid):
        state = state_from_delta(gap_solution.delta, gap_solution.T, MU)
        moments = spectral_decay_moments(state, grid, orders=range(3))
        assert set(moments) == {0, 1, 2}
        assert moments[0] == pytest.approx(pair_l2_norm(gap_solution, MU))


class TestOutput:
    def test_json_and_csv(self, gap_solution, tmp_path):
        json_path, csv_path = tmp_path / "gap.json", tmp_path / "gap.csv"
        gap_solution.write_json(str(json_path))
        gap_solution.write_csv(str(csv_path), MU)
        data = json.loads(json_path.read_text())
        assert data["converged"] is True
        assert len(data["delta"]) == gap_solution.delta.grid.count
        with open(csv_path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["p", "delta", "gamma", "alpha"]
        assert len(rows) == gap_solution.delta.grid.count + 1


def test_order_parameter_validation(well, grid, tc):
    with pytest.raises(InvalidArgumentError):
        order_parameter_scaling(well, MU, grid, [0.9 * tc, 0.95 * tc], Tc=tc)


@pytest.mark.slow
def test_order_parameter_scaling(well):
    grid = build_radial_grid(10.0, 256)
    tc = critical_temperature(well, MU, grid)
    temperatures = tc * np.linspace(0.9, 0.99, 6)[::-1]
    result = order_parameter_scaling(well, MU, grid, temperatures, Tc=tc)
    assert 0.4 <= result["exponent"] <= 0.6
