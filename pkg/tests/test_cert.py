import numpy as np
import pytest
from pydantic import ValidationError
from scipy.special import xlogy

from bcslab.bdg import build_h0w, reference_state
from bcslab.cert import (
    apriori_fit,
    apriori_scaling,
    free_energy_difference,
    gl_energy,
    ktv_form_bound_check,
    lattice_gap,
    rank_two_perturbation,
    theorem_certificate,
)
from bcslab.data_models import Certificate
from bcslab.decomp import OrderField, kernel_from_gap
from bcslab.entropy import BlockHamiltonian, entropy_bound_terms, gibbs_block_state
from bcslab.foundation import BoxGrid
from bcslab.utils.errors import DegenerateFitError, InvalidArgumentError

MU = 1.0


def _plane_wave_kernel(block, box, i, j):
    phase_x = np.exp(1j * box.momenta @ box.positions[i])
    phase_y = np.exp(-1j * box.momenta @ box.positions[j])
    return phase_x @ block @ phase_y / (box.size * box.cell_volume)


def _free_energy_by_loops(G, G0w, V, h, beta, box, ref):
    g, g0 = G.matrix, G0w.matrix
    eigs = np.clip(np.linalg.eigvalsh(g), 0.0, 1.0)
    eigs0, vecs0 = np.linalg.eigh(g0)
    log_ratio = (vecs0 * np.log(eigs0 / (1.0 - eigs0))) @ vecs0.conj().T
    entropy = (
        np.sum(xlogy(eigs, eigs) + xlogy(1.0 - eigs, 1.0 - eigs))
        - np.sum(xlogy(eigs0, eigs0) + xlogy(1.0 - eigs0, 1.0 - eigs0))
        - np.real(np.trace(log_ratio @ (g - g0)))
    )
    total = 0.0
    for i in range(box.size):
        for j in range(box.size):
            distance = np.linalg.norm(box.wrap(box.positions[i] - box.positions[j]))
            v = float(V.real_space(distance / h, dims=box.dims))
            alpha = _plane_wave_kernel(G.alpha, box, i, j)
            alpha0 = _plane_wave_kernel(G0w.alpha, box, i, j)
            total += v * abs(alpha - alpha0) ** 2
            total += 2.0 * v * np.real((alpha - alpha0) * np.conj(alpha0 - ref.matrix[i, j]))
    return 0.5 * entropy / beta + box.cell_volume**2 * total


@pytest.fixture
def setup(small_box, bump, gap_solution):
    T = gap_solution.T
    op = build_h0w(small_box, MU, bump, gap_solution.delta, small_box.h)
    G0w = reference_state(op, 1.0)
    ref = kernel_from_gap(gap_solution.delta, MU, T, small_box)
    return op, G0w, ref, 1.0


class TestFreeEnergy:
    def test_vanishes_at_reference(self, setup, well, small_box):
        op, G0w, ref, beta = setup
        assert free_energy_difference(G0w, G0w, well, small_box.h, beta, small_box, ref) == pytest.approx(0.0, abs=1e-10)
        assert free_energy_difference(
            G0w, G0w, well, small_box.h, beta, small_box, ref, hamiltonian=op.matrix
        ) == pytest.approx(0.0, abs=1e-10)

    def test_entropy_paths_agree(self, setup, well, small_box, rng):
        op, G0w, ref, beta = setup
        G = gibbs_block_state(op.matrix + 0.05 * rank_two_perturbation(small_box, rng), beta)
        direct = free_energy_difference(G, G0w, well, small_box.h, beta, small_box, ref)
        through_h = free_energy_difference(G, G0w, well, small_box.h, beta, small_box, ref, hamiltonian=op.matrix)
        assert direct == pytest.approx(through_h, rel=1e-6, abs=1e-10)

    def test_matches_double_loop(self, well, bump, gap_solution, rng):
        box = BoxGrid(L=6.0, n=8, dims=1, h=0.3)
        beta = 1.0
        op = build_h0w(box, MU, bump, gap_solution.delta, box.h)
        G0w = reference_state(op, beta)
        ref = kernel_from_gap(gap_solution.delta, MU, gap_solution.T, box)
        G = gibbs_block_state(op.matrix + 0.2 * rank_two_perturbation(box, rng), beta)
        expected = _free_energy_by_loops(G, G0w, well, box.h, beta, box, ref)
        assert free_energy_difference(G, G0w, well, box.h, beta, box, ref) == pytest.approx(expected, rel=1e-8, abs=1e-12)

    def test_entropy_dominates_kinetic_and_quartic(self, setup, no_field, small_box, rng):
        op, G0w, ref, beta = setup
        G = gibbs_block_state(op.matrix + 0.1 * rank_two_perturbation(small_box, rng), beta)
        lhs, kinetic, quartic = entropy_bound_terms(G, op.matrix, beta)
        entropy_term = free_energy_difference(G, G0w, no_field, small_box.h, beta, small_box, ref)
        assert entropy_term == pytest.approx(0.5 * lhs / beta, rel=1e-6, abs=1e-12)
        assert kinetic > 0 and quartic >= 0
        assert entropy_term >= 0.5 * (kinetic + quartic) / beta - 1e-10

    def test_h_mismatch(self, setup, well, small_box):
        _, G0w, ref, beta = setup
        with pytest.raises(InvalidArgumentError):
            free_energy_difference(G0w, G0w, well, 2 * small_box.h, beta, small_box, ref)

    def test_box_mismatch(self, setup, well, small_box, gap_solution):
        _, G0w, _, beta = setup
        other = BoxGrid(L=4.0, n=16, dims=1, h=small_box.h)
        ref = kernel_from_gap(gap_solution.delta, MU, gap_solution.T, other)
        with pytest.raises(InvalidArgumentError):
            free_energy_difference(G0w, G0w, well, small_box.h, beta, small_box, ref)


class TestGlEnergy:
    def test_constant_order_parameter(self, small_box, bump):
        psi = OrderField(small_box, np.ones(small_box.size))
        expected = 2.0 * small_box.cell_volume * np.sum(bump.real_space(np.abs(small_box.positions[:, 0]), dims=1))
        assert gl_energy(psi, bump, np.eye(1), 2.0, 3.0) == pytest.approx(expected, rel=1e-12)

    def test_kinetic_term(self, no_field):
        box = BoxGrid(L=2.0 * np.pi, n=16, dims=1, h=1.0)
        x = box.positions[:, 0]
        psi = OrderField(box, np.exp(1j * x))
        assert gl_energy(psi, no_field, np.array([[0.5]]), 1.0, 1.0) == pytest.approx(0.5 * 2.0 * np.pi, rel=1e-12)

    @pytest.mark.parametrize("B1", [np.eye(2), np.array([[-1.0]]), np.array([[0.0]])])
    def test_invalid_b1(self, small_box, bump, B1):
        psi = OrderField(small_box, np.ones(small_box.size))
        with pytest.raises(InvalidArgumentError):
            gl_energy(psi, bump, B1, 1.0, 1.0)


class TestCertificate:
    def test_reference_state(self, setup, well, small_box):
        op, G0w, ref, beta = setup
        cert = theorem_certificate(G0w, G0w, well, small_box.h, beta, small_box, ref, hamiltonian=op.matrix)
        assert cert.q_h1_sq == 0.0
        assert cert.rhs == pytest.approx(
            Certificate.lower_bound(small_box.h, cert.grad_psi_sq, cert.phi_l2_sq, cert.xi_h1_sq, 0.0, cert.c1, cert.c2)
        )

    def test_assemble(self):
        cert = Certificate.assemble(-1.0, 0.1, 0.01, 10.0, grad_psi_sq=1.0, phi_l2_sq=2.0, xi_h1_sq=3.0, q_h1_sq=4.0)
        assert cert.rhs == pytest.approx(0.01 * (0.1 + 0.2 + 3.0 + 4.0) - 1.0)
        assert cert.holds is False

    def test_holds_only_for_nonpositive_values(self):
        cert = Certificate.assemble(0.5, 0.1, 0.01, 10.0, grad_psi_sq=1.0, phi_l2_sq=1.0, xi_h1_sq=1.0, q_h1_sq=1.0)
        assert cert.holds is None

    def test_inconsistent_rhs(self):
        with pytest.raises(ValidationError):
            Certificate(
                f_value=0.0, grad_psi_sq=1.0, phi_l2_sq=1.0, xi_h1_sq=1.0, q_h1_sq=1.0, h=0.1, c1=0.01, c2=10.0, rhs=5.0
            )

    def test_serialized_schema_key(self):
        cert = Certificate.assemble(-1.0, 0.1, 0.01, 10.0, grad_psi_sq=0.0, phi_l2_sq=0.0, xi_h1_sq=0.0, q_h1_sq=0.0)
        assert "schema" in cert.model_dump(by_alias=True)


class TestFamily:
    def test_perturbation_keeps_pattern(self, small_box, rng):
        P = rank_two_perturbation(small_box, rng)
        assert BlockHamiltonian(P).pattern_defect() <= 1e-14
        assert np.trace(P[: small_box.size, : small_box.size]).real == pytest.approx(1.0)

    def test_fit_exact_power_law(self):
        h = [0.1, 0.2, 0.4]
        result = apriori_fit(h, [x**0.5 for x in h], [0.0, 0.0, 0.0])
        assert result["xi_exponent"] == pytest.approx(0.5)
        assert result["q_exponent"] is None
        assert result["passed"]

    def test_fit_slow_decay_fails(self):
        h = [0.1, 0.2, 0.4]
        result = apriori_fit(h, [x**0.2 for x in h], [x for x in h])
        assert result["q_exponent"] == pytest.approx(1.0)
        assert not result["passed"]

    def test_fit_degenerate(self):
        with pytest.raises(DegenerateFitError):
            apriori_fit([0.1, 0.2, 0.4], [0.0, 1.0, 2.0], [1.0, 1.0, 1.0])
        with pytest.raises(InvalidArgumentError):
            apriori_fit([0.1, 0.2], [1.0, 2.0], [1.0, 2.0])

    def test_reference_family(self, well, bump, gap_solution):
        result = apriori_scaling(
            [0.1, 0.2, 0.4], 8.0, 8, 1, MU, well, bump, gap_solution.delta, gap_solution.T, family="reference", quiet=True
        )
        assert result["family"] == "reference"
        assert result["q_exponent"] is None
        assert all(value <= 1e-10 for value in result["f_values"])

    def test_unknown_family(self, well, bump, gap_solution):
        with pytest.raises(InvalidArgumentError):
            apriori_scaling([0.1, 0.2, 0.4], 8.0, 8, 1, MU, well, bump, gap_solution.delta, gap_solution.T, family="random")


class TestFormBound:
    @pytest.fixture(scope="class")
    def lattice_box(self):
        return BoxGrid(L=8.0, n=16, dims=1, h=0.5)

    def test_lattice_gap_is_self_consistent(self, lattice_box, well):
        result = ktv_form_bound_check(lattice_box, 0.05, well, MU, samples=20, seed=3)
        assert result["gap_max"] > 0
        assert result["c_star"] > 0
        assert result["kernel_lhs"] == pytest.approx(0.0, abs=1e-8)
        assert result["kernel_rhs"] == pytest.approx(0.0, abs=1e-10)
        assert result["sample_min_ratio"] >= result["c_star"] - 1e-8 * max(1.0, abs(result["c_star"]))

    def test_free_form_is_coercive(self, lattice_box, no_field):
        result = ktv_form_bound_check(lattice_box, 0.05, no_field, MU, delta=np.zeros(lattice_box.n), samples=20, seed=3)
        assert result["gap_max"] == 0.0
        assert result["c_star"] > 0
        assert result["kernel_lhs"] is None
        assert result["sample_min_ratio"] >= result["c_star"] - 1e-8 * max(1.0, result["c_star"])

    def test_lattice_gap_shape(self, lattice_box, well):
        gap = lattice_gap(lattice_box, 0.05, well, MU)
        assert gap.shape == (lattice_box.n,)
        np.testing.assert_allclose(gap[1:], gap[1:][::-1], atol=1e-10)

    def test_needs_small_1d_box(self, well):
        with pytest.raises(InvalidArgumentError):
            ktv_form_bound_check(BoxGrid(L=8.0, n=8, dims=2, h=0.5), 0.05, well, MU)
        with pytest.raises(InvalidArgumentError):
            ktv_form_bound_check(BoxGrid(L=8.0, n=48, dims=1, h=0.5), 0.05, well, MU)
        with pytest.raises(InvalidArgumentError):
            lattice_gap(BoxGrid(L=8.0, n=8, dims=2, h=0.5), 0.05, well, MU)


@pytest.mark.slow
def test_perturbed_family(well, bump, gap_solution):
    result = apriori_scaling(
        [0.1, 0.2, 0.4], 8.0, 16, 1, MU, well, bump, gap_solution.delta, gap_solution.T, seed=7, quiet=True
    )
    assert result["family"] == "perturbed"
    assert all(value <= 1e-10 for value in result["f_values"])
    assert len(result["xi_h1"]) == 3
    assert result["xi_exponent"] >= 0.4
    assert result["q_exponent"] is not None and result["q_exponent"] >= 0.4
    assert result["passed"]
