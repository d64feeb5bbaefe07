import numpy as np
import pytest

from bcslab.bdg import (
    block_pattern_defect,
    build_h0w,
    commutator_defect,
    field_block,
    lemma_scaling,
    pairing_difference_norms,
    position_kernel,
    reference_pair_symbol,
    reference_state,
    scaling_fit,
    to_position_basis,
)
from bcslab.foundation import BoxGrid
from bcslab.utils.config import Config
from bcslab.utils.errors import DegenerateFitError, InvalidArgumentError

MU = 1.0


@pytest.fixture
def free_operator(small_box, no_field, gap_solution):
    return build_h0w(small_box, MU, no_field, gap_solution.delta, small_box.h)


@pytest.fixture
def field_operator(small_box, bump, gap_solution):
    return build_h0w(small_box, MU, bump, gap_solution.delta, small_box.h)


class TestOperator:
    def test_hermitian(self, field_operator):
        assert field_operator.hermitian_defect() <= 1e-12

    def test_field_block_is_real_symmetric(self, small_box, bump):
        block = field_block(small_box, bump, small_box.h)
        np.testing.assert_allclose(block, block.T)
        assert np.isrealobj(block)

    def test_particle_hole_structure(self, field_operator):
        size = field_operator.size
        np.testing.assert_allclose(field_operator.matrix[size:, size:], -field_operator.kinetic_block)
        np.testing.assert_allclose(field_operator.matrix[size:, :size], field_operator.gap_block)

    def test_h_must_match_box(self, small_box, bump, gap_solution):
        with pytest.raises(InvalidArgumentError):
            build_h0w(small_box, MU, bump, gap_solution.delta, 2 * small_box.h)

    def test_momenta_beyond_gap_grid(self, bump, gap_solution):
        box = BoxGrid(L=2.0, n=16, dims=1, h=1.0)
        with pytest.raises(InvalidArgumentError):
            build_h0w(box, MU, bump, gap_solution.delta, box.h)


class TestReferenceState:
    def test_commutes_with_operator(self, field_operator, gap_solution):
        state = reference_state(field_operator, 1.0 / gap_solution.T)
        assert commutator_defect(field_operator, state) <= 1e-10

    def test_pattern_in_position_basis(self, field_operator, gap_solution, small_box):
        state = reference_state(field_operator, 1.0 / gap_solution.T)
        assert block_pattern_defect(state, small_box) <= 1e-10

    def test_translation_invariant_without_field(self, free_operator, gap_solution, small_box):
        T = gap_solution.T
        state = reference_state(free_operator, 1.0 / T)
        np.testing.assert_allclose(
            np.diag(state.alpha).real, reference_pair_symbol(gap_solution.delta, MU, small_box, T), atol=1e-12
        )
        l2, h1, weighted = pairing_difference_norms(state, gap_solution.delta, small_box.h, small_box, MU, T)
        assert max(l2, h1, weighted) <= 1e-10

    def test_field_moves_pairing(self, field_operator, gap_solution, small_box):
        T = gap_solution.T
        state = reference_state(field_operator, 1.0 / T)
        l2, h1, weighted = pairing_difference_norms(state, gap_solution.delta, small_box.h, small_box, MU, T)
        assert 0 < l2 <= h1


class TestBasisChange:
    def test_round_trip_norm(self, small_box, rng):
        block = rng.standard_normal((small_box.size, small_box.size))
        assert np.linalg.norm(to_position_basis(block, small_box)) == pytest.approx(np.linalg.norm(block))

    def test_position_kernel_of_identity(self, small_box):
        kernel = position_kernel(np.eye(small_box.size), small_box)
        np.testing.assert_allclose(kernel, np.eye(small_box.size) / small_box.cell_volume, atol=1e-12)

    def test_wrong_shape(self, small_box):
        with pytest.raises(InvalidArgumentError):
            to_position_basis(np.eye(3), small_box)


class TestScaling:
    def test_fit_needs_three_points(self):
        with pytest.raises(InvalidArgumentError):
            scaling_fit([0.1, 0.2], [1.0, 2.0])

    def test_fit_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            scaling_fit([0.1, 0.2, 0.4], [1.0, 2.0])

    def test_no_field_is_degenerate(self, no_field, gap_solution):
        with pytest.raises(DegenerateFitError):
            lemma_scaling([0.1, 0.2, 0.4], 8.0, 8, 1, MU, no_field, gap_solution.delta, gap_solution.T, quiet=True)


@pytest.mark.slow
def test_lemma_scaling(bump, gap_solution):
    h_list = [0.4, 0.2, 0.1, 0.05]
    result = lemma_scaling(h_list, Config.BDG_SCALING_BOX_SIDE, 8, 3, MU, bump, gap_solution.delta, gap_solution.T, quiet=True)
    assert set(result["exponents"]) == {"l2", "h1", "weighted_h2"}
    assert result["h"] == h_list
    assert 1.2 <= result["exponent"] <= 1.8
