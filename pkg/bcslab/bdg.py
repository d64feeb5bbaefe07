"""Finite-box BdG operator H0W, its Gibbs state and the pairing-difference norms.

Both particle and hole components are expanded in the same plane waves
e_p(x) = exp(i p.x) / sqrt(M); in that basis the translation-invariant gap
is diagonal and the external field enters as a real symmetric convolution block.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .entropy import BlockState, gibbs_block_state
from .foundation import BoxGrid, Potential, RadialProfile, fit_power_law
from .tibcs import kt_multiplier
from .utils.console import progress
from .utils.errors import DegenerateFitError, InvalidArgumentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BdgOperator:
    """H0W on a periodic box, momentum basis"""

    box: BoxGrid
    matrix: np.ndarray
    mu: float
    h: float

    @property
    def size(self) -> int:
        return self.box.size

    @property
    def kinetic_block(self) -> np.ndarray:
        return self.matrix[: self.size, : self.size]

    @property
    def gap_block(self) -> np.ndarray:
        return self.matrix[: self.size, self.size :]

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))


def _check_h(box: BoxGrid, h: float):
    if not h > 0:
        raise InvalidArgumentError(f"h must be positive, got {h}")
    if abs(h - box.h) > 1e-12 * h:
        raise InvalidArgumentError(f"h={h} does not match the box (h={box.h})")


def field_block(box: BoxGrid, W: Potential, h: float) -> np.ndarray:
    """h^2 W in the plane-wave basis: h^2 (2 pi)^(d/2) W^(p - q) / L^d, differences wrapped"""
    scale = h**2 * (2.0 * np.pi) ** (box.dims / 2) / box.L**box.dims
    return scale * W.fourier(box.wrapped_momentum_differences, dims=box.dims)


def build_h0w(box: BoxGrid, mu: float, W: Potential, delta: RadialProfile, h: float) -> BdgOperator:
    """
    Assemble [[k(hp) + h^2 W, delta(hp)], [delta(hp), -(k(hp) + h^2 W)]].

    Args:
        box: Periodic box with matching h
        mu: Chemical potential
        W: External field in macroscopic units
        delta: Translation-invariant gap profile
        h: Ratio of microscopic to macroscopic length

    Returns:
        BdgOperator in the momentum basis
    """
    _check_h(box, h)
    hp = h * box.momentum_norms
    if hp.max() > delta.grid.pmax:
        raise InvalidArgumentError(
            f"h * max|p| = {hp.max():.6g} exceeds the gap grid cutoff {delta.grid.pmax}; "
            "lower n or h, or enlarge pmax"
        )
    kinetic = np.diag(hp**2 - mu)
    if not W.is_zero:
        kinetic = kinetic + field_block(box, W, h)
    gap = np.diag(delta(hp))
    matrix = np.block([[kinetic, gap], [gap, -kinetic]])
    return BdgOperator(box=box, matrix=matrix, mu=mu, h=h)


def reference_state(op: BdgOperator, beta: float) -> BlockState:
    """Gamma_0^W = (1 + exp(beta H0W))^(-1)"""
    return gibbs_block_state(op.matrix, beta)


def reference_pair_symbol(delta: RadialProfile, mu: float, box: BoxGrid, T: float) -> np.ndarray:
    """alpha_0^(h|p|) = -delta(h|p|) / (2 K_T(E(h|p|))) on the lattice"""
    hp = box.h * box.momentum_norms
    gap = delta(hp)
    return -gap / (2.0 * kt_multiplier(np.hypot(hp**2 - mu, gap), T))


def to_position_basis(matrix: np.ndarray, box: BoxGrid) -> np.ndarray:
    """Change of basis for an M x M block or a 2M x 2M operator (no cell-volume factor)"""
    U = box.unitary
    if matrix.shape == (box.size, box.size):
        return U @ matrix @ U.conj().T
    if matrix.shape == (2 * box.size, 2 * box.size):
        zero = np.zeros_like(U)
        big = np.block([[U, zero], [zero, U]])
        return big @ matrix @ big.conj().T
    raise InvalidArgumentError(f"matrix shape {matrix.shape} does not fit a box of size {box.size}")


def position_kernel(block: np.ndarray, box: BoxGrid) -> np.ndarray:
    """Integral kernel K(x, y) on the lattice of a momentum-basis block"""
    return to_position_basis(block, box) / box.cell_volume


def commutator_defect(op: BdgOperator, state: BlockState) -> float:
    return float(np.max(np.abs(op.matrix @ state.matrix - state.matrix @ op.matrix)))


def block_pattern_defect(state: BlockState, box: BoxGrid) -> float:
    """Pattern defect of the state in the position basis"""
    return BlockState(to_position_basis(state.matrix, box)).pattern_defect()


def _pair_difference(state: BlockState, box: BoxGrid, delta: RadialProfile, mu: float, T: float) -> np.ndarray:
    return state.alpha - np.diag(reference_pair_symbol(delta, mu, box, T))


def pairing_difference_norms(
    state: BlockState,
    delta: RadialProfile,
    h: float,
    box: BoxGrid,
    mu: float,
    T: float,
) -> Tuple[float, float, float]:
    """
    Norms of alpha_0^W minus the translation-invariant pair kernel.

    Returns:
        (l2, h1, weighted_h2): the L2 norm, the H1 norm with h-scaled derivatives, and the
        L2 norm weighted by (1 + |x|^2 + |y|^2)
    """
    _check_h(box, h)
    if state.n != box.size:
        raise InvalidArgumentError(f"state has half-size {state.n}, box has {box.size} points")
    diff = _pair_difference(state, box, delta, mu, T)
    p2 = box.momentum_norms**2
    l2 = np.sqrt(np.sum(np.abs(diff) ** 2))
    h1 = np.sqrt(np.sum(np.abs(diff) ** 2 * (1.0 + h**2 * p2[:, None] + h**2 * p2[None, :])))
    r2 = np.sum(box.positions**2, axis=1)
    weighted = to_position_basis(diff, box) * (1.0 + r2[:, None] + r2[None, :])
    return float(l2), float(h1), float(np.sqrt(np.sum(np.abs(weighted) ** 2)))


def scaling_fit(h_list: Sequence[float], norm_list: Sequence[float]) -> Tuple[float, float]:
    """Exponent and r2 of a least-squares power law norm ~ h^exponent"""
    if len(h_list) < 3 or len(h_list) != len(norm_list):
        raise InvalidArgumentError(f"scaling fit needs at least 3 matching pairs, got {len(h_list)} and {len(norm_list)}")
    return fit_power_law(h_list, norm_list)


def lemma_scaling(
    h_list: Sequence[float],
    L: float,
    n: int,
    dims: int,
    mu: float,
    W: Potential,
    delta: RadialProfile,
    T: float,
    beta: Optional[float] = None,
    quiet: bool = False,
) -> Dict:
    """Pairing-difference norms over an h sweep, with fitted exponents for each norm"""
    beta = 1.0 / T if beta is None else beta
    rows = {"h": [], "l2": [], "h1": [], "weighted_h2": []}
    for h in progress(h_list, total=len(h_list), desc="h sweep", quiet=quiet):
        box = BoxGrid(L=L, n=n, dims=dims, h=float(h))
        state = reference_state(build_h0w(box, mu, W, delta, box.h), beta)
        l2, h1, weighted = pairing_difference_norms(state, delta, box.h, box, mu, T)
        logger.info(f"h={h}: l2={l2:.4e}, h1={h1:.4e}, weighted={weighted:.4e}")
        for key, value in zip(rows, (box.h, l2, h1, weighted)):
            rows[key].append(value)

    if max(rows["h1"]) < 1e-12:
        raise DegenerateFitError("pairing differences vanish (W = 0?); no exponent to fit")
    exponents, fits = {}, {}
    for key in ("l2", "h1", "weighted_h2"):
        exponents[key], fits[key] = scaling_fit(rows["h"], rows[key])
    return {**rows, "exponent": exponents["h1"], "r2": fits["h1"], "exponents": exponents}
