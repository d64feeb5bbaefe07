"""Finite-dimensional BCS block states, their relative entropy and the trace inequalities.

States and Hamiltonians are 2n x 2n matrices with the particle-hole patterns
    Gamma = [[gamma, alpha], [conj(alpha), 1 - conj(gamma)]]
    H     = [[h, delta], [conj(delta), -conj(h)]]
with gamma, h Hermitian and alpha, delta symmetric.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.special import expit, logit, rel_entr, xlogy

from .tibcs import kt_multiplier
from .utils.config import Config
from .utils.errors import InvalidArgumentError, InvalidStateError, SingularReferenceError

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
EIGEN_TOL = 1e-12


def _hermitian_defect(matrix: np.ndarray) -> float:
    return float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0


def _split(matrix: np.ndarray) -> Tuple[int, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    dim = matrix.shape[0]
    if matrix.ndim != 2 or matrix.shape[1] != dim or dim % 2:
        raise InvalidArgumentError(f"block matrices must be square with even size, got {matrix.shape}")
    n = dim // 2
    return n, matrix[:n, :n], matrix[:n, n:], matrix[n:, :n], matrix[n:, n:]


@dataclass(frozen=True, eq=False)
class BlockState:
    """Generalized one-particle density matrix"""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=complex))
        _split(self.matrix)

    @classmethod
    def from_blocks(cls, gamma: np.ndarray, alpha: np.ndarray) -> "BlockState":
        gamma = np.asarray(gamma, dtype=complex)
        alpha = np.asarray(alpha, dtype=complex)
        eye = np.eye(gamma.shape[0])
        return cls(np.block([[gamma, alpha], [alpha.conj(), eye - gamma.conj()]]))

    @property
    def n(self) -> int:
        return self.matrix.shape[0] // 2

    @property
    def gamma(self) -> np.ndarray:
        return self.matrix[: self.n, : self.n]

    @property
    def alpha(self) -> np.ndarray:
        return self.matrix[: self.n, self.n :]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def pattern_defect(self) -> float:
        n, gamma, alpha, lower_left, lower_right = _split(self.matrix)
        return max(
            _hermitian_defect(self.matrix),
            float(np.max(np.abs(lower_right - (np.eye(n) - gamma.conj())))),
            float(np.max(np.abs(lower_left - alpha.conj()))),
        )

    def check(self, tol: float = HERMITIAN_TOL):
        defect = self.pattern_defect()
        if defect > tol:
            raise InvalidStateError(f"block pattern violated (defect {defect:.3e})")
        eigs = self.eigenvalues()
        if eigs[0] < -tol or eigs[-1] > 1.0 + tol:
            raise InvalidStateError(f"eigenvalues leave [0, 1]: [{eigs[0]:.3e}, {eigs[-1]:.3e}]")


@dataclass(frozen=True, eq=False)
class BlockHamiltonian:
    """Particle-hole symmetric BdG matrix"""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=complex))
        _split(self.matrix)

    @classmethod
    def from_blocks(cls, h: np.ndarray, delta: np.ndarray) -> "BlockHamiltonian":
        h = np.asarray(h, dtype=complex)
        delta = np.asarray(delta, dtype=complex)
        return cls(np.block([[h, delta], [delta.conj(), -h.conj()]]))

    @property
    def n(self) -> int:
        return self.matrix.shape[0] // 2

    def pattern_defect(self) -> float:
        n, h, delta, lower_left, lower_right = _split(self.matrix)
        return max(
            _hermitian_defect(self.matrix),
            float(np.max(np.abs(lower_right + h.conj()))),
            float(np.max(np.abs(lower_left - delta.conj()))),
        )


MatrixLike = Union[BlockState, BlockHamiltonian, np.ndarray]


def _matrix(value: MatrixLike) -> np.ndarray:
    return value.matrix if isinstance(value, (BlockState, BlockHamiltonian)) else np.asarray(value)


def matrix_function(matrix: np.ndarray, func) -> np.ndarray:
    """func applied to a Hermitian matrix through its eigendecomposition"""
    eigvals, eigvecs = np.linalg.eigh(matrix)
    return (eigvecs * func(eigvals)) @ eigvecs.conj().T


def gibbs_block_state(H: MatrixLike, beta: float) -> BlockState:
    """(1 + exp(beta H))^(-1)"""
    if not beta > 0:
        raise InvalidArgumentError(f"beta must be positive, got {beta}")
    matrix = _matrix(H)
    defect = _hermitian_defect(matrix)
    if defect > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(matrix)))):
        raise InvalidArgumentError(f"Hamiltonian is not Hermitian (defect {defect:.3e})")
    return BlockState(matrix_function(matrix, lambda e: expit(-beta * e)))


def random_block_hamiltonian(n: int, rng: np.random.Generator, scale: float = 1.0) -> BlockHamiltonian:
    """Pattern-exact random BdG matrix with complex Gaussian entries"""
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return BlockHamiltonian.from_blocks(0.5 * scale * (a + a.conj().T), 0.5 * scale * (b + b.T))


def random_block_state(
    n: int,
    rng: np.random.Generator,
    beta: Optional[float] = None,
    clip: Optional[float] = None,
) -> BlockState:
    """Gibbs state of a random BdG matrix with eigenvalues clipped symmetrically into [clip, 1 - clip]"""
    clip = Config.BLOCK_CLIP if clip is None else clip
    beta = rng.uniform(0.2, 4.0) if beta is None else beta
    H = random_block_hamiltonian(n, rng)
    return BlockState(matrix_function(H.matrix, lambda e: np.clip(expit(-beta * e), clip, 1.0 - clip)))


def _phi_trace(eigs: np.ndarray) -> float:
    return float(np.sum(xlogy(eigs, eigs) + xlogy(1.0 - eigs, 1.0 - eigs)))


def relative_entropy(G: MatrixLike, Gp: MatrixLike) -> float:
    """Tr[phi(G) - phi(Gp) - phi'(Gp)(G - Gp)] with phi(x) = x ln x + (1 - x) ln(1 - x)"""
    g, gp = _matrix(G), _matrix(Gp)
    if g.shape != gp.shape:
        raise InvalidArgumentError(f"states have different shapes {g.shape} and {gp.shape}")
    ref_eigs, ref_vecs = np.linalg.eigh(gp)
    if ref_eigs[0] <= 0.0 or ref_eigs[-1] >= 1.0:
        raise SingularReferenceError(
            f"reference eigenvalues must lie in (0, 1), got [{ref_eigs[0]:.3e}, {ref_eigs[-1]:.3e}]"
        )
    eigs = np.linalg.eigvalsh(g)
    if eigs[0] < -EIGEN_TOL or eigs[-1] > 1.0 + EIGEN_TOL:
        raise InvalidStateError(f"state eigenvalues leave [0, 1]: [{eigs[0]:.3e}, {eigs[-1]:.3e}]")
    eigs = np.clip(eigs, 0.0, 1.0)

    diff_in_ref_basis = np.real(np.einsum("ij,ik,kj->j", ref_vecs.conj(), g - gp, ref_vecs))
    linear = float(np.dot(logit(ref_eigs), diff_in_ref_basis))
    value = _phi_trace(eigs) - _phi_trace(ref_eigs) - linear
    return float(value)


def gibbs_relative_entropy(G: MatrixLike, H: MatrixLike, beta: float) -> float:
    """
    Relative entropy of G with respect to gibbs(H, beta), written through H.

    phi'(Gp) = -beta H for the Gibbs state, so reference eigenvalues that round to 0 or 1
    at large beta E do not make the reference singular.
    """
    g, h = _matrix(G), _matrix(H)
    if g.shape != h.shape:
        raise InvalidArgumentError(f"state and Hamiltonian have different shapes {g.shape} and {h.shape}")
    if not beta > 0:
        raise InvalidArgumentError(f"beta must be positive, got {beta}")
    energies, vecs = np.linalg.eigh(h)
    x = beta * energies
    occupation = expit(-x)
    ref_phi = -float(np.sum(occupation * np.logaddexp(0.0, x) + (1.0 - occupation) * np.logaddexp(0.0, -x)))
    gp = (vecs * occupation) @ vecs.conj().T

    eigs = np.linalg.eigvalsh(g)
    if eigs[0] < -EIGEN_TOL or eigs[-1] > 1.0 + EIGEN_TOL:
        raise InvalidStateError(f"state eigenvalues leave [0, 1]: [{eigs[0]:.3e}, {eigs[-1]:.3e}]")
    linear = beta * float(np.real(np.trace(h @ (g - gp))))
    value = _phi_trace(np.clip(eigs, 0.0, 1.0)) - ref_phi + linear
    return float(value)


def entropy_coefficient(y):
    """ln((1 - y) / y) / (1 - 2y), equal to 2 at y = 1/2"""
    y = np.asarray(y, dtype=float)
    u = 1.0 - 2.0 * y
    small = np.abs(u) < Config.SERIES_SWITCH
    safe = np.where(small, 0.5, u)
    exact = np.log((1.0 - y) / np.where(small, 0.25, y)) / safe
    series = 2.0 * (1.0 + u**2 / 3.0 + u**4 / 5.0)
    return np.where(small, series, exact)


def scalar_entropy_inequality_gap(x, y):
    """Slack of the scalar entropy inequality; nonnegative on (0, 1)^2"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any((x <= 0) | (x >= 1)) or np.any((y <= 0) | (y >= 1)):
        raise InvalidArgumentError("x and y must lie strictly inside (0, 1)")
    lhs = rel_entr(x, y) + rel_entr(1.0 - x, 1.0 - y)
    gap = lhs - entropy_coefficient(y) * (x - y) ** 2 - (4.0 / 3.0) * (x * (1 - x) - y * (1 - y)) ** 2
    return float(gap) if gap.ndim == 0 else gap


def _hs_sq(matrix: np.ndarray) -> float:
    return float(np.sum(np.abs(matrix) ** 2))


def entropy_bound_terms(G: MatrixLike, H: MatrixLike, beta: float) -> Tuple[float, float, float]:
    """
    Both sides of the relative-entropy lower bound for Gp = gibbs(H, beta).

    Returns:
        (lhs, kinetic_term, quartic_term) with lhs >= kinetic_term + quartic_term
    """
    g = _matrix(G)
    gp = gibbs_block_state(H, beta).matrix
    lhs = gibbs_relative_entropy(g, H, beta)
    diff = g - gp
    weight = matrix_function(beta * _matrix(H), lambda e: kt_multiplier(e, 1.0))
    kinetic = float(np.real(np.trace(diff @ weight @ diff)))
    quartic = (4.0 / 3.0) * _hs_sq((g - g @ g) - (gp - gp @ gp))
    return lhs, kinetic, quartic


def operator_identity_defect(H: MatrixLike, beta: float) -> float:
    """Spectral-norm distance between ln((1 - Gp)/Gp)/(1 - 2Gp) and beta H / tanh(beta H / 2)"""
    gp = gibbs_block_state(H, beta).matrix
    left = matrix_function(gp, entropy_coefficient)
    right = matrix_function(beta * _matrix(H), lambda e: kt_multiplier(e, 1.0))
    return float(np.linalg.norm(left - right, 2))


def _check_unit_interval(g: np.ndarray, name: str):
    if _hermitian_defect(g) > HERMITIAN_TOL:
        raise InvalidArgumentError(f"{name} is not Hermitian")
    eigs = np.linalg.eigvalsh(g)
    if eigs[0] < -EIGEN_TOL or eigs[-1] > 1.0 + EIGEN_TOL:
        raise InvalidArgumentError(f"{name} eigenvalues leave [0, 1]: [{eigs[0]:.3e}, {eigs[-1]:.3e}]")


def klein_contraction_gap(g: np.ndarray, g0: np.ndarray) -> float:
    """Tr(g - g0)^2 - Tr(g(1 - g) - g0(1 - g0))^2"""
    g, g0 = np.asarray(g), np.asarray(g0)
    _check_unit_interval(g, "g")
    _check_unit_interval(g0, "g0")
    return _hs_sq(g - g0) - _hs_sq((g - g @ g) - (g0 - g0 @ g0))


def _pair_density(state: BlockState) -> np.ndarray:
    return state.alpha @ state.alpha.conj()


def _block_bracket(G: BlockState, G0: BlockState) -> np.ndarray:
    g, g0 = G.gamma, G0.gamma
    return (g - g @ g) - (g0 - g0 @ g0) - _pair_density(G) + _pair_density(G0)


def block_trace_inequality_gap(G: BlockState, G0: BlockState) -> float:
    lhs = _hs_sq((G.matrix - G.matrix @ G.matrix) - (G0.matrix - G0.matrix @ G0.matrix))
    return lhs - 2.0 * _hs_sq(_block_bracket(G, G0))


def hs_chain_gap(G: BlockState, G0: BlockState) -> float:
    lhs = 2.0 * _hs_sq(G.gamma - G0.gamma) + (4.0 / 3.0) * _hs_sq(_block_bracket(G, G0))
    return lhs - 0.8 * _hs_sq(_pair_density(G) - _pair_density(G0))


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def compress(state: MatrixLike, basis: np.ndarray) -> np.ndarray:
    """Compression by diag(U, conj U), which keeps the block pattern"""
    k = basis.shape[1]
    n = basis.shape[0]
    isometry = np.zeros((2 * n, 2 * k), dtype=complex)
    isometry[:n, :k] = basis
    isometry[n:, k:] = basis.conj()
    return isometry.conj().T @ _matrix(state) @ isometry


def compressed_entropy_profile(G: MatrixLike, Gp: MatrixLike, rng: np.random.Generator) -> Dict:
    """Relative entropies of compressions onto nested random subspaces of rank 1..n"""
    n = _matrix(G).shape[0] // 2
    unitary = random_unitary(n, rng)
    values = [relative_entropy(compress(G, unitary[:, :k]), compress(Gp, unitary[:, :k])) for k in range(1, n + 1)]
    steps = np.diff(values)
    return {
        "ranks": list(range(1, n + 1)),
        "values": values,
        "nondecreasing": bool(np.all(steps >= -1e-12)),
    }
