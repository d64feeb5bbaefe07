"""BCS free-energy difference on a box, the GL-form energy and the lower-bound certificate."""

import logging
from typing import Dict, Optional, Sequence, Union

import numpy as np

from .bdg import BdgOperator, build_h0w, position_kernel, reference_state
from .data_models import Certificate
from .decomp import (
    OrderField,
    PairField,
    ReferenceKernel,
    extract_psi,
    field_gradient,
    field_l2_sq,
    h1_norm_sq,
    kernel_from_gap,
    reference_kernel,
    residual_xi,
)
from .entropy import BlockState, gibbs_block_state, gibbs_relative_entropy, relative_entropy
from .foundation import BoxGrid, Potential, RadialProfile, fit_power_law
from .tibcs import iterate_gap_map, kt_multiplier
from .utils.config import Config
from .utils.console import progress
from .utils.errors import (
    DegenerateFitError,
    FamilyViolationError,
    InternalError,
    InvalidArgumentError,
    NumericalError,
)
from .utils.rng import make_rng

logger = logging.getLogger(__name__)

APRIORI_MIN_EXPONENT = 0.4
FAMILY_HALVINGS = 10
FORM_CHECK_MAX_N = 32
FAMILY_TOL = 1e-10


def _check_state(G: BlockState, box: BoxGrid, name: str):
    if G.n != box.size:
        raise InvalidArgumentError(f"{name} has half-size {G.n}, box has {box.size} points")


def _check_h(h: float, box: BoxGrid):
    if not h > 0 or abs(h - box.h) > 1e-12 * h:
        raise InvalidArgumentError(f"h={h} does not match the box (h={box.h})")


def interaction_on_lattice(V: Potential, h: float, box: BoxGrid) -> np.ndarray:
    """V((x - y) / h) with periodic distances, shape (M, M)"""
    return V.real_space(box.pair_distances / h, dims=box.dims)


def free_energy_difference(
    G: BlockState,
    G0w: BlockState,
    V: Potential,
    h: float,
    beta: float,
    box: BoxGrid,
    ref: ReferenceKernel,
    hamiltonian: Optional[np.ndarray] = None,
) -> float:
    """
    F(G, G0w) = (1/2 beta) H(G, G0w) + int V |alpha - alpha0w|^2 + 2 Re int V (alpha - alpha0w) conj(alpha0w - kappa).

    Args:
        G: State in the momentum basis
        G0w: Reference Gibbs state from bdg.reference_state
        V: Pair interaction
        h: Ratio of microscopic to macroscopic length
        beta: Inverse temperature of the reference state
        box: Periodic box
        ref: Translation-invariant pair kernel kappa on the box
        hamiltonian: H0W matrix of G0w; when given the entropy is evaluated through it

    Returns:
        The functional value
    """
    _check_h(h, box)
    _check_state(G, box, "state")
    _check_state(G0w, box, "reference state")
    if ref.box.to_dict() != box.to_dict():
        raise InvalidArgumentError("reference kernel lives on a different box")

    if hamiltonian is None:
        entropy = relative_entropy(G, G0w)
    else:
        entropy = gibbs_relative_entropy(G, hamiltonian, beta)

    alpha = position_kernel(G.alpha, box)
    alpha0w = position_kernel(G0w.alpha, box)
    diff = alpha - alpha0w
    potential = interaction_on_lattice(V, h, box)
    measure = box.cell_volume**2
    quadratic = measure * float(np.sum(potential * np.abs(diff) ** 2))
    linear = 2.0 * measure * float(np.real(np.sum(potential * diff * np.conj(alpha0w - ref.matrix))))
    return 0.5 * entropy / beta + quadratic + linear


def gl_energy(psi: OrderField, W: Potential, B1: np.ndarray, B2: float, B3: float) -> float:
    """int conj(grad psi) B1 grad psi + B2 W |psi|^2 + B3 (1 - |psi|^2)^2 on the box"""
    box = psi.box
    B1 = np.asarray(B1, dtype=float)
    if B1.shape != (box.dims, box.dims):
        raise InvalidArgumentError(f"B1 must be {box.dims}x{box.dims}, got {B1.shape}")
    if np.max(np.abs(B1 - B1.T)) > 1e-12 * max(1.0, np.max(np.abs(B1))) or np.linalg.eigvalsh(B1)[0] <= 0:
        raise InvalidArgumentError("B1 must be symmetric positive definite")
    grad = field_gradient(psi.psi, box)
    kinetic = float(np.real(np.einsum("im,ij,jm->", grad.conj(), B1, grad)))
    field = W.real_space(np.linalg.norm(box.positions, axis=1), dims=box.dims)
    density = B2 * field * np.abs(psi.psi) ** 2 + B3 * psi.phi**2
    return box.cell_volume * (kinetic + float(np.sum(density)))


def theorem_certificate(
    G: BlockState,
    G0w: BlockState,
    V: Potential,
    h: float,
    beta: float,
    box: BoxGrid,
    ref: ReferenceKernel,
    c1: Optional[float] = None,
    c2: Optional[float] = None,
    hamiltonian: Optional[np.ndarray] = None,
) -> Certificate:
    """Functional value and the four norms of the lower bound, assembled into a Certificate"""
    c1 = Config.CERT_C1 if c1 is None else c1
    c2 = Config.CERT_C2 if c2 is None else c2
    f_value = free_energy_difference(G, G0w, V, h, beta, box, ref, hamiltonian=hamiltonian)

    alpha = PairField(box, position_kernel(G.alpha, box))
    psi = extract_psi(alpha, ref)
    xi = residual_xi(alpha, ref, psi)
    q = PairField(box, position_kernel(G.gamma - G0w.gamma, box))
    norms = {
        "grad_psi_sq": field_l2_sq(field_gradient(psi.psi, box), box),
        "phi_l2_sq": field_l2_sq(psi.phi, box),
        "xi_h1_sq": h1_norm_sq(xi, h),
        "q_h1_sq": h1_norm_sq(q, h),
    }
    certificate = Certificate.assemble(f_value, h, c1, c2, **norms)
    logger.debug(f"certificate at h={h}: f={f_value:.4e}, rhs={certificate.rhs:.4e}")
    return certificate


def rank_two_perturbation(box: BoxGrid, rng: np.random.Generator) -> np.ndarray:
    """[[v v^H, 0], [0, -conj(v v^H)]] for a random unit vector v, keeping the BdG pattern"""
    v = rng.standard_normal(box.size) + 1j * rng.standard_normal(box.size)
    v /= np.linalg.norm(v)
    block = np.outer(v, v.conj())
    zero = np.zeros_like(block)
    return np.block([[block, zero], [zero, -block.conj()]])


def _perturbed_member(
    op: BdgOperator, G0w: BlockState, beta: float, V: Potential, ref: ReferenceKernel, P: np.ndarray, epsilon: float
):
    """First of +eps, -eps, +eps/2, ... whose state keeps the functional nonpositive"""
    for _ in range(FAMILY_HALVINGS + 1):
        for sign in (1.0, -1.0):
            G = gibbs_block_state(op.matrix + sign * epsilon * P, beta)
            f_value = free_energy_difference(G, G0w, V, op.h, beta, op.box, ref, op.matrix)
            if f_value <= FAMILY_TOL:
                return G, sign * epsilon
        epsilon *= 0.5
    raise FamilyViolationError(f"no perturbation of size <= {epsilon * 2:.3e} keeps the functional nonpositive at h={op.h}")


def apriori_fit(h_list: Sequence[float], xi_norms: Sequence[float], q_norms: Sequence[float]) -> Dict:
    """Exponents of the xi and q norms against h; q is skipped when it vanishes identically"""
    if len(h_list) < 3:
        raise InvalidArgumentError(f"a-priori fit needs at least 3 h values, got {len(h_list)}")
    if min(xi_norms) <= 0:
        raise DegenerateFitError("xi norm vanishes; no exponent to fit")
    xi_exponent, _ = fit_power_law(h_list, xi_norms)
    q_exponent = None
    if max(q_norms) > 1e-14:
        if min(q_norms) <= 0:
            raise DegenerateFitError("q norm vanishes at part of the sweep")
        q_exponent, _ = fit_power_law(h_list, q_norms)
    passed = xi_exponent >= APRIORI_MIN_EXPONENT and (q_exponent is None or q_exponent >= APRIORI_MIN_EXPONENT)
    return {"xi_exponent": xi_exponent, "q_exponent": q_exponent, "passed": bool(passed)}


def apriori_scaling(
    h_list: Sequence[float],
    L: float,
    n: int,
    dims: int,
    mu: float,
    V: Potential,
    W: Potential,
    delta: RadialProfile,
    T: float,
    family: str = "perturbed",
    beta: Optional[float] = None,
    epsilon0: float = 0.5,
    seed: int = 0,
    quiet: bool = False,
) -> Dict:
    """
    Sweep h over a family of states with nonpositive functional and fit the xi and q norms.

    The 'reference' family is G0w itself. The 'perturbed' family is the Gibbs state of
    H0W + eps_h P for a seeded rank-2 P and eps_h = epsilon0 h, with the sign (then halving)
    chosen so that the functional stays nonpositive.
    """
    if family not in ("perturbed", "reference"):
        raise InvalidArgumentError(f"unknown state family '{family}'")
    beta = 1.0 / T if beta is None else beta
    rows = {"h": [], "f_values": [], "xi_h1": [], "q_h1": []}
    for index, h in enumerate(progress(h_list, total=len(h_list), desc="a-priori sweep", quiet=quiet)):
        box = BoxGrid(L=L, n=n, dims=dims, h=float(h))
        op = build_h0w(box, mu, W, delta, box.h)
        G0w = reference_state(op, beta)
        ref = kernel_from_gap(delta, mu, T, box)
        G = G0w
        if family == "perturbed":
            P = rank_two_perturbation(box, make_rng(seed, index))
            G, used = _perturbed_member(op, G0w, beta, V, ref, P, epsilon0 * box.h)
            logger.info(f"h={h}: perturbation size {used:+.3e}")
        cert = theorem_certificate(G, G0w, V, box.h, beta, box, ref, hamiltonian=op.matrix)
        if cert.f_value > FAMILY_TOL:
            raise FamilyViolationError(f"family member at h={h} has positive functional {cert.f_value:.3e}")
        for key, value in zip(rows, (box.h, cert.f_value, np.sqrt(cert.xi_h1_sq), np.sqrt(cert.q_h1_sq))):
            rows[key].append(float(value))

    fit = apriori_fit(rows["h"], rows["xi_h1"], rows["q_h1"])
    return {"family": family, **rows, **fit}


def _lattice_interaction(V: Potential, box: BoxGrid) -> np.ndarray:
    """V(z / h) on the relative lattice z = j a, periodic"""
    z = box.wrap(box.spacing * np.arange(box.n))
    return V.real_space(np.abs(z) / box.h, dims=1)


def lattice_gap(box: BoxGrid, T: float, V: Potential, mu: float, anderson: bool = True) -> np.ndarray:
    """
    Self-consistent gap on the relative lattice of a 1D box.

    Solves delta_p = 2 FFT[V(z/h) kappa(z)](p) with kappa the kernel of -delta / (2 K_T(E)),
    so (K_T + V) kappa = 0 holds exactly on the lattice.
    """
    if box.dims != 1:
        raise InvalidArgumentError(f"the lattice gap is defined on 1D boxes, got dims={box.dims}")
    potential = _lattice_interaction(V, box)
    kinetic = (box.h * box.axis_momenta) ** 2 - mu

    def step(delta):
        alpha = -delta / (2.0 * kt_multiplier(np.hypot(kinetic, delta), T))
        return 2.0 * np.real(np.fft.fft(potential * np.fft.ifft(alpha)))

    init = np.full(box.n, max(1.0, float(np.max(np.abs(potential)))))
    delta, residual, iterations, converged, _ = iterate_gap_map(
        step, init, Config.DAMPING, Config.GAP_TOL, Config.MAXITER, anderson=anderson
    )
    if not converged:
        raise NumericalError(f"lattice gap did not converge (residual {residual:.3e})")
    logger.info(f"lattice gap: max {np.max(np.abs(delta)):.4e} after {iterations} iterations")
    return delta


def _symmetric_basis(n: int) -> np.ndarray:
    """Orthonormal basis of symmetric n x n arrays, vectorized row-major"""
    rows, cols = np.triu_indices(n)
    basis = np.zeros((n * n, rows.size))
    columns = np.arange(rows.size)
    diagonal = rows == cols
    basis[rows * n + cols, columns] = np.where(diagonal, 1.0, np.sqrt(0.5))
    basis[cols * n + rows, columns] = np.where(diagonal, 1.0, np.sqrt(0.5))
    return basis


def ktv_form_bound_check(
    box: BoxGrid,
    T: float,
    V: Potential,
    mu: float,
    delta: Union[RadialProfile, np.ndarray, None] = None,
    samples: int = 0,
    seed: int = 0,
) -> Dict:
    """
    Largest C with int (Lambda, (K_T + V_y) Lambda) dy >= C h^2 ||(grad_x + grad_y) Lambda||^2 on symmetric Lambda.

    Directions in the kernel of the gradient form are eliminated by a Schur complement, and the
    minimum generalized eigenvalue on the remaining range is reported as c_star.

    Args:
        box: 1D box with n <= 32
        T: Temperature
        V: Pair interaction
        mu: Chemical potential
        delta: Gap as a radial profile, as lattice values, or None for the lattice gap
        samples: Random symmetric fields to evaluate the Rayleigh quotient on
        seed: Seed of the sampled fields

    Returns:
        Dict with 'c_star', 'sample_min_ratio', 'kernel_lhs', 'kernel_rhs' and 'gap_max'
    """
    if box.dims != 1 or box.n > FORM_CHECK_MAX_N:
        raise InvalidArgumentError(f"form check needs a 1D box with n <= {FORM_CHECK_MAX_N}, got dims={box.dims}, n={box.n}")
    h, n = box.h, box.n
    if delta is None:
        gap = lattice_gap(box, T, V, mu)
    elif isinstance(delta, RadialProfile):
        gap = delta(h * box.momentum_norms)
    else:
        gap = np.asarray(delta, dtype=float)
    energies = np.hypot((h * box.axis_momenta) ** 2 - mu, gap)

    U = box.unitary
    kinetic = (U * kt_multiplier(energies, T)) @ U.conj().T
    k = 1j * box.axis_momenta.copy()
    k[n // 2] = 0.0
    derivative = (U * k) @ U.conj().T
    identity = np.eye(n)
    lhs = np.kron(kinetic, identity) + np.diag(interaction_on_lattice(V, h, box).ravel())
    grad = np.kron(derivative, identity) + np.kron(identity, derivative)
    rhs = h**2 * grad.conj().T @ grad

    S = _symmetric_basis(n)
    A = S.T @ lhs @ S
    B = S.T @ rhs @ S
    b, Q = np.linalg.eigh(B)
    cut = 1e-10 * max(float(b[-1]), 1.0)
    if b[0] < -cut:
        raise InternalError(f"gradient form is indefinite (eigenvalue {b[0]:.3e})")
    in_range = b > cut
    R, K = Q[:, in_range], Q[:, ~in_range]
    A_rr = R.conj().T @ A @ R
    if K.shape[1]:
        A_rk = R.conj().T @ A @ K
        A_rr = A_rr - A_rk @ np.linalg.pinv(K.conj().T @ A @ K, hermitian=True) @ A_rk.conj().T
    scale = 1.0 / np.sqrt(b[in_range])
    reduced = scale[:, None] * A_rr * scale[None, :]
    c_star = float(np.linalg.eigvalsh(0.5 * (reduced + reduced.conj().T))[0])

    sample_min = None
    if samples:
        rng = make_rng(seed)
        ratios = []
        for _ in range(samples):
            field = S @ (rng.standard_normal(S.shape[1]) + 1j * rng.standard_normal(S.shape[1]))
            ratios.append(np.real(field.conj() @ lhs @ field) / np.real(field.conj() @ rhs @ field))
        sample_min = float(min(ratios))

    kernel_lhs = kernel_rhs = None
    symbol = -gap / (2.0 * kt_multiplier(energies, T))
    if np.any(symbol):
        pair = reference_kernel(symbol, box).matrix.ravel()
        norm = np.real(pair.conj() @ pair)
        kernel_lhs = float(np.real(pair.conj() @ lhs @ pair) / norm)
        kernel_rhs = float(np.real(pair.conj() @ rhs @ pair) / norm)
    return {
        "c_star": c_star,
        "sample_min_ratio": sample_min,
        "kernel_lhs": kernel_lhs,
        "kernel_rhs": kernel_rhs,
        "gap_max": float(np.max(np.abs(gap))),
    }
