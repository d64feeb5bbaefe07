"""Matsubara series, their closed forms, the zeta kernel and the a-tilde kernels.

With c = 2 pi T the basic identities are
    x / tanh(x / 2T) = 2T + 4T sum_{n>=1} x^2 / (x^2 + c^2 n^2)
    sum_{n>=1} n^2 / ((a^2 + n^2)(b^2 + n^2)) = -pi/(2(a+b)) + pi/(a^2-b^2) (g(a) - g(b)),
where g(t) = t / (1 - exp(-2 pi t)).
"""

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import psi, zeta

from .foundation import BoxGrid, Potential, RadialProfile, fit_power_law
from .utils.config import Config
from .utils.errors import DegenerateFitError, InvalidArgumentError, NumericalError
from .utils.rng import make_rng

logger = logging.getLogger(__name__)

CHUNK = 1 << 16
SMALL_ARGUMENT = 1e-3
ZETA_SERIES_TERMS = 40


@dataclass
class KernelEval:
    """One kernel value with the method that produced it"""

    value: float
    method: str
    tail_bound: float = 0.0
    p: Optional[float] = None
    q: Optional[float] = None

    def to_dict(self) -> Dict:
        return asdict(self)


def _check_temperature(T: float):
    if not T > 0:
        raise InvalidArgumentError(f"Temperature must be positive, got {T}")


def _chunked_sum(term: Callable[[np.ndarray], np.ndarray], N: int) -> np.ndarray:
    """sum_{n=1}^{N} term(n), with term returning (..., len(n)) arrays"""
    total = 0.0
    for start in range(1, N + 1, CHUNK):
        n = np.arange(start, min(start + CHUNK, N + 1), dtype=float)
        total = total + np.sum(term(n), axis=-1)
    return total


def xcoth_series(x, T: float, N: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Partial Matsubara sum of x / tanh(x / 2T) and a bound on the neglected terms.

    Args:
        x: Argument(s)
        T: Temperature
        N: Number of Matsubara terms

    Returns:
        (approx, tail) with approx <= x / tanh(x / 2T) <= approx + tail
    """
    _check_temperature(T)
    if int(N) != N or N < 1:
        raise InvalidArgumentError(f"N must be a positive integer, got {N}")
    x = np.asarray(x, dtype=float)
    c = 2.0 * np.pi * T
    x2 = (x**2)[..., None]
    approx = 2.0 * T + 4.0 * T * _chunked_sum(lambda n: x2 / (x2 + (c * n) ** 2), int(N))
    ratio = np.abs(x) / c
    safe = np.where(ratio > 0, ratio, 1.0)
    tail = np.where(ratio > 0, 4.0 * T * ratio * (0.5 * np.pi - np.arctan(N / safe)), 0.0)
    if x.ndim == 0:
        return float(approx), float(tail)
    return approx, tail


def xcoth_tail(x, T: float, N: int):
    """Exact remainder 4T sum_{n>N} x^2 / (x^2 + c^2 n^2) through the complex digamma function"""
    _check_temperature(T)
    y = np.abs(np.asarray(x, dtype=float)) / (2.0 * np.pi * T)
    value = 4.0 * T * y * np.imag(psi(N + 1 + 1j * y))
    return float(value) if np.ndim(value) == 0 else value


def _g(t: np.ndarray) -> np.ndarray:
    return t / -np.expm1(-2.0 * np.pi * t)


def _g_derivatives(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """g'(m) and g'''(m) from g = t/2 + q/2, q = t coth(pi t)"""
    with np.errstate(over="ignore"):
        coth = 1.0 / np.tanh(np.pi * m)
        csch2 = 1.0 / np.sinh(np.pi * m) ** 2
    q1 = coth - np.pi * m * csch2
    q3 = 6.0 * np.pi**2 * csch2 * coth - 2.0 * np.pi**3 * m * csch2 * (2.0 * coth**2 + csch2)
    return 0.5 + 0.5 * q1, 0.5 * q3


def _basel_tails(b: np.ndarray, k: int) -> np.ndarray:
    """R_k(b) = sum_{n>=1} n^(-2k) / (b^2 + n^2)"""
    b2 = b**2
    out = np.empty_like(b)
    small = b < 0.5
    if np.any(small):
        j = np.arange(ZETA_SERIES_TERMS)
        coeffs = zeta(2 * k + 2 + 2 * j)
        out[small] = np.sum((-b2[small, None]) ** j * coeffs, axis=-1)
    large = ~small
    if np.any(large):
        bl, bl2 = b[large], b2[large]
        r = (np.pi * bl / np.tanh(np.pi * bl) - 1.0) / (2.0 * bl2)
        for order in range(1, k + 1):
            r = (zeta(2 * order) - r) / bl2
        out[large] = r
    return out


def _matsubara_sum(a, b) -> np.ndarray:
    """sum_{n>=1} n^2 / ((a^2 + n^2)(b^2 + n^2)) for a, b >= 0"""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    lo, hi = np.minimum(a, b).ravel(), np.maximum(a, b).ravel()
    out = np.empty_like(lo)
    mid = 0.5 * (lo + hi)

    small = lo < SMALL_ARGUMENT
    near = ~small & (hi - lo < Config.SERIES_SWITCH * np.maximum(1.0, mid))
    closed = ~small & ~near

    if np.any(small):
        a2 = lo[small] ** 2
        bs = hi[small]
        out[small] = _basel_tails(bs, 0) - a2 * _basel_tails(bs, 1) + a2**2 * _basel_tails(bs, 2)
    if np.any(near):
        m, d = mid[near], hi[near] - lo[near]
        g1, g3 = _g_derivatives(m)
        quotient = g1 + g3 * d**2 / 24.0
        out[near] = np.pi / (2.0 * m) * (quotient - 0.5)
    if np.any(closed):
        x, y = lo[closed], hi[closed]
        s = x + y
        out[closed] = -np.pi / (2.0 * s) + np.pi / s * (_g(y) - _g(x)) / (y - x)
    return out.reshape(a.shape)


def matsubara_sum(a: float, b: float) -> float:
    """sum_{n>=1} n^2 / ((a^2 + n^2)(b^2 + n^2)) in closed form"""
    if not (a > 0 and b > 0):
        raise InvalidArgumentError(f"a and b must be positive, got a={a}, b={b}")
    return float(_matsubara_sum(a, b))


def matsubara_series(a: float, b: float, N: int) -> float:
    """Truncated sum over n <= N"""
    return float(_chunked_sum(lambda n: n**2 / ((a**2 + n**2) * (b**2 + n**2)), int(N)))


def lorentzian_pair_ft(a: float, b: float, k: float) -> float:
    """
    int x^2 / ((a^2 + x^2)(b^2 + x^2)) exp(-2 pi i k x) dx
    = pi / (a^2 - b^2) (a exp(-2 pi a |k|) - b exp(-2 pi b |k|)).
    """
    if not (a > 0 and b > 0):
        raise InvalidArgumentError(f"a and b must be positive, got a={a}, b={b}")
    tau = 2.0 * np.pi * abs(k)
    lo, hi = min(a, b), max(a, b)
    mid = 0.5 * (lo + hi)
    if hi - lo < Config.SERIES_SWITCH * max(1.0, mid):
        decay = np.exp(-tau * mid)
        first = decay * (1.0 - tau * mid)
        third = decay * (3.0 * tau**2 - tau**3 * mid)
        quotient = first + third * (hi - lo) ** 2 / 24.0
    else:
        quotient = (hi * np.exp(-tau * hi) - lo * np.exp(-tau * lo)) / (hi - lo)
    return float(np.pi / (lo + hi) * quotient)


def zeta_kernel(Ep, Eq, T: float, method: str = "closed-form", N: int = 100000) -> KernelEval:
    """
    zeta = sum_{n>=1} 2 c^2 n^2 / ((Ep^2 + c^2 n^2)(Eq^2 + c^2 n^2)), c = 2 pi T.

    The series path adds the leading remainder 2 / (c^2 (N + 1/2)) and bounds what is left.
    """
    _check_temperature(T)
    Ep, Eq = float(Ep), float(Eq)
    if Ep < 0 or Eq < 0:
        raise InvalidArgumentError(f"energies must be nonnegative, got {Ep}, {Eq}")
    c = 2.0 * np.pi * T
    a, b = Ep / c, Eq / c
    if method == "closed-form":
        return KernelEval(float(2.0 / c**2 * _matsubara_sum(a, b)), method)
    if method == "series":
        partial = matsubara_series(a, b, N) + 1.0 / (N + 0.5)
        bound = 2.0 / c**2 * (1.0 + a**2 + b**2 + a**2 * b**2) / N**3
        return KernelEval(float(2.0 / c**2 * partial), f"series({N})", float(bound))
    raise InvalidArgumentError(f"Unknown method '{method}', expected 'closed-form' or 'series'")


def zeta_matrix(Ep: np.ndarray, Eq: np.ndarray, T: float) -> np.ndarray:
    """Closed-form zeta on broadcast energy arrays"""
    _check_temperature(T)
    c = 2.0 * np.pi * T
    return 2.0 / c**2 * _matsubara_sum(np.abs(Ep) / c, np.abs(Eq) / c)


def zeta_boundedness(T: float, energies: Sequence[float]) -> float:
    """max over the sweep of (1 + Ep) zeta(Ep, Eq)"""
    E = np.asarray(energies, dtype=float)
    values = (1.0 + E[:, None]) * zeta_matrix(E[:, None], E[None, :], T)
    return float(np.max(values))


def _energy(momentum_norm: np.ndarray, h: float, delta: RadialProfile, mu: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    hp = h * momentum_norm
    kinetic = hp**2 - mu
    # the gap profile is negligible at the grid cutoff; lattice momenta beyond it carry delta = 0
    gap = delta.evaluate(hp, outside="zero")
    return kinetic, gap, np.hypot(kinetic, gap)


def a_tilde_kernels(
    p,
    q,
    h: float,
    W: Potential,
    delta: RadialProfile,
    mu: float,
    T: float,
    dims: int = 3,
    transfer: Optional[np.ndarray] = None,
):
    """
    a11(p, q) = h^2 W^(p - q) [k(hp) + k(hq)] zeta(p, q)
    a12(p, q) = h^2 W^(p - q) [delta(hp) - delta(hq)] zeta(p, q)

    p and q are momentum vectors with a trailing axis of length dims (or scalars in 1D).
    `transfer` replaces |p - q| in W^, e.g. by the minimal-image differences of a lattice.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if dims == 1 and p.ndim == 0:
        p, q = p[None], q[None]
    norm_p = np.linalg.norm(p, axis=-1)
    norm_q = np.linalg.norm(q, axis=-1)
    kp, dp, Ep = _energy(norm_p, h, delta, mu)
    kq, dq, Eq = _energy(norm_q, h, delta, mu)
    if transfer is None:
        transfer = np.linalg.norm(p - q, axis=-1)
    coupling = h**2 * W.fourier(transfer, dims=dims)
    zeta_pq = zeta_matrix(Ep, Eq, T)
    a11 = coupling * (kp + kq) * zeta_pq
    a12 = coupling * (dp - dq) * zeta_pq
    if a11.ndim == 0:
        return float(a11), float(a12)
    return a11, a12


def operator_norm(matrix: np.ndarray, rtol: Optional[float] = None, maxiter: Optional[int] = None, seed: int = 0) -> float:
    """Largest singular value by power iteration on A^H A"""
    rtol = Config.POWER_ITER_RTOL if rtol is None else rtol
    maxiter = Config.POWER_ITER_MAXITER if maxiter is None else maxiter
    if not np.any(matrix):
        return 0.0
    x = make_rng(seed).standard_normal(matrix.shape[1]).astype(matrix.dtype)
    x /= np.linalg.norm(x)
    previous = 1.0
    for _ in range(maxiter):
        x = matrix.conj().T @ (matrix @ x)
        value = np.linalg.norm(x)
        if value == 0.0:
            return 0.0
        if abs(value - previous) / previous < rtol:
            return float(np.sqrt(value))
        previous = value
        x /= value
    raise NumericalError(f"power iteration did not reach rtol={rtol} in {maxiter} steps")


def lattice_kernels(box: BoxGrid, W: Potential, delta: RadialProfile, mu: float, T: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Plane-wave matrix elements of a11 and a12 on the box.

    W^ is taken at the wrapped momentum transfer, so h^2 W enters exactly as in the BdG field block.
    """
    momenta = box.momenta
    a11, a12 = a_tilde_kernels(
        momenta[:, None, :], momenta[None, :, :], box.h, W, delta, mu, T,
        dims=box.dims, transfer=box.wrapped_momentum_differences,
    )
    scale = (2.0 * np.pi) ** (box.dims / 2) / box.L**box.dims
    return scale * a11, scale * a12


def weighted_kernel_matrices(box: BoxGrid, W: Potential, delta: RadialProfile, mu: float, T: float) -> Tuple[np.ndarray, np.ndarray]:
    """(1 + x^2) a (1 + x^2) for both kernels as dense matrices in the position basis"""
    U = box.unitary
    weight = 1.0 + np.sum(box.positions**2, axis=1)

    def to_weighted_position(kernel):
        position = U @ kernel @ U.conj().T
        return weight[:, None] * position * weight[None, :]

    return tuple(to_weighted_position(kernel) for kernel in lattice_kernels(box, W, delta, mu, T))


def weighted_norm_scaling(
    h_list: Sequence[float],
    L: float,
    n: int,
    dims: int,
    W: Potential,
    delta: RadialProfile,
    mu: float,
    T: float,
) -> Dict:
    """
    Fit the weighted operator norms of a11 and a12 against h.

    Returns:
        Dict with per-h norms, exponents 'e11', 'e12' and fit qualities
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise InvalidArgumentError(f"need at least 3 values of h, got {len(h_list)}")
    norms11, norms12 = [], []
    for h in h_list:
        m11, m12 = weighted_kernel_matrices(BoxGrid(L=L, n=n, dims=dims, h=h), W, delta, mu, T)
        norms11.append(operator_norm(m11))
        norms12.append(operator_norm(m12))
        logger.debug(f"h={h}: |a11|={norms11[-1]:.4e}, |a12|={norms12[-1]:.4e}")
    if not (all(norms11) and all(norms12)):
        raise DegenerateFitError("weighted kernel norms vanish; nothing to fit")
    e11, r2_11 = fit_power_law(h_list, norms11)
    e12, r2_12 = fit_power_law(h_list, norms12)
    logger.info(f"weighted kernel exponents: e11={e11:.3f}, e12={e12:.3f}")
    return {
        "h": h_list,
        "a11": norms11,
        "a12": norms12,
        "e11": e11,
        "e12": e12,
        "r2_11": r2_11,
        "r2_12": r2_12,
    }
