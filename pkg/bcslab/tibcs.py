"""Translation-invariant BCS theory on a radial momentum grid.

Dispersion k(p) = p^2 - mu, quasiparticle energy E(p), the multiplier
K_T(E) = E / tanh(E / 2T), the critical temperature, the gap equation and the
translation-invariant free energy. Gap functions are s-wave (radial).
"""

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import bisect
from scipy.special import entr

from .foundation import (
    FOURIER_PREFACTOR,
    Potential,
    RadialGrid,
    RadialProfile,
    build_radial_grid,
    fit_power_law,
    radial_convolution,
    radial_fourier_transform,
)
from .utils.config import Config
from .utils.errors import (
    BracketError,
    DegenerateFitError,
    InternalError,
    InvalidArgumentError,
    InvalidStateError,
    NumericalError,
)

logger = logging.getLogger(__name__)

DEFAULT_BRACKET = (1e-3, 5.0)
STATE_TOL = 1e-12


def _check_temperature(T: float):
    if not T > 0 or not np.isfinite(T):
        raise InvalidArgumentError(f"Temperature must be positive, got {T}")


def _scalar_or_array(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def dispersion(p, mu: float):
    return _scalar_or_array(np.asarray(p, dtype=float) ** 2 - mu)


def quasiparticle_energy(p, mu: float, delta_at_p):
    return _scalar_or_array(np.hypot(np.asarray(p, dtype=float) ** 2 - mu, delta_at_p))


def kt_multiplier(E, T: float):
    """E / tanh(E / 2T), equal to 2T at E = 0 and never below it"""
    _check_temperature(T)
    E = np.abs(np.asarray(E, dtype=float))
    x = E / (2.0 * T)
    small = x < Config.SERIES_SWITCH
    safe = np.where(small, 1.0, x)
    series = 2.0 * T * (1.0 + x**2 / 3.0 - x**4 / 45.0)
    return _scalar_or_array(np.where(small, series, E / np.tanh(safe)))


@lru_cache(maxsize=16)
def s_wave_kernel(V: Potential, grid: RadialGrid) -> np.ndarray:
    """Angular averages of V^ between all node pairs (read-only)"""
    avg = V.angular_average(grid.nodes[:, None], grid.nodes[None, :])
    defect = np.max(np.abs(avg - avg.T)) if avg.size else 0.0
    if defect > 1e-12 * max(1.0, np.max(np.abs(avg))):
        raise InternalError(f"s-wave kernel is not symmetric (defect {defect:.3e})")
    avg.setflags(write=False)
    return avg


def convolution_matrix(V: Potential, grid: RadialGrid) -> np.ndarray:
    """C with (C f)_i = (2 pi)^(-3/2) (V^ * f)(p_i) for radial f sampled on the grid"""
    return FOURIER_PREFACTOR * s_wave_kernel(V, grid) * grid.weights[None, :]


def _ktv_ground_state(T: float, V: Potential, mu: float, grid: RadialGrid) -> Tuple[float, np.ndarray]:
    _check_temperature(T)
    k = grid.nodes**2 - mu
    root_w = np.sqrt(grid.weights)
    matrix = FOURIER_PREFACTOR * root_w[:, None] * s_wave_kernel(V, grid) * root_w[None, :]
    matrix[np.diag_indices_from(matrix)] += kt_multiplier(k, T)
    eigvals, eigvecs = np.linalg.eigh(matrix)
    return float(eigvals[0]), eigvecs[:, 0] / root_w


def lowest_eigenvalue_ktv(T: float, V: Potential, mu: float, grid: RadialGrid) -> float:
    """Bottom of the spectrum of K_T^0 + V in the s-wave sector"""
    return _ktv_ground_state(T, V, mu, grid)[0]


def critical_temperature(
    V: Potential,
    mu: float,
    grid: RadialGrid,
    bracket: Tuple[float, float] = DEFAULT_BRACKET,
    tol: Optional[float] = None,
) -> float:
    """
    Locate Tc as the sign change of the lowest eigenvalue of K_T^0 + V.

    Args:
        V: Pair potential
        mu: Chemical potential
        grid: Radial momentum grid
        bracket: (Tlo, Thi) with a negative eigenvalue at Tlo and a positive one at Thi
        tol: Bisection tolerance (absolute plus relative)

    Returns:
        Critical temperature
    """
    tol = Config.TC_TOL if tol is None else tol
    t_lo, t_hi = bracket
    if not 0 < t_lo < t_hi:
        raise InvalidArgumentError(f"bracket must satisfy 0 < Tlo < Thi, got {bracket}")

    def f(T):
        return lowest_eigenvalue_ktv(T, V, mu, grid)

    f_lo, f_hi = f(t_lo), f(t_hi)
    if not (f_lo < 0 < f_hi):
        raise BracketError(
            f"No sign change of the lowest eigenvalue on [{t_lo}, {t_hi}]: {f_lo:.6e}, {f_hi:.6e}"
        )
    Tc = bisect(f, t_lo, t_hi, xtol=tol, rtol=max(tol, 4 * np.finfo(float).eps))
    logger.info(f"Tc = {Tc:.10g} for {V.kind} potential at mu={mu}")
    return float(Tc)


@dataclass(frozen=True, eq=False)
class TiState:
    """Translation-invariant state (gamma^, alpha^) on a radial grid"""

    gamma: RadialProfile
    alpha: RadialProfile
    T: float
    mu: float

    def block_eigenvalues(self) -> Tuple[np.ndarray, np.ndarray]:
        """Eigenvalues of the 2x2 matrix [[g, a], [a, 1-g]] per node; they sum to one"""
        radius = np.hypot(self.gamma.values - 0.5, self.alpha.values)
        return 0.5 + radius, 0.5 - radius

    def constraint_defect(self) -> np.ndarray:
        """gamma (1 - gamma) - alpha^2, nonnegative for admissible states"""
        g = self.gamma.values
        return g * (1.0 - g) - self.alpha.values**2

    def check(self, tol: float = STATE_TOL):
        upper, lower = self.block_eigenvalues()
        if np.any(lower < -tol) or np.any(upper > 1.0 + tol):
            raise InvalidStateError(
                f"state eigenvalues leave [0, 1]: min {lower.min():.3e}, max {upper.max():.3e}"
            )


@dataclass
class GapSolution:
    """Solution of the gap equation"""

    delta: RadialProfile
    T: float
    Tc: Optional[float]
    residual: float
    iterations: int
    converged: bool
    tol: float
    trace: List[float] = field(default_factory=list)

    @property
    def is_normal(self) -> bool:
        return not np.any(self.delta.values)

    def to_dict(self) -> Dict:
        return {
            "T": self.T,
            "Tc": self.Tc,
            "residual": self.residual,
            "tol": self.tol,
            "iterations": self.iterations,
            "converged": self.converged,
            "nodes": self.delta.grid.nodes.tolist(),
            "delta": self.delta.values.tolist(),
        }

    def write_json(self, path: str):
        with open(path, "w", encoding="utf-8") as fout:
            json.dump(self.to_dict(), fout, sort_keys=True, indent=2)

    def write_csv(self, path: str, mu: float):
        """Plot-ready profile dump with columns p, delta, gamma, alpha"""
        state = state_from_delta(self.delta, self.T, mu)
        with open(path, "w", newline="", encoding="utf-8") as fout:
            writer = csv.writer(fout)
            writer.writerow(["p", "delta", "gamma", "alpha"])
            for row in zip(self.delta.grid.nodes, self.delta.values, state.gamma.values, state.alpha.values):
                writer.writerow([repr(float(v)) for v in row])


def gap_map(delta: np.ndarray, T: float, V: Potential, mu: float, grid: RadialGrid) -> np.ndarray:
    """G(delta)(p) = -(2 pi)^(-3/2) int V^(p - q) delta(q) / K_T(E(q)) dq"""
    k = grid.nodes**2 - mu
    multiplier = kt_multiplier(np.hypot(k, delta), T)
    return -convolution_matrix(V, grid) @ (delta / multiplier)


def iterate_gap_map(
    step: Callable[[np.ndarray], np.ndarray],
    init: np.ndarray,
    damping: float,
    tol: float,
    maxiter: int,
    anderson: bool = False,
    window: Optional[int] = None,
) -> Tuple[np.ndarray, float, int, bool, List[float]]:
    """
    Damped fixed-point iteration x <- (1 - damping) x + damping G(x), optionally Anderson-mixed.

    Returns:
        (x, residual, iterations, converged, residual trace), where residual = max|x - G(x)|
        is measured at the returned x
    """
    window = Config.ANDERSON_WINDOW if window is None else window
    x = np.array(init, dtype=float)
    trace: List[float] = []
    xs, fs = [], []
    residual = np.inf

    for iteration in range(1, maxiter + 1):
        gx = step(x)
        if not np.all(np.isfinite(gx)):
            raise NumericalError(f"non-finite values in the fixed-point map at iteration {iteration}")
        f = gx - x
        residual = float(np.max(np.abs(f))) if f.size else 0.0
        trace.append(residual)
        if residual <= tol:
            return x, residual, iteration, True, trace

        x_next = x + damping * f
        if anderson and window > 0:
            xs.append(x.copy())
            fs.append(f.copy())
            del xs[:-(window + 1)], fs[:-(window + 1)]
            if len(fs) > 1:
                dX = np.diff(np.array(xs), axis=0).T
                dF = np.diff(np.array(fs), axis=0).T
                if np.linalg.cond(dF) < 1e10:
                    coeffs = np.linalg.lstsq(dF, f, rcond=None)[0]
                    x_next = x + damping * f - (dX + damping * dF) @ coeffs
        x = x_next

    logger.warning(f"Fixed-point iteration stopped after {maxiter} steps, residual {residual:.3e}")
    return x, residual, maxiter, False, trace


def _fix_phase(delta: np.ndarray) -> np.ndarray:
    if not np.any(delta):
        return delta
    pivot = int(np.argmax(np.abs(delta)))
    return -delta if delta[pivot] < 0 else delta


def _auto_init(T: float, Tc: float, V: Potential, mu: float, grid: RadialGrid) -> np.ndarray:
    """Linearized profile K_Tc v from the Tc ground state, scaled like sqrt(Tc - T)"""
    _, vector = _ktv_ground_state(Tc, V, mu, grid)
    shape = -kt_multiplier(grid.nodes**2 - mu, Tc) * vector
    shape = _fix_phase(shape / np.max(np.abs(shape)))
    amplitude = 3.0 * np.sqrt(max(Tc * (Tc - T), 0.0)) or 0.1 * Tc
    return amplitude * shape


def solve_gap(
    T: float,
    V: Potential,
    mu: float,
    grid: RadialGrid,
    init: Union[str, RadialProfile, np.ndarray] = "auto",
    damping: Optional[float] = None,
    tol: Optional[float] = None,
    maxiter: Optional[int] = None,
    anderson: bool = False,
    Tc: Optional[float] = None,
) -> GapSolution:
    """
    Solve the gap equation by damped iteration of the gap map.

    Args:
        T: Temperature
        V: Pair potential
        mu: Chemical potential
        grid: Radial momentum grid
        init: 'auto' (linearized profile), 'constant', or an explicit profile
        damping: Mixing weight of the new iterate, in (0, 1]
        tol: Sup-norm residual tolerance
        maxiter: Iteration cap; exceeding it returns converged=False
        anderson: Enable Anderson mixing
        Tc: Critical temperature if already known

    Returns:
        GapSolution with the phase fixed so that delta is positive where |delta| peaks
    """
    _check_temperature(T)
    damping = Config.DAMPING if damping is None else damping
    tol = Config.GAP_TOL if tol is None else tol
    maxiter = Config.MAXITER if maxiter is None else maxiter
    if not 0 < damping <= 1:
        raise InvalidArgumentError(f"damping must lie in (0, 1], got {damping}")
    if not tol > 0:
        raise InvalidArgumentError(f"tol must be positive, got {tol}")

    zero = RadialProfile(grid, np.zeros(grid.count))
    if V.is_zero or lowest_eigenvalue_ktv(T, V, mu, grid) >= 0:
        logger.info(f"T={T:.6g} is in the normal phase, delta = 0")
        if Tc is None and not V.is_zero and T > DEFAULT_BRACKET[0]:
            try:
                Tc = critical_temperature(V, mu, grid, bracket=(DEFAULT_BRACKET[0], T))
            except BracketError:
                logger.debug(f"no pairing instability on [{DEFAULT_BRACKET[0]}, {T:.6g}], Tc left unset")
        return GapSolution(zero, T, Tc, 0.0, 1, True, tol, [0.0])

    if Tc is None:
        Tc = critical_temperature(V, mu, grid, bracket=(T, max(DEFAULT_BRACKET[1], 2.0 * T)))

    if isinstance(init, RadialProfile):
        x0 = init.values
    elif isinstance(init, str):
        if init == "auto":
            x0 = _auto_init(T, Tc, V, mu, grid)
        elif init == "constant":
            x0 = np.full(grid.count, np.sqrt(max(Tc * (Tc - T), Tc**2)))
        else:
            raise InvalidArgumentError(f"Unknown init '{init}', expected 'auto' or 'constant'")
    else:
        x0 = np.asarray(init, dtype=float)
        if x0.shape != (grid.count,):
            raise InvalidArgumentError(f"init has shape {x0.shape}, expected ({grid.count},)")

    delta, residual, iterations, converged, trace = iterate_gap_map(
        lambda d: gap_map(d, T, V, mu, grid), x0, damping, tol, maxiter, anderson=anderson
    )
    delta = _fix_phase(delta)
    logger.debug(f"gap solve at T={T:.6g}: {iterations} iterations, residual {residual:.3e}")
    return GapSolution(RadialProfile(grid, delta), T, Tc, residual, iterations, converged, tol, trace)


def state_from_delta(delta: RadialProfile, T: float, mu: float) -> TiState:
    """Gibbs state of the 2x2 BdG symbol with eigenvalues +-E(p)"""
    _check_temperature(T)
    k = delta.grid.nodes**2 - mu
    multiplier = kt_multiplier(np.hypot(k, delta.values), T)
    gamma = 0.5 * (1.0 - k / multiplier)
    alpha = -delta.values / (2.0 * multiplier)
    return TiState(delta.with_values(gamma), delta.with_values(alpha), T, mu)


def _position_grid(V: Potential, count: int) -> RadialGrid:
    return build_radial_grid(V.support_radius(), count)


def ti_free_energy_terms(state: TiState, T: float, V: Potential, mu: float, grid: RadialGrid) -> Dict[str, float]:
    """Kinetic, interaction and entropy contributions of the translation-invariant functional"""
    _check_temperature(T)
    state.check()
    k = grid.nodes**2 - mu
    kinetic = grid.integrate(k * state.gamma.values)

    interaction = 0.0
    if not V.is_zero and np.any(state.alpha.values):
        rgrid = _position_grid(V, max(64, grid.count // 2))
        alpha_x = radial_fourier_transform(state.alpha.values, grid, rgrid.nodes)
        interaction = rgrid.integrate(V.real_space(rgrid.nodes) * alpha_x**2)

    upper, lower = state.block_eigenvalues()
    upper, lower = np.clip(upper, 0.0, 1.0), np.clip(lower, 0.0, 1.0)
    entropy = grid.integrate(entr(upper) + entr(lower))
    return {
        "kinetic": float(kinetic),
        "interaction": float(interaction),
        "entropy": float(entropy),
        "total": float(kinetic + interaction - T * entropy),
    }


def ti_free_energy(state: TiState, T: float, V: Potential, mu: float, grid: RadialGrid) -> float:
    return ti_free_energy_terms(state, T, V, mu, grid)["total"]


def normal_state_free_energy(T: float, mu: float, grid: RadialGrid) -> float:
    """-T int ln(1 + exp(-k(p)/T)) dp, the free Fermi gas"""
    _check_temperature(T)
    k = grid.nodes**2 - mu
    return float(-T * grid.integrate(np.logaddexp(0.0, -k / T)))


def pair_l2_norm(solution: GapSolution, mu: float) -> float:
    """||alpha_0||_2 by Plancherel"""
    return state_from_delta(solution.delta, solution.T, mu).alpha.l2_norm()


def order_parameter_scaling(
    V: Potential,
    mu: float,
    grid: RadialGrid,
    T_list: Sequence[float],
    Tc: Optional[float] = None,
    anderson: bool = True,
    tol: Optional[float] = None,
) -> Dict:
    """
    Fit log ||alpha_0|| against log(Tc - T).

    Returns:
        Dict with 'exponent', 'r2', 'Tc', 'T' and 'norms'
    """
    T_list = [float(T) for T in T_list]
    if len(T_list) < 3:
        raise InvalidArgumentError(f"the fit needs at least 3 temperatures, got {len(T_list)}")
    if Tc is None:
        Tc = critical_temperature(V, mu, grid)

    def solve(T):
        return solve_gap(T, V, mu, grid, anderson=anderson, tol=tol, Tc=Tc)

    with ThreadPoolExecutor(max_workers=Config.THREADS) as executor:
        solutions = list(executor.map(solve, T_list))

    for sol in solutions:
        if not sol.converged:
            raise NumericalError(f"gap solve did not converge at T={sol.T:.6g} (residual {sol.residual:.3e})")
    norms = [pair_l2_norm(sol, mu) for sol in solutions]
    if any(norm == 0.0 for norm in norms):
        raise DegenerateFitError("pair norm vanishes at some temperature; no power law to fit")

    exponent, r2 = fit_power_law([Tc - T for T in T_list], norms)
    logger.info(f"||alpha_0|| ~ (Tc - T)^{exponent:.4f} (r2={r2:.6f})")
    return {"exponent": exponent, "r2": r2, "Tc": Tc, "T": T_list, "norms": norms}


def spectral_decay_moments(state: TiState, grid: RadialGrid, orders: Iterable[int] = range(5)) -> Dict[int, float]:
    """||p^m alpha^||_2 for each order m"""
    return {
        int(m): float(np.sqrt(grid.integrate(grid.nodes ** (2 * m) * state.alpha.values**2)))
        for m in orders
    }


def gap_equation_defect(solution: GapSolution, V: Potential, mu: float) -> float:
    """max_p |delta(p) - 2 (2 pi)^(-3/2) (V^ * alpha^)(p)| with an independent inner quadrature"""
    state = state_from_delta(solution.delta, solution.T, mu)
    grid = solution.delta.grid
    recomputed = np.array(
        [2.0 * radial_convolution(V.fourier, state.alpha, float(p)) for p in grid.nodes]
    )
    return float(np.max(np.abs(recomputed - solution.delta.values)))
