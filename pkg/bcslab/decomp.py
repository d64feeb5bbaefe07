"""Cooper-pair decomposition alpha = kappa (psi(x) + psi(y)) / 2 + xi and the Fourier-splitting toolkit.

Pair fields are continuum kernel values alpha(x, y) on the lattice, stored as
M x M matrices in C order. Integrals use the cell volume a^d per position.
The reference kernel kappa(x - y) is the periodic kernel of the symbol
alpha_0^(h|p|), the lattice version of h^(-d) alpha_0((x - y) / h).
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np

from .bdg import reference_pair_symbol
from .foundation import BoxGrid, RadialGrid, RadialProfile
from .tibcs import TiState
from .utils.errors import DegenerateGapError, InvalidArgumentError

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
BAND_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PairField:
    box: BoxGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.box.size, self.box.size):
            raise InvalidArgumentError(f"pair field has shape {values.shape}, box needs {(self.box.size,) * 2}")
        object.__setattr__(self, "values", values)

    @property
    def symmetric(self) -> bool:
        return bool(np.max(np.abs(self.values - self.values.T)) <= SYMMETRY_TOL * max(1.0, np.max(np.abs(self.values))))

    def lattice_array(self) -> np.ndarray:
        """Values with one axis per coordinate: x axes first, then y axes"""
        return self.values.reshape(self.box.shape * 2)

    def l2_norm_sq(self) -> float:
        return float(self.box.cell_volume**2 * np.sum(np.abs(self.values) ** 2))


@dataclass(frozen=True, eq=False)
class OrderField:
    box: BoxGrid
    psi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=complex))

    @property
    def phi(self) -> np.ndarray:
        return np.abs(self.psi) ** 2 - 1.0

    @property
    def eta(self) -> np.ndarray:
        return np.abs(self.psi) - 1.0


@dataclass(frozen=True, eq=False)
class ReferenceKernel:
    """kappa(z) = L^(-d) sum_p symbol(p) exp(i p.z) on the periodic difference lattice"""

    box: BoxGrid
    symbol: np.ndarray

    @cached_property
    def on_differences(self) -> np.ndarray:
        grid_symbol = self.symbol.reshape(self.box.shape)
        return np.real(np.fft.ifftn(grid_symbol)) / self.box.cell_volume

    @cached_property
    def matrix(self) -> np.ndarray:
        """K[x, y] = kappa(x - y)"""
        idx = np.indices(self.box.shape).reshape(self.box.dims, -1)
        diff = (idx[:, :, None] - idx[:, None, :]) % self.box.n
        return self.on_differences[tuple(diff)]

    @cached_property
    def norm_sq_sum(self) -> float:
        """sum_z kappa(z)^2, the lattice form of ||kappa||^2 / a^d"""
        value = float(np.sum(self.on_differences**2))
        if value <= 0.0:
            raise DegenerateGapError("reference pair kernel vanishes; psi is undefined")
        return value

    def l2_norm_sq(self) -> float:
        return self.box.cell_volume * self.norm_sq_sum

    def pair_field(self, psi_x: Optional[np.ndarray] = None, psi_y: Optional[np.ndarray] = None) -> PairField:
        """kappa(x - y) psi_x(x) psi_y(y); missing factors are 1"""
        values = self.matrix.astype(complex)
        if psi_x is not None:
            values = values * psi_x[:, None]
        if psi_y is not None:
            values = values * psi_y[None, :]
        return PairField(self.box, values)


def reference_kernel(symbol: np.ndarray, box: BoxGrid) -> ReferenceKernel:
    symbol = np.asarray(symbol, dtype=float)
    if symbol.shape != (box.size,):
        raise InvalidArgumentError(f"symbol has shape {symbol.shape}, box needs ({box.size},)")
    return ReferenceKernel(box, symbol)


def kernel_from_gap(delta: RadialProfile, mu: float, T: float, box: BoxGrid) -> ReferenceKernel:
    return reference_kernel(reference_pair_symbol(delta, mu, box, T), box)


def _check_box(alpha: PairField, ref: ReferenceKernel):
    if alpha.box is not ref.box and alpha.box.to_dict() != ref.box.to_dict():
        raise InvalidArgumentError("pair field and reference kernel live on different boxes")


def extract_psi(alpha: PairField, ref: ReferenceKernel) -> OrderField:
    """psi(y) = sum_x kappa(x - y) alpha(x, y) / sum_z kappa(z)^2"""
    _check_box(alpha, ref)
    return OrderField(alpha.box, np.einsum("xy,xy->y", ref.matrix, alpha.values) / ref.norm_sq_sum)


def _extract_psi_x(alpha: PairField, ref: ReferenceKernel) -> np.ndarray:
    return np.einsum("xy,xy->x", ref.matrix, alpha.values) / ref.norm_sq_sum


def residual_xi(alpha: PairField, ref: ReferenceKernel, psi: OrderField) -> PairField:
    """xi = alpha - kappa(x - y) (psi(x) + psi(y)) / 2"""
    _check_box(alpha, ref)
    values = alpha.values - ref.matrix * 0.5 * (psi.psi[:, None] + psi.psi[None, :])
    return PairField(alpha.box, values)


def one_sided_residuals(alpha: PairField, ref: ReferenceKernel) -> Tuple[PairField, PairField]:
    """(xi_0, xi_1) from alpha = kappa psi(y) + xi_0 and the mirrored alpha = kappa psi(x) + xi_1"""
    psi_y = extract_psi(alpha, ref).psi
    psi_x = _extract_psi_x(alpha, ref)
    xi0 = alpha.values - ref.matrix * psi_y[None, :]
    xi1 = alpha.values - ref.matrix * psi_x[:, None]
    return PairField(alpha.box, xi0), PairField(alpha.box, xi1)


def _center_of_mass_derivatives(alpha: PairField) -> List[np.ndarray]:
    """(d/dx_j + d/dy_j) alpha for each coordinate j, as M x M matrices"""
    box = alpha.box
    d = box.dims
    array = alpha.lattice_array()
    grads_x = box.gradient(array, axes=range(d))
    grads_y = box.gradient(array, axes=range(d, 2 * d))
    return [(gx + gy).reshape(box.size, box.size) for gx, gy in zip(grads_x, grads_y)]


def com_gradient(alpha: PairField, ref: ReferenceKernel) -> np.ndarray:
    """sum_x kappa(x - y) [(grad_x + grad_y) alpha](x, y) / sum kappa^2, shape (dims, M)"""
    _check_box(alpha, ref)
    return np.stack(
        [np.einsum("xy,xy->y", ref.matrix, g) / ref.norm_sq_sum for g in _center_of_mass_derivatives(alpha)]
    )


def field_gradient(values: np.ndarray, box: BoxGrid) -> np.ndarray:
    """Spectral gradient of a field on the box, shape (dims, M)"""
    grads = box.gradient(values.reshape(box.shape), axes=range(box.dims))
    return np.stack([g.reshape(box.size) for g in grads])


def field_l2_sq(values: np.ndarray, box: BoxGrid) -> float:
    return float(box.cell_volume * np.sum(np.abs(values) ** 2))


def gradient_bound_gap(alpha: PairField, ref: ReferenceKernel) -> float:
    """||(grad_x + grad_y) alpha||^2 / ||kappa||^2 - ||grad psi||^2, nonnegative by Cauchy-Schwarz"""
    box = alpha.box
    rhs = sum(box.cell_volume**2 * np.sum(np.abs(g) ** 2) for g in _center_of_mass_derivatives(alpha))
    rhs /= ref.l2_norm_sq()
    lhs = field_l2_sq(com_gradient(alpha, ref), box)
    return float(rhs - lhs)


def h1_norm_sq(field: PairField, h: float) -> float:
    """||f||^2 + ||h grad_x f||^2 + ||h grad_y f||^2 by Parseval"""
    box = field.box
    spectrum = np.fft.fftn(field.lattice_array())
    k = box.axis_momenta.copy()
    k[box.n // 2] = 0.0
    k2 = np.zeros(box.shape * 2)
    for axis in range(2 * box.dims):
        shape = [1] * (2 * box.dims)
        shape[axis] = box.n
        k2 = k2 + (k**2).reshape(shape)
    total = np.sum(np.abs(spectrum) ** 2 * (1.0 + h**2 * k2)) / spectrum.size
    return float(box.cell_volume**2 * total)


# Fourier splitting. eta^(p) = (2 pi)^(-d/2) a^d sum_x eta(x) exp(-i p.x), measure (2 pi / L)^d.

def box_fourier(values: np.ndarray, box: BoxGrid) -> np.ndarray:
    spectrum = np.fft.fftn(np.asarray(values).reshape(box.shape)).reshape(box.size)
    return (2.0 * np.pi) ** (-box.dims / 2) * box.cell_volume * spectrum


def fourier_split(eta: np.ndarray, s: float, box: BoxGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Sharp split eta = eta_1 + eta_2 with eta_1 carrying the modes |p| <= s"""
    if not s > 0:
        raise InvalidArgumentError(f"s must be positive, got {s}")
    eta = np.asarray(eta)
    mask = (box.momentum_norms <= s).reshape(box.shape)
    low = np.fft.ifftn(np.fft.fftn(eta.reshape(box.shape)) * mask).reshape(box.size)
    if np.isrealobj(eta):
        low = low.real
    return low, eta - low


def _lp_norm(values: np.ndarray, box: BoxGrid, p: float) -> float:
    return float((box.cell_volume * np.sum(np.abs(values) ** p)) ** (1.0 / p))


def split_bounds_report(psi: OrderField, s: float) -> Dict:
    """
    Measured norms of the split of eta = |psi| - 1 against their explicit-constant bounds.

    Bounds: ||eta1^||_1 <= m |eta^(0)| + ||1/|p| ||_{L2(B_s \\ 0)} ||p eta^||,
    ||eta2^||_2 <= ||p eta^|| / s, ||eta2||_4 <= ||eta2||_2^(1/4) ||eta2||_6^(3/4).
    """
    box = psi.box
    eta = psi.eta
    eta1, eta2 = fourier_split(eta, s, box)
    measure = box.lattice_measure
    spectrum = box_fourier(eta, box)
    norms = box.momentum_norms
    inside = norms <= s
    punctured = inside & (norms > 0)

    p_eta = float(np.sqrt(measure * np.sum(norms**2 * np.abs(spectrum) ** 2)))
    inv_p = float(np.sqrt(measure * np.sum(1.0 / norms[punctured] ** 2))) if punctured.any() else 0.0
    l1_low = float(measure * np.sum(np.abs(spectrum[inside])))
    l1_bound = float(measure * np.sum(np.abs(spectrum[norms == 0])) + inv_p * p_eta)
    l2_high = _lp_norm(eta2, box, 2)
    l2_bound = p_eta / s
    l6_high = _lp_norm(eta2, box, 6)
    l4_high = _lp_norm(eta2, box, 4)
    l4_bound = l2_high**0.25 * l6_high**0.75
    grad_psi = float(np.sqrt(field_l2_sq(field_gradient(psi.psi, box), box)))

    slack = min(l1_bound - l1_low, l2_bound - l2_high, l4_bound - l4_high)
    return {
        "s": s,
        "l1_low": l1_low,
        "l2_high": l2_high,
        "l4_high": l4_high,
        "l6_high": l6_high,
        "bounds": {"l1_low": l1_bound, "l2_high": l2_bound, "l4_high": l4_bound},
        "inverse_momentum_norm": inv_p,
        "continuum_inverse_momentum_norm": float(np.sqrt(4.0 * np.pi * s)) if box.dims == 3 else None,
        "grad_eta": p_eta,
        "grad_psi": grad_psi,
        "min_slack": float(slack),
    }


def phi_tail_gap(psi: OrderField, r: float) -> Dict:
    """
    Explicit bounds on ||Phi^||_{L2(|p| > r)} for Phi = |psi|^2 - 1 = eta^2 + 2 eta, with s = r/2.

    Phi^ restricted to |p| > r only sees 2 eta1 eta2 + eta2^2 + 2 eta2, so the tail is at most
    2 (2 pi)^(-d/2) ||eta1^||_1 ||eta2||_2 + ||eta2||_4^2 + 2 ||eta2||_2 (the intermediate bound).

    With G = ||p eta^||, Cauchy-Schwarz and Parseval turn that into a G^2 + b G, where
    a = (2 pi)^(-d/2) (2 I_in + I_out) / s, b = (2 (2 pi)^(-d/2) m |eta^(0)| + 2) / s and
    I_in, I_out are the lattice norms of 1/|p| on 0 < |p| <= s and |p| > s.
    The gradient form is C (s^(-1/2) ||grad psi||^2 + s^(-1) ||grad psi||) with
    C = max(a s^(1/2) k^2, b s k) and k = max(1, G / ||grad psi||); k = 1 in the continuum.
    """
    box = psi.box
    if not 0 < r < box.nyquist:
        raise InvalidArgumentError(f"r must lie in (0, {box.nyquist:.6g}) below the Nyquist momentum, got {r}")
    s = 0.5 * r
    measure = box.lattice_measure
    prefactor = (2.0 * np.pi) ** (-box.dims / 2)
    eta = psi.eta
    eta1, eta2 = fourier_split(eta, s, box)
    spectrum1 = box_fourier(eta1, box)
    l1_low = float(measure * np.sum(np.abs(spectrum1)))
    l2_high = _lp_norm(eta2, box, 2)
    l4_high = _lp_norm(eta2, box, 4)

    phi_hat = box_fourier(psi.phi, box)
    norms = box.momentum_norms
    tail = float(np.sqrt(measure * np.sum(np.abs(phi_hat[norms > r]) ** 2)))
    bound = float(2.0 * prefactor * l1_low * l2_high + l4_high**2 + 2.0 * l2_high)

    spectrum = box_fourier(eta, box)
    grad_eta = float(np.sqrt(measure * np.sum(norms**2 * np.abs(spectrum) ** 2)))
    inner = (norms > 0) & (norms <= s)
    inv_inner = float(np.sqrt(measure * np.sum(1.0 / norms[inner] ** 2))) if inner.any() else 0.0
    inv_outer = float(np.sqrt(measure * np.sum(1.0 / norms[norms > s] ** 2)))
    mean_mode = float(measure * np.sum(np.abs(spectrum[norms == 0])))
    quadratic = prefactor * (2.0 * inv_inner + inv_outer) / s
    linear = (2.0 * prefactor * mean_mode + 2.0) / s

    grad_psi = float(np.sqrt(field_l2_sq(field_gradient(psi.psi, box), box)))
    ratio = max(1.0, grad_eta / grad_psi) if grad_psi > 0 else 1.0
    constant = float(max(quadratic * np.sqrt(s) * ratio**2, linear * s * ratio))
    gradient_form = float(s**-0.5 * grad_psi**2 + grad_psi / s)
    gradient_bound = constant * gradient_form
    logger.debug(
        f"Phi tail at r={r:.4g}: tail={tail:.4e}, intermediate={bound:.4e}, "
        f"C={constant:.4e} (a={quadratic:.4e}, b={linear:.4e}, k={ratio:.4f}), gradient bound={gradient_bound:.4e}"
    )
    return {
        "r": r,
        "s": s,
        "tail": tail,
        "bound": bound,
        "intermediate_gap": float(bound - tail),
        "constant": constant,
        "diamagnetic_ratio": float(ratio),
        "gradient_form": gradient_form,
        "gradient_bound": float(gradient_bound),
        "gap": float(gradient_bound - tail),
    }


def quartic_overlap(phi_low: np.ndarray, ref: ReferenceKernel, r: float) -> Dict:
    """
    Tr[(K Phi K)^2] for the pair operator K (kernel kappa) and a band-limited Phi, two ways.

    Returns:
        Dict with 'trace', 'fourier', 'lower_bound' and the relative 'defect' between the paths
    """
    box = ref.box
    phi_low = np.asarray(phi_low, dtype=float)
    spectrum = np.fft.fftn(phi_low.reshape(box.shape)).reshape(box.size)
    outside = box.momentum_norms > r
    if np.any(np.abs(spectrum[outside]) > BAND_TOL * max(1.0, np.max(np.abs(spectrum)))):
        raise InvalidArgumentError(f"Phi is not band-limited to |p| <= {r}")

    operator = box.cell_volume * ref.matrix
    sandwich = operator @ (phi_low[:, None] * operator)
    trace = float(np.real(np.sum(sandwich * sandwich.T)))

    s2 = (ref.symbol**2).reshape(box.shape)
    overlap = np.real(np.fft.ifftn(np.abs(np.fft.fftn(s2)) ** 2)).reshape(box.size)
    weights = np.abs(spectrum) ** 2 / box.size**2
    fourier = float(np.sum(weights * overlap))
    inside = ~outside
    lower = float(np.min(overlap[inside]) * np.sum(weights[inside]))
    scale = max(abs(trace), abs(fourier), np.finfo(float).tiny)
    return {
        "trace": trace,
        "fourier": fourier,
        "lower_bound": lower,
        "overlap_at_zero": float(overlap[0]),
        "defect": abs(trace - fourier) / scale,
    }


def pair_overlap_at_zero(state: TiState, grid: RadialGrid) -> float:
    """(alpha^2 * alpha^2)(0) = int alpha_0^4 dp"""
    return grid.integrate(state.alpha.values**4)


def _band_mask(box: BoxGrid, max_index: int) -> np.ndarray:
    freq = np.abs(np.fft.fftfreq(box.n, d=1.0 / box.n))
    axis_ok = freq <= max_index
    mask = axis_ok
    for _ in range(box.dims - 1):
        mask = np.multiply.outer(mask, axis_ok)
    return mask


def random_smooth_field(box: BoxGrid, rng: np.random.Generator, max_index: Optional[int] = None, real: bool = False) -> np.ndarray:
    """Random trigonometric field with mode indices |k_j| <= max_index (default n/4)"""
    max_index = box.n // 4 if max_index is None else max_index
    coeffs = rng.standard_normal(box.shape) + 1j * rng.standard_normal(box.shape)
    values = np.fft.ifftn(coeffs * _band_mask(box, max_index)).reshape(box.size)
    values *= np.sqrt(box.size)
    return values.real if real else values


def random_smooth_pair(box: BoxGrid, rng: np.random.Generator, max_index: Optional[int] = None) -> PairField:
    """Random symmetric pair field band-limited in both slots"""
    max_index = box.n // 4 if max_index is None else max_index
    shape = box.shape * 2
    coeffs = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = np.multiply.outer(_band_mask(box, max_index), _band_mask(box, max_index))
    values = np.fft.ifftn(coeffs * mask).reshape(box.size, box.size) * box.size
    return PairField(box, 0.5 * (values + values.T))


PAIR_FILE_HEADER = np.dtype([("dims", "<i4"), ("n", "<i4"), ("h", "<f8")])


def read_pair_field(path: str, L: float) -> PairField:
    """Pair field from a file: header (int32 dims, int32 n, float64 h), then complex64 values row-major"""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size < PAIR_FILE_HEADER.itemsize:
        raise InvalidArgumentError(f"{path} is too short for a pair-field header")
    header = raw[: PAIR_FILE_HEADER.itemsize].view(PAIR_FILE_HEADER)[0]
    box = BoxGrid(L=L, n=int(header["n"]), dims=int(header["dims"]), h=float(header["h"]))
    body = raw[PAIR_FILE_HEADER.itemsize :]
    expected = box.size**2 * np.dtype("<c8").itemsize
    if body.size != expected:
        raise InvalidArgumentError(f"{path} holds {body.size} value bytes, dims={box.dims}, n={box.n} needs {expected}")
    values = body.view("<c8").reshape(box.size, box.size)
    return PairField(box, values.astype(complex))


def write_pair_field(path: str, field: PairField):
    header = np.array([(field.box.dims, field.box.n, field.box.h)], dtype=PAIR_FILE_HEADER)
    with open(path, "wb") as fout:
        fout.write(header.tobytes())
        fout.write(field.values.astype("<c8").tobytes())
