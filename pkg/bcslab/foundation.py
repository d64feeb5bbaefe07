"""Grids, quadrature, Fourier conventions and model potentials.

All transforms are unitary, f^(p) = (2 pi)^(-3/2) * int f(x) exp(-i p.x) dx, so the
convolution theorem reads (f g)^ = (2 pi)^(-3/2) f^ * g^.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.interpolate import BarycentricInterpolator, CubicSpline
from scipy.special import roots_legendre, spherical_jn

from .utils.errors import ExtrapolationError, InvalidArgumentError

logger = logging.getLogger(__name__)

FOURIER_PREFACTOR = (2.0 * np.pi) ** -1.5
RULES = ("gauss-legendre", "gauss-legendre-graded")
PANEL_ORDER = 16
INNER_ORDER = 64
GRADED_LEVELS = 4


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Composite Gauss-Legendre nodes on (0, pmax).

    `weights` integrate radial functions over R^3, i.e. they already contain the
    4 pi p^2 angular factor: sum(weights * f(nodes)) ~ int f(|p|) d^3p.
    """

    nodes: np.ndarray
    weights: np.ndarray
    pmax: float
    rule: str
    panel_edges: np.ndarray
    panel_counts: np.ndarray

    @property
    def count(self) -> int:
        return int(self.nodes.size)

    @cached_property
    def line_weights(self) -> np.ndarray:
        """Plain dp weights on [0, pmax]"""
        return self.weights / (4.0 * np.pi * self.nodes**2)

    @cached_property
    def panel_slices(self) -> List[slice]:
        offsets = np.concatenate(([0], np.cumsum(self.panel_counts)))
        return [slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]

    def panel_index(self, s: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.panel_edges, s, side="right") - 1
        return np.clip(idx, 0, len(self.panel_counts) - 1)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def same_as(self, other: "RadialGrid") -> bool:
        return self is other or (
            self.count == other.count
            and self.pmax == other.pmax
            and np.array_equal(self.nodes, other.nodes)
        )

    def to_dict(self) -> Dict:
        return {"pmax": self.pmax, "count": self.count, "rule": self.rule}


def _panel_edges(pmax: float, count: int, rule: str, center: Optional[float]) -> np.ndarray:
    n_uniform = max(1, int(round(count / PANEL_ORDER)))
    edges = np.linspace(0.0, pmax, n_uniform + 1)
    if rule == "gauss-legendre":
        return edges
    if center is None or not 0.0 < center < pmax:
        raise InvalidArgumentError(
            f"rule 'gauss-legendre-graded' needs a breakpoint inside (0, {pmax}), got {center}"
        )
    offsets = 0.25 * center * 0.5 ** np.arange(GRADED_LEVELS)
    extra = np.concatenate(([center], center - offsets, center + offsets))
    extra = extra[(extra > 0.0) & (extra < pmax)]
    edges = np.unique(np.concatenate((edges, extra)))
    if count < 4 * (len(edges) - 1):
        raise InvalidArgumentError(
            f"count={count} is too small for {len(edges) - 1} graded panels, need >= {4 * (len(edges) - 1)}"
        )
    return edges


def build_radial_grid(
    pmax: float,
    count: int,
    rule: str = "gauss-legendre",
    center: Optional[float] = None,
) -> RadialGrid:
    """
    Build a composite Gauss-Legendre radial grid.

    Args:
        pmax: Right end of the quadrature interval
        count: Total number of nodes, at least 8
        rule: 'gauss-legendre' (uniform panels) or 'gauss-legendre-graded'
        center: Breakpoint the graded rule refines around (e.g. the Fermi momentum)

    Returns:
        RadialGrid whose weights integrate over R^3
    """
    if not np.isfinite(pmax) or pmax <= 0:
        raise InvalidArgumentError(f"pmax must be a positive number, got {pmax}")
    if int(count) != count or count < 8:
        raise InvalidArgumentError(f"count must be an integer >= 8, got {count}")
    if rule not in RULES:
        raise InvalidArgumentError(f"Unknown quadrature rule '{rule}'. Known rules: {RULES}")
    count = int(count)

    edges = _panel_edges(float(pmax), count, rule, center)
    n_panels = len(edges) - 1
    counts = np.full(n_panels, count // n_panels, dtype=int)
    counts[: count % n_panels] += 1

    nodes, line_weights = [], []
    for (a, b), m in zip(zip(edges[:-1], edges[1:]), counts):
        x, w = roots_legendre(int(m))
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        line_weights.append(0.5 * (b - a) * w)
    nodes = np.concatenate(nodes)
    weights = 4.0 * np.pi * nodes**2 * np.concatenate(line_weights)

    return RadialGrid(
        nodes=nodes,
        weights=weights,
        pmax=float(pmax),
        rule=rule,
        panel_edges=edges,
        panel_counts=counts,
    )


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Radial function sampled on the nodes of a RadialGrid"""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.nodes.shape:
            raise InvalidArgumentError(
                f"Profile has shape {values.shape}, grid has {self.grid.nodes.shape}"
            )
        object.__setattr__(self, "values", values)

    @cached_property
    def _interpolators(self) -> List[BarycentricInterpolator]:
        return [
            BarycentricInterpolator(self.grid.nodes[sl], self.values[sl])
            for sl in self.grid.panel_slices
        ]

    def evaluate(self, s, outside: str = "raise"):
        """
        Evaluate between nodes with per-panel Lagrange interpolation.

        Args:
            s: Momentum magnitude(s)
            outside: 'raise' for ExtrapolationError above pmax, 'zero' to return 0 there
        """
        s_arr = np.asarray(s, dtype=float)
        flat = np.abs(s_arr.ravel())
        beyond = flat > self.grid.pmax * (1.0 + 1e-12)
        if beyond.any() and outside == "raise":
            raise ExtrapolationError(
                f"Profile evaluated at {flat[beyond].max():.6g} beyond pmax={self.grid.pmax}"
            )
        out = np.zeros_like(flat)
        inside = ~beyond
        idx = self.grid.panel_index(flat)
        for k, interp in enumerate(self._interpolators):
            mask = inside & (idx == k)
            if mask.any():
                out[mask] = interp(flat[mask])
        out = out.reshape(s_arr.shape)
        return float(out) if out.ndim == 0 else out

    def __call__(self, s):
        return self.evaluate(s)

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.integrate(self.values**2)))

    def with_values(self, values: np.ndarray) -> "RadialProfile":
        return RadialProfile(self.grid, values)


ProfileLike = Union[RadialProfile, Callable[[np.ndarray], np.ndarray]]


def radial_fourier_transform(values: np.ndarray, grid: RadialGrid, points) -> np.ndarray:
    """Unitary 3D transform of a radial function; the same formula inverts it."""
    points = np.atleast_1d(np.asarray(points, dtype=float))
    kernel = spherical_jn(0, np.outer(points, grid.nodes))
    return FOURIER_PREFACTOR * kernel @ (grid.weights * np.asarray(values))


def _as_function(f: ProfileLike) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(f, RadialProfile):
        return lambda s: f.evaluate(s, outside="zero")
    return f


def radial_convolution(f: ProfileLike, g: RadialProfile, p: float) -> float:
    """
    (2 pi)^(-3/2) (f * g)(p) for radial f, g.

    The 3D convolution is reduced to
    2 pi int dq (q/p) g(q) int_{|p-q|}^{p+q} s f(s) ds,
    with the outer integral on g's grid and the inner one by Gauss-Legendre.
    f may be an analytic callable (e.g. Potential.fourier) or a profile.
    """
    if isinstance(f, RadialProfile) and not f.grid.same_as(g.grid):
        raise InvalidArgumentError("radial_convolution needs both profiles on the same grid")
    grid = g.grid
    if p < 0 or p > grid.pmax:
        raise InvalidArgumentError(f"p must lie in [0, {grid.pmax}], got {p}")
    func = _as_function(f)
    q = grid.nodes

    if p < 1e-12:
        return float(FOURIER_PREFACTOR * grid.integrate(func(q) * g.values))

    x, w = roots_legendre(INNER_ORDER)
    lo, hi = np.abs(p - q), p + q
    half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
    s = mid[:, None] + half[:, None] * x[None, :]
    inner = half * np.sum(w[None, :] * s * func(s), axis=1)
    outer = np.sum(grid.line_weights * (q / p) * g.values * inner)
    return float(FOURIER_PREFACTOR * 2.0 * np.pi * outer)


@dataclass(frozen=True, eq=False)
class Potential:
    """Radial potential with its unitary Fourier profile.

    Gaussian wells are analytic in any dimension; user tables hold V^(p) in 3D.
    """

    kind: str
    depth: Optional[float] = None
    width: Optional[float] = None
    table_momenta: Optional[np.ndarray] = None
    table_values: Optional[np.ndarray] = None

    @property
    def is_zero(self) -> bool:
        if self.kind == "gaussian-well":
            return self.depth == 0.0
        return not np.any(self.table_values)

    @cached_property
    def _spline(self) -> CubicSpline:
        return CubicSpline(self.table_momenta, self.table_values)

    @cached_property
    def _table_grid(self) -> RadialGrid:
        return build_radial_grid(float(self.table_momenta[-1]), 256)

    def _check_dims(self, dims: int):
        if dims not in (1, 2, 3):
            raise InvalidArgumentError(f"dims must be 1, 2 or 3, got {dims}")
        if self.kind == "user-table" and dims != 3:
            raise InvalidArgumentError("user-table potentials are only defined in 3D")

    def fourier(self, p, dims: int = 3):
        """V^(p) under the unitary convention in `dims` dimensions"""
        self._check_dims(dims)
        p = np.asarray(p, dtype=float)
        if self.kind == "gaussian-well":
            return self.depth * self.width**dims * np.exp(-0.5 * (self.width * p) ** 2)
        absp = np.abs(p)
        return np.where(absp <= self.table_momenta[-1], self._spline(np.minimum(absp, self.table_momenta[-1])), 0.0)

    def real_space(self, r, dims: int = 3):
        self._check_dims(dims)
        r = np.asarray(r, dtype=float)
        if self.kind == "gaussian-well":
            return self.depth * np.exp(-0.5 * (r / self.width) ** 2)
        grid = self._table_grid
        flat = radial_fourier_transform(self.fourier(grid.nodes), grid, r.ravel())
        return flat.reshape(r.shape)

    def angular_average(self, p, q):
        """1/2 int_{-1}^{1} V^(sqrt(p^2 + q^2 - 2 p q u)) du, the s-wave kernel"""
        p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
        if self.kind == "gaussian-well":
            a = 0.5 * self.width**2
            x = 4.0 * a * p * q
            safe = np.where(x > 1e-12, x, 1.0)
            ratio = np.where(x > 1e-12, -np.expm1(-safe) / safe, 1.0 - 0.5 * x)
            return self.depth * self.width**3 * np.exp(-a * (p - q) ** 2) * ratio
        u, w = roots_legendre(INNER_ORDER)
        s = np.sqrt(np.maximum(p[..., None] ** 2 + q[..., None] ** 2 - 2.0 * p[..., None] * q[..., None] * u, 0.0))
        return 0.5 * np.sum(w * self.fourier(s), axis=-1)

    def lp_norm_power(self, exponent: float) -> float:
        """int |V|^exponent d^3x in closed form (Gaussian wells only)"""
        if self.kind != "gaussian-well":
            raise InvalidArgumentError("closed-form moments exist only for gaussian-well potentials")
        return abs(self.depth) ** exponent * (2.0 * np.pi * self.width**2 / exponent) ** 1.5

    def support_radius(self) -> float:
        """Radius beyond which V is negligible in double precision"""
        if self.kind == "gaussian-well":
            return float(self.width * np.sqrt(2.0 * np.log(1e16)))
        return float(2.0 * np.pi / np.min(np.diff(self.table_momenta)))

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "depth": self.depth, "width": self.width}


def gaussian_potential(depth: float, width: float) -> Potential:
    """V(x) = depth * exp(-x^2 / (2 width^2)), V^(p) = depth * width^3 * exp(-width^2 p^2 / 2)."""
    if not np.isfinite(width) or width <= 0:
        raise InvalidArgumentError(f"width must be positive, got {width}")
    if not np.isfinite(depth):
        raise InvalidArgumentError(f"depth must be finite, got {depth}")
    return Potential(kind="gaussian-well", depth=float(depth), width=float(width))


def table_potential(momenta: Sequence[float], values: Sequence[float]) -> Potential:
    """User-supplied V^(p) table, starting at p = 0 and strictly increasing."""
    momenta = np.asarray(momenta, dtype=float)
    values = np.asarray(values, dtype=float)
    if momenta.ndim != 1 or momenta.shape != values.shape or momenta.size < 4:
        raise InvalidArgumentError("table needs matching 1D momenta/values with at least 4 entries")
    if momenta[0] != 0.0 or np.any(np.diff(momenta) <= 0):
        raise InvalidArgumentError("table momenta must start at 0 and increase strictly")
    return Potential(kind="user-table", table_momenta=momenta, table_values=values)


@dataclass(frozen=True, eq=False)
class BoxGrid:
    """Periodic lattice of n^dims points on a box of side L with microscopic ratio h.

    Positions are centred on the origin. Momenta follow numpy's FFT ordering, so
    the lattice is symmetric under p -> -p up to the self-conjugate Nyquist mode.
    """

    L: float
    n: int
    dims: int
    h: float

    def __post_init__(self):
        if not np.isfinite(self.L) or self.L <= 0:
            raise InvalidArgumentError(f"Box side L must be positive, got {self.L}")
        if int(self.n) != self.n or self.n < 2 or self.n % 2:
            raise InvalidArgumentError(f"n must be an even integer >= 2, got {self.n}")
        if self.dims not in (1, 2, 3):
            raise InvalidArgumentError(f"dims must be 1, 2 or 3, got {self.dims}")
        if not np.isfinite(self.h) or self.h <= 0:
            raise InvalidArgumentError(f"h must be positive, got {self.h}")

    @property
    def spacing(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dims

    @property
    def size(self) -> int:
        return self.n**self.dims

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dims

    @property
    def nyquist(self) -> float:
        return np.pi * self.n / self.L

    @property
    def lattice_measure(self) -> float:
        """Momentum-space cell (2 pi / L)^dims"""
        return (2.0 * np.pi / self.L) ** self.dims

    @cached_property
    def axis_momenta(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)

    @cached_property
    def axis_positions(self) -> np.ndarray:
        return -0.5 * self.L + self.spacing * np.arange(self.n)

    @cached_property
    def momenta(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis_momenta] * self.dims), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def positions(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis_positions] * self.dims), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def momentum_norms(self) -> np.ndarray:
        return np.linalg.norm(self.momenta, axis=1)

    @cached_property
    def unitary(self) -> np.ndarray:
        """U[x, p] = exp(i p.x) / sqrt(M), orthonormal plane waves in the lattice basis"""
        return np.exp(1j * self.positions @ self.momenta.T) / np.sqrt(self.size)

    def wrap(self, dx: np.ndarray) -> np.ndarray:
        """Minimal-image representative in [-L/2, L/2)"""
        return (dx + 0.5 * self.L) % self.L - 0.5 * self.L

    @cached_property
    def pair_distances(self) -> np.ndarray:
        """|x_i - x_j| with periodic wrapping, shape (M, M)"""
        diff = self.wrap(self.positions[:, None, :] - self.positions[None, :, :])
        return np.linalg.norm(diff, axis=-1)

    @cached_property
    def wrapped_momentum_differences(self) -> np.ndarray:
        """|p_i - p_j| reduced to the first Brillouin zone, shape (M, M)"""
        period = 2.0 * np.pi / self.spacing
        diff = self.momenta[:, None, :] - self.momenta[None, :, :]
        diff = (diff + 0.5 * period) % period - 0.5 * period
        return np.linalg.norm(diff, axis=-1)

    def derivative_factors(self) -> List[np.ndarray]:
        """i p_j on the FFT grid, Nyquist mode set to zero, broadcastable over the lattice shape"""
        k = 1j * self.axis_momenta.copy()
        k[self.n // 2] = 0.0
        factors = []
        for axis in range(self.dims):
            shape = [1] * self.dims
            shape[axis] = self.n
            factors.append(k.reshape(shape))
        return factors

    def gradient(self, values: np.ndarray, axes: Sequence[int]) -> List[np.ndarray]:
        """Spectral gradient of `values` along the lattice axes `axes` (one per dimension)"""
        axes = list(axes)
        spectrum = np.fft.fftn(values, axes=axes)
        grads = []
        for factor, axis in zip(self.derivative_factors(), axes):
            shape = [1] * values.ndim
            shape[axis] = self.n
            grads.append(np.fft.ifftn(spectrum * factor.reshape(shape), axes=axes))
        return grads

    def to_dict(self) -> Dict:
        return {"L": self.L, "n": self.n, "dims": self.dims, "h": self.h}


def check_box_cap(dims: int, n: int, limits: Dict[int, int], cap: int):
    """Refuse boxes whose BdG matrix would exceed the dense eigendecomposition cap"""
    if dims in limits and n > limits[dims]:
        raise InvalidArgumentError(
            f"n={n} exceeds the dense limit {limits[dims]} for dims={dims} (2M <= {cap})"
        )
    if 2 * n**dims > cap:
        raise InvalidArgumentError(f"2M = {2 * n**dims} exceeds the dense cap {cap}")


def fit_power_law(xs: Sequence[float], ys: Sequence[float]) -> tuple:
    """Least-squares slope of log(ys) against log(xs) and its coefficient of determination"""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise InvalidArgumentError(f"fit needs matching 1D inputs, got {xs.shape} and {ys.shape}")
    if np.any(xs <= 0) or np.any(ys <= 0) or not np.all(np.isfinite(ys)):
        raise InvalidArgumentError("power-law fit needs strictly positive finite values")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    spread = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if spread == 0 else 1.0 - np.sum((ly - (slope * lx + intercept)) ** 2) / spread
    return float(slope), float(r2)
