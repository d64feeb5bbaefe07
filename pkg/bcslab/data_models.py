from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .foundation import (
    BoxGrid,
    Potential,
    RadialGrid,
    build_radial_grid,
    check_box_cap,
    gaussian_potential,
    table_potential,
)
from .utils.config import Config

COMMANDS = ("tc", "gap", "verify", "kernel", "bdg-scaling", "decompose", "certify", "apriori")
SUITES = ("scalar", "entropy", "identity", "klein", "block-trace", "hs-chain", "matsubara", "decomp", "projection")
KERNEL_KINDS = ("xcoth", "lorentzian", "matsubara", "zeta", "weighted-norms")


class PotentialSpec(BaseModel):
    """Data model for a radial potential"""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["gaussian-well", "user-table"] = "gaussian-well"
    depth: float = -5.0
    width: float = Field(default=1.0, gt=0)
    momenta: Optional[List[float]] = Field(default=None, description="table momenta, starting at 0")
    values: Optional[List[float]] = Field(default=None, description="table values of the Fourier profile")

    @model_validator(mode="after")
    def _table_present(self):
        if self.kind == "user-table" and (self.momenta is None or self.values is None):
            raise ValueError("user-table potentials need 'momenta' and 'values'")
        return self

    def build(self) -> Potential:
        if self.kind == "user-table":
            return table_potential(self.momenta, self.values)
        return gaussian_potential(self.depth, self.width)


class GridSpec(BaseModel):
    """Data model for a radial momentum grid"""
    model_config = ConfigDict(extra="forbid")

    pmax: float = Field(default=10.0, gt=0)
    count: int = Field(default=256, ge=8)
    rule: Literal["gauss-legendre", "gauss-legendre-graded"] = "gauss-legendre"

    def build(self, mu: float) -> RadialGrid:
        center = float(np.sqrt(mu)) if mu > 0 else None
        return build_radial_grid(self.pmax, self.count, self.rule, center=center)


class BoxSpec(BaseModel):
    """Data model for a periodic box (h is supplied per evaluation)"""
    model_config = ConfigDict(extra="forbid")

    L: float = Field(default=8.0, gt=0)
    n: int = Field(default=32, ge=2)
    dims: Literal[1, 2, 3] = 1

    @field_validator("n")
    @classmethod
    def _even(cls, value: int) -> int:
        if value % 2:
            raise ValueError(f"n must be even, got {value}")
        return value

    def build(self, h: float) -> BoxGrid:
        return BoxGrid(L=self.L, n=self.n, dims=self.dims, h=h)


class RunConfig(BaseModel):
    """Validated configuration of one CLI run"""
    model_config = ConfigDict(extra="forbid")

    command: Literal["tc", "gap", "verify", "kernel", "bdg-scaling", "decompose", "certify", "apriori"]
    potential: PotentialSpec = Field(default_factory=PotentialSpec)
    external: PotentialSpec = Field(
        default_factory=lambda: PotentialSpec(depth=1.0, width=1.0),
        description="external field W in macroscopic units",
    )
    grid: GridSpec = Field(default_factory=GridSpec)
    box: BoxSpec = Field(default_factory=BoxSpec)

    T: Optional[float] = Field(default=None, gt=0, description="temperature; defaults to 0.9 Tc where needed")
    mu: float = 1.0
    h: Optional[float] = Field(default=None, gt=0)
    h_list: List[float] = Field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    beta: Optional[float] = Field(default=None, gt=0, description="inverse temperature; defaults to 1/T")
    bracket: Tuple[float, float] = (1e-3, 5.0)

    gap_tol: float = Field(default=Config.GAP_TOL, gt=0)
    tc_tol: float = Field(default=Config.TC_TOL, gt=0)
    damping: float = Field(default=Config.DAMPING, gt=0, le=1)
    maxiter: int = Field(default=Config.MAXITER, ge=1)
    anderson: bool = False

    seed: int = 0
    samples: int = Field(default=100, ge=1)
    dim: int = Field(default=4, ge=1, le=6, description="half-dimension of sampled block states")
    suite: Optional[Literal["scalar", "entropy", "identity", "klein", "block-trace", "hs-chain", "matsubara", "decomp", "projection"]] = None

    kind: Optional[Literal["xcoth", "lorentzian", "matsubara", "zeta", "weighted-norms"]] = None
    x: float = 1.0
    a: float = 1.0
    b: float = 2.0
    k: float = 0.0
    n_terms: int = Field(default=100000, ge=1)

    r: Optional[float] = Field(default=None, gt=0)
    c1: float = Field(default=Config.CERT_C1, gt=0)
    c2: float = Field(default=Config.CERT_C2, gt=0)
    perturb: float = Field(default=0.0, ge=0)
    family: Literal["perturbed", "reference"] = "perturbed"
    epsilon0: float = Field(default=0.5, gt=0)

    input: Optional[str] = None
    state: Optional[str] = None
    out: Optional[str] = None
    csv: Optional[str] = None
    quiet: bool = False

    @field_validator("h_list")
    @classmethod
    def _positive_h(cls, value: List[float]) -> List[float]:
        if any(h <= 0 for h in value):
            raise ValueError(f"h_list entries must be positive, got {value}")
        return value

    @model_validator(mode="after")
    def _command_requirements(self):
        if self.bracket[0] <= 0 or self.bracket[1] <= self.bracket[0]:
            raise ValueError(f"bracket must satisfy 0 < Tlo < Thi, got {self.bracket}")
        if self.command == "gap" and self.T is None:
            raise ValueError("'gap' needs the temperature field 'T'")
        if self.command == "verify" and self.suite is None:
            raise ValueError("'verify' needs the field 'suite'")
        if self.command == "kernel" and self.kind is None:
            raise ValueError("'kernel' needs the field 'kind'")
        if self.command == "certify" and self.h is None:
            raise ValueError("'certify' needs the field 'h'")
        if self.command == "decompose" and self.input is None:
            raise ValueError("'decompose' needs the pair-field file 'input'")
        if self.command == "bdg-scaling" and "L" not in self.box.model_fields_set:
            self.box = self.box.model_copy(update={"L": Config.BDG_SCALING_BOX_SIDE})
        if self.command in ("bdg-scaling", "apriori") and len(self.h_list) < 3:
            raise ValueError(f"'{self.command}' needs at least 3 values in 'h_list'")
        if self.command in ("bdg-scaling", "certify", "apriori") or self.kind == "weighted-norms":
            check_box_cap(self.box.dims, self.box.n, Config.MAX_POINTS_PER_DIM, Config.DENSE_CAP)
        return self


class Report(BaseModel):
    """Base of every JSON document the CLI writes"""
    model_config = ConfigDict(populate_by_name=True)

    schema_version: int = Field(default=Config.SCHEMA_VERSION, serialization_alias="schema")


class TcReport(Report):
    Tc: float
    bracket: Tuple[float, float]
    tol: float
    potential: Dict
    grid: Dict


class GapReport(Report):
    T: float
    Tc: Optional[float]
    residual: float
    tol: float
    iterations: int
    converged: bool
    nodes: List[float]
    delta: List[float]


class SuiteReport(Report):
    inequality_id: str
    samples: int
    min_slack: float
    argmin_seed: Optional[int] = None
    tolerance: float
    passed: bool
    extra: Dict = Field(default_factory=dict)


class KernelReport(Report):
    method: str
    value: float
    tail: Optional[float] = None
    inputs: Dict
    extra: Dict = Field(default_factory=dict)


class ScalingReport(Report):
    h: List[float]
    l2: List[float]
    h1: List[float]
    weighted_h2: List[float]
    exponent: float
    r2: float
    exponents: Dict[str, float] = Field(default_factory=dict)


class DecomposeReport(Report):
    dims: int
    n: int
    h: float
    L: float
    psi_mean: float
    psi_l2: float
    xi_l2: float
    xi_h1: float
    grad_psi_sq: float
    gradient_bound_gap: float
    split: Optional[Dict] = None
    phi_tail_gap: Optional[float] = None
    phi_tail_intermediate_gap: Optional[float] = None
    phi_tail_constant: Optional[float] = None


class Certificate(Report):
    """All terms of the lower bound together with the functional value"""

    f_value: float
    grad_psi_sq: float = Field(ge=0)
    phi_l2_sq: float = Field(ge=0)
    xi_h1_sq: float = Field(ge=0)
    q_h1_sq: float = Field(ge=0)
    h: float = Field(gt=0)
    c1: float = Field(gt=0)
    c2: float = Field(gt=0)
    rhs: float
    holds: Optional[bool] = Field(default=None, description="f_value >= rhs, reported only when f_value <= 0")

    @staticmethod
    def lower_bound(h, grad_psi_sq, phi_l2_sq, xi_h1_sq, q_h1_sq, c1, c2) -> float:
        return c1 * (h * grad_psi_sq + h * phi_l2_sq + xi_h1_sq + q_h1_sq) - c2 * h

    @model_validator(mode="after")
    def _rhs_consistent(self):
        expected = self.lower_bound(
            self.h, self.grad_psi_sq, self.phi_l2_sq, self.xi_h1_sq, self.q_h1_sq, self.c1, self.c2
        )
        if abs(expected - self.rhs) > 1e-12 * max(1.0, abs(expected)):
            raise ValueError(f"rhs={self.rhs} does not match the recomputed bound {expected}")
        return self

    @classmethod
    def assemble(cls, f_value: float, h: float, c1: float, c2: float, **norms) -> "Certificate":
        rhs = cls.lower_bound(h, c1=c1, c2=c2, **norms)
        holds = bool(f_value >= rhs) if f_value <= 0 else None
        return cls(f_value=f_value, h=h, c1=c1, c2=c2, rhs=rhs, holds=holds, **norms)


class AprioriReport(Report):
    family: str
    h: List[float]
    f_values: List[float]
    xi_h1: List[float]
    q_h1: List[float]
    xi_exponent: float
    q_exponent: Optional[float] = None
    passed: bool
