#!/usr/bin/env python3
"""
bcslab command-line front end
Builds a RunConfig from a JSON file and flags, runs one command, writes one JSON document
"""

import argparse
import json
import logging
import sys
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from .bdg import build_h0w, lemma_scaling, reference_state
from .cert import apriori_scaling, rank_two_perturbation, theorem_certificate
from .data_models import (
    KERNEL_KINDS,
    SUITES,
    AprioriReport,
    DecomposeReport,
    GapReport,
    KernelReport,
    Report,
    RunConfig,
    ScalingReport,
    TcReport,
)
from .decomp import (
    extract_psi,
    field_gradient,
    field_l2_sq,
    gradient_bound_gap,
    h1_norm_sq,
    kernel_from_gap,
    phi_tail_gap,
    read_pair_field,
    residual_xi,
    split_bounds_report,
)
from .entropy import BlockState, gibbs_block_state
from .foundation import RadialProfile
from .kernels import lorentzian_pair_ft, matsubara_sum, weighted_norm_scaling, xcoth_series, zeta_kernel
from .suites import run_suite
from .tibcs import critical_temperature, solve_gap
from .utils.config import Config
from .utils.console import log_failure, log_run_start, log_summary, setup_logging
from .utils.errors import USAGE_ERRORS, BcsLabError, InternalError, NumericalError
from .utils.rng import make_rng

logger = logging.getLogger("bcslab")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
T_FRACTION = 0.9


class UsageError(Exception):
    """Invalid command line or configuration"""


def _option(parser: argparse.ArgumentParser, flag: str, path: str, **kwargs):
    """Flag whose value lands at the dotted config path; absent flags leave the file value alone"""
    parser.add_argument(flag, dest=path, default=argparse.SUPPRESS, **kwargs)


def _add_physics(parser: argparse.ArgumentParser):
    _option(parser, "--depth", "potential.depth", type=float, help="depth of the Gaussian well")
    _option(parser, "--width", "potential.width", type=float, help="width of the Gaussian well")
    _option(parser, "--pmax", "grid.pmax", type=float, help="radial grid cutoff")
    _option(parser, "--count", "grid.count", type=int, help="radial grid nodes")
    _option(parser, "--rule", "grid.rule", choices=["gauss-legendre", "gauss-legendre-graded"])
    _option(parser, "--mu", "mu", type=float, help="chemical potential")
    _option(parser, "--T", "T", type=float, help="temperature (default 0.9 Tc where needed)")
    _option(parser, "--gap-tol", "gap_tol", type=float)
    _option(parser, "--tc-tol", "tc_tol", type=float)
    _option(parser, "--damping", "damping", type=float)
    _option(parser, "--maxiter", "maxiter", type=int)
    _option(parser, "--anderson", "anderson", action="store_true", help="Anderson-accelerate the gap iteration")


def _add_box(parser: argparse.ArgumentParser):
    _option(parser, "--L", "box.L", type=float, help="box side")
    _option(parser, "--n", "box.n", type=int, help="points per dimension (even)")
    _option(parser, "--dims", "box.dims", type=int, choices=[1, 2, 3])
    _option(parser, "--w-depth", "external.depth", type=float, help="external field amplitude")
    _option(parser, "--w-width", "external.width", type=float, help="external field width")
    _option(parser, "--beta", "beta", type=float, help="inverse temperature of the reference state")


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", dest="config_file", default=None, help="JSON configuration file")
    parser.add_argument("--log-level", dest="log_level", default=None, help="logging level")
    _option(parser, "--out", "out", help="JSON output path (default stdout)")
    _option(parser, "--quiet", "quiet", action="store_true", help="hide progress bars")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcslab", description="bcslab: BCS superfluidity numerical lab")
    subparsers = parser.add_subparsers(dest="command", required=True, help="Command")

    tc = subparsers.add_parser("tc", help="critical temperature by bisection")
    _add_physics(tc)
    _option(tc, "--bracket", "bracket", type=float, nargs=2, metavar=("TLO", "THI"))

    gap = subparsers.add_parser("gap", help="solve the translation-invariant gap equation")
    _add_physics(gap)
    _option(gap, "--csv", "csv", help="plot-ready profile dump")

    verify = subparsers.add_parser("verify", help="run a seeded inequality suite")
    verify.add_argument("suite", choices=SUITES)
    _option(verify, "--samples", "samples", type=int)
    _option(verify, "--dim", "dim", type=int)
    _option(verify, "--seed", "seed", type=int)

    kernel = subparsers.add_parser("kernel", help="evaluate a kernel identity")
    kernel.add_argument("kind", choices=KERNEL_KINDS)
    _add_physics(kernel)
    _add_box(kernel)
    _option(kernel, "--x", "x", type=float)
    _option(kernel, "--a", "a", type=float)
    _option(kernel, "--b", "b", type=float)
    _option(kernel, "--k", "k", type=float)
    _option(kernel, "--n-terms", "n_terms", type=int)
    _option(kernel, "--h-list", "h_list", type=float, nargs="+")

    scaling = subparsers.add_parser("bdg-scaling", help="pairing-difference norms over an h sweep")
    _add_physics(scaling)
    _add_box(scaling)
    _option(scaling, "--h-list", "h_list", type=float, nargs="+")

    decompose = subparsers.add_parser("decompose", help="decompose a pair field from file")
    _add_physics(decompose)
    _option(decompose, "--input", "input", help="pair-field file")
    _option(decompose, "--L", "box.L", type=float, help="box side")
    _option(decompose, "--r", "r", type=float, help="splitting radius")

    certify = subparsers.add_parser("certify", help="lower-bound certificate for one state")
    _add_physics(certify)
    _add_box(certify)
    _option(certify, "--h", "h", type=float)
    _option(certify, "--state", "state", help=".npz file with key 'matrix'")
    _option(certify, "--perturb", "perturb", type=float, help="size of a seeded rank-2 perturbation")
    _option(certify, "--seed", "seed", type=int)
    _option(certify, "--c1", "c1", type=float)
    _option(certify, "--c2", "c2", type=float)

    apriori = subparsers.add_parser("apriori", help="a-priori bound scaling over an h sweep")
    _add_physics(apriori)
    _add_box(apriori)
    _option(apriori, "--h-list", "h_list", type=float, nargs="+")
    _option(apriori, "--family", "family", choices=["perturbed", "reference"])
    _option(apriori, "--epsilon0", "epsilon0", type=float)
    _option(apriori, "--seed", "seed", type=int)

    for sub in subparsers.choices.values():
        _add_common(sub)
    return parser


def _set_path(data: Dict[str, Any], path: str, value: Any) -> Optional[Any]:
    """Set a dotted path, returning the value it replaced"""
    *parents, leaf = path.split(".")
    node = data
    for key in parents:
        node = node.setdefault(key, {})
    previous = node.get(leaf)
    node[leaf] = value
    return previous


def parse_config(argv: Optional[Sequence[str]] = None) -> Tuple[RunConfig, Dict[str, Any]]:
    """
    Parse flags and an optional JSON file into a validated RunConfig.

    Flags win over file values; every such conflict is logged as a warning.

    Returns:
        (config, cli_settings) where cli_settings holds the non-config flags
    """
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise UsageError("invalid command line") from exc

    settings = {"config_file": args.pop("config_file"), "log_level": args.pop("log_level")}
    data: Dict[str, Any] = {}
    if settings["config_file"]:
        try:
            with open(settings["config_file"], "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {settings['config_file']}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")

    for path, value in args.items():
        previous = _set_path(data, path, value)
        if previous is not None and previous != value and path != "command":
            logger.warning(f"flag overrides config file: {path} = {value!r} (file had {previous!r})")

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        fields = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors())
        raise UsageError(f"invalid configuration: {fields}") from exc
    except BcsLabError as exc:
        raise UsageError(str(exc)) from exc
    return config, settings


def _physics(config: RunConfig):
    V = config.potential.build()
    grid = config.grid.build(config.mu)
    return V, grid


def _temperature(config: RunConfig, V, grid) -> Tuple[float, Optional[float]]:
    """Configured T, or 0.9 Tc when T is missing"""
    if config.T is not None:
        return config.T, None
    Tc = critical_temperature(V, config.mu, grid, bracket=config.bracket, tol=config.tc_tol)
    logger.info(f"T not given; using {T_FRACTION} Tc = {T_FRACTION * Tc:.6g}")
    return T_FRACTION * Tc, Tc


def _reference_gap(config: RunConfig) -> Tuple[RadialProfile, float]:
    V, grid = _physics(config)
    T, Tc = _temperature(config, V, grid)
    solution = solve_gap(
        T, V, config.mu, grid,
        damping=config.damping, tol=config.gap_tol, maxiter=config.maxiter, anderson=config.anderson, Tc=Tc,
    )
    if not solution.converged:
        raise NumericalError(f"gap equation did not converge at T={T:.6g} (residual {solution.residual:.3e})")
    return solution.delta, T


def run_tc(config: RunConfig) -> TcReport:
    V, grid = _physics(config)
    Tc = critical_temperature(V, config.mu, grid, bracket=config.bracket, tol=config.tc_tol)
    return TcReport(Tc=Tc, bracket=config.bracket, tol=config.tc_tol, potential=V.to_dict(), grid=grid.to_dict())


def run_gap(config: RunConfig) -> GapReport:
    V, grid = _physics(config)
    solution = solve_gap(
        config.T, V, config.mu, grid,
        damping=config.damping, tol=config.gap_tol, maxiter=config.maxiter, anderson=config.anderson,
    )
    if config.csv:
        solution.write_csv(config.csv, config.mu)
    return GapReport(**solution.to_dict())


def run_verify(config: RunConfig):
    return run_suite(config.suite, samples=config.samples, dim=config.dim, seed=config.seed, quiet=config.quiet)


def run_kernel(config: RunConfig) -> KernelReport:
    kind = config.kind
    if kind == "xcoth":
        T = config.T or 1.0
        value, tail = xcoth_series(config.x, T, config.n_terms)
        return KernelReport(method=f"series({config.n_terms})", value=value, tail=tail, inputs={"x": config.x, "T": T})
    if kind == "lorentzian":
        value = lorentzian_pair_ft(config.a, config.b, config.k)
        return KernelReport(method="closed-form", value=value, inputs={"a": config.a, "b": config.b, "k": config.k})
    if kind == "matsubara":
        value = matsubara_sum(config.a, config.b)
        return KernelReport(method="closed-form", value=value, inputs={"a": config.a, "b": config.b})
    if kind == "zeta":
        T = config.T or 1.0
        result = zeta_kernel(config.a, config.b, T)
        return KernelReport(method=result.method, value=result.value, tail=result.tail_bound,
                            inputs={"Ep": config.a, "Eq": config.b, "T": T})

    delta, T = _reference_gap(config)
    box = config.box
    fits = weighted_norm_scaling(config.h_list, box.L, box.n, box.dims, config.external.build(), delta, config.mu, T)
    return KernelReport(method="weighted-norms", value=fits["e11"],
                        inputs={"h_list": config.h_list, "box": box.model_dump(), "T": T}, extra=fits)


def run_bdg_scaling(config: RunConfig) -> ScalingReport:
    delta, T = _reference_gap(config)
    box = config.box
    result = lemma_scaling(
        config.h_list, box.L, box.n, box.dims, config.mu, config.external.build(), delta, T,
        beta=config.beta, quiet=config.quiet,
    )
    return ScalingReport(**result)


def run_decompose(config: RunConfig) -> DecomposeReport:
    alpha = read_pair_field(config.input, config.box.L)
    box = alpha.box
    delta, T = _reference_gap(config)
    ref = kernel_from_gap(delta, config.mu, T, box)
    psi = extract_psi(alpha, ref)
    xi = residual_xi(alpha, ref, psi)
    split, tail = None, None
    if config.r is not None:
        split = split_bounds_report(psi, 0.5 * config.r)
        tail = phi_tail_gap(psi, config.r)
    return DecomposeReport(
        dims=box.dims,
        n=box.n,
        h=box.h,
        L=box.L,
        psi_mean=float(np.mean(np.abs(psi.psi))),
        psi_l2=float(np.sqrt(field_l2_sq(psi.psi, box))),
        xi_l2=float(np.sqrt(xi.l2_norm_sq())),
        xi_h1=float(np.sqrt(h1_norm_sq(xi, box.h))),
        grad_psi_sq=field_l2_sq(field_gradient(psi.psi, box), box),
        gradient_bound_gap=gradient_bound_gap(alpha, ref),
        split=split,
        phi_tail_gap=tail["gap"] if tail is not None else None,
        phi_tail_intermediate_gap=tail["intermediate_gap"] if tail is not None else None,
        phi_tail_constant=tail["constant"] if tail is not None else None,
    )


def run_certify(config: RunConfig):
    delta, T = _reference_gap(config)
    box = config.box.build(config.h)
    beta = config.beta or 1.0 / T
    op = build_h0w(box, config.mu, config.external.build(), delta, config.h)
    G0w = reference_state(op, beta)
    if config.state:
        with np.load(config.state) as archive:
            G = BlockState(archive["matrix"])
    elif config.perturb > 0:
        G = gibbs_block_state(op.matrix + config.perturb * rank_two_perturbation(box, make_rng(config.seed)), beta)
    else:
        G = G0w
    ref = kernel_from_gap(delta, config.mu, T, box)
    V = config.potential.build()
    return theorem_certificate(G, G0w, V, config.h, beta, box, ref, config.c1, config.c2, hamiltonian=op.matrix)


def run_apriori(config: RunConfig) -> AprioriReport:
    delta, T = _reference_gap(config)
    box = config.box
    result = apriori_scaling(
        config.h_list, box.L, box.n, box.dims, config.mu, config.potential.build(), config.external.build(),
        delta, T, family=config.family, beta=config.beta, epsilon0=config.epsilon0, seed=config.seed,
        quiet=config.quiet,
    )
    return AprioriReport(**result)


HANDLERS: Dict[str, Callable[[RunConfig], Report]] = {
    "tc": run_tc,
    "gap": run_gap,
    "verify": run_verify,
    "kernel": run_kernel,
    "bdg-scaling": run_bdg_scaling,
    "decompose": run_decompose,
    "certify": run_certify,
    "apriori": run_apriori,
}


def _contract_failed(report: Report) -> bool:
    """Reports whose own contract was violated exit with 1 after being written"""
    if getattr(report, "converged", True) is False:
        return True
    if getattr(report, "passed", True) is False:
        return not getattr(report, "extra", {}).get("diagnostic", False)
    return False


def write_report(report: Report, path: Optional[str]):
    text = json.dumps(report.model_dump(mode="json", by_alias=True), sort_keys=True, indent=2)
    if path:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _summary_rows(report: Report) -> Dict[str, Any]:
    return {
        key: value
        for key, value in report.model_dump(exclude={"schema_version"}).items()
        if isinstance(value, (int, float, str, bool)) and value is not None
    }


def run(config: RunConfig) -> int:
    """Dispatch one command; 0 on success, 1 on numerical failure or violated contract, 2 on usage error"""
    try:
        report = HANDLERS[config.command](config)
    except (UsageError, *USAGE_ERRORS) as exc:
        log_failure(config.command, str(exc), EXIT_USAGE)
        return EXIT_USAGE
    except BcsLabError as exc:
        log_failure(config.command, f"{type(exc).__name__}: {exc}", EXIT_FAILURE)
        return EXIT_FAILURE
    except Exception as exc:
        logger.debug("unexpected failure", exc_info=True)
        error = InternalError(f"{type(exc).__name__}: {exc}")
        log_failure(config.command, f"{type(error).__name__}: {error}", EXIT_FAILURE)
        return EXIT_FAILURE

    write_report(report, config.out)
    if not config.quiet:
        log_summary(f"bcslab {config.command}", _summary_rows(report))
    if _contract_failed(report):
        log_failure(config.command, "result violates its contract", EXIT_FAILURE)
        return EXIT_FAILURE
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function"""
    setup_logging()
    try:
        Config.validate()
    except ValueError as exc:
        log_failure("startup", str(exc), EXIT_USAGE)
        return EXIT_USAGE

    try:
        config, settings = parse_config(argv)
    except UsageError as exc:
        log_failure("config", str(exc), EXIT_USAGE)
        return EXIT_USAGE

    setup_logging(settings["log_level"])
    if not config.quiet:
        log_run_start(config.command, config.model_dump(exclude_defaults=True))
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
