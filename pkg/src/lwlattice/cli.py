"""Command-line interface.

Subcommands: oracle, invert, lw, sigma, dyson, minimize, verify, sweep.
Structured results go to stdout (or --out) as JSON with 17-significant-digit
floats; sweeps and solver traces use CSV. Exit codes: 0 success, 1 validation
error, 2 non-convergence, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .diagrams import BoldSeries, sigma_term
from .duality import inverse_map, lw_evaluate
from .errors import LwlatticeError, ValidationError
from .interactions import DiagonalQuartic, ScaledInteraction, as_diagonal_quartic
from .matrices import SpdMatrix
from .modelio import dumps, load_matrix, load_model, write_csv
from .oracle import OracleConfig, evaluate_moments
from .solver import SigmaModel, dyson_solve, free_energy, minimize_free_energy
from .verify import run_suite, suite_names


class _Parser(argparse.ArgumentParser):
    """Usage errors raise ValidationError so the CLI exits with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _add_oracle_flags(parser):
    parser.add_argument("--mode", choices=["quadrature", "mc"], help="oracle backend")
    parser.add_argument("--quad-nodes", type=int, help="Gauss-Hermite nodes per dimension")
    parser.add_argument("--mc-samples", type=int, help="Monte Carlo sample count")
    parser.add_argument("--seed", type=int, help="Monte Carlo seed")


def _add_solver_flags(parser):
    parser.add_argument("--tol", type=float, help="convergence tolerance")
    parser.add_argument("--max-iter", type=int, help="iteration budget")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lwlattice", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_oracle = sub.add_parser("oracle", help="partition function, free energy, moments")
    p_oracle.add_argument("--model", required=True)
    p_oracle.add_argument("--out")
    _add_oracle_flags(p_oracle)

    p_invert = sub.add_parser("invert", help="A[G]: invert the moment map at a target G")
    p_invert.add_argument("--model", required=True)
    p_invert.add_argument("--G", required=True, dest="green")
    p_invert.add_argument("--out")
    _add_oracle_flags(p_invert)
    _add_solver_flags(p_invert)

    p_lw = sub.add_parser("lw", help="universal functional, LW functional, self-energy at G")
    p_lw.add_argument("--model", required=True)
    p_lw.add_argument("--G", required=True, dest="green")
    p_lw.add_argument("--out")
    _add_oracle_flags(p_lw)
    _add_solver_flags(p_lw)

    p_sigma = sub.add_parser("sigma", help="bold self-energy coefficient of one order")
    p_sigma.add_argument("--model", required=True)
    p_sigma.add_argument("--G", required=True, dest="green")
    p_sigma.add_argument("--order", type=int, required=True)
    p_sigma.add_argument("--out")

    for name, helptext in (
        ("dyson", "damped fixed-point solution of the Dyson equation"),
        ("minimize", "direct free-energy minimization over the SPD cone"),
    ):
        p_solve = sub.add_parser(name, help=helptext)
        p_solve.add_argument("--model", required=True)
        p_solve.add_argument(
            "--sigma-model",
            choices=[m.value for m in SigmaModel],
            default="exact",
            dest="sigma_model",
        )
        p_solve.add_argument("--damping", type=float, default=0.5)
        p_solve.add_argument("--trace-csv", dest="trace_csv")
        p_solve.add_argument("--out")
        _add_oracle_flags(p_solve)
        _add_solver_flags(p_solve)

    p_verify = sub.add_parser("verify", help="run theorem-check suites")
    p_verify.add_argument("--suite", default="all", choices=list(suite_names()))
    p_verify.add_argument("--out")
    _add_oracle_flags(p_verify)

    p_sweep = sub.add_parser("sweep", help="interaction-strength sweep to CSV")
    p_sweep.add_argument("--model", required=True)
    p_sweep.add_argument("--G", required=True, dest="green")
    p_sweep.add_argument("--quantity", choices=["phi", "sigma"], default="phi")
    p_sweep.add_argument("--eps", required=True, help="grid as start:stop:log:count")
    p_sweep.add_argument("--order", type=int, default=2)
    p_sweep.add_argument("--out")
    _add_oracle_flags(p_sweep)
    _add_solver_flags(p_sweep)

    return parser


def _resolve_cfg(model, args):
    cfg = model.oracle
    overrides = {}
    if getattr(args, "mode", None):
        overrides["mode"] = "monte_carlo" if args.mode == "mc" else args.mode
    if getattr(args, "quad_nodes", None):
        overrides["nodes_per_dim"] = args.quad_nodes
    if getattr(args, "mc_samples", None):
        overrides["samples"] = args.mc_samples
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return replace(cfg, **overrides) if overrides else cfg


def _emit(text: str, out_path):
    if out_path:
        with open(out_path, "w") as handle:
            handle.write(text)
            if not text.endswith("\n"):
                handle.write("\n")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _emit_json(obj, out_path):
    _emit(dumps(obj), out_path)


def _load_green(path) -> SpdMatrix:
    return SpdMatrix(load_matrix(path))


def _parse_eps_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 4:
        raise ValidationError(f"eps grid must be start:stop:log:count, got {text!r}")
    start, stop, kind, count = parts
    try:
        start, stop, count = float(start), float(stop), int(count)
    except ValueError:
        raise ValidationError(f"malformed eps grid {text!r}") from None
    if count < 1 or start <= 0 or stop <= 0:
        raise ValidationError(f"eps grid bounds must be positive, got {text!r}")
    if kind == "log":
        return np.logspace(np.log10(start), np.log10(stop), count)
    if kind == "lin":
        return np.linspace(start, stop, count)
    raise ValidationError(f"eps grid kind must be 'log' or 'lin', got {kind!r}")


def _cmd_oracle(args) -> int:
    model = load_model(args.model)
    cfg = _resolve_cfg(model, args)
    report = evaluate_moments(model.a, model.interaction, cfg)
    _emit_json(report.to_dict(), args.out)
    return 0


def _cmd_invert(args) -> int:
    model = load_model(args.model)
    cfg = _resolve_cfg(model, args)
    green = _load_green(args.green)
    a = inverse_map(
        green,
        model.interaction,
        cfg,
        tol=args.tol,
        max_iter=args.max_iter or 60,
    )
    _emit_json({"a_of_g": a.mat.tolist()}, args.out)
    return 0


def _cmd_lw(args) -> int:
    model = load_model(args.model)
    cfg = _resolve_cfg(model, args)
    green = _load_green(args.green)
    report = lw_evaluate(
        green,
        model.interaction,
        cfg,
        tol=args.tol,
        max_iter=args.max_iter or 60,
    )
    _emit_json(report.to_dict(), args.out)
    return 0


def _cmd_sigma(args) -> int:
    model = load_model(args.model)
    green = _load_green(args.green)
    scale, v = as_diagonal_quartic(model.interaction)
    sig = sigma_term(green, v, args.order)
    _emit_json(
        {"order": args.order, "sigma": (scale**args.order * sig.mat).tolist()},
        args.out,
    )
    return 0


def _cmd_solver(args, minimize: bool) -> int:
    model = load_model(args.model)
    cfg = _resolve_cfg(model, args)
    modelkind = SigmaModel(args.sigma_model)
    tol = args.tol if args.tol is not None else 1e-8
    max_iter = args.max_iter or 200
    if minimize:
        trace = minimize_free_energy(
            model.a, model.interaction, modelkind, cfg, tol=tol, max_iter=max_iter
        )
    else:
        trace = dyson_solve(
            model.a,
            model.interaction,
            modelkind,
            damping=args.damping,
            tol=tol,
            max_iter=max_iter,
            cfg=cfg,
        )
    payload = trace.to_dict()
    payload["free_energy"] = free_energy(
        model.a, trace.final_green, model.interaction, modelkind, cfg
    )
    _emit_json(payload, args.out)
    if args.trace_csv:
        write_csv(
            args.trace_csv,
            ["iter", "residual", "free_energy"],
            [(rec.iteration, rec.residual, rec.free_energy) for rec in trace.iterates],
        )
    return 0 if trace.converged else 2


class _DefaultOracle:
    oracle = OracleConfig()


def _cmd_verify(args) -> int:
    cfg = _resolve_cfg(_DefaultOracle, args)
    reports = run_suite(args.suite, cfg)
    widths = max((len(r.name) for r in reports), default=4)
    for report in reports:
        status = "PASS" if report.passed else "FAIL"
        sys.stderr.write(
            f"{report.name:<{widths}}  {status}  metric={report.metric:.3e}  "
            f"threshold={report.threshold:.3e}\n"
        )
    _emit_json([r.to_dict() for r in reports], args.out)
    return 0 if all(r.passed for r in reports) else 1


def _cmd_sweep(args) -> int:
    model = load_model(args.model)
    cfg = _resolve_cfg(model, args)
    green = _load_green(args.green)
    scale, v = as_diagonal_quartic(model.interaction)
    series = BoldSeries.build(green, v, args.order)
    rows = []
    warm = None
    for eps in _parse_eps_grid(args.eps):
        u_eps = ScaledInteraction(eps * scale, DiagonalQuartic(v))
        report = lw_evaluate(
            green, u_eps, cfg, tol=args.tol, max_iter=args.max_iter or 80, a_init=warm
        )
        warm = report.a_of_g
        if args.quantity == "phi":
            rows.append(
                (
                    float(eps),
                    report.phi,
                    abs(report.phi - series.truncated_phi(eps * scale)),
                )
            )
        else:
            sig_norm = float(np.linalg.norm(report.sigma_exact.mat))
            residual = float(
                np.linalg.norm(
                    report.sigma_exact.mat - series.truncated_sigma(eps * scale).mat
                )
            )
            rows.append((float(eps), sig_norm, residual))
    header = ["eps", args.quantity, "residual_vs_series"]
    if args.out:
        write_csv(args.out, header, rows)
    else:
        write_csv(sys.stdout, header, rows)
    return 0


_COMMANDS = {
    "oracle": _cmd_oracle,
    "invert": _cmd_invert,
    "lw": _cmd_lw,
    "sigma": _cmd_sigma,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
}


def dispatch(argv) -> int:
    """Parse argv, run the sub-command, map errors to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "dyson":
            return _cmd_solver(args, minimize=False)
        if args.command == "minimize":
            return _cmd_solver(args, minimize=True)
        return _COMMANDS[args.command](args)
    except LwlatticeError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
