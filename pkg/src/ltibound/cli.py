"""Command-line interface.

Subcommands:

* validate        check a system or run-configuration file
* certify         run the certification pipeline and write artifacts
* coverage        empirical coverage of both bounds over many trajectories
* reproduce-fig1  certification sweep for the bundled example with plot data

Exit codes: 0 on success, 1 for invalid inputs or failed validation,
2 for numeric failures.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bounds import compute_constants
from .certify import certify, coverage, reproduce_example
from .config import example_config_path, load_config, load_system
from .errors import InputError, LtiboundError, NumericError
from .loss import generalization_loss
from .lti import validate_generator


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltibound",
        description="Certified generalization bounds for LTI predictors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="validate a system or run configuration")
    p_val.add_argument("--config", required=True, help="JSON file to validate")

    p_cert = sub.add_parser("certify", help="run the certification pipeline")
    p_cert.add_argument("--config", required=True, help="run-configuration JSON")
    p_cert.add_argument("--out-dir", required=True, help="artifact directory")
    p_cert.add_argument(
        "--mode",
        choices=["input-only", "input-output", "both"],
        default="both",
        help="which hypothesis class(es) to certify",
    )
    p_cert.add_argument(
        "--no-chains",
        action="store_true",
        help="skip the Metropolis chains (faster; no chain artifacts)",
    )

    p_cov = sub.add_parser("coverage", help="empirical coverage of the bounds")
    p_cov.add_argument("--config", required=True, help="run-configuration JSON")
    p_cov.add_argument("--out-dir", default=None, help="artifact directory")
    p_cov.add_argument("--trials", type=int, default=200, help="number of trajectories")
    p_cov.add_argument("--seed", type=int, default=0, help="base trial seed")
    p_cov.add_argument("--N", type=int, default=200, help="trajectory length")
    p_cov.add_argument(
        "--mode",
        choices=["input-only", "input-output", "both"],
        default="both",
    )
    p_cov.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p_fig = sub.add_parser(
        "reproduce-fig1", help="certification sweep for the bundled example"
    )
    p_fig.add_argument(
        "--config",
        default=None,
        help="run-configuration JSON (default: the bundled example)",
    )
    p_fig.add_argument("--out-dir", required=True, help="artifact directory")
    p_fig.add_argument(
        "--mode",
        choices=["input-only", "input-output", "both"],
        default="both",
    )
    return parser


def _modes_arg(mode: str):
    return None if mode == "both" else [mode]


def _cmd_validate(args) -> int:
    with open(args.config) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config} is not valid JSON: {exc}") from exc
    if isinstance(data, dict) and "classes" in data:
        cfg = load_config(args.config)
        report = validate_generator(cfg.generator)
        _print_report(report)
        if not report.ok:
            return 1
        print(f"classes: {', '.join(sorted(m.value for m in cfg.classes))}")
        print("configuration ok")
        return 0
    g, f = load_system(args.config)
    report = validate_generator(g)
    _print_report(report)
    if not report.ok:
        return 1
    if f is not None:
        consts = compute_constants(g, f)
        print(f"predictor mode: {f.mode.value}")
        print(f"generalization loss: {generalization_loss(g, f):.10g}")
        print(f"G_e: {consts.G_e:.10g}")
        print(f"G: {consts.G:.10g}")
    print("system ok")
    return 0


def _print_report(report) -> None:
    print(f"rho(A_g) = {report.rho_Ag:.6g}")
    print(f"rho(A_g - K_g C_g) = {report.rho_closed:.6g}")
    print(f"Q_e positive semidefinite: {'yes' if report.q_e_psd else 'no'}")


def _cmd_certify(args) -> int:
    cfg = load_config(args.config)
    rows = certify(
        cfg,
        modes=_modes_arg(args.mode),
        out_dir=args.out_dir,
        write_chains=not args.no_chains,
    )
    for row in rows:
        ev = row.evaluation
        print(
            f"{ev.mode_value} N={ev.N}: "
            f"KL r_hat={ev.kl.r_hat:.6g} (lambda={ev.kl.lam:.6g}), "
            f"Renyi r_hat={ev.renyi.r_hat:.6g} (r={ev.renyi.r})"
        )
    print(f"artifacts written to {args.out_dir}")
    return 0


def _cmd_coverage(args) -> int:
    cfg = load_config(args.config)
    modes = _modes_arg(args.mode)
    if modes is None:
        modes = sorted((m.value for m in cfg.classes))
    ok = True
    for mode in modes:
        result = coverage(
            cfg,
            mode,
            args.trials,
            args.seed,
            N=args.N,
            jobs=args.jobs,
            out_dir=args.out_dir,
        )
        target = 1.0 - 2.0 * cfg.delta
        print(
            f"{mode}: KL coverage {result.kl_rate:.3f}, "
            f"Renyi coverage {result.renyi_rate:.3f} "
            f"(nominal at least {target:.3f}, {args.trials} trials, N={args.N})"
        )
        ok = ok and result.kl_rate >= target and result.renyi_rate >= target
    return 0 if ok else 1


def _cmd_fig(args) -> int:
    path = args.config if args.config is not None else example_config_path()
    cfg = load_config(path)
    rows = reproduce_example(cfg, args.out_dir, modes=_modes_arg(args.mode))
    for row in rows:
        ev = row.evaluation
        print(
            f"{ev.mode_value} N={ev.N}: KL total="
            f"{ev.post_empirical_kl + ev.kl.r_hat:.6g}, "
            f"Renyi total={ev.post_empirical_renyi + ev.renyi.r_hat:.6g}"
        )
    print(f"figure data and plot script written to {args.out_dir}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "validate": _cmd_validate,
        "certify": _cmd_certify,
        "coverage": _cmd_coverage,
        "reproduce-fig1": _cmd_fig,
    }
    try:
        return handlers[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (LtiboundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
