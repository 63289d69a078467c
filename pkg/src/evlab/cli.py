"""Command-line entry points.

    evlab simulate --config <file> --out <dir>
    evlab verify   --traj <dir> [--forms interval,local,reduced] [--tol-scale x]
    evlab sweep-nu --config <file> --nus 0.1,0.05,0.025 --out <dir>
    evlab sweep-n  --config <file> --ns 4,8,16 --out <dir>
    evlab perturb  --config <file> --eps 1e-2,1e-3 --out <dir>
    evlab select   --candidates <dir> [--out <dir>]

Exit codes: 0 pass, 1 verification failure, 2 usage/format error, 3 blow-up,
4 incomparable selection. EVLAB_THREADS bounds the sweep worker pool.
"""

from __future__ import annotations

import argparse
import sys

from . import experiments, io
from .errors import BlowUpError, ConfigurationError, FormatError, UsageError

EXIT_PASS = 0
EXIT_VERIFICATION_FAILURE = 1
EXIT_USAGE = 2
EXIT_BLOWUP = 3
EXIT_INCOMPARABLE = 4


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated float list, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evlab",
        description="pseudo-spectral incompressible flow with energy-variational"
        " certificates and maximal-dissipation selection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a run and emit snapshots + trace")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="run the certificate battery on a trajectory")
    p.add_argument("--traj", required=True)
    p.add_argument("--forms", default="interval,local,reduced")
    p.add_argument("--tol-scale", type=float, default=1.0)

    p = sub.add_parser("sweep-nu", help="vanishing-viscosity sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--nus", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep-n", help="Galerkin-dimension sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--ns", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("perturb", help="continuous-dependence study")
    p.add_argument("--config", required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("select", help="maximal-dissipation selection over candidates")
    p.add_argument("--candidates", required=True)
    p.add_argument("--out", default=None)

    return parser


def _dispatch(args) -> int:
    if args.command == "simulate":
        config = io.load_config(args.config)
        summary = experiments.run_simulate(config, args.out)
        print(
            "simulate: {} snapshots, energy-balance max |residual| {:.3e}, "
            "total drift {:.3e}".format(
                summary["snapshots"],
                summary["energy_balance_max_abs_residual"],
                summary["energy_balance_total_drift"],
            )
        )
        return EXIT_PASS

    if args.command == "verify":
        forms = tuple(f.strip() for f in args.forms.split(",") if f.strip())
        report = experiments.run_verify(args.traj, forms, args.tol_scale)
        failed = report["failed_checks"]
        print(
            "verify: {} counted checks, {} failed, xi_max {:.3e}".format(
                report["counted_checks"], len(failed), report["candidate_xi_max"]
            )
        )
        for rec in failed[:10]:
            print(
                "  FAIL {}[{}] vs {}: residual {:.3e} > tol {:.3e}".format(
                    rec["check_kind"], rec["form"], rec["test_field_id"],
                    rec["residual"], rec["tol"],
                )
            )
        return EXIT_PASS if report["overall_verdict"] else EXIT_VERIFICATION_FAILURE

    if args.command == "sweep-nu":
        config = io.load_config(args.config)
        report = experiments.sweep_viscosity(config, _floats(args.nus), args.out)
        gaps = [c["max_t_energy_gap"] for c in report["cauchy_differences"]]
        print("sweep-nu: energy gaps {}".format(
            ", ".join(f"{g:.3e}" for g in gaps)))
        if report["failures"]:
            print("  failures: {}".format(report["failures"]))
            return EXIT_BLOWUP
        ok = report["inviscid_rei"]["all_pass"]
        return EXIT_PASS if ok else EXIT_VERIFICATION_FAILURE

    if args.command == "sweep-n":
        config = io.load_config(args.config)
        report = experiments.sweep_galerkin(config, _ints(args.ns), args.out)
        print("sweep-n: xi(T) per n: {}".format(
            ", ".join(f"{r['n']}:{r['coarse_grained_xi_final']:.3e}"
                      for r in report["rows"])))
        return EXIT_PASS if report["xi_decreasing_in_n"] else EXIT_VERIFICATION_FAILURE

    if args.command == "perturb":
        config = io.load_config(args.config)
        report = experiments.perturb_data(config, _floats(args.eps), args.out)
        for row in report["rows"]:
            print(
                "perturb eps={:.3e}: max Ebar {:.3e}, distance {:.3e}, "
                "condition(a) slack {:.3e}".format(
                    row["eps"], row["max_ebar"], row["solver_distance_l2l2"],
                    row["condition_a_min_slack"],
                )
            )
        ok = report["first_order_smallness"] and all(
            r["condition_a_holds"] for r in report["rows"]
        )
        return EXIT_PASS if ok else EXIT_VERIFICATION_FAILURE

    if args.command == "select":
        report = experiments.run_select(args.candidates, args.out)
        if "selected_id" in report:
            print(
                "select: {} (xi_max {:.3e}, weak residual max {:.3e})".format(
                    report["selected_id"], report["final_xi_max"],
                    report["weak_residual_max"],
                )
            )
            return EXIT_PASS if report["selected_ok"] else EXIT_VERIFICATION_FAILURE
        if "incomparable" in report:
            print("select: incomparable candidates, crossings at {}".format(
                report["incomparable"]))
        else:
            print("select: convexity contradiction: {}".format(
                report["convexity_contradiction"]))
        return EXIT_INCOMPARABLE

    raise UsageError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _dispatch(args)
    except BlowUpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (UsageError, FormatError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
