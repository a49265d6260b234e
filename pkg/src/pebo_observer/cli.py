"""Command line entry point.

    pebo run <config> [--out DIR] [--check] [--h H] [--t-end T]
    pebo verify-mappings <plant> [--samples N] [--seed S]
    pebo excitation <csv> --from T0 --to T1

Exit status: 0 success (all thresholds met with ``--check``), 1 threshold
violation, 2 configuration or runtime error.
"""

import argparse
import sys
from dataclasses import replace

from .errors import ObserverError, SimulationError
from .harness import excitation_from_csv, run, verify_mappings
from .scenario import load_scenario

EXIT_OK, EXIT_THRESHOLD, EXIT_ERROR = 0, 1, 2


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def cmd_run(args):
    config = load_scenario(args.config)
    if args.h is not None or args.t_end is not None:
        integ = config.integrator
        integ = type(integ)(
            h=integ.h if args.h is None else args.h,
            t_end=integ.t_end if args.t_end is None else args.t_end,
            record_stride=integ.record_stride,
        )
        config = replace(config, integrator=integ)
    art = run(config, out_dir=args.out)
    m = art.metrics
    print(f"scenario      {config.name}")
    print(f"output        {art.out_dir}")
    for key in ("t_e", "Delta_min_after_te", "alpha", "x_err_final_rel", "eta_err_final_rel",
                "TI_err_final_rel", "eta_decay_rate", "TI_decay_rate"):
        print(f"{key:<20}{_fmt(m[key])}")
    if not args.check:
        return EXIT_OK
    for name, ok, detail in art.checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<18} {detail}")
    return EXIT_OK if art.passed else EXIT_THRESHOLD


def cmd_verify(args):
    rep = verify_mappings(args.plant, samples=args.samples, seed=args.seed)
    print(f"mapping set   {rep.plant}  ({rep.samples} samples, {rep.rejected} rejected)")
    for name, res in rep.max_heterogeneity.items():
        print(f"  {name:<6} max relative heterogeneity residual {res:.3e}")
    print(f"  theta regression max relative error {rep.max_theta_rel:.3e}")
    print(f"  T_I regression max relative error   {rep.max_ti_rel:.3e}")
    print(f"  lower bounds: M_theta {'ok' if rep.theta_bound_ok else 'VIOLATED'}, "
          f"M_TI {'ok' if rep.ti_bound_ok else 'VIOLATED'}")
    for f in rep.failures:
        print(f"FAIL  {f}")
    print("PASS" if rep.ok else "FAIL")
    return EXIT_OK if rep.ok else EXIT_THRESHOLD


def cmd_excitation(args):
    alpha = excitation_from_csv(args.csv, args.t_from, args.t_to)
    print(f"alpha = {alpha!r}  over [{args.t_from}, {args.t_to}]")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="pebo", description="Adaptive observer for overparametrized LTI plants.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write CSV + metrics")
    r.add_argument("config", help="scenario file or bundled scenario name")
    r.add_argument("--out", help="output directory (default from the config)")
    r.add_argument("--check", action="store_true", help="exit 1 unless every acceptance threshold holds")
    r.add_argument("--h", type=float, help="override integrator step")
    r.add_argument("--t-end", type=float, dest="t_end", help="override final time")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify-mappings", help="property suite for a plant's mapping set")
    v.add_argument("plant")
    v.add_argument("--samples", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("excitation", help="excitation level of a recorded regressor")
    e.add_argument("csv", help="regressor.csv, trajectory.csv or the run directory")
    e.add_argument("--from", type=float, dest="t_from", required=True)
    e.add_argument("--to", type=float, dest="t_to", required=True)
    e.set_defaults(func=cmd_excitation)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors already; keep --help at 0
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SimulationError as err:
        print(f"error: simulation aborted: {err}", file=sys.stderr)
        return EXIT_ERROR
    except (ObserverError, OSError, ValueError) as err:
        field = getattr(err, "field", None)
        where = f" [{field}]" if field else ""
        print(f"error{where}: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
