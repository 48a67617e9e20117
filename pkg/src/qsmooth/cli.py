"""Command-line entry point: ``qsmooth {single,average,hmm-check,convergence}``.

Exit codes: 0 success, 2 configuration error, 3 numerical-invariant failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .errors import (
    ContractError,
    DegenerateEnsembleError,
    ImpossibleRecordError,
    PositivityError,
    StepSizeError,
)
from .experiment import (
    ExperimentConfig,
    InvariantError,
    check_average,
    run_average_purity,
    run_convergence,
    run_hmm_check,
    run_single_trajectory,
    write_results,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_DEFAULT_OUTPUT = {
    "single": "single",
    "average": "average",
    "hmm-check": "hmm_check",
    "convergence": "convergence",
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--omega", type=float, default=20.0, help="Rabi frequency")
    common.add_argument("--gamma", type=float, default=1.0, help="decay rate")
    common.add_argument("--eta", type=float, default=10 / 11, help="detection efficiency")
    common.add_argument("--phi", type=float, default=math.pi / 2, help="local-oscillator phase")
    common.add_argument("--dt", type=float, default=1e-3)
    common.add_argument("--t-final", type=float, default=4.0)
    common.add_argument("--n-y-records", type=int, default=1)
    common.add_argument("--n-u-samples", type=int, default=1000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--output", "-o", default=None, help="results file (default: <cmd>.<format>)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = argparse.ArgumentParser(prog="qsmooth", description="Quantum state smoothing experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    single = sub.add_parser("single", parents=[common], help="one true record: rho_T, rho_F, rho_S")
    single.add_argument("--record-index", type=int, default=0)
    sub.add_parser("average", parents=[common], help="purity averaged over many records")
    hmm = sub.add_parser("hmm-check", parents=[common], help="compare with the classical HMM smoother (sigma_z homodyne, phase 0)")
    hmm.add_argument("--kappa", type=float, default=1.0, help="sigma_z homodyne strength")
    hmm.add_argument("--z-threshold", type=float, default=3.0)
    conv = sub.add_parser("convergence", parents=[common], help="drift between dt and dt/2")
    conv.add_argument("--record-index", type=int, default=0)
    return p


def _config(args) -> ExperimentConfig:
    output = args.output or f"{_DEFAULT_OUTPUT[args.command]}.{args.format}"
    return ExperimentConfig(
        omega=args.omega,
        gamma=args.gamma,
        eta=args.eta,
        phi=args.phi,
        dt=args.dt,
        t_final=args.t_final,
        n_y_records=args.n_y_records,
        n_u_samples=args.n_u_samples,
        seed=args.seed,
        output_path=output,
        output_format=args.format,
        kappa=getattr(args, "kappa", 1.0),
        record_index=getattr(args, "record_index", 0),
    )


def _run(args, config: ExperimentConfig) -> int:
    meta = {"command": args.command, "seed": config.seed}
    if args.command == "single":
        rows, run = run_single_trajectory(config)
        meta.update(jumps=run.record.jump_count, jump_times=" ".join(f"{t!r}" for t in run.jump_times))
        write_results(rows, config.output_path, config.output_format, meta)
        print(json.dumps({"rows": len(rows), "jumps": run.record.jump_count, "output": config.output_path}))
        return EXIT_OK
    if args.command == "average":
        result = run_average_purity(config)
        check_average(result)
        summary = result.summary()
        meta.update(summary)
        write_results(result.rows(), config.output_path, config.output_format, meta)
        print(json.dumps(summary))
        return EXIT_OK
    if args.command == "hmm-check":
        check = run_hmm_check(config)
        summary = check.summary()
        write_results([summary], config.output_path, config.output_format, meta)
        print(json.dumps(summary))
        if max(check.z_F, check.z_S) > args.z_threshold:
            print(
                f"quantum and HMM smoothers disagree beyond {args.z_threshold} standard errors",
                file=sys.stderr,
            )
            return EXIT_NUMERICAL
        return EXIT_OK
    rows = run_convergence(config)
    summary = {k: max(r[k] for r in rows) for k in ("drift_F", "drift_S", "drift_T")}
    meta.update(summary)
    write_results(rows, config.output_path, config.output_format, meta)
    print(json.dumps(summary))
    return EXIT_OK


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        config = _config(args)
    except ContractError as exc:
        print(f"qsmooth: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _run(args, config)
    except (StepSizeError, ContractError) as exc:
        print(f"qsmooth: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        InvariantError,
        DegenerateEnsembleError,
        PositivityError,
        ImpossibleRecordError,
    ) as exc:
        print(f"qsmooth: numerical invariant failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
