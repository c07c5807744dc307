"""Command line interface: ``gsclt <subcommand> --config PATH [--out DIR]``."""

from __future__ import annotations

import argparse
import os
import sys

from . import harness
from .cavity import DEFAULT_ORDER
from .oracle import check_cavity_derivative

SUBCOMMANDS = (
    "solve-fixed-point",
    "constants",
    "predict-covariance",
    "simulate",
    "verify-clt",
    "check-recursion",
    "check-derivative",
    "check-identities",
)


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsclt", description="Ghatak-Sherrington overlap CLT toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name not in ("check-identities",), help="INI config file")
        p.add_argument("--out", help="output directory (default: stdout)")
        p.add_argument("--seed", type=_u64, help="override master_seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--quadrature-order", type=int, default=None)
    return parser


def _emit(text: str, out_dir: str | None, filename: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, filename), "w") as fh:
        fh.write(text)


def _progress(total: int):
    def report(d):
        if (d + 1) % max(1, total // 10) == 0:
            print(f"  disorder {d + 1}/{total}", file=sys.stderr)

    return report


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.config:
        cfg = harness.load_config(args.config, seed=args.seed, quadrature_order=args.quadrature_order)
    else:
        cfg = None
    order = cfg.quadrature_order if cfg else (args.quadrature_order or DEFAULT_ORDER)
    cmd = args.command

    if cmd == "solve-fixed-point":
        summary, _ = harness.model_summary(cfg.params, order)
        _emit(harness.dumps(summary), args.out, "fixed_point.json")
    elif cmd == "constants":
        _emit(harness.dumps(harness.constants_report(cfg.params, order)), args.out, "constants.json")
    elif cmd == "predict-covariance":
        _emit(harness.dumps(harness.covariance_report(cfg.params, cfg.plan.N_grid, order)), args.out, "covariance.json")
    elif cmd == "simulate":
        rows, _ = harness.simulate_rows(cfg, args.threads, progress=_progress(cfg.plan.n_disorder))
        _emit(harness.rows_to_csv(rows), args.out, "simulate.csv")
    elif cmd == "verify-clt":
        report, _ = harness.run_clt_experiment(cfg, args.threads, progress=_progress(cfg.plan.n_disorder))
        if args.out:
            _emit(harness.clt_rows_csv(report), args.out, "clt_rows.csv")
        _emit(harness.dumps(report), args.out, "clt_summary.json")
        return 0 if report["pass"] else 1
    elif cmd == "check-recursion":
        report = harness.recursion_report(cfg.params, 1, order)
        _emit(harness.dumps(report), args.out, "recursion.json")
        return 0 if report["pass"] else 1
    elif cmd == "check-derivative":
        d = cfg.derivative
        _, rs = harness.model_summary(cfg.params, order)
        reports = check_cavity_derivative(
            cfg.params,
            rs,
            N=d.get("N", 6),
            n=d.get("n", 2),
            t_values=d.get("t_values", (0.0, 0.5)),
            n_disorder=d.get("n_disorder", 2000),
            seed=d.get("seed", cfg.plan.master_seed),
            step=d.get("step", 1e-3),
        )
        out = {"params": cfg.params.as_dict(), "reports": [r.as_dict() for r in reports]}
        out["pass"] = all(r.passed for r in reports)
        _emit(harness.dumps(out), args.out, "derivative.json")
        return 0 if out["pass"] else 1
    elif cmd == "check-identities":
        report = harness.check_identities(cfg)
        _emit(harness.dumps(report), args.out, "identities.json")
        return 0 if report["pass"] else 1
    return 0


def main(argv=None) -> None:
    try:
        code = run(argv)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = 2
    sys.exit(code)


if __name__ == "__main__":
    main()
