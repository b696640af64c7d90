"""Command line entry point: ``pmsim run|sweep|fit-k|compare <config>``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, NumericalGuardError, OrthogonalBranchError
from .harness import ExperimentConfig, load_config, report_result, run_experiment, sweep_compare, write_csv, write_plot_script

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("pmsim")


def _parser():
    p = argparse.ArgumentParser(prog="pmsim", description="Protective-measurement simulator")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    common.add_argument("--out", help="override the CSV output path")
    common.add_argument("--threads", type=int, help="worker threads for sweeps")
    common.add_argument("--plot", action="store_true", help="also write a gnuplot script next to the CSV")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the experiment named by the config's kind")
    sw = sub.add_parser("sweep", parents=[common], help="discrepancy sweep over one parameter")
    sw.add_argument("--param", required=True, choices=["N", "T", "var_x0"])
    sw.add_argument("--values", required=True, help="comma-separated values, e.g. 25,50,100")
    sub.add_parser("fit-k", parents=[common], help="fit the Z-PM pointer constants")
    sub.add_parser("compare", parents=[common], help="quantum vs model variance at the config point")
    return p


def _print_result(result):
    print(",".join(result.columns))
    for row in result.rows:
        print(",".join(str(v) for v in row))
    for key in sorted(result.summary):
        print(f"# {key} = {result.summary[key]}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {"seed": args.seed, "output": args.out, "threads": args.threads}
    try:
        raw = load_config(args.config)
        if args.command == "fit-k":
            raw = {**raw, "kind": "fit-k"}
        elif args.command in ("compare", "sweep"):
            raw = {**raw, "kind": "compare"}
        cfg = ExperimentConfig.from_dict(raw, overrides)
        if args.command == "sweep":
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            values = [int(v) if args.param == "N" else v if args.param == "T" else float(v) for v in values]
            for v in values:
                cfg.point(args.param, v).check_point()
            result = report_result(cfg, sweep_compare(cfg, args.param, values))
            if cfg.output:
                write_csv(cfg.output, result, cfg)
                if args.plot:
                    write_plot_script(cfg.output, result)
        else:
            result = run_experiment(cfg, plot=args.plot)
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_CONFIG
    except (NumericalGuardError, OrthogonalBranchError) as exc:
        log.error("numerical guard: %s", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO
    except ValueError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_CONFIG
    _print_result(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
