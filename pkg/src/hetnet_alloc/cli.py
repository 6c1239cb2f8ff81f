"""Command line entry point ``hetnet-alloc``.

Verbs: ``run``, ``validate-config``, ``oracle-check`` and ``bench``. Errors
exit nonzero with a one-line JSON object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .harness import (
    ITERATION_COLUMNS,
    ConfigError,
    emit_iteration_table,
    load_spec,
    run_experiment,
    spec_from_manifest,
)


def _spec(args):
    if getattr(args, "manifest", None):
        spec = spec_from_manifest(args.manifest)
    elif args.config:
        spec = load_spec(args.config)
    else:
        raise ConfigError("either --config or --manifest is required")
    if getattr(args, "seed", None) is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    return spec


def _cmd_run(args) -> int:
    spec = _spec(args)
    rows = run_experiment(spec, args.out, parallel=args.parallel, timing=args.timing)
    for r in rows:
        print(f"{r.sweep_var}={r.sweep_value} {r.algorithm:16s} {r.receiver:6s} "
              f"throughput {r.mean_throughput:.3f} +- {r.ci95:.3f}")
    return 0


def _cmd_validate(args) -> int:
    spec = _spec(args)
    print(json.dumps({"valid": True, "algorithms": list(spec.algorithms),
                      "sweep": {spec.sweep_var: list(spec.sweep_values)},
                      "drops": spec.drops}))
    return 0


def _cmd_bench(args) -> int:
    spec = _spec(args)
    table = emit_iteration_table(spec, args.out, parallel=args.parallel)
    print(",".join(ITERATION_COLUMNS))
    for row in table:
        print(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                       for c in ITERATION_COLUMNS))
    return 0


def _cmd_oracle(args) -> int:
    from .oracles import run_oracle_suites

    results = run_oracle_suites(seed=args.seed or 0, n=args.instances)
    for name, res in results.items():
        status = "PASS" if res["passed"] else "FAIL"
        print(f"{status} {name}: {res['detail']}")
    return 0 if all(r["passed"] for r in results.values()) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetnet-alloc",
                                     description="Joint association, subchannel and power "
                                                 "allocation experiments for OFDMA HetNets.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write CSV + manifest")
    run.add_argument("--config", help="YAML experiment file")
    run.add_argument("--manifest", help="rerun the experiment recorded in a manifest")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--out", help="output directory (default: output.dir)")
    run.add_argument("--parallel", type=int, default=1, help="worker processes")
    run.add_argument("--timing", action="store_true",
                     help="record wall time per drop (makes output nondeterministic)")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate-config", help="check a YAML experiment file")
    val.add_argument("--config", required=True)
    val.set_defaults(func=_cmd_validate)

    orc = sub.add_parser("oracle-check", help="run the small-instance oracle suites")
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--instances", type=int, default=20)
    orc.set_defaults(func=_cmd_oracle)

    bench = sub.add_parser("bench", help="iteration counts of both convex solvers")
    bench.add_argument("--config", help="YAML experiment file")
    bench.add_argument("--manifest", help="use the experiment recorded in a manifest")
    bench.add_argument("--seed", type=int)
    bench.add_argument("--out", help="also write the table to this directory")
    bench.add_argument("--parallel", type=int, default=1)
    bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 3
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(json.dumps({"error": "runtime", "message": str(exc)}), file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
