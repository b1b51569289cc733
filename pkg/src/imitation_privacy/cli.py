"""Command-line interface.

Subcommands: ``run`` a config, ``list`` registered scenarios, ``replay`` a
report, and ``selftest`` (smoke-run every scenario's bundled defaults).
Exit codes: 0 all assertions pass, 1 assertion or replay failure, 2 config
or runtime error.
"""

import argparse
import dataclasses
import json
import sys

from .harness import (
    ConfigError,
    list_scenarios,
    load_config,
    parse_config,
    replay_report,
    run_experiment,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imitation-privacy",
        description="Run, list, and replay imitation-privacy experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config (JSON)")
    run_p.add_argument("config", help="path to the experiment config")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    run_p.add_argument("--out", default=None, help="override the output directory")
    run_p.add_argument("--jobs", type=int, default=1, help="worker count")
    run_p.add_argument("--verbose", action="store_true")

    list_p = sub.add_parser("list", help="list registered scenarios")
    list_p.add_argument("--verbose", action="store_true")

    replay_p = sub.add_parser("replay", help="re-run a report and compare payloads")
    replay_p.add_argument("report", help="path to report.json")
    replay_p.add_argument("--jobs", type=int, default=1)
    replay_p.add_argument("--verbose", action="store_true")

    self_p = sub.add_parser("selftest", help="smoke-run every scenario's defaults")
    self_p.add_argument("--seed", type=int, default=None)
    self_p.add_argument("--jobs", type=int, default=1)
    self_p.add_argument("--verbose", action="store_true")
    return parser


def _print_report(report, verbose: bool):
    for a in report.assertions:
        status = "pass" if a["passed"] else "FAIL"
        detail = f"  ({a['detail']})" if a["detail"] else ""
        print(f"[{status}] {report.config.scenario}: {a['name']}{detail}")
    if verbose:
        print(json.dumps(report.records, sort_keys=True, indent=2, default=str))
    for est in report.estimates:
        print(f"  rho[{est.label}] = {est.rho_hat:.6g} "
              f"(se {est.std_error:.3g}, skipped {est.skipped_fraction:.3g})")


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.out is not None:
        config = dataclasses.replace(config, out_dir=args.out)
    report = run_experiment(config, jobs=args.jobs, cli_seed=args.seed)
    _print_report(report, args.verbose)
    if config.out_dir:
        print(f"report written to {config.out_dir}/report.json")
    return 0 if report.passed else 1


def _cmd_list(args) -> int:
    for entry in list_scenarios():
        print(f"{entry['name']}: {entry['description']}")
        if args.verbose:
            print(f"    operations: {', '.join(entry['operations'])}")
            if entry["required_params"]:
                print(f"    params: {', '.join(entry['required_params'])}")
    return 0


def _cmd_replay(args) -> int:
    matches, fresh = replay_report(args.report, jobs=args.jobs)
    if matches:
        print("replay: numeric payloads are byte-identical")
        return 0 if fresh.passed else 1
    print("replay: PAYLOAD MISMATCH")
    return 1


def _cmd_selftest(args) -> int:
    from .scenarios import SCENARIOS

    failures = 0
    for name in sorted(SCENARIOS):
        config = parse_config(SCENARIOS[name].default_config())
        report = run_experiment(config, jobs=args.jobs, cli_seed=args.seed)
        ok = report.passed
        failures += 0 if ok else 1
        print(f"[{'pass' if ok else 'FAIL'}] {name} "
              f"({report.wall_time_s:.2f}s, {len(report.assertions)} assertions)")
        if args.verbose and not ok:
            _print_report(report, verbose=False)
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "list": _cmd_list,
        "replay": _cmd_replay,
        "selftest": _cmd_selftest,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure, not an assertion outcome
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
