"""``antgp`` command line: run configured experiments and write CSV results."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from antgp import ant_world, engine, harness
from antgp.adaptive_control import MECHANISMS
from antgp.gp_core import ConfigurationError

log = logging.getLogger("antgp")


def _run_one(args):
    config, run_index = args
    return engine.run_single(config, run_index)


def execute(spec: harness.ExperimentSpec, jobs: int = 1) -> dict[str, list[engine.RunTrace]]:
    """Run every (label, run) pair; results are independent of ``jobs``."""
    tasks = [(label, config, k) for label, config in spec.experiments for k in range(config.runs)]
    results: dict[str, list[engine.RunTrace]] = {label: [] for label in spec.labels}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            traces = list(pool.map(_run_one, [(c, k) for _, c, k in tasks]))
    else:
        traces = []
        for label, config, k in tasks:
            trace = engine.run_single(config, k)
            log.info("%s run %d: best %d after %d generations", label, k, trace.best_fitness,
                     trace.generations_used)
            traces.append(trace)
    for (label, _, _), trace in zip(tasks, traces):
        results[label].append(trace)
    return results


def apply_overrides(spec: harness.ExperimentSpec, seed=None, runs=None, mechanism=None,
                    trail=None) -> harness.ExperimentSpec:
    experiments = spec.experiments
    if mechanism is not None:
        if mechanism not in MECHANISMS:
            raise ConfigurationError(f"unknown mechanism {mechanism!r}; see --list-mechanisms")
        chosen = [(label, c) for label, c in experiments if c.mechanism == mechanism]
        if not chosen:
            _, template = experiments[0]
            chosen = [(mechanism, replace(template, mechanism=mechanism))]
        experiments = chosen
    updated = []
    for label, config in experiments:
        changes = {}
        if seed is not None:
            changes["base_seed"] = seed
        if runs is not None:
            if runs < 1:
                raise ConfigurationError("--runs must be >= 1")
            changes["runs"] = runs
        if trail is not None:
            changes["trail"] = trail
        updated.append((label, replace(config, **changes)))
    return replace(spec, experiments=updated)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="antgp", description=__doc__)
    parser.add_argument("--list-mechanisms", action="store_true", help="print mechanism names and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run the experiments in a config file")
    run.add_argument("config", help="INI config path, or 'reference' for the bundled reference config")
    run.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    run.add_argument("--seed", type=int, help="override base_seed")
    run.add_argument("--runs", type=int, help="override runs per experiment")
    run.add_argument("--mechanism", help="run a single mechanism only")
    run.add_argument("--trail", type=Path, help="trail file instead of the configured one")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list_mechanisms:
        for name, description in MECHANISMS.items():
            print(f"{name:14s} {description}")
        return 0
    if args.command != "run":
        parser.print_help()
        return 2
    try:
        if args.config == "reference" and not Path(args.config).exists():
            spec = harness.parse_config(harness.reference_config_text())
        else:
            spec = harness.load_config(args.config)
        trail = None
        if args.trail is not None:
            trail = ant_world.load_trail(args.trail)
        spec = apply_overrides(spec, seed=args.seed, runs=args.runs, mechanism=args.mechanism, trail=trail)
    except (OSError, ConfigurationError, ant_world.TrailFormatError) as exc:
        print(f"antgp: error: {exc}", file=sys.stderr)
        return 2

    try:
        results = execute(spec, jobs=max(1, args.jobs))
        report = harness.write_outputs(args.out, results, spec.emit_traces, spec.emit_summary)
    except Exception as exc:  # noqa: BLE001 - surface as a nonzero exit with the diagnostic
        print(f"antgp: run failed: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(report.render())
    return 0


if __name__ == "__main__":
    sys.exit(main())
