"""
Command-line entry point: ``grap <verb> [options]``.

Verbs: run, sweep, benchmark, tuned, verify, generate.
Exit codes: 0 success, 2 config error, 3 numerical failure, 4 verification failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from grapApp.config import config as settings
from grapApp.database import get_repository
from grapApp.errors import ConfigError, FlowError, GrapError, VerificationError
from grapApp.harness import sweep as sweeps
from grapApp.harness.benchmark import benchmark
from grapApp.harness.experiments import EXPERIMENTS, run_experiments
from grapApp.harness.graph import run_tuned
from grapApp.harness.runner import run, write_outputs
from grapApp.harness.utils.state import RunConfig, load_run_config, parse_run_config
from grapApp.oracles import SUITES, run_suites
from grapApp.tasks import export_dataset, generate

logger = logging.getLogger("grapApp")


def _load(path: Optional[str]) -> RunConfig:
    return load_run_config(path) if path else RunConfig()


def _output_dir(args, config) -> Path:
    if args.output_dir:
        return Path(args.output_dir)
    if config.output_dir:
        return Path(config.output_dir)
    return Path(settings.OUTPUT_DIR) / f"{config.method.name}-{config.config_hash()[:12]}"


def _with_method(config: RunConfig, name: str) -> RunConfig:
    """Re-validated copy with another method; accepts the fixed:w1,w2 shorthand."""
    body = config.model_dump(mode="json")
    body["method"] = {**body["method"], "name": name}
    if not name.startswith("fixed"):
        body["method"]["fixed_weights"] = None
    return parse_run_config(body)


def _apply_overrides(args, config: RunConfig) -> RunConfig:
    if getattr(args, "method", None):
        config = _with_method(config, args.method)
    if getattr(args, "steps", None):
        config = parse_run_config({**config.model_dump(mode="json"), "steps": args.steps})
    if getattr(args, "seed", None) is not None:
        config = config.with_seed(args.seed)
    return config


# ----- Verbs -----


def cmd_run(args) -> int:
    config = _apply_overrides(args, _load(args.config))
    result = run(config)
    paths = write_outputs(result, _output_dir(args, config))
    logger.info("wrote %s", paths["trajectory"].parent)
    print(json.dumps(result.summary.model_dump(), indent=2))
    return 0


def cmd_sweep(args) -> int:
    base = _apply_overrides(args, _load(args.config))
    methods = args.methods or [base.method.name]
    entries = []
    for name in methods:
        config = _with_method(base, name)
        if args.fractions:
            entries += sweeps.labeled_fraction_configs(config, args.fractions, args.seeds)
        else:
            entries += sweeps.seed_configs(config, args.seeds, config.method.name)
    if args.grid is not None:
        entries += sweeps.grid_search_configs(base, args.grid or (0.0, 0.5, 1.0))

    use_cache = settings.USE_RUN_CACHE and not args.no_cache
    repository = get_repository() if use_cache else None
    out = Path(args.output_dir or Path(settings.OUTPUT_DIR) / "sweep")
    table = sweeps.sweep(entries, args.workers, repository, out)
    print(table.to_string(index=False))
    return 0


def cmd_benchmark(args) -> int:
    base = _load(args.config) if args.config else None
    report = benchmark(ks=args.ks, steps=args.steps, warmup=args.warmup, base=base)
    text = report.model_dump_json(indent=2)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    print(text)
    return 0


def cmd_tuned(args) -> int:
    config = _apply_overrides(args, _load(args.config))
    state = run_tuned(config, str(_output_dir(args, config)), args.burn_in)
    print(json.dumps(state["report"], indent=2, default=str))
    if state.get("error"):
        raise FlowError(state["error"], state.get("exit_code") or GrapError.exit_code)
    return 0


def cmd_verify(args) -> int:
    results = run_suites(args.suites, seed=args.seed, workers=args.workers)
    if args.experiments is not None:
        base = _load(args.config) if args.config else None
        results += run_experiments(args.experiments, base=base, workers=args.workers)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<30} {r.n_failures}/{r.n_instances} failures  worst={r.worst:.3e}  {r.seconds:.1f}s  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerificationError(f"failed: {', '.join(failed)}")
    return 0


def cmd_generate(args) -> int:
    config = _apply_overrides(args, _load(args.config))
    path = export_dataset(generate(config.task), args.output)
    logger.info("wrote %s", path)
    return 0


# ----- Parser -----


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grap",
        description="Loss-weight tuning by downstream gradient alignment",
    )
    parser.add_argument("--log-level", default=None, help=f"default {settings.LOG_LEVEL}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", "-c", help="YAML run config (defaults if omitted)")
        p.add_argument("--output-dir", "-o")
        if seed:
            p.add_argument("--seed", type=int)
        p.add_argument("--steps", type=int)

    p = sub.add_parser("run", help="train one model")
    common(p)
    p.add_argument("--method", help="equal, grap, gradnorm, dwa, mgda, pcgrad or fixed:w1,w2,...")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="many runs, aggregated over seeds")
    common(p, seed=False)
    p.add_argument("--methods", nargs="+")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    p.add_argument("--fractions", type=float, nargs="+")
    p.add_argument("--grid", type=float, nargs="*", help="fixed-weight grid levels")
    p.add_argument("--workers", type=int, default=settings.SWEEP_WORKERS)
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("benchmark", help="per-step cost of plain, embedding and naive paths")
    p.add_argument("--config", "-c")
    p.add_argument("--ks", type=int, nargs="+", default=[2, 4, 8, 16])
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--warmup", type=int, default=50)
    p.add_argument("--output", help="write the JSON report here")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("tuned", help="grap run, then retrain with its median weights")
    common(p)
    p.add_argument("--burn-in", type=float)
    p.set_defaults(func=cmd_tuned)

    p = sub.add_parser("verify", help="randomized oracle suites")
    p.add_argument("--config", "-c", help="base config for --experiments")
    p.add_argument("--suites", nargs="+", choices=sorted(SUITES))
    p.add_argument(
        "--experiments",
        nargs="*",
        choices=sorted(EXPERIMENTS),
        help="also run the training experiments (all if none named)",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("generate", help="export the synthetic dataset as CSV")
    p.add_argument("output")
    p.add_argument("--config", "-c")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except GrapError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
