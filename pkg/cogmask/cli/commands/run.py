"""
`cogmask run <config-file>`: execute one configured experiment
"""
import json

from cogmask.services.experiments import load_config, run_experiment


def register(subparsers) -> None:
    parser = subparsers.add_parser("run", help="Run an experiment described by a YAML file")
    parser.add_argument("config", help="Experiment configuration file")
    parser.add_argument("--seed", type=int, default=None, help="Override the seed stored in the file")
    parser.add_argument("--output-dir", default=None, help="Override the artifact directory")
    parser.add_argument("--workers", type=int, default=None, help="Worker threads for sweep cells")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    config = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.output_dir is not None:
        updates["output_dir"] = args.output_dir
    if updates:
        config = config.model_copy(update=updates)
    outcome = run_experiment(config, workers=args.workers)
    report = {
        "experiment": config.experiment,
        "passed": outcome.passed,
        "assertions": outcome.summary["assertions"],
        "artifacts": [str(p) for p in outcome.artifacts],
    }
    print(json.dumps(report, indent=2))
    return outcome.exit_code
