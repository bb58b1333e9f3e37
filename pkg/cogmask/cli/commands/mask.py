"""
`cogmask mask <dataset-file> --eta <v>`: margin-constrained masking of the dataset's responses
"""
import json

from cogmask.cli.dependencies import get_dataset, get_strategy, validate_eta
from cogmask.core.exceptions import EXIT_OK
from cogmask.domain.problem import MaskingProblem
from cogmask.schemas.configs import SolverConfig
from cogmask.services.dataset_io import save_dataset
from cogmask.services.mask_determ import MaskingKind, default_kind, mask_constraint, mask_utility


def register(subparsers) -> None:
    parser = subparsers.add_parser("mask", help="Design masked responses under a margin cap")
    parser.add_argument("dataset", help="Dataset file holding the naive responses")
    parser.add_argument("--eta", type=float, required=True, help="Masking extent in [0, 1]")
    parser.add_argument("--seed", type=int, required=True, help="Seed of the dithered solver starts")
    parser.add_argument("--utility", default="sqrt")
    parser.add_argument("--kappa", type=float, default=2.0)
    parser.add_argument("--starts", type=int, default=8, help="Solver starting points")
    parser.add_argument("--output", default=None, help="Write the masked dataset here")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    dataset = get_dataset(args.dataset)
    eta = validate_eta(args.eta)
    strategy = get_strategy(dataset, args.utility, args.kappa)
    problem = MaskingProblem(strategy, dataset, eta, SolverConfig(multi_starts=args.starts, seed=args.seed))
    solve = mask_utility if default_kind(problem) is MaskingKind.UTILITY else mask_constraint
    report = solve(problem)
    if args.output:
        save_dataset(args.output, dataset.with_responses(report.masked_responses))
    print(json.dumps(report.summary(), indent=2))
    return EXIT_OK
