"""
`cogmask irl <dataset-file>`: feasibility verdict, margin and reconstruction summary
"""
import json

from cogmask.cli.dependencies import get_dataset, get_strategy
from cogmask.core.exceptions import EXIT_OK
from cogmask.domain.dataset import DatasetKind
from cogmask.services.margins import margin_constraint, margin_utility
from cogmask.services.rp_core import check_rationalizable, reconstruct_strategy, relative_optimality_violations


def register(subparsers) -> None:
    parser = subparsers.add_parser("irl", help="Test a dataset for rationalizability")
    parser.add_argument("dataset", help="Dataset file written by save_dataset")
    parser.add_argument("--utility", default="sqrt", help="Utility assumed for the margin (constraint-known data)")
    parser.add_argument("--kappa", type=float, default=2.0, help="Norm order of the constraint (utility-known data)")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    dataset = get_dataset(args.dataset)
    cert = check_rationalizable(dataset)
    strategy = get_strategy(dataset, args.utility, args.kappa)
    measure = margin_utility if dataset.kind is DatasetKind.CONSTRAINT_KNOWN else margin_constraint
    margin = measure(strategy, dataset)
    report = {
        "kind": dataset.kind.value,
        "horizon": dataset.horizon,
        "verdict": cert.status.value,
        "margin": margin.epsilon,
        "binding_pair": list(margin.binding_pair) if margin.binding_pair else None,
    }
    if cert.feasible:
        reconstruction = reconstruct_strategy(cert, dataset)
        violations = relative_optimality_violations(reconstruction, dataset)
        report["reconstruction"] = {
            "pieces": reconstruction.n_pieces,
            "combiner": reconstruction.combiner.value,
            "relative_optimality_violations": [list(p) for p in violations],
        }
    print(json.dumps(report, indent=2))
    return EXIT_OK
