"""
`cogmask detect <dataset-file> --gamma <v> --sigma2 <v>`: noisy IRL detector on observed responses
"""
import json

from cogmask.cli.dependencies import get_dataset, validate_gamma, validate_sigma2
from cogmask.core.config import settings
from cogmask.core.exceptions import EXIT_OK
from cogmask.domain.noise import gaussian_noise, make_rng
from cogmask.schemas.configs import DetectorConfig
from cogmask.services.detectors import run_detector


def register(subparsers) -> None:
    parser = subparsers.add_parser("detect", help="Decide whether noisy responses come from a cognitive radar")
    parser.add_argument("dataset", help="Dataset file holding the observed responses")
    parser.add_argument("--gamma", type=float, required=True, help="Significance level")
    parser.add_argument("--sigma2", type=float, required=True, help="Variance of the measurement noise")
    parser.add_argument("--seed", type=int, required=True, help="Seed of the threshold draws")
    parser.add_argument("--samples", type=int, default=settings.QUANTILE_SAMPLES, help="Draws for the threshold")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    dataset = get_dataset(args.dataset)
    config = DetectorConfig(gamma=validate_gamma(args.gamma), quantile_samples=args.samples)
    noise = gaussian_noise(dataset.dim, validate_sigma2(args.sigma2))
    outcome = run_detector(dataset, noise, config, make_rng(args.seed))
    print(json.dumps({
        "statistic": outcome.statistic,
        "threshold": outcome.threshold,
        "decision": outcome.decision.value,
    }, indent=2))
    return EXIT_OK
