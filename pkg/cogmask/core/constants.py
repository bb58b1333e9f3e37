"""
Numeric constants and the default parameters of the radar experiments
"""

# Waveform adaptation: probe entries i.i.d. Unif(0.2, 2.5)
WAVEFORM_PROBE_RANGE = (0.2, 2.5)

# Beam allocation: probe entries i.i.d. Unif(0.1, 0.7), budgets Unif(0.5, 2), 2-norm
BEAM_PROBE_RANGE = (0.1, 0.7)
BEAM_BUDGET_RANGE = (0.5, 2.0)
BEAM_KAPPA = 2.0

# Full-scale horizon and the default response dimension
FULL_HORIZON = 50
DEFAULT_DIM = 4

# Default horizons of the sweep experiments
SWEEP_HORIZON_ETA = 20
SWEEP_HORIZON_SPSA = 10

# Measurement noise variance for the noisy experiments
DEFAULT_NOISE_VARIANCE = 0.3

SIGNIFICANCE_LEVELS = (0.05, 0.1, 0.2)
ETA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
LAMBDA_GRID = (1.0, 10.0, 100.0, 1000.0)

SCENARIO_NAMES = ("waveform-u1", "waveform-u2", "beam")

# Masking direction: larger eta means more masking (cap = (1 - eta) * naive margin)
ETA_CONVENTION = "cap=(1-eta)*margin_naive; eta=1 is full masking"

# SPSA objective: loss - lambda * P(H1), minimized with a descent step
SPSA_SIGN_CONVENTION = "J = sum u(b*) - u(b) - lambda * P(H1); update b - step * grad"

DATASET_FORMAT_HEADER = "# cogmask-dataset v1"
CSV_SCHEMA_VERSION = 2
