"""
Configuration and artifact schemas for cogmask
"""

from .configs import (
    SolverConfig,
    DetectorConfig,
    SpsaConfig,
    ExperimentConfig,
)

from .records import (
    CsvRecord,
    EtaSweepRow,
    LambdaSweepRow,
    Type1Row,
    MisspecRow,
    IrlRow,
    DetectorTraceRow,
    SpsaTraceRow,
)

__all__ = [
    "SolverConfig",
    "DetectorConfig",
    "SpsaConfig",
    "ExperimentConfig",
    "CsvRecord",
    "EtaSweepRow",
    "LambdaSweepRow",
    "Type1Row",
    "MisspecRow",
    "IrlRow",
    "DetectorTraceRow",
    "SpsaTraceRow",
]
