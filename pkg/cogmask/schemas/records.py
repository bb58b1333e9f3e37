"""
Row schemas of the CSV artifacts written by the harness
"""
from typing import ClassVar, List

from pydantic import BaseModel, Field

from cogmask.core.constants import CSV_SCHEMA_VERSION


class CsvRecord(BaseModel):
    """Base row; subclasses fix the column order of their file"""
    schema_version: ClassVar[int] = CSV_SCHEMA_VERSION

    @classmethod
    def columns(cls) -> List[str]:
        return [f.alias or name for name, f in cls.model_fields.items()]


class EtaSweepRow(CsvRecord):
    eta: float
    loss: float
    margin_before: float
    margin_after: float
    solver_restarts: int


class LambdaSweepRow(CsvRecord):
    lam: float = Field(alias="lambda")
    gamma: float
    loss: float
    cond_type1: float
    iterations: int

    class Config:
        populate_by_name = True


class Type1Row(CsvRecord):
    gamma: float
    trials: int
    rate: float
    stderr: float


class MisspecRow(CsvRecord):
    instance: int
    eta: float
    eta_realized: float
    eta_eff: float
    lower_bound: float
    d1: float
    d2: float
    grad_spread_min: float
    grad_spread_max: float
    vacuous: bool
    holds: bool


class IrlRow(CsvRecord):
    kind: str
    horizon: int
    feasible: bool
    status: str
    margin: float
    binding_s: int
    binding_t: int


class DetectorTraceRow(CsvRecord):
    trial: int
    phi: float
    threshold: float
    decision: str
    seed: int


class SpsaTraceRow(CsvRecord):
    iteration: int
    objective: float
    loss: float
    probability: float
