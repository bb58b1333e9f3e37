"""
Experiment harness: config loading, sweep cells on a worker pool, CSV/SVG artifacts
"""
import asyncio
import difflib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Type

import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError

from cogmask.core.config import settings
from cogmask.core.exceptions import EXIT_ASSERTION_FAILED, EXIT_OK, ConfigError, describe_failure
from cogmask.core.instrumentation import timed_cell
from cogmask.domain.dataset import DatasetKind
from cogmask.domain.noise import gaussian_noise
from cogmask.domain.problem import MaskingProblem
from cogmask.domain.results import RateEstimate
from cogmask.domain.strategy import k_norm, strategy_from_name
from cogmask.schemas.configs import DetectorConfig, ExperimentConfig, SolverConfig, SpsaConfig
from cogmask.schemas.records import (
    CsvRecord,
    DetectorTraceRow,
    EtaSweepRow,
    IrlRow,
    LambdaSweepRow,
    MisspecRow,
    SpsaTraceRow,
    Type1Row,
)
from cogmask.services import plotting
from cogmask.services.dataset_io import load_dataset, save_dataset
from cogmask.services.detectors import estimate_type1
from cogmask.services.margins import margin_constraint, margin_utility
from cogmask.services.mask_determ import mask_eta_sweep, mask_utility
from cogmask.services.mask_spsa import make_objective, spsa_lambda_sweep
from cogmask.services.rp_core import check_rationalizable, reconstruct_strategy, relative_optimality_check
from cogmask.services.scenarios import MisspecModel, generate_experiment, misspec_bound

logger = logging.getLogger(__name__)

TYPE1_CHUNK = 250
TRACE_TRIALS = 20
MONOTONE_SLACK = 1e-6
MIN_ACCEPTANCE_QUANTILE_SAMPLES = 1000


# -- configuration ----------------------------------------------------------------


def _yaml_error(path: Path, exc: yaml.YAMLError) -> ConfigError:
    mark = getattr(exc, "problem_mark", None)
    problem = getattr(exc, "problem", None) or str(exc)
    if mark is not None:
        return ConfigError(f"{path}:{mark.line + 1}:{mark.column + 1}: {problem}")
    return ConfigError(f"{path}: {problem}")


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML experiment file.

    Raises:
        FileNotFoundError: missing file
        ConfigError: syntax errors (with line and column), unknown keys, invalid values
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise _yaml_error(path, e) from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of keys to values")

    allowed = ExperimentConfig.allowed_keys()
    diagnostics = []
    for key in data:
        if str(key) in allowed:
            continue
        close = difflib.get_close_matches(str(key), allowed, n=1)
        hint = f"; did you mean '{close[0]}'?" if close else ""
        diagnostics.append(f"unknown key '{key}'{hint}")
    if diagnostics:
        raise ConfigError(f"{path}: invalid configuration", diagnostics)

    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(
            f"{path}: invalid configuration",
            [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()],
        ) from e
    diagnostics = validate_config(config)
    if diagnostics:
        raise ConfigError(f"{path}: invalid configuration", diagnostics)
    logger.debug("loaded %s experiment from %s", config.experiment, path)
    return config


def validate_config(config: ExperimentConfig) -> List[str]:
    """Every violated invariant, in a stable order; empty when the config is usable."""
    out = []
    for name, grid in (("eta", config.eta), ("lambda", config.lam), ("gamma", config.gamma)):
        if not grid:
            out.append(f"{name}: grid is empty")
        elif any(b <= a for a, b in zip(grid, grid[1:])):
            out.append(f"{name}: grid not ascending")
    if any(not 0.0 <= e <= 1.0 for e in config.eta):
        out.append("eta: entries must lie in [0, 1]")
    if any(not 0.0 < g < 1.0 for g in config.gamma):
        out.append("gamma: entries must lie in (0, 1)")
    if any(lam < 0 for lam in config.lam):
        out.append("lambda: entries must be nonnegative")
    if config.K is not None and config.K < 2 and config.experiment != "single-dataset-irl":
        out.append("K: sweeps need at least two epochs")
    if config.quantile_samples < MIN_ACCEPTANCE_QUANTILE_SAMPLES and config.experiment in ("type1-bound", "spsa-lambda-sweep"):
        out.append(f"quantile_samples: need at least {MIN_ACCEPTANCE_QUANTILE_SAMPLES} draws for the threshold")
    if config.dataset is not None and not Path(config.dataset).is_file():
        out.append(f"dataset: file '{config.dataset}' not found")
    return out


# -- artifacts ----------------------------------------------------------------------


def write_csv(rows: Sequence[CsvRecord], record: Type[CsvRecord], path: Path) -> Path:
    """Fixed column order, fixed float format and '\\n' line ends, so equal rows give equal bytes."""
    frame = pd.DataFrame([r.model_dump(by_alias=True) for r in rows], columns=record.columns())
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=settings.CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def _nondecreasing(values: Sequence[float], slack: float = MONOTONE_SLACK) -> bool:
    return all(b >= a - slack for a, b in zip(values, values[1:]))


def _seed_ints(seed: int, n: int) -> List[int]:
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(n)]


@dataclass
class ExperimentOutcome:
    summary: Dict[str, Any]
    artifacts: List[Path] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.summary.get("passed"))

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.passed else EXIT_ASSERTION_FAILED


# -- runner -------------------------------------------------------------------------


class ExperimentRunner:
    """Runs one configured experiment; cells go to a bounded thread pool, the coordinator writes files."""

    def __init__(self, config: ExperimentConfig, workers: Optional[int] = None):
        self.config = config
        self.workers = workers or settings.WORKERS
        self.output_dir = Path(config.output_dir) / config.experiment
        self.cells: List[Dict[str, Any]] = []
        self.assertions: List[Dict[str, Any]] = []
        self.metrics: Dict[str, Any] = {}
        self.artifacts: List[Path] = []
        self.schemas: Dict[str, List[str]] = {}
        self._executor: Optional[ThreadPoolExecutor] = None

    async def _cell(self, name: str, fn: Callable, *args):
        loop = asyncio.get_running_loop()

        def work():
            with timed_cell(name, logger) as record:
                result = fn(*args)
            return result, record["elapsed_s"]

        try:
            result, elapsed = await loop.run_in_executor(self._executor, work)
        except Exception as e:
            logger.warning("cell %s aborted: %s", name, e)
            self.cells.append({"name": name, **describe_failure(e)})
            return None
        self.cells.append({"name": name, "status": "ok", "elapsed_s": round(elapsed, 3)})
        return result

    def _check(self, name: str, passed: bool, detail: str = "") -> None:
        self.assertions.append({"name": name, "passed": bool(passed), "detail": detail})
        if not passed:
            logger.warning("assertion %s failed: %s", name, detail)

    def _write(self, rows, record, filename: str) -> Path:
        path = write_csv(rows, record, self.output_dir / filename)
        self.schemas[filename] = record.columns()
        self.artifacts.append(path)
        return path

    async def run(self) -> ExperimentOutcome:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        handler = getattr(self, "_run_" + self.config.experiment.replace("-", "_"))
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            self._executor = executor
            await handler()
        failed_cells = [c for c in self.cells if c.get("status") != "ok"]
        passed = not failed_cells and all(a["passed"] for a in self.assertions)
        summary = {
            "experiment": self.config.experiment,
            "seed": self.config.seed,
            "config": self.config.model_dump(by_alias=True),
            "cells": sorted(self.cells, key=lambda c: c["name"]),
            "assertions": self.assertions,
            "metrics": self.metrics,
            "passed": passed,
            "artifacts": sorted(str(p.name) for p in self.artifacts),
            "csv_schema": {"version": CsvRecord.schema_version, "columns": self.schemas},
        }
        summary_path = self.output_dir / "summary.json"
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        self.artifacts.append(summary_path)
        logger.info("%s finished: %s", self.config.experiment, "passed" if passed else "FAILED")
        return ExperimentOutcome(summary, list(self.artifacts))

    # -- masking sweeps -------------------------------------------------------------

    def _solver(self) -> SolverConfig:
        return SolverConfig(multi_starts=self.config.multi_starts, seed=self.config.seed)

    async def _eta_sweep(self, scenario: str, strategy=None) -> None:
        cfg = self.config
        bundle = generate_experiment(scenario, cfg.seed, cfg.K, cfg.m)
        problem = MaskingProblem(strategy or bundle.strategy, bundle.dataset, solver=self._solver())
        reports = await self._cell(f"{scenario}-eta-sweep", mask_eta_sweep, problem, cfg.eta)
        if reports is None:
            return
        rows = [
            EtaSweepRow(
                eta=r.eta,
                loss=r.loss,
                margin_before=r.margin_before,
                margin_after=r.margin_after,
                solver_restarts=r.restarts,
            )
            for r in reports
        ]
        self._write(rows, EtaSweepRow, "eta_sweep.csv")
        frame = pd.DataFrame([r.model_dump() for r in rows])
        self.artifacts.extend(plotting.plot_eta_sweep(frame, self.output_dir / "eta_sweep", title=scenario))

        tol = settings.CAP_TOL
        losses = [r.loss for r in reports]
        self._check("loss_nondecreasing_in_eta", _nondecreasing(losses), f"losses={losses}")
        self._check(
            "margin_cap_met",
            all(r.margin_after <= r.cap + tol for r in reports),
            "margin_after <= (1 - eta) * margin_before + tol at every grid point",
        )
        for r in reports:
            if r.eta == 0.0:
                self._check("zero_loss_at_eta_0", r.loss <= 1e-9, f"loss={r.loss:.3g}")
            if r.eta == 1.0:
                self._check("zero_margin_at_eta_1", r.margin_after <= tol, f"margin={r.margin_after:.3g}")

    async def _run_mask_eta_sweep_waveform(self) -> None:
        scenario = "waveform-u1" if self.config.utility == "sqrt" else "waveform-u2"
        await self._eta_sweep(scenario)

    async def _run_mask_eta_sweep_beam(self) -> None:
        await self._eta_sweep("beam", k_norm(2.0))

    # -- SPSA -----------------------------------------------------------------------

    def _spsa_cell(self, dataset, strategy, gamma: float, seed: int, kappa):
        cfg = self.config
        detector = DetectorConfig(gamma=gamma, quantile_samples=cfg.quantile_samples, replicates=cfg.replicates)
        objective = make_objective(dataset, strategy, gaussian_noise(cfg.m, cfg.noise_variance), detector, seed, kappa)
        spsa = SpsaConfig(iterations=cfg.iterations, replicates=cfg.replicates, seed=seed)
        return spsa_lambda_sweep(objective, [0.0] + list(cfg.lam), spsa)

    async def _run_spsa_lambda_sweep(self) -> None:
        cfg = self.config
        bundle = generate_experiment("waveform-u1" if cfg.utility == "sqrt" else "waveform-u2", cfg.seed, cfg.K, cfg.m)
        seeds = _seed_ints(cfg.seed, cfg.seeds)
        keys = [(g, j) for g in cfg.gamma for j in range(cfg.seeds)]
        results = await asyncio.gather(*[
            self._cell(f"spsa-gamma{g:g}-seed{j}", self._spsa_cell, bundle.dataset, bundle.strategy, g, seeds[j], bundle.kappa)
            for g, j in keys
        ])
        by_key = dict(zip(keys, results))
        if any(r is None for r in results):
            return

        rows, controls = [], []
        for gamma in cfg.gamma:
            per_seed = [by_key[(gamma, j)] for j in range(cfg.seeds)]
            controls.extend(traces[0].final_loss for traces in per_seed)
            for index, lam in enumerate(cfg.lam, start=1):
                picked = [traces[index] for traces in per_seed]
                rows.append(LambdaSweepRow(
                    lam=lam,
                    gamma=gamma,
                    loss=float(np.median([t.final_loss for t in picked])),
                    cond_type1=float(np.median([t.final_type1 for t in picked])),
                    iterations=int(np.median([t.iterations for t in picked])),
                ))
        self._write(rows, LambdaSweepRow, "lambda_sweep.csv")
        first = by_key[(cfg.gamma[0], 0)][-1]
        self._write([SpsaTraceRow(**r) for r in first.trace_rows()], SpsaTraceRow, "spsa_trace.csv")
        frame = pd.DataFrame([r.model_dump(by_alias=True) for r in rows])
        self.artifacts.extend(plotting.plot_lambda_sweep(frame, self.output_dir / "lambda_sweep", title="SPSA masking"))

        for gamma in cfg.gamma:
            mine = [r for r in rows if r.gamma == gamma]
            self._check(f"loss_nondecreasing_in_lambda_gamma{gamma:g}", _nondecreasing([r.loss for r in mine]))
            self._check(f"type1_nondecreasing_in_lambda_gamma{gamma:g}", _nondecreasing([r.cond_type1 for r in mine]))
        self.metrics["lambda0_control_loss"] = float(np.median(controls))
        self._check("lambda0_stays_naive", float(np.median(controls)) <= 1e-3, f"median loss={np.median(controls):.3g}")

    # -- Type-I bound ---------------------------------------------------------------

    async def _run_type1_bound(self) -> None:
        cfg = self.config
        bundle = generate_experiment("waveform-u1" if cfg.utility == "sqrt" else "waveform-u2", cfg.seed, cfg.K, cfg.m)
        noise = gaussian_noise(cfg.m, cfg.noise_variance)
        detector = DetectorConfig(quantile_samples=cfg.quantile_samples)
        sizes = [min(TYPE1_CHUNK, cfg.trials - start) for start in range(0, cfg.trials, TYPE1_CHUNK)]
        seeds = _seed_ints(cfg.seed, len(sizes) + 1)
        trace: list = []
        chunks = await asyncio.gather(
            *[
                self._cell(f"type1-chunk{i}", estimate_type1, bundle.dataset, noise, cfg.gamma, n, seeds[i], detector)
                for i, n in enumerate(sizes)
            ],
            self._cell(
                "type1-trace", estimate_type1, bundle.dataset, noise, cfg.gamma[:1],
                min(TRACE_TRIALS, cfg.trials), seeds[-1], detector, trace,
            ),
        )
        if any(c is None for c in chunks[:-1]):
            return
        rows = []
        for index, gamma in enumerate(cfg.gamma):
            hits = sum(int(round(chunk[index].rate * chunk[index].trials)) for chunk in chunks[:-1])
            estimate = RateEstimate.from_counts(hits, cfg.trials, gamma)
            rows.append(Type1Row(gamma=gamma, trials=cfg.trials, rate=estimate.rate, stderr=estimate.stderr))
            self._check(
                f"type1_bound_gamma{gamma:g}",
                estimate.within_bound(gamma),
                f"rate={estimate.rate:.4f} stderr={estimate.stderr:.4f}",
            )
        self._write(rows, Type1Row, "type1.csv")
        if trace:
            self._write([DetectorTraceRow(**t.to_row()) for t in trace], DetectorTraceRow, "detector_trace.csv")

    # -- misspecification -------------------------------------------------------------

    def _misspec_instance(self, index: int, seed: int) -> MisspecRow:
        cfg = self.config
        eta = cfg.eta[index % len(cfg.eta)]
        bundle = generate_experiment("waveform-u1", seed, cfg.K, cfg.m)
        problem = MaskingProblem(bundle.strategy, bundle.dataset, eta, SolverConfig(multi_starts=cfg.multi_starts, seed=seed))
        report = mask_utility(problem)
        zeta = MisspecModel.sample(np.random.default_rng(seed), cfg.K, cfg.m, cfg.zeta)
        result = misspec_bound(bundle.strategy, bundle.dataset, report.masked_responses, zeta, eta)
        return MisspecRow(
            instance=index,
            eta=eta,
            eta_realized=result.eta_realized,
            eta_eff=result.eta_eff,
            lower_bound=result.lower_bound,
            d1=result.d1,
            d2=result.d2,
            grad_spread_min=result.gradient_spread[0],
            grad_spread_max=result.gradient_spread[1],
            vacuous=result.vacuous,
            holds=result.holds,
        )

    async def _run_misspec_bound(self) -> None:
        cfg = self.config
        seeds = _seed_ints(cfg.seed, cfg.instances)
        rows = await asyncio.gather(*[
            self._cell(f"misspec-{i:04d}", self._misspec_instance, i, seeds[i]) for i in range(cfg.instances)
        ])
        rows = [r for r in rows if r is not None]
        self._write(rows, MisspecRow, "misspec.csv")
        informative = [r for r in rows if not r.vacuous]
        rate = sum(r.holds for r in informative) / len(informative) if informative else float("nan")
        self.metrics["misspec_bound_holds_rate"] = rate
        self.metrics["misspec_vacuous"] = len(rows) - len(informative)
        failed = [r.instance for r in informative if not r.holds]
        self._check("misspec_bound_holds", not failed, f"bound violated on instances {failed}" if failed else "")
        logger.info("misspecification bound held on %s of %d informative instances", rate, len(informative))

    # -- single dataset ---------------------------------------------------------------

    def _irl_cell(self):
        cfg = self.config
        if cfg.dataset is not None:
            dataset = load_dataset(cfg.dataset)
            strategy = strategy_from_name(cfg.utility, dataset.dim) if dataset.kind is DatasetKind.CONSTRAINT_KNOWN else k_norm(2.0)
            generated = False
        else:
            bundle = generate_experiment("waveform-u1" if cfg.utility == "sqrt" else "waveform-u2", cfg.seed, cfg.K, cfg.m)
            dataset, strategy, generated = bundle.dataset, bundle.strategy, True
        cert = check_rationalizable(dataset)
        measure = margin_utility if dataset.kind is DatasetKind.CONSTRAINT_KNOWN else margin_constraint
        margin = measure(strategy, dataset)
        reconstruction_ok = relative_optimality_check(reconstruct_strategy(cert, dataset), dataset) if cert.feasible else None
        return dataset, cert, margin, reconstruction_ok, generated

    async def _run_single_dataset_irl(self) -> None:
        result = await self._cell("single-dataset-irl", self._irl_cell)
        if result is None:
            return
        dataset, cert, margin, reconstruction_ok, generated = result
        s, t = margin.binding_pair or (-1, -1)
        row = IrlRow(
            kind=dataset.kind.value,
            horizon=dataset.horizon,
            feasible=cert.feasible,
            status=cert.status.value,
            margin=margin.epsilon,
            binding_s=s,
            binding_t=t,
        )
        self._write([row], IrlRow, "irl.csv")
        if generated:
            self.artifacts.append(save_dataset(self.output_dir / "dataset.txt", dataset))
            self._check("naive_data_rationalizable", cert.feasible, cert.message)
        if reconstruction_ok is not None:
            self._check("reconstruction_relative_optimality", reconstruction_ok)
        self._check("solver_ok", not cert.solver_failed, cert.message)


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> ExperimentOutcome:
    """Run one experiment to completion and write its artifacts under ``config.output_dir``."""
    return asyncio.run(ExperimentRunner(config, workers).run())
