"""
Text format for probe/response datasets.

    # cogmask-dataset v1
    # K=3 m=2 kind=constraint-known noisy=0 budgets=0
    alpha_1 ... alpha_m beta_1 ... beta_m [gamma]

Values are written with 17 significant digits, which round-trips float64 exactly.
"""
import logging
from pathlib import Path
from typing import Dict, Union

import numpy as np

from cogmask.core.constants import DATASET_FORMAT_HEADER
from cogmask.core.exceptions import DatasetValidationError
from cogmask.domain.dataset import DatasetKind, ProbeResponseDataset

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def save_dataset(path: PathLike, dataset: ProbeResponseDataset) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [dataset.probes, dataset.responses]
    if dataset.budgets is not None:
        columns.append(dataset.budgets[:, None])
    meta = (
        f"K={dataset.horizon} m={dataset.dim} kind={dataset.kind.value} "
        f"noisy={int(dataset.noisy)} budgets={int(dataset.budgets is not None)}"
    )
    header = DATASET_FORMAT_HEADER.lstrip("# ") + "\n" + meta
    np.savetxt(path, np.hstack(columns), fmt="%.17g", header=header, comments="# ")
    return path


def _parse_meta(line: str) -> Dict[str, str]:
    fields = {}
    for token in line.lstrip("#").split():
        key, sep, value = token.partition("=")
        if not sep:
            raise DatasetValidationError(f"malformed header token '{token}'")
        fields[key] = value
    return fields


def load_dataset(path: PathLike) -> ProbeResponseDataset:
    """Read a dataset written by ``save_dataset``.

    Raises:
        FileNotFoundError: missing file
        DatasetValidationError: wrong header, shape mismatch or invariant violation
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        second = fh.readline().strip()
    if first != DATASET_FORMAT_HEADER:
        raise DatasetValidationError(f"{path}: expected header '{DATASET_FORMAT_HEADER}', got '{first}'")
    meta = _parse_meta(second)
    try:
        K, m = int(meta["K"]), int(meta["m"])
        kind = DatasetKind(meta["kind"])
        noisy = bool(int(meta.get("noisy", "0")))
        has_budgets = bool(int(meta.get("budgets", "0")))
    except (KeyError, ValueError) as e:
        raise DatasetValidationError(f"{path}: bad metadata line '{second}' ({e})") from e
    data = np.loadtxt(path, comments="#", ndmin=2)
    width = 2 * m + int(has_budgets)
    if data.shape != (K, width):
        raise DatasetValidationError(f"{path}: expected a {K}x{width} table, got {data.shape}")
    budgets = data[:, 2 * m] if has_budgets else None
    logger.debug("loaded %s: K=%d m=%d kind=%s", path, K, m, kind.value)
    return ProbeResponseDataset(data[:, :m], data[:, m:2 * m], kind, budgets=budgets, noisy=noisy)
