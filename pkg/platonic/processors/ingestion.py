import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import numpy as np
import pandas as pd

from processors.documents import ConstellationDocument, CountRow, CountsSidecar, DensityDocument, StateDocument
from services.tomography import BasisSetting, CountRecord
from tools.errors import InputValidationError
from tools.validator import validate_document

logger = logging.getLogger(__name__)


def universal_loader(path):
    """
    Dispatches a file to the matching parser based on its extension.
    Supports: JSON, TOML and CSV (returned as a list of row dicts).
    """
    path = Path(path)
    ext = path.suffix.lower().lstrip(".")
    if not path.exists():
        raise InputValidationError(f"File Error ({path}): not found")
    try:
        if ext == "json":
            return json.loads(path.read_text())
        if ext == "toml":
            with path.open("rb") as fh:
                return tomllib.load(fh)
        if ext == "csv":
            return json.loads(pd.read_csv(path).to_json(orient="records"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InputValidationError(f"File Error ({path}): {e}") from e
    raise InputValidationError(f"File Error ({path}): unsupported extension '.{ext}'")


def _checked(data, model, path):
    status = validate_document(data, model)
    if not status["valid"]:
        raise InputValidationError(f"{model.__name__} Error ({path}): " + "; ".join(status["errors"]))
    return status["data"]


def load_state(path):
    """PureSpinState for an "amps" document, BlockDensityMatrix for a "sectors" one."""
    data = universal_loader(path)
    if not isinstance(data, dict):
        raise InputValidationError(f"State File Error ({path}): expected an object")
    if "amps" in data:
        return _checked(data, StateDocument, path).to_state()
    if "sectors" in data:
        return _checked(data, DensityDocument, path).to_density()
    raise InputValidationError(f"State File Error ({path}): expected an 'amps' or 'sectors' document")


def load_constellation(path):
    data = universal_loader(path)
    return _checked(data, ConstellationDocument, path).to_constellation()


def load_counts(csv_path, sidecar_path=None) -> CountRecord:
    """
    Counts CSV (basis_index, n_T, count) plus its JSON sidecar of basis axes.

    The sidecar defaults to the CSV path with a .json suffix.
    """
    csv_path = Path(csv_path)
    sidecar_path = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
    sidecar = _checked(universal_loader(sidecar_path), CountsSidecar, sidecar_path)
    rows = universal_loader(csv_path)
    if not rows:
        raise InputValidationError(f"Counts File Error ({csv_path}): no rows")
    expected = {"basis_index", "n_T", "count"}
    if set(rows[0]) != expected:
        raise InputValidationError(f"Counts File Error ({csv_path}): columns must be {sorted(expected)}")

    counts = np.zeros((len(sidecar.bases), 3), dtype=np.int64)
    for i, row in enumerate(rows):
        parsed = _checked(row, CountRow, f"{csv_path} row {i + 1}")
        if parsed.basis_index >= len(sidecar.bases):
            raise InputValidationError(f"Counts File Error ({csv_path}): basis index {parsed.basis_index} out of range")
        counts[parsed.basis_index, parsed.n_T - 1] += parsed.count

    try:
        bases = tuple(BasisSetting(np.array(axis)) for axis in sidecar.bases)
    except InputValidationError as e:
        raise InputValidationError(f"Counts File Error ({sidecar_path}): {e}") from e
    logger.info("[INGEST] ✓ %d events over %d bases from %s", counts.sum(), len(bases), csv_path.name)
    return CountRecord(bases, counts, sidecar.exposures)
