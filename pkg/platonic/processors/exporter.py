"""Deterministic writers: same inputs give byte-identical files."""
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel

from processors.documents import ConstellationDocument, CountsSidecar, DensityDocument, StateDocument
from services.event_ledger import EventLedger
from services.tomography import CountRecord, DETECTED
from tools.spin_core import BlockDensityMatrix, PureSpinState

logger = logging.getLogger(__name__)


def _plain(obj):
    if isinstance(obj, BaseModel):
        return {k: v for k, v in obj.model_dump().items() if v is not None}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return {"real": obj.real, "imag": obj.imag}
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Cannot serialize {type(obj).__name__}")


def _finite(obj):
    """Replace non-finite floats with strings JSON can carry."""
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not np.isfinite(obj):
        return "nan" if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_finite(json.loads(json.dumps(data, default=_plain))), indent=2, sort_keys=True)
    path.write_text(text + "\n")
    logger.debug("[EXPORT] wrote %s", path)
    return path


def write_csv(path, frame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = frame if isinstance(frame, pd.DataFrame) else pd.DataFrame(frame)
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.debug("[EXPORT] wrote %s (%d rows)", path, len(frame))
    return path


def write_state(path, state: PureSpinState) -> Path:
    return write_json(path, StateDocument.from_state(state))


def write_density(path, rho: BlockDensityMatrix, metadata: dict | None = None) -> Path:
    return write_json(path, DensityDocument.from_density(rho, metadata))


def write_constellation(path, constellation) -> Path:
    return write_json(path, ConstellationDocument.from_constellation(constellation))


def write_counts(csv_path, record: CountRecord) -> tuple[Path, Path]:
    """Counts CSV plus its JSON sidecar (same stem)."""
    csv_path = Path(csv_path)
    rows = [
        {"basis_index": b, "n_T": k, "count": int(record.counts[b, k - 1])}
        for b in range(len(record.bases))
        for k in DETECTED
    ]
    write_csv(csv_path, pd.DataFrame(rows, columns=["basis_index", "n_T", "count"]))
    exposures = None if record.exposures is None else record.exposures.tolist()
    sidecar = CountsSidecar(bases=[tuple(b.axis.tolist()) for b in record.bases], exposures=exposures)
    return csv_path, write_json(csv_path.with_suffix(".json"), sidecar)


def write_ledger(path, ledger: EventLedger) -> Path:
    return write_csv(path, ledger.to_frame())
