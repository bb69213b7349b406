"""
Run configuration.

Load order, later wins: model defaults -> PLATONIC_* environment variables
(after load_dotenv) -> TOML file -> JSON override string -> explicit CLI flags.
"""
import json
import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field

from processors.ingestion import universal_loader
from services.source_sim import SourceParams
from tools.errors import InputValidationError

ENV_KEYS = {
    "PLATONIC_SEED": "seed",
    "PLATONIC_OUT": "out",
    "PLATONIC_NMAX": "nmax",
    "PLATONIC_TOL": "tol",
    "PLATONIC_WORKERS": "workers",
}


class TomoConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    events: int = Field(2434, ge=0)
    n_resamples: int = Field(50, ge=0)
    tol: float = Field(1e-10, gt=0)
    max_iterations: int = Field(100_000, ge=1)
    workers: int = Field(1, ge=1)
    allocation: list[float] | None = None


class PhaseSpaceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_theta: int = Field(181, ge=2)
    n_phi: int = Field(360, ge=2)
    workers: int = Field(1, ge=1)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    out: Path = Path("out")
    nmax: int | None = Field(None, ge=6)
    tol: float | None = Field(None, gt=0)
    workers: int | None = Field(None, ge=1)
    source: SourceParams = Field(default_factory=SourceParams)
    tomo: TomoConfig = Field(default_factory=TomoConfig)
    phase_space: PhaseSpaceConfig = Field(default_factory=PhaseSpaceConfig)

    def resolved(self) -> "RunConfig":
        """Push the global shortcuts (nmax, tol, workers) into their sections."""
        source, tomo, phase = self.source, self.tomo, self.phase_space
        if self.nmax is not None:
            source = source.model_copy(update={"n_max": self.nmax})
        if self.tol is not None:
            tomo = tomo.model_copy(update={"tol": self.tol})
        if self.workers is not None:
            tomo = tomo.model_copy(update={"workers": self.workers})
            phase = phase.model_copy(update={"workers": self.workers})
        return self.model_copy(update={"source": source, "tomo": tomo, "phase_space": phase})


def deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def env_overrides() -> dict:
    load_dotenv()
    return {field: os.getenv(key) for key, field in ENV_KEYS.items() if os.getenv(key) not in (None, "")}


def load_config(config_path=None, overrides: str | None = None, flags: dict | None = None) -> RunConfig:
    """
    Args:
        config_path: Optional TOML (or JSON) file.
        overrides: JSON object string, deep-merged over the file.
        flags: Explicit CLI values; None entries are ignored.

    Raises:
        InputValidationError: unreadable file or malformed override.
        pydantic.ValidationError: values out of range.
    """
    data = env_overrides()
    if config_path:
        loaded = universal_loader(config_path)
        if not isinstance(loaded, dict):
            raise InputValidationError(f"Config File Error ({config_path}): expected a table")
        data = deep_merge(data, loaded)
    if overrides:
        try:
            parsed = json.loads(overrides)
        except json.JSONDecodeError as e:
            raise InputValidationError(f"Override Error: {e}") from e
        if not isinstance(parsed, dict):
            raise InputValidationError("Override Error: expected a JSON object")
        data = deep_merge(data, parsed)
    data = deep_merge(data, {k: v for k, v in (flags or {}).items() if v is not None})
    return RunConfig.model_validate(data).resolved()
