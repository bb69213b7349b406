"""File documents exchanged by the command-line front end."""
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from tools.constellation import Constellation
from tools.spin_core import BlockDensityMatrix, PureSpinState, Sector

DOCUMENT_VERSION = 1

ComplexPair = tuple[float, float]


def _pairs(values: np.ndarray) -> list:
    """Complex array -> nested lists of [re, im]."""
    values = np.asarray(values, dtype=complex)
    return np.stack([values.real, values.imag], axis=-1).tolist()


def _complex(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


class StateDocument(BaseModel):
    """{"version": 1, "two_j": int, "amps": [[re, im], ...]}, amplitudes ordered m = j..-j."""

    model_config = ConfigDict(extra="forbid")

    version: Literal[1] = DOCUMENT_VERSION
    two_j: int = Field(ge=0)
    amps: list[ComplexPair]

    @model_validator(mode="after")
    def _length(self):
        if len(self.amps) != self.two_j + 1:
            raise ValueError(f"expected {self.two_j + 1} amplitudes, got {len(self.amps)}")
        return self

    @classmethod
    def from_state(cls, state: PureSpinState) -> "StateDocument":
        return cls(two_j=state.two_j, amps=_pairs(state.amplitudes))

    def to_state(self) -> PureSpinState:
        return PureSpinState(self.two_j, _complex(self.amps))


class SectorDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    two_j: int = Field(ge=0)
    mult: int = Field(ge=1)
    block: list[list[ComplexPair]]

    @model_validator(mode="after")
    def _square(self):
        dim = self.two_j + 1
        if len(self.block) != dim or any(len(row) != dim for row in self.block):
            raise ValueError(f"block for two_j={self.two_j} must be {dim}x{dim}")
        return self


class DensityDocument(BaseModel):
    """{"version": 1, "sectors": [...]} with an optional metadata block for estimates."""

    model_config = ConfigDict(extra="forbid")

    version: Literal[1] = DOCUMENT_VERSION
    sectors: list[SectorDocument] = Field(min_length=1)
    metadata: dict | None = None

    @classmethod
    def from_density(cls, rho: BlockDensityMatrix, metadata: dict | None = None) -> "DensityDocument":
        sectors = [SectorDocument(two_j=s.two_j, mult=s.mult, block=_pairs(s.block)) for s in rho.sectors]
        return cls(sectors=sectors, metadata=metadata)

    def to_density(self) -> BlockDensityMatrix:
        return BlockDensityMatrix(tuple(Sector(s.two_j, s.mult, _complex(s.block)) for s in self.sectors))


class ConstellationDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    points: list[tuple[float, float]] = Field(min_length=1)

    @classmethod
    def from_constellation(cls, c: Constellation) -> "ConstellationDocument":
        return cls(points=[tuple(p) for p in c.points.tolist()])

    def to_constellation(self) -> Constellation:
        return Constellation(np.array(self.points))


class CountsSidecar(BaseModel):
    """JSON next to a counts CSV: basis axes and trials per basis."""

    model_config = ConfigDict(extra="forbid")

    bases: list[tuple[float, float, float]] = Field(min_length=1)
    exposures: list[int] | None = None


class CountRow(BaseModel):
    basis_index: int = Field(ge=0)
    n_T: int = Field(ge=1, le=3)
    count: int = Field(ge=0)
