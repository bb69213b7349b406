"""
Dicke-basis spin states, angular momentum generators and SU(2) rotations.

Conventions shared by every module:
  - spins are stored as ``two_j`` (2j, a nonnegative integer)
  - basis vectors are ordered by m descending: index i <-> m = j - i
  - |j, m> is the photon-number state |n_H = j + m, n_V = j - m>
"""
from dataclasses import dataclass
from functools import lru_cache
from math import comb, isfinite

import numpy as np
from scipy import linalg

from tools.errors import InputValidationError, SectorMismatchError

NORM_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10


def two_j_of(j) -> int:
    """Convert a (half-)integer spin to its doubled integer label."""
    doubled = 2 * float(j)
    two_j = int(round(doubled))
    if two_j < 0 or abs(doubled - two_j) > 1e-12:
        raise InputValidationError(f"Spin must be a nonnegative half-integer, got j={j}")
    return two_j


def m_values(two_j: int) -> np.ndarray:
    """Magnetic quantum numbers j, j-1, ..., -j."""
    return (two_j - 2 * np.arange(two_j + 1)) / 2.0


def sector_layout(n_photons: int) -> list[tuple[int, int]]:
    """
    Spin sectors of N qubits as (two_j, multiplicity), largest spin first.

    d_j = C(N, N/2 - j) - C(N, N/2 - j - 1); for N=4 this is (4,1), (2,3), (0,2).
    """
    if n_photons < 1:
        raise InputValidationError(f"Photon number must be >= 1, got N={n_photons}")
    layout = []
    for two_j in range(n_photons, -1, -2):
        k = (n_photons - two_j) // 2
        mult = comb(n_photons, k) - (comb(n_photons, k - 1) if k >= 1 else 0)
        layout.append((two_j, mult))
    return layout


def canonical_phase(amplitudes: np.ndarray) -> np.ndarray:
    """Make the first nonzero amplitude real and nonnegative."""
    amps = np.asarray(amplitudes, dtype=complex)
    nonzero = np.flatnonzero(np.abs(amps) > 1e-14)
    if nonzero.size == 0:
        return amps
    lead = amps[nonzero[0]]
    return amps * (abs(lead) / lead)


@dataclass(frozen=True)
class PureSpinState:
    two_j: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.two_j < 0:
            raise InputValidationError(f"two_j must be nonnegative, got {self.two_j}")
        if amps.size != self.two_j + 1:
            raise InputValidationError(
                f"Expected {self.two_j + 1} amplitudes for two_j={self.two_j}, got {amps.size}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise InputValidationError(f"State is not normalized (norm^2 = {norm:.15f})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, two_j: int, amplitudes, normalize: bool = True) -> "PureSpinState":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise InputValidationError("Zero vector is not a valid state")
        return cls(two_j, amps / norm if normalize else amps)

    @property
    def j(self) -> float:
        return self.two_j / 2

    @property
    def n_photons(self) -> int:
        return self.two_j

    @property
    def dim(self) -> int:
        return self.two_j + 1

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def overlap(self, other: "PureSpinState") -> complex:
        if other.two_j != self.two_j:
            raise SectorMismatchError(f"Cannot overlap two_j={self.two_j} with two_j={other.two_j}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class AngularMomentumTriple:
    two_j: int
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray

    @property
    def j(self) -> float:
        return self.two_j / 2

    def as_tuple(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.jx, self.jy, self.jz

    def along(self, vector) -> np.ndarray:
        """The generator vector . J for a (not necessarily unit) 3-vector."""
        vx, vy, vz = np.asarray(vector, dtype=float)
        return vx * self.jx + vy * self.jy + vz * self.jz


@dataclass(frozen=True)
class Sector:
    two_j: int
    mult: int
    block: np.ndarray

    @property
    def j(self) -> float:
        return self.two_j / 2


@dataclass(frozen=True)
class RotationParams:
    """Cartesian axis-angle vector: angle |theta| about theta/|theta|."""

    theta: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.theta, dtype=float).reshape(-1)
        if vec.size != 3 or not all(isfinite(x) for x in vec):
            raise InputValidationError(f"Rotation must be a finite 3-vector, got {self.theta}")
        vec.setflags(write=False)
        object.__setattr__(self, "theta", vec)

    @classmethod
    def about(cls, axis, angle: float) -> "RotationParams":
        axis = np.asarray(axis, dtype=float)
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise InputValidationError("Rotation axis must be nonzero")
        return cls(axis / norm * angle)

    @classmethod
    def to_point(cls, theta: float, phi: float) -> "RotationParams":
        """Rotation carrying the north pole onto the point (theta, phi)."""
        return cls(theta * np.array([-np.sin(phi), np.cos(phi), 0.0]))

    @property
    def angle(self) -> float:
        return float(np.linalg.norm(self.theta))

    def inverse(self) -> "RotationParams":
        return RotationParams(-self.theta)


@lru_cache(maxsize=32)
def _generators(two_j: int) -> AngularMomentumTriple:
    m = m_values(two_j)
    j = two_j / 2
    # J+ |m> = sqrt(j(j+1) - m(m+1)) |m+1>, index i-1 holds m+1
    raising = np.zeros((two_j + 1, two_j + 1), dtype=complex)
    for i in range(1, two_j + 1):
        raising[i - 1, i] = np.sqrt(j * (j + 1) - m[i] * (m[i] + 1))
    lowering = raising.conj().T
    jx = (raising + lowering) / 2
    jy = (raising - lowering) / 2j
    jz = np.diag(m).astype(complex)
    for mat in (jx, jy, jz):
        mat.setflags(write=False)
    return AngularMomentumTriple(two_j, jx, jy, jz)


def build_generators(j) -> AngularMomentumTriple:
    """
    Spin-j angular momentum matrices in the m-descending Dicke basis.

    Args:
        j: Nonnegative half-integer spin (0, 1/2, 1, ...).

    Returns:
        AngularMomentumTriple with Jz = diag(j, ..., -j).
    """
    return _generators(two_j_of(j))


def generators_for(two_j: int) -> AngularMomentumTriple:
    if two_j < 0:
        raise InputValidationError(f"two_j must be nonnegative, got {two_j}")
    return _generators(int(two_j))


def rotation_matrix(two_j: int, r: RotationParams) -> np.ndarray:
    """exp(-i theta.J) via eigendecomposition of the Hermitian generator."""
    if r.angle == 0.0:
        return np.eye(two_j + 1, dtype=complex)
    generator = generators_for(two_j).along(r.theta)
    eigvals, eigvecs = linalg.eigh(generator)
    unitary = (eigvecs * np.exp(-1j * eigvals)) @ eigvecs.conj().T
    deviation = np.max(np.abs(unitary @ unitary.conj().T - np.eye(two_j + 1)))
    if deviation > 1e-12:
        raise InputValidationError(f"Rotation operator lost unitarity ({deviation:.2e})")
    return unitary


def dicke_state(n_photons: int, n_h: int) -> PureSpinState:
    """|n_H, n_V = N - n_H>."""
    if n_photons < 1 or not 0 <= n_h <= n_photons:
        raise InputValidationError(f"Invalid Dicke label N={n_photons}, n_H={n_h}")
    amps = np.zeros(n_photons + 1, dtype=complex)
    amps[n_photons - n_h] = 1.0
    return PureSpinState(n_photons, amps)


def coherent_state(n_photons: int, theta: float, phi: float) -> PureSpinState:
    """
    All N photons sharing the polarization of the Bloch point (theta, phi).

    Amplitude at n_H = k is sqrt(C(N,k)) cos(theta/2)^k (e^{i phi} sin(theta/2))^(N-k).
    """
    if n_photons < 1:
        raise InputValidationError(f"Photon number must be >= 1, got N={n_photons}")
    c = np.cos(theta / 2)
    s = np.exp(1j * phi) * np.sin(theta / 2)
    n_h = n_photons - np.arange(n_photons + 1)
    amps = np.array([np.sqrt(comb(n_photons, k)) * c**k * s ** (n_photons - k) for k in n_h])
    return PureSpinState.from_amplitudes(n_photons, canonical_phase(amps))


def noon_state(n_photons: int) -> PureSpinState:
    """(|N_H, 0_V> + |0_H, N_V>)/sqrt(2), aligned with z."""
    if n_photons < 1:
        raise InputValidationError(f"Photon number must be >= 1, got N={n_photons}")
    amps = np.zeros(n_photons + 1, dtype=complex)
    amps[0] = amps[-1] = 1 / np.sqrt(2)
    return PureSpinState(n_photons, amps)


def tetrahedron_state() -> PureSpinState:
    """sqrt(1/3)|4_H,0_V> + sqrt(2/3)|1_H,3_V>."""
    return PureSpinState(4, np.array([np.sqrt(1 / 3), 0, 0, np.sqrt(2 / 3), 0], dtype=complex))


def rotate(state: PureSpinState, r: RotationParams) -> PureSpinState:
    """Apply exp(-i theta.J) in the state's sector; no re-phasing."""
    amps = rotation_matrix(state.two_j, r) @ state.amplitudes
    return PureSpinState.from_amplitudes(state.two_j, amps)


@dataclass(frozen=True)
class BlockDensityMatrix:
    """
    Block-diagonal state over spin sectors; each same-spin family of d_j copies
    is stored once as a single block with weight d_j in every trace.
    """

    sectors: tuple[Sector, ...]

    def __post_init__(self):
        sectors = tuple(self.sectors)
        if not sectors:
            raise InputValidationError("A density matrix needs at least one sector")
        seen = set()
        total = 0.0
        cleaned = []
        for sector in sectors:
            if sector.two_j in seen:
                raise InputValidationError(f"Duplicate sector two_j={sector.two_j}")
            seen.add(sector.two_j)
            if sector.mult < 1:
                raise InputValidationError(f"Multiplicity must be positive, got {sector.mult}")
            block = np.array(sector.block, dtype=complex)
            if block.shape != (sector.two_j + 1, sector.two_j + 1):
                raise InputValidationError(
                    f"Block for two_j={sector.two_j} has shape {block.shape}"
                )
            if np.max(np.abs(block - block.conj().T)) > NORM_TOL:
                raise InputValidationError(f"Block two_j={sector.two_j} is not Hermitian")
            block = (block + block.conj().T) / 2
            min_eig = float(np.min(linalg.eigvalsh(block)))
            if min_eig < -PSD_TOL:
                raise InputValidationError(
                    f"Block two_j={sector.two_j} is not positive semidefinite (min eig {min_eig:.3e})"
                )
            total += sector.mult * float(np.trace(block).real)
            block.setflags(write=False)
            cleaned.append(Sector(sector.two_j, sector.mult, block))
        if abs(total - 1.0) > TRACE_TOL:
            raise InputValidationError(f"Weighted trace must be 1, got {total:.12f}")
        cleaned.sort(key=lambda s: -s.two_j)
        object.__setattr__(self, "sectors", tuple(cleaned))

    @classmethod
    def from_pure(cls, state: PureSpinState, n_photons: int | None = None) -> "BlockDensityMatrix":
        """Embed a pure state; with n_photons given, include every sector of N qubits."""
        if n_photons is None:
            return cls((Sector(state.two_j, 1, state.projector()),))
        sectors = []
        for two_j, mult in sector_layout(n_photons):
            if two_j == state.two_j:
                if mult != 1:
                    raise InputValidationError(
                        f"Pure state in a sector with multiplicity {mult} has no unique embedding"
                    )
                sectors.append(Sector(two_j, 1, state.projector()))
            else:
                sectors.append(Sector(two_j, mult, np.zeros((two_j + 1, two_j + 1), dtype=complex)))
        if state.two_j not in {s.two_j for s in sectors}:
            raise SectorMismatchError(f"two_j={state.two_j} is not a sector of N={n_photons}")
        return cls(tuple(sectors))

    @classmethod
    def maximally_mixed_sector(cls, two_j: int, n_photons: int | None = None) -> "BlockDensityMatrix":
        """Identity/(2j+1) in one sector, zero elsewhere."""
        layout = sector_layout(n_photons) if n_photons is not None else [(two_j, 1)]
        sectors = []
        for tj, mult in layout:
            if tj == two_j:
                sectors.append(Sector(tj, mult, np.eye(tj + 1, dtype=complex) / ((tj + 1) * mult)))
            else:
                sectors.append(Sector(tj, mult, np.zeros((tj + 1, tj + 1), dtype=complex)))
        return cls(tuple(sectors))

    @classmethod
    def from_blocks(cls, n_photons: int, blocks: dict[int, np.ndarray]) -> "BlockDensityMatrix":
        """Build the full N-photon layout from per-sector blocks (missing sectors are zero)."""
        sectors = []
        for two_j, mult in sector_layout(n_photons):
            block = blocks.get(two_j)
            if block is None:
                block = np.zeros((two_j + 1, two_j + 1), dtype=complex)
            sectors.append(Sector(two_j, mult, np.asarray(block, dtype=complex)))
        return cls(tuple(sectors))

    @property
    def two_js(self) -> list[int]:
        return [s.two_j for s in self.sectors]

    @property
    def n_photons(self) -> int:
        return self.sectors[0].two_j

    def has_sector(self, two_j: int) -> bool:
        return two_j in self.two_js

    def sector(self, two_j: int) -> Sector:
        for sector in self.sectors:
            if sector.two_j == two_j:
                return sector
        raise SectorMismatchError(f"Sector two_j={two_j} not present (have {self.two_js})")

    def weight(self, two_j: int) -> float:
        """Population d_j Tr(block_j)."""
        sector = self.sector(two_j)
        return sector.mult * float(np.trace(sector.block).real)

    def normalized_block(self, two_j: int) -> np.ndarray:
        sector = self.sector(two_j)
        tr = float(np.trace(sector.block).real)
        if tr <= 0:
            raise SectorMismatchError(f"Sector two_j={two_j} carries no population")
        return sector.block / tr

    def expectation(self, per_sector_operator) -> complex:
        """Sum over sectors of d_j Tr(block O_j) for O_j = per_sector_operator(two_j)."""
        return sum(
            s.mult * np.trace(s.block @ per_sector_operator(s.two_j)) for s in self.sectors
        )

    def purity(self) -> float:
        return float(sum(s.mult * np.trace(s.block @ s.block).real for s in self.sectors))

    def map_blocks(self, fn) -> "BlockDensityMatrix":
        return BlockDensityMatrix(tuple(Sector(s.two_j, s.mult, fn(s.two_j, s.block)) for s in self.sectors))


def rotate_density(rho: BlockDensityMatrix, r: RotationParams) -> BlockDensityMatrix:
    """Blockwise conjugation U_j B U_j^dagger."""

    def conjugate(two_j, block):
        u = rotation_matrix(two_j, r)
        return u @ block @ u.conj().T

    return rho.map_blocks(conjugate)


def fidelity(rho: BlockDensityMatrix, psi: PureSpinState) -> float:
    """d_j <psi| block_j |psi> for the sector of psi."""
    sector = rho.sector(psi.two_j)
    value = sector.mult * np.vdot(psi.amplitudes, sector.block @ psi.amplitudes)
    return float(np.clip(value.real, 0.0, 1.0))
