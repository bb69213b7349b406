"""
Fisher-information bounds for estimating a rotation generated by J.

Everything here works on the block-diagonal (accessible) state: generators act
sector by sector and each block counts with its multiplicity d_j.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.signal import find_peaks

from tools.errors import InputValidationError, PlatonicError
from tools.spin_core import (
    BlockDensityMatrix,
    PureSpinState,
    RotationParams,
    coherent_state,
    fidelity,
    generators_for,
    noon_state,
    rotate,
    rotate_density,
    tetrahedron_state,
)
from tools.tensor_ops import multipole_coefficients

EPS_RANK = 1e-10
STRATEGIES = ("coherent_single", "coherent_sequential", "noon_simultaneous", "noon_sequential", "platonic")


@dataclass(frozen=True)
class CovMatrix3:
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float).reshape(3, 3)
        if np.max(np.abs(mat - mat.T)) > 1e-12:
            raise PlatonicError("Covariance matrix is not symmetric")
        if np.min(linalg.eigvalsh(mat)) < -1e-10:
            raise PlatonicError("Covariance matrix is not positive semidefinite")
        mat = (mat + mat.T) / 2
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)


@dataclass(frozen=True)
class QfiMatrix3:
    matrix: np.ndarray
    rank: int
    singular: bool


@dataclass(frozen=True)
class StrategyReport:
    n_photons: int
    entries: dict[str, float] = field(default_factory=dict)

    def as_row(self) -> dict:
        return {"N": self.n_photons, **{name: self.entries.get(name, np.nan) for name in STRATEGIES}}


@dataclass(frozen=True)
class UnpolarizationDiagnostics:
    passed: bool
    first_moment_norm: float
    second_moment_residual: float
    target: float
    second_moments: np.ndarray

    @property
    def residual(self) -> float:
        return max(self.first_moment_norm, self.second_moment_residual)

    def __bool__(self):
        return self.passed


def as_density(state) -> BlockDensityMatrix:
    if isinstance(state, PureSpinState):
        return BlockDensityMatrix.from_pure(state)
    if isinstance(state, BlockDensityMatrix):
        return state
    raise InputValidationError(f"Expected a spin state, got {type(state).__name__}")


def _first_and_second_moments(rho: BlockDensityMatrix) -> tuple[np.ndarray, np.ndarray]:
    mean = np.zeros(3)
    second = np.zeros((3, 3))
    for sector in rho.sectors:
        ops = generators_for(sector.two_j).as_tuple()
        for l in range(3):
            mean[l] += sector.mult * np.trace(sector.block @ ops[l]).real
            for m in range(3):
                sym = (ops[l] @ ops[m] + ops[m] @ ops[l]) / 2
                second[l, m] += sector.mult * np.trace(sector.block @ sym).real
    return mean, second


def spin_moments(state) -> tuple[np.ndarray, np.ndarray]:
    """<J> and the symmetrized second moments <(J_l J_m + J_m J_l)/2>."""
    return _first_and_second_moments(as_density(state))


def spin_covariance(rho) -> CovMatrix3:
    """Symmetrized covariance of (Jx, Jy, Jz) with multiplicity-weighted blocks."""
    mean, second = _first_and_second_moments(as_density(rho))
    return CovMatrix3(second - np.outer(mean, mean))


def qfi_matrix(rho, eps_rank: float = EPS_RANK) -> QfiMatrix3:
    """
    Quantum Fisher information of the rotation family at theta = 0.

    Args:
        rho: BlockDensityMatrix (or PureSpinState).
        eps_rank: Relative cutoff; pairs with lambda_a + lambda_b below
            eps_rank * lambda_max are dropped.

    Returns:
        QfiMatrix3 with rank and singular flag.
    """
    rho = as_density(rho)
    spectra = [linalg.eigh(sector.block) for sector in rho.sectors]
    lam_max = max(float(np.max(vals)) for vals, _ in spectra)
    cutoff = eps_rank * lam_max
    fisher = np.zeros((3, 3))
    for sector, (vals, vecs) in zip(rho.sectors, spectra):
        ops = [vecs.conj().T @ op @ vecs for op in generators_for(sector.two_j).as_tuple()]
        total = vals[:, None] + vals[None, :]
        diff = vals[:, None] - vals[None, :]
        weights = np.where(total > cutoff, diff**2 / np.where(total > cutoff, total, 1.0), 0.0)
        for l in range(3):
            for m in range(l, 3):
                value = 2 * np.sum(weights * (ops[l] * ops[m].T).real)
                fisher[l, m] += sector.mult * value
                fisher[m, l] = fisher[l, m]
    eig = linalg.eigvalsh(fisher)
    scale = max(float(np.max(np.abs(eig))), 1.0)
    rank = int(np.sum(eig > 1e-9 * scale))
    return QfiMatrix3(fisher, rank, rank < 3)


def sqcrb(rho, eps_rank: float = EPS_RANK) -> float:
    """Tr[F^-1] with identity cost; +inf when F is singular."""
    qfi = qfi_matrix(rho, eps_rank)
    if qfi.singular:
        return np.inf
    return float(np.trace(linalg.inv(qfi.matrix)))


def closed_form_bounds(n_photons: int) -> dict[str, float]:
    """Every strategy formula evaluated at N, ignoring existence conditions."""
    if n_photons < 1:
        raise InputValidationError(f"Photon number must be >= 1, got N={n_photons}")
    n = float(n_photons)
    return {
        "coherent_single": np.inf,
        "coherent_sequential": 9 / (2 * n),
        "noon_simultaneous": 2 / n + 1 / n**2,
        "noon_sequential": 27 / (n * (n + 6)),
        "platonic": 9 / (n * (n + 2)),
    }


def strategy_report(n_photons: int, cross_check: bool = True) -> StrategyReport:
    """
    Scalar bounds of the outlined strategies at N photons.

    Sequential entries need 3 | N; the platonic entry needs a second-order
    unpolarized state, which exists for N = 4 and N >= 6.
    """
    forms = closed_form_bounds(n_photons)
    entries = {"coherent_single": forms["coherent_single"], "noon_simultaneous": forms["noon_simultaneous"]}
    if n_photons % 3 == 0:
        entries["coherent_sequential"] = forms["coherent_sequential"]
        entries["noon_sequential"] = forms["noon_sequential"]
    if n_photons == 4 or n_photons >= 6:
        entries["platonic"] = forms["platonic"]

    if cross_check and n_photons == 4:
        checks = {"platonic": sqcrb(tetrahedron_state()), "noon_simultaneous": sqcrb(noon_state(4))}
        for name, value in checks.items():
            if abs(value - entries[name]) > 1e-9:
                raise PlatonicError(f"Closed form for {name} disagrees with explicit state ({value} vs {entries[name]})")
    return StrategyReport(n_photons, entries)


def sequential_states(kind: str, n_photons: int) -> list[PureSpinState]:
    """Three N/3-photon states aligned with x, y and z."""
    if n_photons % 3 != 0:
        raise InputValidationError(f"Sequential strategies need N divisible by 3, got N={n_photons}")
    n = n_photons // 3
    to_x = RotationParams.about([0, 1, 0], np.pi / 2)
    to_y = RotationParams.about([1, 0, 0], -np.pi / 2)
    if kind == "coherent":
        base = coherent_state(n, 0.0, 0.0)
    elif kind == "noon":
        base = noon_state(n)
    else:
        raise InputValidationError(f"Unknown sequential strategy '{kind}'")
    return [rotate(base, to_x), rotate(base, to_y), base]


def sequential_covariance(kind: str, n_photons: int) -> tuple[CovMatrix3, list[CovMatrix3]]:
    """Summed covariance of the sequential states, plus the individual terms."""
    parts = [spin_covariance(part) for part in sequential_states(kind, n_photons)]
    return CovMatrix3(sum(p.matrix for p in parts)), parts


def sequential_sqcrb(kind: str, n_photons: int) -> float:
    total, _ = sequential_covariance(kind, n_photons)
    eig = linalg.eigvalsh(total.matrix)
    if np.min(eig) <= 1e-12:
        return np.inf
    return float(np.trace(linalg.inv(total.matrix)) / 4)


def is_second_order_unpolarized(state: PureSpinState, tol: float = 1e-10) -> UnpolarizationDiagnostics:
    """<J> = 0 and <J_l J_m> = (N/6)(N/2 + 1) delta_lm."""
    if not isinstance(state, PureSpinState):
        raise InputValidationError("The unpolarization test takes a single-sector pure state")
    n = state.n_photons
    mean, second = spin_moments(state)
    target = (n / 6) * (n / 2 + 1)
    first_norm = float(np.linalg.norm(mean))
    second_residual = float(np.max(np.abs(second - target * np.eye(3))))
    passed = first_norm <= tol and second_residual <= tol
    return UnpolarizationDiagnostics(passed, first_norm, second_residual, target, second)


def multipole_moments(rho, two_j: int | None = None) -> np.ndarray:
    """
    M_k = sum_q |Tr(b T_kq^dagger)|^2, k = 0..2j, for the trace-normalized block b.
    """
    rho = as_density(rho)
    if two_j is None:
        two_j = rho.n_photons
    block = rho.normalized_block(two_j)
    coeffs = multipole_coefficients(block, two_j)
    moments = np.zeros(two_j + 1)
    for (k, _), value in coeffs.items():
        moments[k] += abs(value) ** 2
    purity = float(np.trace(block @ block).real)
    if abs(moments.sum() - purity) > 1e-10:
        raise PlatonicError(f"Multipole sum {moments.sum():.12f} differs from purity {purity:.12f}")
    return moments


def rotation_scan(rho, axis, thetas, reference: PureSpinState | None = None) -> np.ndarray:
    """Fidelity with the reference (default: tetrahedron) after rotating by theta about axis."""
    rho = as_density(rho)
    reference = reference or tetrahedron_state()
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.array([fidelity(rotate_density(rho, RotationParams(theta * axis)), reference) for theta in thetas])


def count_periodic_maxima(curve: np.ndarray, prominence: float = 1e-6) -> int:
    """Local maxima of a curve sampled over one full period."""
    values = np.asarray(curve, dtype=float)
    tiled = np.concatenate([values, values, values])
    peaks, _ = find_peaks(tiled, prominence=prominence)
    size = values.size
    return int(np.sum((peaks >= size) & (peaks < 2 * size)))


def symmetric_population(rho: BlockDensityMatrix) -> float:
    """Population of the fully symmetric (largest-spin) sector."""
    return rho.weight(rho.n_photons)


def dominant_eigenstate(rho: BlockDensityMatrix, two_j: int | None = None) -> tuple[float, PureSpinState]:
    """Largest eigenvector of a sector block and its share of the whole state."""
    two_j = rho.n_photons if two_j is None else two_j
    sector = rho.sector(two_j)
    vals, vecs = linalg.eigh(sector.block)
    weight = sector.mult * float(vals[-1])
    return weight, PureSpinState.from_amplitudes(two_j, vecs[:, -1])
