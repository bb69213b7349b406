"""
Tomography of the accessible (block-diagonal) part of a 4-photon polarization state.

Each basis projects every photon on +n / -n; the outcome is the number of
photons transmitted (k = 0..4), which is the eigenvalue m = k - 2 of n.J.
Outcomes k = 0 and k = 4 put all four photons into one multiplexed arm and are
never recorded.

The likelihood is maximized with the diluted R rho R iteration over the tied
representation blockdiag(d_j B_j), a 9x9 matrix for N = 4.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import linalg
from scipy.optimize import minimize_scalar
from tqdm import tqdm

from tools.errors import ConvergenceError, InputValidationError, PlatonicError
from tools.metrology import sqcrb, symmetric_population
from tools.spin_core import (
    BlockDensityMatrix,
    PureSpinState,
    RotationParams,
    fidelity,
    rotate_density,
    rotation_matrix,
    sector_layout,
    tetrahedron_state,
)

logger = logging.getLogger(__name__)

N_PHOTONS = 4
DETECTED = (1, 2, 3)
# axes used to sample a generic measurement geometry
GENERIC_AXES_SEED = 2024
DENSE_AXES = 64
LOGLIK_TOL = 1e-10
MAX_ITERATIONS = 100_000
FAILURE_WARN_FRACTION = 0.1


@dataclass(frozen=True)
class BasisSetting:
    axis: np.ndarray

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise InputValidationError(f"Basis axis must be a unit vector, got norm {np.linalg.norm(axis)}")
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "BasisSetting":
        return cls(np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]))

    @property
    def angles(self) -> tuple[float, float]:
        x, y, z = self.axis
        return float(np.arccos(np.clip(z, -1.0, 1.0))), float(np.arctan2(y, x))

    def rotation(self) -> RotationParams:
        """Rotation carrying z onto the axis."""
        return RotationParams.to_point(*self.angles)


def default_bases() -> list[BasisSetting]:
    """z plus two staggered rings of six axes at colatitudes 40 and 75 degrees."""
    bases = [BasisSetting(np.array([0.0, 0.0, 1.0]))]
    for colatitude, offset in ((40.0, 0.0), (75.0, 30.0)):
        for i in range(6):
            bases.append(BasisSetting.from_angles(np.deg2rad(colatitude), np.deg2rad(offset + 60.0 * i)))
    return bases


def _sector_projectors(two_j: int, basis: BasisSetting) -> dict[int, np.ndarray]:
    """Eigenprojectors of n.J in one sector, keyed by transmitted count k = m + 2."""
    u = rotation_matrix(two_j, basis.rotation())
    out = {}
    for i in range(two_j + 1):
        col = u[:, i]
        out[(two_j - 2 * i) // 2 + N_PHOTONS // 2] = np.outer(col, col.conj())
    return out


def outcome_probabilities(rho: BlockDensityMatrix, b: BasisSetting) -> np.ndarray:
    """p(k) for k = 0..4 transmitted photons, censored outcomes included."""
    if rho.n_photons != N_PHOTONS:
        raise InputValidationError(f"Tomography expects N={N_PHOTONS}, got N={rho.n_photons}")
    probs = np.zeros(N_PHOTONS + 1)
    for sector in rho.sectors:
        for k, proj in _sector_projectors(sector.two_j, b).items():
            probs[k] += sector.mult * float(np.real(np.sum(proj.conj() * sector.block)))
    if abs(probs.sum() - 1.0) > 1e-10:
        raise PlatonicError(f"Outcome probabilities sum to {probs.sum():.12f}")
    return probs


@dataclass(frozen=True)
class CountRecord:
    """Detected counts (bases x k = 1, 2, 3) and the number of trials per basis."""

    bases: tuple[BasisSetting, ...]
    counts: np.ndarray
    exposures: np.ndarray | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (len(self.bases), len(DETECTED)):
            raise InputValidationError(f"Counts must have shape ({len(self.bases)}, 3), got {counts.shape}")
        if np.any(counts < 0) or not np.all(np.equal(np.mod(counts, 1), 0)):
            raise InputValidationError("Counts must be nonnegative integers")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "bases", tuple(self.bases))
        object.__setattr__(self, "counts", counts)
        if self.exposures is not None:
            exposures = np.asarray(self.exposures, dtype=np.int64)
            if exposures.shape != (len(self.bases),) or np.any(exposures < 0):
                raise InputValidationError("Exposures must be nonnegative, one per basis")
            exposures.setflags(write=False)
            object.__setattr__(self, "exposures", exposures)

    @property
    def total_events(self) -> int:
        return int(self.counts.sum())

    def basis_weights(self) -> np.ndarray:
        """Relative exposure per basis (equal when unknown)."""
        if self.exposures is None or self.exposures.sum() == 0:
            return np.full(len(self.bases), 1.0 / len(self.bases))
        return self.exposures / self.exposures.sum()

    def scaled(self, factor: int) -> "CountRecord":
        exposures = None if self.exposures is None else self.exposures * factor
        return CountRecord(self.bases, self.counts * factor, exposures)


def allocate_events(total_events: int, n_bases: int, weights=None) -> np.ndarray:
    """Trials per basis: proportional to weights (equal by default), remainder to the first bases."""
    if weights is None:
        weights = np.ones(n_bases)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n_bases,) or np.any(weights < 0) or weights.sum() <= 0:
        raise InputValidationError("Allocation weights must be nonnegative, one per basis")
    share = weights / weights.sum() * total_events
    trials = np.floor(share).astype(np.int64)
    remainder = total_events - int(trials.sum())
    trials[np.argsort(-(share - trials), kind="stable")[:remainder]] += 1
    return trials


def simulate_counts(rho: BlockDensityMatrix, bases, total_events: int, seed: int, allocation=None) -> CountRecord:
    """
    Multinomial outcomes for post-selected events; k = 0 and k = 4 are discarded.

    Args:
        rho: N=4 state.
        bases: Measurement settings.
        total_events: Trials shared across bases.
        seed: Seed for numpy's default generator.
        allocation: Optional per-basis weights.
    """
    bases = list(bases)
    if total_events < 0:
        raise InputValidationError(f"Event count must be >= 0, got {total_events}")
    trials = allocate_events(total_events, len(bases), allocation)
    rng = np.random.default_rng(seed)
    counts = np.zeros((len(bases), len(DETECTED)), dtype=np.int64)
    for i, b in enumerate(bases):
        if trials[i] == 0:
            continue
        probs = np.clip(outcome_probabilities(rho, b), 0.0, None)
        draw = rng.multinomial(trials[i], probs / probs.sum())
        counts[i] = draw[list(DETECTED)]
    logger.debug("[TOMO] simulated %d detected of %d trials", counts.sum(), total_events)
    return CountRecord(tuple(bases), counts, trials)


def _offsets() -> list[tuple[int, int, int, int]]:
    """(two_j, mult, start, stop) of each sector in the tied 9x9 representation."""
    out, start = [], 0
    for two_j, mult in sector_layout(N_PHOTONS):
        out.append((two_j, mult, start, start + two_j + 1))
        start += two_j + 1
    return out


def _tied_dim() -> int:
    return _offsets()[-1][3]


def detection_effects(bases) -> np.ndarray:
    """Stacked effects Pi_bk (bases x 3, 9, 9) on the tied representation."""
    dim = _tied_dim()
    effects = np.zeros((len(bases), len(DETECTED), dim, dim), dtype=complex)
    for b_idx, b in enumerate(bases):
        for two_j, _, lo, hi in _offsets():
            for k, proj in _sector_projectors(two_j, b).items():
                if k in DETECTED:
                    effects[b_idx, k - 1, lo:hi, lo:hi] = proj
    return effects


def _hermitian_basis(dim_blocks) -> list[np.ndarray]:
    dim = sum(dim_blocks)
    basis, start = [], 0
    for n in dim_blocks:
        for i in range(n):
            for j in range(i, n):
                if i == j:
                    h = np.zeros((dim, dim), dtype=complex)
                    h[start + i, start + i] = 1
                    basis.append(h)
                else:
                    re = np.zeros((dim, dim), dtype=complex)
                    re[start + i, start + j] = re[start + j, start + i] = 1 / np.sqrt(2)
                    im = np.zeros((dim, dim), dtype=complex)
                    im[start + i, start + j] = -1j / np.sqrt(2)
                    im[start + j, start + i] = 1j / np.sqrt(2)
                    basis.extend([re, im])
        start += n
    return basis


def _design_rank(bases) -> int:
    """Rank of the map from the 35 accessible parameters to detected probabilities."""
    bases = list(bases)
    if not bases:
        return 0
    effects = detection_effects(bases).reshape(-1, _tied_dim(), _tied_dim())
    params = _hermitian_basis([hi - lo for _, _, lo, hi in _offsets()])
    design = np.array([[np.real(np.sum(e.conj() * h)) for h in params] for e in effects])
    return int(np.linalg.matrix_rank(design, tol=1e-9 * max(1.0, np.abs(design).max())))


def generic_axes(n_axes: int, seed: int = GENERIC_AXES_SEED) -> list[BasisSetting]:
    """Isotropically random unit axes."""
    if n_axes < 1:
        raise InputValidationError(f"Need at least one axis, got {n_axes}")
    vectors = np.random.default_rng(seed).normal(size=(n_axes, 3))
    return [BasisSetting(v / np.linalg.norm(v)) for v in vectors]


@lru_cache(maxsize=None)
def accessible_rank(n_axes: int | None = None) -> int:
    """
    Rank reached by n_axes generic bases; the dense limit when n_axes is None.

    The censored outcomes hide 4 of the 35 parameters, so the dense limit is 31.
    Thirteen axes stop short of it: the even-rank parts of each spin-2 outcome
    span a 15-dimensional function space on the sphere, sampled at 13 points.
    """
    rank = _design_rank(generic_axes(DENSE_AXES if n_axes is None else n_axes))
    logger.debug("[TOMO] accessible rank for %s axes: %d", n_axes or DENSE_AXES, rank)
    return rank


def measurement_rank(counts: CountRecord, bases=None) -> int:
    """Rank of the measurement map over the bases that recorded events; bases override counts.bases."""
    bases = list(bases) if bases is not None else list(counts.bases)
    if len(bases) != len(counts.bases):
        raise InputValidationError(f"Got {len(bases)} bases for a record of {len(counts.bases)}")
    return _design_rank(b for b, row in zip(bases, counts.counts) if row.sum() > 0)


@dataclass(frozen=True)
class ReconstructionResult:
    rho_hat: BlockDensityMatrix
    log_likelihood: float
    phi: float = 0.0
    mc_errors: "MonteCarloErrors | None" = None
    iterations: int = 0


def _loglik(sigma: np.ndarray, effects: np.ndarray, freqs: np.ndarray) -> tuple[float, np.ndarray]:
    probs = np.einsum("kij,ji->k", effects, sigma).real
    mask = freqs > 0
    if np.any(probs[mask] <= 0):
        return -np.inf, probs
    return float(np.sum(freqs[mask] * np.log(probs[mask]))), probs


def _rho_step(sigma: np.ndarray, r_op: np.ndarray, epsilon: float | None) -> np.ndarray:
    if epsilon is None:
        nxt = r_op @ sigma @ r_op
    else:
        dil = np.eye(sigma.shape[0]) + epsilon * r_op
        nxt = dil @ sigma @ dil
    nxt = (nxt + nxt.conj().T) / 2
    return nxt / np.trace(nxt).real


def mle_reconstruct(
    counts: CountRecord, bases=None, tol: float = LOGLIK_TOL, max_iterations: int = MAX_ITERATIONS
) -> ReconstructionResult:
    """
    Maximum-likelihood block-diagonal state with same-spin copies tied.

    Args:
        counts: Detected counts; exposures weight the bases when present.
        bases: Overrides counts.bases when given (must match in length).
        tol: Stop once the mean log-likelihood gains less than this per step.
        max_iterations: Iteration cap.

    Returns:
        ReconstructionResult with rho_hat and the mean log-likelihood per event.

    Raises:
        InputValidationError: empty or under-determined record.
        ConvergenceError: iteration cap reached.
    """
    bases = list(bases) if bases is not None else list(counts.bases)
    if len(bases) != len(counts.bases):
        raise InputValidationError(f"Got {len(bases)} bases for a record of {len(counts.bases)}")
    if counts.total_events == 0:
        raise InputValidationError("Count record is empty")
    rank = measurement_rank(counts, bases)
    required = accessible_rank(len(default_bases()))
    if rank < required:
        raise InputValidationError(
            f"Count record is under-determined: measurement rank {rank} < {required} "
            f"(dense limit {accessible_rank()})"
        )

    dim = _tied_dim()
    raw = detection_effects(bases) * counts.basis_weights()[:, None, None, None]
    raw = raw.reshape(-1, dim, dim)
    g_vals, g_vecs = linalg.eigh(raw.sum(axis=0))
    if g_vals.min() <= 1e-12 * g_vals.max():
        raise InputValidationError("Detection operator is singular for this basis set")
    g_inv_half = (g_vecs / np.sqrt(g_vals)) @ g_vecs.conj().T
    effects = np.einsum("ab,kbc,cd->kad", g_inv_half, raw, g_inv_half)
    freqs = counts.counts.reshape(-1) / counts.total_events

    sigma = np.eye(dim, dtype=complex) / dim
    loglik, probs = _loglik(sigma, effects, freqs)
    iterations = 0
    delta = np.inf
    while iterations < max_iterations:
        iterations += 1
        weights = np.where(freqs > 0, freqs / np.where(probs > 0, probs, 1.0), 0.0)
        r_op = np.einsum("k,kij->ij", weights, effects)
        candidate = _rho_step(sigma, r_op, None)
        new_loglik, new_probs = _loglik(candidate, effects, freqs)
        epsilon = 1.0
        while new_loglik < loglik and epsilon > 1e-12:
            candidate = _rho_step(sigma, r_op, epsilon)
            new_loglik, new_probs = _loglik(candidate, effects, freqs)
            epsilon /= 2
        if new_loglik < loglik:
            delta = 0.0
            break
        delta = new_loglik - loglik
        sigma, loglik, probs = candidate, new_loglik, new_probs
        if delta < tol:
            break
    else:
        raise ConvergenceError(
            "Maximum-likelihood iteration did not converge",
            {"iterations": iterations, "delta": delta, "log_likelihood": loglik},
        )
    logger.debug("[TOMO] ✓ converged after %d iterations (mean loglik %.6f)", iterations, loglik)

    tied = g_inv_half @ sigma @ g_inv_half
    tied = (tied + tied.conj().T) / 2
    tied /= np.trace(tied).real
    blocks = {}
    for two_j, mult, lo, hi in _offsets():
        block = tied[lo:hi, lo:hi] / mult
        vals, vecs = linalg.eigh(block)
        blocks[two_j] = (vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T
    norm = sum(mult * np.trace(blocks[two_j]).real for two_j, mult, _, _ in _offsets())
    rho_hat = BlockDensityMatrix.from_blocks(N_PHOTONS, {tj: b / norm for tj, b in blocks.items()})
    return ReconstructionResult(rho_hat, loglik, iterations=iterations)


def align_phase(rho_hat: BlockDensityMatrix, target: PureSpinState, grid: int = 720) -> tuple[float, BlockDensityMatrix]:
    """
    phi in (-pi, pi] maximizing the fidelity of exp(-i Jz phi) rho exp(i Jz phi) with target.

    Plateaus resolve to the smallest |phi|.
    """
    rho_hat.sector(target.two_j)

    def score(phi: float) -> float:
        return fidelity(rotate_density(rho_hat, RotationParams.about([0, 0, 1], phi)), target)

    phis = np.linspace(-np.pi, np.pi, grid + 1)[1:]
    values = np.array([score(p) for p in phis])
    best = values.max()
    if best - values.min() < 1e-12:
        phi = 0.0
    else:
        candidates = phis[values >= best - 1e-9]
        start = candidates[np.argmin(np.abs(candidates))]
        step = 2 * np.pi / grid
        res = minimize_scalar(lambda p: -score(p), bounds=(start - step, start + step), method="bounded",
                              options={"xatol": 1e-11})
        phi = float(res.x) if -res.fun >= score(start) else float(start)
        phi = float(np.angle(np.exp(1j * phi)))
        if phi == -np.pi:
            phi = np.pi
    return phi, rotate_density(rho_hat, RotationParams.about([0, 0, 1], phi))


@dataclass(frozen=True)
class MonteCarloErrors:
    n_resamples: int
    n_failed: int
    entry_std: dict[int, np.ndarray] = field(default_factory=dict)
    scalars: dict[str, tuple[float, float]] = field(default_factory=dict)

    def std(self, name: str) -> float:
        return self.scalars[name][1]


def derived_scalars(rho: BlockDensityMatrix, target: PureSpinState) -> dict[str, float]:
    return {
        "fidelity": fidelity(rho, target),
        "sqcrb": sqcrb(rho),
        "symmetric_population": symmetric_population(rho),
    }


def _resample(counts: CountRecord, bases, seed: int, target: PureSpinState, tol: float):
    rng = np.random.default_rng(seed)
    record = CountRecord(counts.bases, rng.poisson(counts.counts), counts.exposures)
    result = mle_reconstruct(record, bases, tol=tol)
    _, aligned = align_phase(result.rho_hat, target)
    return aligned


def monte_carlo_errors(
    counts: CountRecord,
    bases=None,
    n_resamples: int = 50,
    seed: int = 0,
    target: PureSpinState | None = None,
    workers: int = 1,
    tol: float = LOGLIK_TOL,
) -> MonteCarloErrors:
    """
    Poisson-resample every bin, reconstruct, phase-align and take standard deviations.

    Resample i draws from default_rng(seed + i); results are aggregated by index.
    """
    if n_resamples < 2:
        raise InputValidationError(f"Need at least 2 resamples, got {n_resamples}")
    target = target or tetrahedron_state()
    bases = list(bases) if bases is not None else list(counts.bases)

    def run(i):
        try:
            return _resample(counts, bases, seed + i, target, tol)
        except (ConvergenceError, InputValidationError) as e:
            logger.debug("[MC] resample %d failed: %s", i, e)
            return None

    quiet = not logger.isEnabledFor(logging.INFO)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(run, range(n_resamples)), total=n_resamples, desc="MC", disable=quiet))
    else:
        results = [run(i) for i in tqdm(range(n_resamples), desc="MC", disable=quiet)]

    ok = [r for r in results if r is not None]
    failed = n_resamples - len(ok)
    if failed > FAILURE_WARN_FRACTION * n_resamples:
        logger.warning("[MC] ⚠ %d/%d resamples failed", failed, n_resamples)
    if len(ok) < 2:
        raise ConvergenceError("Too few successful resamples", {"failed": failed, "n_resamples": n_resamples})

    entry_std = {}
    for two_j, _ in sector_layout(N_PHOTONS):
        stack = np.array([r.sector(two_j).block for r in ok])
        entry_std[two_j] = stack.real.std(axis=0, ddof=1) + 1j * stack.imag.std(axis=0, ddof=1)
    scalars = {}
    per_sample = [derived_scalars(r, target) for r in ok]
    for name in per_sample[0]:
        values = np.array([s[name] for s in per_sample])
        finite = values[np.isfinite(values)]
        if finite.size >= 2:
            scalars[name] = (float(finite.mean()), float(finite.std(ddof=1)))
        else:
            scalars[name] = (np.inf, np.inf)
    logger.info("[MC] ✓ %d resamples (%d failed), fidelity %.4f ± %.4f", n_resamples, failed, *scalars["fidelity"])
    return MonteCarloErrors(n_resamples, failed, entry_std, scalars)


def coherence_report(rho: BlockDensityMatrix, target: PureSpinState | None = None) -> dict:
    """Populations of |2,2> and |2,-1>, their coherence and the largest coherence they allow."""
    block = rho.normalized_block(N_PHOTONS)
    p_top, p_low = float(block[0, 0].real), float(block[3, 3].real)
    coherence = complex(block[0, 3])
    report = {
        "p_2": p_top,
        "p_minus1": p_low,
        "population_ratio": p_top / p_low if p_low > 0 else np.inf,
        "coherence_modulus": abs(coherence),
        "coherence_phase": float(np.angle(coherence)),
        "max_coherence": float(np.sqrt(max(p_top * p_low, 0.0))),
    }
    if target is not None:
        report["fidelity"] = fidelity(rho, target)
    return report


def reconstruct(
    counts: CountRecord,
    target: PureSpinState | None = None,
    n_resamples: int = 0,
    seed: int = 0,
    workers: int = 1,
    tol: float = LOGLIK_TOL,
) -> ReconstructionResult:
    """MLE, phase alignment to target and optional Monte-Carlo errors in one call."""
    target = target or tetrahedron_state()
    result = mle_reconstruct(counts, tol=tol)
    phi, aligned = align_phase(result.rho_hat, target)
    errors = None
    if n_resamples:
        errors = monte_carlo_errors(counts, n_resamples=n_resamples, seed=seed, target=target, workers=workers, tol=tol)
    return replace(result, rho_hat=aligned, phi=phi, mc_errors=errors)
