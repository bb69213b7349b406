"""
Truncated Fock-space model of the heralded tetrahedron-state source.

Pipeline (creation operators acting on vacuum):
  1. squeezed vacuum on H and a coherent state on V
  2. lumped collinear loss t on H and V
  3. half-wave plate at -22.5 deg: the 3-photon part becomes (a_H^3 + a_V^3) N00N
  4. heralded pair: signal mode S and herald, each with lumped loss tau
  5. Sagnac splitter: V and S mix 50:50, one port discarded
  6. 45 deg plate swaps H and V
  7. post-select a herald click and exactly four photons in H + V

Loss is tracked by branching on the number of photons each environment mode
received, so the register is a mixture of sparse pure vectors.
"""
import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import eval_genlaguerre, gammaln

from tools.errors import InputValidationError, TruncationWarning
from tools.spin_core import BlockDensityMatrix, Sector, sector_layout

logger = logging.getLogger(__name__)

Occupation = tuple[int, ...]
BranchKey = tuple[tuple[str, int], ...]

SIGNAL = "S"
DETECTED_PHOTONS = 4
NOON_PLATE_DEG = -22.5
SAGNAC_PLATE_DEG = 22.5
SWAP_PLATE_DEG = 45.0
# amplitudes below this are rounding residue of interfering terms
AMP_TOL = 1e-15


class SourceParams(BaseModel):
    """Measured source values by default; alpha defaults to sqrt(2 eta t)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    eta: float = Field(0.078, ge=0.0, lt=0.5)
    mu: float = Field(0.14, ge=0.0, lt=1.0)
    t: float = Field(0.16, ge=0.0, le=1.0)
    tau: float = Field(0.12, ge=0.0, le=1.0)
    alpha: float | None = Field(None, ge=0.0)
    n_max: int = Field(8, ge=6)
    epsilon: float = Field(0.0, ge=0.0, le=1.0)
    truncation_tol: float = Field(1e-6, gt=0.0)

    @property
    def coherent_amplitude(self) -> float:
        """Detected coherent amplitude."""
        if self.alpha is not None:
            return self.alpha
        return float(np.sqrt(2 * self.eta * self.t))

    @property
    def uses_default_alpha(self) -> bool:
        return self.alpha is None

    @property
    def source_displacement(self) -> float:
        """Amplitude before the collinear transmission t."""
        if self.t == 0:
            return 0.0
        return self.coherent_amplitude / np.sqrt(self.t)


@dataclass
class FockRegister:
    modes: tuple[str, ...]
    n_max: int
    branches: dict[BranchKey, dict[Occupation, complex]]
    residual: float = 0.0
    env_labels: frozenset = frozenset()

    @classmethod
    def vacuum(cls, n_max: int, modes: tuple[str, ...] = ("H", "V", "herald")) -> "FockRegister":
        if n_max < 1:
            raise InputValidationError(f"Truncation must be >= 1, got {n_max}")
        return cls(tuple(modes), n_max, {(): {(0,) * len(modes): 1.0 + 0j}})

    def index(self, mode: str) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise InputValidationError(f"Unknown mode '{mode}' (register has {self.modes})") from None

    def total_probability(self) -> float:
        return float(sum(abs(a) ** 2 for states in self.branches.values() for a in states.values()))

    def mode_distribution(self, mode: str) -> dict[int, float]:
        idx = self.index(mode)
        dist = defaultdict(float)
        for states in self.branches.values():
            for occ, amp in states.items():
                dist[occ[idx]] += abs(amp) ** 2
        return dict(sorted(dist.items()))

    def expected_photons(self, mode: str) -> float:
        return float(sum(n * p for n, p in self.mode_distribution(mode).items()))

    def derive(self, branches, modes=None, dropped: float = 0.0, env_labels=None) -> "FockRegister":
        return FockRegister(
            tuple(modes or self.modes),
            self.n_max,
            branches,
            self.residual + dropped,
            frozenset(env_labels if env_labels is not None else self.env_labels),
        )


def _with_count(key: BranchKey, label: str, count: int) -> BranchKey:
    if count == 0:
        return key
    return tuple(sorted((*key, (label, count))))


def _drop_small(states: dict) -> dict:
    return {occ: amp for occ, amp in states.items() if abs(amp) > AMP_TOL}


def _creation_series(reg: FockRegister, mode: str, coefficients: dict[int, complex]) -> FockRegister:
    """Apply sum_n c_n (a^dagger)^n to one mode, truncating at n_max."""
    idx = reg.index(mode)
    branches = {}
    dropped = 0.0
    for key, states in reg.branches.items():
        kept = defaultdict(complex)
        lost = defaultdict(complex)
        for occ, amp in states.items():
            k = occ[idx]
            for n, coeff in coefficients.items():
                new = list(occ)
                new[idx] = k + n
                value = amp * coeff * np.sqrt(factorial(k + n) / factorial(k))
                target = kept if sum(new) <= reg.n_max else lost
                target[tuple(new)] += value
        dropped += sum(abs(a) ** 2 for a in lost.values())
        branches[key] = _drop_small(kept)
    return reg.derive(branches, dropped=dropped)


def _require_vacuum(reg: FockRegister, mode: str, operation: str):
    idx = reg.index(mode)
    for states in reg.branches.values():
        if any(occ[idx] for occ in states):
            raise InputValidationError(f"{operation} expects mode '{mode}' in vacuum")


def apply_single_mode_squeezer(reg: FockRegister, mode: str, xi: float) -> FockRegister:
    """
    Weak squeezed vacuum: (1 - |xi|^2)^(1/4) sum_n (xi/2)^n (a^dagger)^(2n) / n!.

    The pair coefficient xi/2 plays the role of eta in the source model.
    """
    if mode != "H":
        raise InputValidationError(f"The collinear squeezer acts on mode H, got '{mode}'")
    if xi == 0:
        return reg
    if abs(xi) >= 1:
        raise InputValidationError(f"Squeezing needs |xi| < 1, got {xi}")
    _require_vacuum(reg, mode, "Squeezer")
    norm = (1 - abs(xi) ** 2) ** 0.25
    coefficients = {
        2 * p: norm * (xi / 2) ** p / factorial(p) for p in range(reg.n_max // 2 + 1)
    }
    out = _creation_series(reg, mode, coefficients)
    # the series beyond n_max is never generated; account for its weight
    tail = max(0.0, reg.total_probability() - out.total_probability() - (out.residual - reg.residual))
    return out.derive(out.branches, dropped=tail) if tail > 0 else out


def _displacement_element(n: int, k: int, alpha: complex) -> complex:
    x = abs(alpha) ** 2
    if n >= k:
        log_ratio = 0.5 * (gammaln(k + 1) - gammaln(n + 1))
        return np.exp(log_ratio - x / 2) * alpha ** (n - k) * eval_genlaguerre(k, n - k, x)
    log_ratio = 0.5 * (gammaln(n + 1) - gammaln(k + 1))
    return np.exp(log_ratio - x / 2) * (-np.conj(alpha)) ** (k - n) * eval_genlaguerre(n, k - n, x)


def apply_displacement(reg: FockRegister, mode: str = "V", alpha: complex = 0.0, headroom: int = 12) -> FockRegister:
    """Coherent displacement D(alpha) on one mode."""
    if alpha == 0:
        return reg
    idx = reg.index(mode)
    branches = {}
    dropped = 0.0
    for key, states in reg.branches.items():
        kept = defaultdict(complex)
        lost = defaultdict(complex)
        for occ, amp in states.items():
            k = occ[idx]
            others = sum(occ) - k
            for n in range(reg.n_max + headroom + 1):
                new = list(occ)
                new[idx] = n
                value = amp * _displacement_element(n, k, alpha)
                target = kept if others + n <= reg.n_max else lost
                target[tuple(new)] += value
        dropped += sum(abs(a) ** 2 for a in lost.values())
        branches[key] = _drop_small(kept)
    return reg.derive(branches, dropped=dropped)


def apply_heralded_pair(reg: FockRegister, mu: float) -> FockRegister:
    """
    Non-collinear pair source: sqrt(1 - mu^2) sum_s mu^s |s>_S |s>_herald.

    The signal lives in its own mode S until the Sagnac splitter merges it with
    the V path; after the final swap it leaves in H.
    """
    if mu == 0:
        return reg
    if not 0 <= mu < 1:
        raise InputValidationError(f"Pair amplitude needs 0 <= mu < 1, got {mu}")
    modes = reg.modes if SIGNAL in reg.modes else (*reg.modes, SIGNAL)
    widened = {
        key: {(occ + (0,) if len(occ) < len(modes) else occ): amp for occ, amp in states.items()}
        for key, states in reg.branches.items()
    }
    reg = reg.derive(widened, modes=modes)
    _require_vacuum(reg, SIGNAL, "Heralded pair")
    _require_vacuum(reg, "herald", "Heralded pair")
    s_idx, h_idx = reg.index(SIGNAL), reg.index("herald")
    norm = np.sqrt(1 - mu**2)
    branches = {}
    dropped = 0.0
    for key, states in reg.branches.items():
        kept = {}
        for occ, amp in states.items():
            headroom = (reg.n_max - sum(occ)) // 2
            for s in range(headroom + 1):
                new = list(occ)
                new[s_idx] = s
                new[h_idx] = s
                kept[tuple(new)] = amp * norm * mu**s
            dropped += abs(amp) ** 2 * mu ** (2 * (headroom + 1))
        branches[key] = kept
    return reg.derive(branches, dropped=dropped)


def waveplate_matrix(angle_deg: float) -> np.ndarray:
    """Half-wave plate Jones matrix; column c is the image of input mode c."""
    two = np.deg2rad(2 * angle_deg)
    u = np.array([[np.cos(two), np.sin(two)], [np.sin(two), -np.cos(two)]], dtype=complex)
    u[np.abs(u) < 1e-15] = 0
    return u


def _mix_pair(a: int, b: int, u: np.ndarray) -> dict[tuple[int, int], complex]:
    """Image of |a, b> under a_in^dagger -> sum_out u[out, in] a_out^dagger."""
    out = defaultdict(complex)
    norm = np.sqrt(factorial(a) * factorial(b))
    n = a + b
    for i in range(a + 1):
        ci = comb(a, i) * u[0, 0] ** i * u[1, 0] ** (a - i)
        if ci == 0:
            continue
        for k in range(b + 1):
            ck = comb(b, k) * u[0, 1] ** k * u[1, 1] ** (b - k)
            if ck == 0:
                continue
            first = i + k
            out[(first, n - first)] += ci * ck * np.sqrt(factorial(first) * factorial(n - first)) / norm
    return out


def _trace_mode(reg: FockRegister, mode: str, label: str) -> FockRegister:
    if label in reg.env_labels:
        raise InputValidationError(f"Environment label '{label}' already used")
    idx = reg.index(mode)
    branches = defaultdict(lambda: defaultdict(complex))
    for key, states in reg.branches.items():
        for occ, amp in states.items():
            rest = occ[:idx] + occ[idx + 1:]
            branches[_with_count(key, label, occ[idx])][rest] += amp
    modes = reg.modes[:idx] + reg.modes[idx + 1:]
    cleaned = {key: _drop_small(dict(states)) for key, states in branches.items()}
    return reg.derive(cleaned, modes=modes, env_labels=reg.env_labels | {label})


def apply_waveplate(
    reg: FockRegister,
    angle: float | None = None,
    matrix=None,
    modes: tuple[str, str] = ("H", "V"),
    discard: str | None = None,
) -> FockRegister:
    """
    Photon-number conserving mix of two modes.

    Args:
        reg: Input register.
        angle: Half-wave plate angle in degrees (ignored when matrix is given).
        matrix: Explicit 2x2 unitary, column c the image of modes[c].
        modes: The two modes being mixed.
        discard: If set, the second output port is traced out under this
            environment label (the PBS attenuation step).

    Returns:
        The transformed register.
    """
    if matrix is None:
        if angle is None:
            raise InputValidationError("Give a plate angle or a 2x2 matrix")
        u = waveplate_matrix(angle)
    else:
        u = np.asarray(matrix, dtype=complex)
        if u.shape != (2, 2) or np.max(np.abs(u @ u.conj().T - np.eye(2))) > 1e-12:
            raise InputValidationError("Mode-mixing matrix must be a 2x2 unitary")
    ia, ib = reg.index(modes[0]), reg.index(modes[1])
    branches = {}
    for key, states in reg.branches.items():
        mixed = defaultdict(complex)
        for occ, amp in states.items():
            for (na, nb), coeff in _mix_pair(occ[ia], occ[ib], u).items():
                new = list(occ)
                new[ia], new[ib] = na, nb
                mixed[tuple(new)] += amp * coeff
        branches[key] = _drop_small(dict(mixed))
    out = reg.derive(branches)
    if discard is not None:
        out = _trace_mode(out, modes[1], discard)
    return out


def apply_loss(reg: FockRegister, mode: str, transmission: float, label: str | None = None) -> FockRegister:
    """Beamsplitter to a fresh environment mode; branches on the lost-photon count."""
    if not 0 <= transmission <= 1:
        raise InputValidationError(f"Transmission must lie in [0, 1], got {transmission}")
    label = label or f"lost_{mode}"
    if label in reg.env_labels:
        raise InputValidationError(f"Environment label '{label}' already used")
    if transmission == 1:
        return reg.derive(reg.branches, env_labels=reg.env_labels | {label})
    idx = reg.index(mode)
    branches = defaultdict(lambda: defaultdict(complex))
    for key, states in reg.branches.items():
        for occ, amp in states.items():
            n = occ[idx]
            for lost in range(n + 1):
                weight = np.sqrt(comb(n, lost) * transmission ** (n - lost) * (1 - transmission) ** lost)
                if weight == 0:
                    continue
                new = list(occ)
                new[idx] = n - lost
                branches[_with_count(key, label, lost)][tuple(new)] += amp * weight
    cleaned = {key: _drop_small(dict(states)) for key, states in branches.items()}
    return reg.derive(cleaned, env_labels=reg.env_labels | {label})


@dataclass(frozen=True)
class EventClass:
    """Photon bookkeeping of one post-selected five-fold event."""

    created: int
    lost_collinear: int
    discarded: int
    pairs: int
    lost_signal: int
    lost_herald: int


def _classify(key: BranchKey, n_herald: int) -> EventClass:
    counts = dict(key)
    lost_collinear = counts.get("lost_H", 0) + counts.get("lost_V", 0)
    lost_signal = counts.get(f"lost_{SIGNAL}", 0)
    lost_herald = counts.get("lost_herald", 0)
    discarded = counts.get("discard", 0)
    pairs = n_herald + lost_herald
    created = DETECTED_PHOTONS - (pairs - lost_signal) + discarded + lost_collinear
    return EventClass(created, lost_collinear, discarded, pairs, lost_signal, lost_herald)


def condition_five_fold(reg: FockRegister) -> tuple[np.ndarray, float, dict[EventClass, float]]:
    """
    Post-select a herald click and exactly four photons in H + V.

    Returns:
        (normalized 5x5 spin-2 block, success probability, probability per event class)
    """
    ih, iv, ir = reg.index("H"), reg.index("V"), reg.index("herald")
    extra = [i for i, m in enumerate(reg.modes) if m not in ("H", "V", "herald")]
    if extra:
        raise InputValidationError(f"Trace auxiliary modes before conditioning: {[reg.modes[i] for i in extra]}")
    block = np.zeros((DETECTED_PHOTONS + 1, DETECTED_PHOTONS + 1), dtype=complex)
    classes = defaultdict(float)
    for key, states in reg.branches.items():
        by_herald = defaultdict(lambda: np.zeros(DETECTED_PHOTONS + 1, dtype=complex))
        for occ, amp in states.items():
            if occ[ir] >= 1 and occ[ih] + occ[iv] == DETECTED_PHOTONS:
                by_herald[occ[ir]][DETECTED_PHOTONS - occ[ih]] += amp
        for n_herald, vec in by_herald.items():
            block += np.outer(vec, vec.conj())
            classes[_classify(key, n_herald)] += float(np.vdot(vec, vec).real)
    success = float(np.trace(block).real)
    if success <= 0:
        raise InputValidationError("No five-fold events survive these source parameters")
    return block / success, success, dict(classes)


def leakage_channel(rho: BlockDensityMatrix, epsilon: float) -> BlockDensityMatrix:
    """(1 - eps) rho + eps spread evenly over the spin-1 sectors."""
    if not 0 <= epsilon <= 1:
        raise InputValidationError(f"Leakage must lie in [0, 1], got {epsilon}")
    if rho.n_photons != DETECTED_PHOTONS:
        raise InputValidationError(f"Leakage targets the spin-1 sectors of a 4-photon state, got N={rho.n_photons}")
    blocks = {s.two_j: s.block for s in rho.sectors}
    sectors = []
    for two_j, mult in sector_layout(DETECTED_PHOTONS):
        block = (1 - epsilon) * np.asarray(blocks.get(two_j, np.zeros((two_j + 1, two_j + 1))), dtype=complex)
        if two_j == 2:
            block = block + epsilon / (mult * (two_j + 1)) * np.eye(two_j + 1)
        sectors.append(Sector(two_j, mult, block))
    return BlockDensityMatrix(tuple(sectors))


@dataclass
class SourceOutcome:
    rho: BlockDensityMatrix
    success_prob: float
    ledger: object | None
    truncation_residual: float
    event_classes: dict[EventClass, float] = field(default_factory=dict)

    def __iter__(self):
        return iter((self.rho, self.success_prob, self.ledger))


def prepare_register(p: SourceParams) -> FockRegister:
    """Every step up to (not including) post-selection."""
    reg = FockRegister.vacuum(p.n_max)
    # 1. Collinear SPDC and the coherent state
    reg = apply_single_mode_squeezer(reg, "H", 2 * p.eta)
    reg = apply_displacement(reg, "V", p.source_displacement)
    # 2. Collinear transmission
    reg = apply_loss(reg, "H", p.t)
    reg = apply_loss(reg, "V", p.t)
    # 3. N00N-forming plate
    reg = apply_waveplate(reg, angle=NOON_PLATE_DEG)
    # 4. Heralded photon and its transmission
    reg = apply_heralded_pair(reg, p.mu)
    if SIGNAL not in reg.modes:
        reg = reg.derive(
            {k: {occ + (0,): a for occ, a in s.items()} for k, s in reg.branches.items()},
            modes=(*reg.modes, SIGNAL),
        )
    reg = apply_loss(reg, SIGNAL, p.tau)
    reg = apply_loss(reg, "herald", p.tau)
    # 5. Sagnac: V path and signal share a 50:50 split, one port discarded
    reg = apply_waveplate(reg, angle=SAGNAC_PLATE_DEG, modes=("V", SIGNAL), discard="discard")
    # 6. Swap back so the attenuated N00N arm and the signal leave in H
    reg = apply_waveplate(reg, angle=SWAP_PLATE_DEG)
    return reg


def run_pipeline(p: SourceParams, with_ledger: bool = True) -> SourceOutcome:
    """
    Simulate the source and post-select five-fold events.

    Returns:
        SourceOutcome unpacking to (rho, success_prob, ledger); rho carries the
        full N=4 sector layout with the leakage channel applied.
    """
    logger.info(
        "[SOURCE] → eta=%.4g mu=%.4g t=%.4g tau=%.4g alpha=%.4g n_max=%d",
        p.eta, p.mu, p.t, p.tau, p.coherent_amplitude, p.n_max,
    )
    reg = prepare_register(p)
    if reg.residual > p.truncation_tol:
        message = f"Truncation at n_max={p.n_max} dropped probability {reg.residual:.3e}"
        logger.warning("[SOURCE] ⚠ %s", message)
        warnings.warn(message, TruncationWarning, stacklevel=2)

    block, success, classes = condition_five_fold(reg)
    rho = BlockDensityMatrix.from_blocks(DETECTED_PHOTONS, {DETECTED_PHOTONS: block})
    if p.epsilon > 0:
        rho = leakage_channel(rho, p.epsilon)
    logger.info("[SOURCE] ✓ five-fold success probability %.4e (residual %.2e)", success, reg.residual)

    ledger = None
    if with_ledger:
        from services.event_ledger import build_ledger

        ledger = build_ledger(p, simulated=classes)
    return SourceOutcome(rho, success, ledger, reg.residual, classes)
