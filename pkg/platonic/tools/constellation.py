"""
Majorana stellar representation of symmetric N-photon states.

A state is the symmetrized product of N single-photon polarizations
cos(theta_k/2) a_H^dagger + e^{i phi_k} sin(theta_k/2) a_V^dagger; its points are the
roots of P(z) = sum_k psi(n_H=k) / sqrt(k!(N-k)!) z^k under z -> (2 arctan|z|, arg(-z)).
"""
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.transform import Rotation

from tools.errors import InputValidationError
from tools.spin_core import PureSpinState, RotationParams, canonical_phase

POLE_TOL = 1e-12
ROOT_CLAMP = 1e8
TETRAHEDRAL_COLATITUDE = 2 * np.arctan(np.sqrt(2))


@dataclass(frozen=True)
class Constellation:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if pts.shape[0] == 0:
            raise InputValidationError("A constellation needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise InputValidationError("Constellation angles must be finite")
        theta = pts[:, 0]
        if np.any(theta < -POLE_TOL) or np.any(theta > np.pi + POLE_TOL):
            raise InputValidationError("Colatitudes must lie in [0, pi]")
        theta = np.clip(theta, 0.0, np.pi)
        phi = np.mod(pts[:, 1], 2 * np.pi)
        at_pole = (theta < POLE_TOL) | (np.pi - theta < POLE_TOL)
        phi[at_pole] = 0.0
        phi[np.isclose(phi, 2 * np.pi)] = 0.0
        pts = np.column_stack([theta, phi])
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_cartesian(cls, vectors) -> "Constellation":
        vec = np.asarray(vectors, dtype=float).reshape(-1, 3)
        vec = vec / np.linalg.norm(vec, axis=1, keepdims=True)
        theta = np.arccos(np.clip(vec[:, 2], -1.0, 1.0))
        phi = np.arctan2(vec[:, 1], vec[:, 0])
        return cls(np.column_stack([theta, phi]))

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def cartesian(self) -> np.ndarray:
        theta, phi = self.points[:, 0], self.points[:, 1]
        return np.column_stack(
            [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]
        )


def constellation_to_state(c: Constellation) -> PureSpinState:
    """Expand the product of single-photon creation operators into Dicke amplitudes."""
    n = c.n_points
    # coeffs[k] multiplies x^k y^(n-k), x <-> a_H^dagger, y <-> a_V^dagger
    coeffs = np.array([1.0 + 0j])
    for theta, phi in c.points:
        h = np.cos(theta / 2)
        v = np.exp(1j * phi) * np.sin(theta / 2)
        nxt = np.zeros(coeffs.size + 1, dtype=complex)
        nxt[1:] += h * coeffs
        nxt[:-1] += v * coeffs
        coeffs = nxt
    weights = np.sqrt([factorial(k) * factorial(n - k) for k in range(n + 1)])
    by_n_h = coeffs * weights
    amps = by_n_h[::-1]  # index 0 holds n_H = N
    return PureSpinState.from_amplitudes(n, canonical_phase(amps))


def _polish(coeffs: np.ndarray, root: complex) -> complex:
    """One Newton step, kept only if it lowers |P|."""
    deriv = np.polyder(coeffs)
    slope = np.polyval(deriv, root)
    if slope == 0:
        return root
    candidate = root - np.polyval(coeffs, root) / slope
    if abs(np.polyval(coeffs, candidate)) <= abs(np.polyval(coeffs, root)):
        return candidate
    return root


def state_to_constellation(s: PureSpinState) -> Constellation:
    """
    Majorana points of a single-sector pure state.

    Args:
        s: state with 2j = N >= 1.

    Returns:
        Constellation of N points; a polynomial of degree D < N adds N - D
        south-pole points, zero roots are north-pole points.
    """
    n = s.two_j
    if n < 1:
        raise InputValidationError("A constellation needs N >= 1 photons")
    amps = np.asarray(s.amplitudes)
    if np.linalg.norm(amps) == 0:
        raise InputValidationError("Zero state has no constellation")
    by_n_h = amps[::-1]
    weights = np.sqrt([factorial(k) * factorial(n - k) for k in range(n + 1)])
    poly = by_n_h / weights  # poly[k] multiplies z^k
    highest_first = poly[::-1]
    scale = np.max(np.abs(highest_first))
    lead = np.flatnonzero(np.abs(highest_first) > 1e-14 * scale)[0]
    trimmed = highest_first[lead:]
    roots = np.roots(trimmed) if trimmed.size > 1 else np.array([], dtype=complex)
    roots = np.array([_polish(trimmed, z) for z in roots], dtype=complex)

    points = []
    for z in roots:
        if abs(z) > ROOT_CLAMP:
            points.append((np.pi, 0.0))
        else:
            points.append((2 * np.arctan(abs(z)), float(np.angle(-z)) if abs(z) > 0 else 0.0))
    points.extend([(np.pi, 0.0)] * (n - roots.size))
    return Constellation(np.array(points))


def rotate_constellation(c: Constellation, r: RotationParams) -> Constellation:
    """Apply the SO(3) rotation to every point."""
    rotated = Rotation.from_rotvec(np.array(r.theta, dtype=float)).apply(c.cartesian())
    return Constellation.from_cartesian(np.atleast_2d(rotated))


def random_constellation(n_points: int, seed: int) -> Constellation:
    """N points independently uniform in area on the sphere."""
    if n_points < 1:
        raise InputValidationError(f"Point count must be >= 1, got {n_points}")
    rng = np.random.default_rng(seed)
    z = rng.uniform(-1.0, 1.0, n_points)
    phi = rng.uniform(0.0, 2 * np.pi, n_points)
    return Constellation(np.column_stack([np.arccos(z), phi]))


def tetrahedron_constellation() -> Constellation:
    """Vertices of the tetrahedron state: north pole plus a ring at 2 arctan(sqrt 2)."""
    ring = [(TETRAHEDRAL_COLATITUDE, 2 * np.pi * k / 3) for k in range(3)]
    return Constellation(np.array([(0.0, 0.0), *ring]))


def assignment_distance(a: Constellation, b: Constellation) -> float:
    """Largest chordal distance after optimally matching the two multisets."""
    if a.n_points != b.n_points:
        return np.inf
    va, vb = a.cartesian(), b.cartesian()
    cost = np.linalg.norm(va[:, None, :] - vb[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    return float(np.max(cost[rows, cols]))


def same_multiset(a: Constellation, b: Constellation, tol: float = 1e-6) -> bool:
    return assignment_distance(a, b) <= tol
