"""
Spherical Wigner function of a spin-j block, W(n) = sum_kq rho_kq Y_kq(n),
rho_kq = Tr(block T_kq^dagger), on longitude-latitude grids.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation
from scipy.special import roots_legendre, sph_harm_y

from tools.constellation import tetrahedron_constellation
from tools.errors import InputValidationError, PlatonicError
from tools.spin_core import BlockDensityMatrix, RotationParams, rotate_density
from tools.tensor_ops import multipole_coefficients

KERNEL = "multipole expansion sum_kq Tr(rho T_kq^dagger) Y_kq, orthonormal T_kq and Y_kq"
MAP_CENTER = (np.pi / 2, np.pi)


@dataclass(frozen=True)
class SphericalGrid:
    thetas: np.ndarray
    phis: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.thetas.size < 2 or self.phis.size < 2:
            raise InputValidationError("Grids need at least 2 points per axis")
        if self.values.shape != (self.thetas.size, self.phis.size):
            raise InputValidationError(f"Grid values have shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise PlatonicError("Grid values must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def argmax_angles(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.thetas[i]), float(self.phis[j])


def grid_axes(n_theta: int, n_phi: int) -> tuple[np.ndarray, np.ndarray]:
    """theta uniform on [0, pi] inclusive, phi uniform on [0, 2pi)."""
    if n_theta < 2 or n_phi < 2:
        raise InputValidationError(f"Grid sizes must be >= 2, got {n_theta}x{n_phi}")
    return np.linspace(0.0, np.pi, n_theta), np.arange(n_phi) * (2 * np.pi / n_phi)


def wigner_values(block: np.ndarray, two_j: int, thetas, phis) -> np.ndarray:
    """Pointwise W at broadcastable arrays of (theta, phi)."""
    thetas, phis = np.broadcast_arrays(np.asarray(thetas, dtype=float), np.asarray(phis, dtype=float))
    total = np.zeros(thetas.shape, dtype=complex)
    for (k, q), coeff in multipole_coefficients(np.asarray(block), two_j).items():
        if coeff != 0:
            total += coeff * sph_harm_y(k, q, thetas, phis)
    scale = max(1.0, float(np.max(np.abs(total.real))) if total.size else 1.0)
    if total.size and np.max(np.abs(total.imag)) > 1e-10 * scale:
        raise PlatonicError("Wigner function has a non-negligible imaginary part")
    return total.real


def wigner_grid(block: np.ndarray, two_j: int, n_theta: int, n_phi: int, workers: int = 1) -> SphericalGrid:
    """
    Evaluate W on a longitude-latitude grid.

    Rows are split across threads when workers > 1; the result does not
    depend on the worker count.
    """
    thetas, phis = grid_axes(n_theta, n_phi)
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    if workers <= 1:
        values = wigner_values(block, two_j, tt, pp)
    else:
        chunks = np.array_split(np.arange(n_theta), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda rows: wigner_values(block, two_j, tt[rows], pp[rows]), chunks))
        values = np.concatenate(parts, axis=0)
    metadata = {"kernel": KERNEL, "two_j": two_j, "theta_range": [0.0, np.pi], "phi_range": [0.0, 2 * np.pi]}
    return SphericalGrid(thetas, phis, values, metadata)


def tetrahedral_rotations() -> list[RotationParams]:
    """The 12 proper rotations mapping the tetrahedron constellation onto itself."""
    vertices = tetrahedron_constellation().cartesian()
    rotations = [RotationParams(np.zeros(3))]
    for v in vertices:
        rotations.append(RotationParams.about(v, 2 * np.pi / 3))
        rotations.append(RotationParams.about(v, -2 * np.pi / 3))
    for k in (1, 2, 3):
        rotations.append(RotationParams.about(vertices[0] + vertices[k], np.pi))
    return rotations


def vertex_rotations() -> list[RotationParams]:
    """
    For each vertex k: the tetrahedral symmetry carrying vertex k to the north-pole
    vertex, followed by the tilt that puts the north pole at the map center.
    """
    vertices = tetrahedron_constellation().cartesian()
    tilt = Rotation.from_rotvec([0.0, -np.pi / 2, 0.0])
    result = []
    for k, v in enumerate(vertices):
        if k == 0:
            swap = Rotation.identity()
        else:
            axis = vertices[0] + v
            swap = Rotation.from_rotvec(axis / np.linalg.norm(axis) * np.pi)
        result.append(RotationParams((tilt * swap).as_rotvec()))
    return result


def vertex_projections(
    rho: BlockDensityMatrix, two_j: int | None = None, n_theta: int = 181, n_phi: int = 360, workers: int = 1
) -> list[SphericalGrid]:
    """Four maps of the block, each centered on a different tetrahedron vertex."""
    two_j = rho.n_photons if two_j is None else two_j
    grids = []
    for k, r in enumerate(vertex_rotations()):
        block = rotate_density(rho, r).sector(two_j).block
        grid = wigner_grid(block, two_j, n_theta, n_phi, workers)
        grid.metadata.update({"vertex": k, "center": list(MAP_CENTER), "rotation": r.theta.tolist()})
        grids.append(grid)
    return grids


def sphere_quadrature(block: np.ndarray, two_j: int, order: int | None = None) -> float:
    """Integral of W over the sphere with Gauss-Legendre in cos(theta), exact for the band limit."""
    order = order or (2 * two_j + 2)
    nodes, weights = roots_legendre(order)
    n_phi = 2 * order + 1
    phis = np.arange(n_phi) * (2 * np.pi / n_phi)
    tt, pp = np.meshgrid(np.arccos(nodes), phis, indexing="ij")
    values = wigner_values(block, two_j, tt, pp)
    return float(np.sum(weights[:, None] * values) * (2 * np.pi / n_phi))


def expected_integral(block: np.ndarray, two_j: int) -> float:
    """Only the Y_00 term survives integration: Tr(block) sqrt(4 pi / (2j + 1))."""
    return float(np.trace(block).real * np.sqrt(4 * np.pi / (two_j + 1)))
