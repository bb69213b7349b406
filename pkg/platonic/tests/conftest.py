import itertools

import numpy as np
import pytest
from scipy import linalg

from tools.spin_core import (
    BlockDensityMatrix,
    Sector,
    noon_state,
    sector_layout,
    tetrahedron_state,
)

SIGMA = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _on_qubit(op, site, n):
    mats = [op if i == site else np.eye(2) for i in range(n)]
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def _total_spin(n):
    return {a: sum(_on_qubit(s / 2, i, n) for i in range(n)) for a, s in SIGMA.items()}


def schur_isometries(n_photons: int) -> dict[int, list[np.ndarray]]:
    """
    For each two_j: one (2^N x (2j+1)) isometry per copy, columns ordered m = j..-j.

    Built from highest-weight vectors (J+ v = 0 at m = j) lowered with J-, the
    same phase convention as the Dicke-basis generators.
    """
    spin = _total_spin(n_photons)
    raising = spin["x"] + 1j * spin["y"]
    lowering = raising.conj().T
    jz = np.real(np.diag(spin["z"]))
    out = {}
    for two_j, mult in sector_layout(n_photons):
        j = two_j / 2
        at_top = np.flatnonzero(np.isclose(jz, j))
        restricted = raising[:, at_top]
        null = linalg.null_space(restricted)
        assert null.shape[1] == mult
        copies = []
        for c in range(mult):
            v = np.zeros(2**n_photons, dtype=complex)
            v[at_top] = null[:, c]
            cols = [v]
            m = j
            for _ in range(two_j):
                v = lowering @ v / np.sqrt(j * (j + 1) - m * (m - 1))
                m -= 1
                cols.append(v)
            copies.append(np.column_stack(cols))
        out[two_j] = copies
    return out


def product_space_density(rho: BlockDensityMatrix) -> np.ndarray:
    """Embed a block-diagonal state into the full 2^N qubit space, one block per copy."""
    iso = schur_isometries(rho.n_photons)
    full = np.zeros((2**rho.n_photons,) * 2, dtype=complex)
    for sector in rho.sectors:
        for q in iso[sector.two_j]:
            full += q @ sector.block @ q.conj().T
    return full


def product_space_probabilities(rho: BlockDensityMatrix, theta: float, phi: float) -> np.ndarray:
    """P(k photons found in +n) from per-photon projectors; |H> is the +z state."""
    n = rho.n_photons
    full = product_space_density(rho)
    plus = np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])
    p_plus = np.outer(plus, plus.conj())
    p_minus = np.eye(2) - p_plus
    probs = np.zeros(n + 1)
    for outcome in itertools.product((0, 1), repeat=n):
        proj = np.array([[1.0 + 0j]])
        for bit in outcome:
            proj = np.kron(proj, p_plus if bit else p_minus)
        probs[sum(outcome)] += np.real(np.trace(full @ proj))
    return probs


def random_block_density(n_photons: int, seed: int) -> BlockDensityMatrix:
    rng = np.random.default_rng(seed)
    sectors = []
    for two_j, mult in sector_layout(n_photons):
        a = rng.normal(size=(two_j + 1, two_j + 1)) + 1j * rng.normal(size=(two_j + 1, two_j + 1))
        sectors.append((two_j, mult, a @ a.conj().T))
    total = sum(mult * np.trace(b).real for _, mult, b in sectors)
    return BlockDensityMatrix(tuple(Sector(tj, mult, b / total) for tj, mult, b in sectors))


@pytest.fixture
def tetrahedron():
    return tetrahedron_state()


@pytest.fixture
def tetrahedron_rho():
    return BlockDensityMatrix.from_pure(tetrahedron_state(), n_photons=4)


@pytest.fixture
def noon4():
    return noon_state(4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "out"
    path.mkdir()
    return path
