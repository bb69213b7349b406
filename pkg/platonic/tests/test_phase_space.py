import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from tools.constellation import tetrahedron_constellation
from tools.errors import InputValidationError
from tools.phase_space import (
    MAP_CENTER,
    expected_integral,
    grid_axes,
    sphere_quadrature,
    tetrahedral_rotations,
    vertex_projections,
    wigner_grid,
    wigner_values,
)
from tools.spin_core import (
    coherent_state,
    fidelity,
    rotate_density,
)


def test_grid_axes():
    thetas, phis = grid_axes(181, 360)

    assert thetas[0] == 0.0 and thetas[-1] == pytest.approx(np.pi)
    assert phis[0] == 0.0 and phis[-1] == pytest.approx(2 * np.pi * 359 / 360)
    with pytest.raises(InputValidationError):
        grid_axes(1, 10)


def test_tetrahedral_group_leaves_state_invariant(tetrahedron_rho, tetrahedron):
    rotations = tetrahedral_rotations()

    assert len(rotations) == 12
    for r in rotations:
        assert fidelity(rotate_density(tetrahedron_rho, r), tetrahedron) == pytest.approx(1.0, abs=1e-10)


def _angles(vectors):
    return np.arccos(np.clip(vectors[:, 2], -1.0, 1.0)), np.arctan2(vectors[:, 1], vectors[:, 0])


@pytest.mark.parametrize("index", range(12))
def test_wigner_function_is_tetrahedrally_symmetric(tetrahedron, index):
    block = tetrahedron.projector()
    r = tetrahedral_rotations()[index]
    tt, pp = np.meshgrid(*grid_axes(37, 72), indexing="ij")
    points = np.column_stack([np.sin(tt.ravel()) * np.cos(pp.ravel()), np.sin(tt.ravel()) * np.sin(pp.ravel()), np.cos(tt.ravel())])
    moved = Rotation.from_rotvec(np.array(r.theta)).apply(points)

    np.testing.assert_allclose(
        wigner_values(block, 4, *_angles(moved)),
        wigner_values(block, 4, tt.ravel(), pp.ravel()),
        atol=1e-10,
    )


def test_global_maxima_sit_on_the_vertices(tetrahedron):
    grid = wigner_grid(tetrahedron.projector(), 4, 91, 180)
    cell = np.pi / 90
    vertices = tetrahedron_constellation()
    at_vertices = wigner_values(tetrahedron.projector(), 4, vertices.points[:, 0], vertices.points[:, 1])
    peak, floor = grid.values.max(), grid.values.min()

    np.testing.assert_allclose(at_vertices, at_vertices[0], atol=1e-10)
    assert at_vertices[0] >= peak - 1e-10

    tt, pp = np.meshgrid(grid.thetas, grid.phis, indexing="ij")
    points = np.column_stack([np.sin(tt.ravel()) * np.cos(pp.ravel()), np.sin(tt.ravel()) * np.sin(pp.ravel()), np.cos(tt.ravel())])
    gap = np.arccos(np.clip(points @ vertices.cartesian().T, -1.0, 1.0))
    nearest = np.argmin(gap, axis=0)
    assert np.all(gap[nearest, range(4)] <= cell)
    assert np.all(grid.values.ravel()[nearest] >= peak - 0.02 * (peak - floor))

    theta, phi = grid.argmax_angles()
    top = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    assert np.min(np.arccos(np.clip(vertices.cartesian() @ top, -1.0, 1.0))) <= cell


def test_all_vertex_projections_agree(tetrahedron_rho):
    grids = vertex_projections(tetrahedron_rho, n_theta=19, n_phi=36)

    assert [g.metadata["vertex"] for g in grids] == [0, 1, 2, 3]
    assert grids[0].metadata["center"] == list(MAP_CENTER)
    for grid in grids[1:]:
        np.testing.assert_allclose(grid.values, grids[0].values, atol=1e-10)


def test_worker_count_does_not_change_grid(tetrahedron):
    serial = wigner_grid(tetrahedron.projector(), 4, 31, 40)
    threaded = wigner_grid(tetrahedron.projector(), 4, 31, 40, workers=3)

    np.testing.assert_array_equal(serial.values, threaded.values)


@pytest.mark.parametrize("make_block, two_j", [
    (lambda: coherent_state(4, 0.7, 1.2).projector(), 4),
    (lambda: np.eye(3) / 3, 2),
    (lambda: coherent_state(3, 2.0, -0.4).projector(), 3),
])
def test_quadrature_matches_trace(make_block, two_j):
    block = make_block()

    assert sphere_quadrature(block, two_j) == pytest.approx(expected_integral(block, two_j), abs=1e-10)


def test_coherent_state_peaks_at_its_direction():
    grid = wigner_grid(coherent_state(4, np.pi / 2, np.pi).projector(), 4, 181, 360)

    theta, phi = grid.argmax_angles()
    assert theta == pytest.approx(np.pi / 2, abs=1e-9)
    assert phi == pytest.approx(np.pi, abs=1e-9)


def test_wigner_values_are_real_and_broadcast(tetrahedron):
    values = wigner_values(tetrahedron.projector(), 4, np.array([0.1, 0.2]), 0.5)

    assert values.shape == (2,)
    assert values.dtype == float
