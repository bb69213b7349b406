import numpy as np
import pytest

from tools.constellation import (
    TETRAHEDRAL_COLATITUDE,
    Constellation,
    assignment_distance,
    constellation_to_state,
    random_constellation,
    rotate_constellation,
    same_multiset,
    state_to_constellation,
    tetrahedron_constellation,
)
from tools.errors import InputValidationError
from tools.spin_core import RotationParams, coherent_state, dicke_state, noon_state, rotate


def test_tetrahedron_constellation_builds_tetrahedron_state(tetrahedron):
    state = constellation_to_state(tetrahedron_constellation())

    np.testing.assert_allclose(state.amplitudes, tetrahedron.amplitudes, atol=1e-12)


def test_tetrahedron_state_has_tetrahedron_points(tetrahedron):
    points = state_to_constellation(tetrahedron)

    assert same_multiset(points, tetrahedron_constellation())
    # regular tetrahedron: every pair of vertices at angle arccos(-1/3)
    vec = points.cartesian()
    dots = vec @ vec.T
    np.testing.assert_allclose(dots[~np.eye(4, dtype=bool)], -1 / 3, atol=1e-10)


def test_ring_rotated_by_sixty_degrees_flips_lower_amplitude():
    ring = [(TETRAHEDRAL_COLATITUDE, phi) for phi in (np.pi / 3, np.pi, 5 * np.pi / 3)]
    state = constellation_to_state(Constellation(np.array([(0.0, 0.0), *ring])))

    np.testing.assert_allclose(state.amplitudes, [np.sqrt(1 / 3), 0, 0, -np.sqrt(2 / 3), 0], atol=1e-12)


def test_noon_points_form_an_equatorial_square():
    points = state_to_constellation(noon_state(4))

    np.testing.assert_allclose(points.points[:, 0], np.pi / 2, atol=1e-10)
    expected = Constellation(np.array([(np.pi / 2, (2 * k + 1) * np.pi / 4) for k in range(4)]))
    assert same_multiset(points, expected)


@pytest.mark.parametrize("n_h, colatitude", [(4, 0.0), (0, np.pi)])
def test_dicke_extremes_sit_on_a_pole(n_h, colatitude):
    points = state_to_constellation(dicke_state(4, n_h))

    np.testing.assert_allclose(points.points, [[colatitude, 0.0]] * 4)


def test_coherent_state_is_a_single_repeated_point():
    points = state_to_constellation(coherent_state(4, 1.0, 2.0))
    expected = Constellation(np.array([(1.0, 2.0)] * 4))

    # fourfold roots are only resolved to about eps^(1/4)
    assert same_multiset(points, expected, tol=1e-3)


@pytest.mark.parametrize("n_points", [2, 4, 5, 7])
@pytest.mark.parametrize("seed", range(5))
def test_random_constellations_survive_state_round_trip(n_points, seed):
    points = random_constellation(n_points, seed)
    state = constellation_to_state(points)

    assert same_multiset(state_to_constellation(state), points)


@pytest.mark.parametrize(
    "r", [RotationParams.about([1, 2, 3], 0.7), RotationParams([0.1, 0.2, 0.3]), RotationParams([-1.2, 0.4, 2.0])]
)
def test_rotation_commutes_with_stellar_map(tetrahedron, r):
    via_state = state_to_constellation(rotate(tetrahedron, r))
    via_points = rotate_constellation(state_to_constellation(tetrahedron), r)

    assert same_multiset(via_state, via_points, tol=1e-8)


@pytest.mark.parametrize("seed", range(4))
def test_rotation_commutes_with_stellar_map_for_random_states(seed):
    rng = np.random.default_rng(seed)
    r = RotationParams(rng.normal(size=3))
    state = constellation_to_state(random_constellation(5, seed))

    via_state = state_to_constellation(rotate(state, r))
    via_points = rotate_constellation(state_to_constellation(state), r)

    assert same_multiset(via_state, via_points, tol=1e-6)


def test_constellation_normalizes_angles():
    c = Constellation(np.array([[0.0, 1.3], [np.pi, -1.0], [1.0, 2 * np.pi + 0.5]]))

    np.testing.assert_allclose(c.points, [[0.0, 0.0], [np.pi, 0.0], [1.0, 0.5]])


def test_constellation_validation():
    with pytest.raises(InputValidationError):
        Constellation(np.array([[4.0, 0.0]]))
    with pytest.raises(InputValidationError):
        Constellation(np.empty((0, 2)))
    with pytest.raises(InputValidationError):
        random_constellation(0, seed=1)


def test_assignment_distance_ignores_order():
    a = random_constellation(5, seed=3)
    b = Constellation(a.points[::-1])

    assert assignment_distance(a, b) == pytest.approx(0.0, abs=1e-12)
    assert assignment_distance(a, random_constellation(4, seed=3)) == np.inf
