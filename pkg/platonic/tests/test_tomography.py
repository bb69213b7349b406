import numpy as np
import pytest

from conftest import product_space_probabilities, random_block_density
from services.tomography import (
    BasisSetting,
    CountRecord,
    accessible_rank,
    align_phase,
    allocate_events,
    coherence_report,
    default_bases,
    detection_effects,
    measurement_rank,
    mle_reconstruct,
    monte_carlo_errors,
    outcome_probabilities,
    reconstruct,
    simulate_counts,
)
from tools.errors import InputValidationError
from tools.spin_core import (
    BlockDensityMatrix,
    RotationParams,
    fidelity,
    rotate_density,
    tetrahedron_state,
)


def test_default_bases():
    bases = default_bases()

    assert len(bases) == 13
    np.testing.assert_allclose(bases[0].axis, [0, 0, 1])
    colatitudes = sorted({round(np.rad2deg(b.angles[0]), 6) for b in bases})
    assert colatitudes == [0.0, 40.0, 75.0]
    with pytest.raises(InputValidationError):
        BasisSetting(np.array([1.0, 1.0, 0.0]))


def test_z_basis_statistics_of_tetrahedron(tetrahedron_rho):
    probs = outcome_probabilities(tetrahedron_rho, default_bases()[0])

    np.testing.assert_allclose(probs, [0, 2 / 3, 0, 0, 1 / 3], atol=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_outcomes_match_product_space_projectors(seed):
    rho = random_block_density(4, seed)

    for basis in default_bases():
        theta, phi = basis.angles
        np.testing.assert_allclose(
            outcome_probabilities(rho, basis),
            product_space_probabilities(rho, theta, phi),
            atol=1e-12,
        )


def test_outcomes_of_tetrahedron_match_product_space(tetrahedron_rho):
    basis = BasisSetting.from_angles(1.1, 0.4)

    np.testing.assert_allclose(
        outcome_probabilities(tetrahedron_rho, basis),
        product_space_probabilities(tetrahedron_rho, 1.1, 0.4),
        atol=1e-12,
    )


def test_outcome_probabilities_need_four_photons():
    with pytest.raises(InputValidationError):
        outcome_probabilities(BlockDensityMatrix.maximally_mixed_sector(2, n_photons=2), default_bases()[0])


def test_allocate_events():
    np.testing.assert_array_equal(allocate_events(10, 3), [4, 3, 3])
    np.testing.assert_array_equal(allocate_events(5, 3, [1, 0, 1]), [3, 0, 2])
    assert allocate_events(2434, 13).sum() == 2434
    with pytest.raises(InputValidationError):
        allocate_events(10, 3, [1, -1, 1])


def test_simulated_counts_are_reproducible(tetrahedron_rho):
    a = simulate_counts(tetrahedron_rho, default_bases(), 5000, seed=11)
    b = simulate_counts(tetrahedron_rho, default_bases(), 5000, seed=11)

    np.testing.assert_array_equal(a.counts, b.counts)
    assert a.exposures.sum() == 5000
    assert a.total_events <= 5000


def test_simulated_frequencies_follow_probabilities(tetrahedron_rho):
    bases = default_bases()
    record = simulate_counts(tetrahedron_rho, bases, 1_000_000, seed=5)

    for i, basis in enumerate(bases):
        expected = outcome_probabilities(tetrahedron_rho, basis)[1:4]
        np.testing.assert_allclose(record.counts[i] / record.exposures[i], expected, atol=0.01)
    np.testing.assert_array_equal(record.counts[0, 1:], [0, 0])


def test_count_record_validation():
    bases = tuple(default_bases()[:2])

    with pytest.raises(InputValidationError):
        CountRecord(bases, np.zeros((3, 3)))
    with pytest.raises(InputValidationError):
        CountRecord(bases, -np.ones((2, 3)))
    with pytest.raises(InputValidationError):
        CountRecord(bases, np.ones((2, 3)), exposures=[-1, 2])


def test_default_bases_reach_accessible_rank(tetrahedron_rho):
    record = CountRecord(tuple(default_bases()), np.ones((13, 3), dtype=int))

    assert measurement_rank(record) == accessible_rank(13)
    assert detection_effects(default_bases()).shape == (13, 3, 9, 9)


def test_accessible_rank_limits():
    assert accessible_rank() == 31
    assert accessible_rank(13) == 29
    assert accessible_rank(1) < accessible_rank(13)


def test_measurement_rank_uses_given_bases():
    bases = default_bases()
    repeated = CountRecord(tuple([bases[0]] * 13), np.ones((13, 3), dtype=int))

    assert measurement_rank(repeated) < accessible_rank(13)
    assert measurement_rank(repeated, bases) == accessible_rank(13)
    with pytest.raises(InputValidationError):
        measurement_rank(repeated, bases[:2])


def test_single_basis_is_rejected():
    record = CountRecord((default_bases()[0],), np.array([[10, 0, 5]]))

    assert measurement_rank(record) < accessible_rank(13)
    with pytest.raises(InputValidationError, match="under-determined"):
        mle_reconstruct(record)


def test_empty_record_is_rejected():
    record = CountRecord(tuple(default_bases()), np.zeros((13, 3), dtype=int))

    with pytest.raises(InputValidationError, match="empty"):
        mle_reconstruct(record)


def test_reconstruction_from_moderate_counts(tetrahedron_rho, tetrahedron):
    record = simulate_counts(tetrahedron_rho, default_bases(), 50_000, seed=3)
    result = reconstruct(record, tetrahedron)

    assert fidelity(result.rho_hat, tetrahedron) > 0.9
    assert result.iterations > 0
    assert result.mc_errors is None
    total = sum(result.rho_hat.weight(tj) for tj in result.rho_hat.two_js)
    assert total == pytest.approx(1.0)


@pytest.mark.slow
def test_reconstruction_of_pure_state_at_high_counts(tetrahedron_rho, tetrahedron):
    fids, phis = [], []
    for seed in (1, 2, 3, 4, 5):
        result = reconstruct(simulate_counts(tetrahedron_rho, default_bases(), 1_000_000, seed=seed), tetrahedron)
        fids.append(fidelity(result.rho_hat, tetrahedron))
        phis.append(result.phi)

    assert np.median(fids) >= 0.999
    assert min(fids) > 0.99
    assert max(abs(p) for p in phis) < 0.05


@pytest.mark.slow
def test_reconstruction_at_desk_scale_counts(tetrahedron_rho, tetrahedron):
    fids = [
        fidelity(reconstruct(simulate_counts(tetrahedron_rho, default_bases(), 2434, seed=s), tetrahedron).rho_hat, tetrahedron)
        for s in range(20)
    ]
    assert np.median(fids) >= 0.95

    record = simulate_counts(tetrahedron_rho, default_bases(), 2434, seed=0)
    errors = monte_carlo_errors(record, n_resamples=30, seed=5, target=tetrahedron)
    assert errors.n_failed <= 3
    assert 0.003 < errors.std("fidelity") < 0.05


@pytest.mark.slow
def test_reconstruction_of_mixed_state_reproduces_detected_statistics():
    truth = BlockDensityMatrix.maximally_mixed_sector(4, n_photons=4)
    bases = default_bases()
    record = simulate_counts(truth, bases, 1_000_000, seed=9)
    rho_hat = mle_reconstruct(record).rho_hat

    def detected(rho):
        table = np.array([outcome_probabilities(rho, b)[1:4] for b in bases])
        return table / table.sum()

    np.testing.assert_allclose(detected(rho_hat), detected(truth), atol=1e-3)


def test_phase_alignment_recovers_rotation(tetrahedron_rho, tetrahedron):
    rotated = rotate_density(tetrahedron_rho, RotationParams.about([0, 0, 1], -0.135))
    phi, aligned = align_phase(rotated, tetrahedron)

    assert phi == pytest.approx(0.135, abs=1e-6)
    assert fidelity(aligned, tetrahedron) == pytest.approx(1.0, abs=1e-10)


def test_phase_alignment_of_invariant_state_is_zero(tetrahedron):
    phi, _ = align_phase(BlockDensityMatrix.maximally_mixed_sector(4, n_photons=4), tetrahedron)

    assert phi == 0.0


def test_coherence_report(tetrahedron_rho, tetrahedron):
    report = coherence_report(tetrahedron_rho, tetrahedron)

    assert report["p_2"] == pytest.approx(1 / 3)
    assert report["p_minus1"] == pytest.approx(2 / 3)
    assert report["coherence_modulus"] == pytest.approx(np.sqrt(2) / 3)
    assert report["max_coherence"] == pytest.approx(report["coherence_modulus"])
    assert report["fidelity"] == pytest.approx(1.0)


def test_monte_carlo_is_deterministic(tetrahedron_rho, tetrahedron):
    record = simulate_counts(tetrahedron_rho, default_bases(), 20_000, seed=4)

    first = monte_carlo_errors(record, n_resamples=3, seed=7, target=tetrahedron)
    again = monte_carlo_errors(record, n_resamples=3, seed=7, target=tetrahedron, workers=2)

    assert first.n_resamples == 3
    assert first.scalars == again.scalars
    for two_j in (4, 2, 0):
        np.testing.assert_array_equal(first.entry_std[two_j], again.entry_std[two_j])
    with pytest.raises(InputValidationError):
        monte_carlo_errors(record, n_resamples=1)


@pytest.mark.slow
def test_monte_carlo_errors_shrink_with_counts(tetrahedron_rho, tetrahedron):
    small = simulate_counts(tetrahedron_rho, default_bases(), 5_000, seed=21)
    large = simulate_counts(tetrahedron_rho, default_bases(), 50_000, seed=22)

    spread_small = monte_carlo_errors(small, n_resamples=30, seed=1, target=tetrahedron).entry_std[4][0, 3].real
    spread_large = monte_carlo_errors(large, n_resamples=30, seed=1, target=tetrahedron).entry_std[4][0, 3].real

    assert 1.8 < spread_small / spread_large < 5.5
