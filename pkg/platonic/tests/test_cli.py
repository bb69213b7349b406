import json

import numpy as np
import pandas as pd
import pytest

from main import EXIT_OK, EXIT_VALIDATION, FIG5_COLUMNS, main, named_state
from processors.ingestion import load_counts, load_state
from tools.errors import InputValidationError
from tools.metrology import STRATEGIES
from tools.spin_core import BlockDensityMatrix, fidelity, noon_state, tetrahedron_state


def _run(out_dir, *args):
    return main(["--out", str(out_dir), *args])


def test_named_states():
    np.testing.assert_array_equal(named_state("tetrahedron").amplitudes, tetrahedron_state().amplitudes)
    assert named_state("noon6").two_j == 6
    assert named_state("coherent3").two_j == 3
    for bad in ("cube", "noon0", "noonx"):
        with pytest.raises(InputValidationError):
            named_state(bad)


def test_state_command(out_dir):
    assert _run(out_dir, "state", "tetrahedron") == EXIT_OK

    np.testing.assert_array_equal(load_state(out_dir / "state.json").amplitudes, tetrahedron_state().amplitudes)
    points = json.loads((out_dir / "constellation.json").read_text())["points"]
    assert len(points) == 4
    report = json.loads((out_dir / "state_report.json").read_text())
    assert report["sqcrb"] == pytest.approx(0.375)
    assert report["unpolarized"]["passed"] is True
    assert report["n_photons"] == 4


def test_state_from_constellation_file(out_dir):
    assert _run(out_dir, "state", "noon4") == EXIT_OK
    rebuilt = out_dir / "rebuilt"

    assert _run(rebuilt, "state", "--constellation", str(out_dir / "constellation.json")) == EXIT_OK
    assert fidelity(BlockDensityMatrix.from_pure(load_state(rebuilt / "state.json")), noon_state(4)) == pytest.approx(1.0)


def test_validation_failures_exit_with_two(out_dir):
    assert _run(out_dir, "state", "cube") == EXIT_VALIDATION
    assert _run(out_dir, "--nmax", "4", "simulate") == EXIT_VALIDATION
    assert _run(out_dir, "tomo", "--counts", str(out_dir / "missing.csv")) == EXIT_VALIDATION
    assert _run(out_dir, "--set", "[1]", "state") == EXIT_VALIDATION


def test_qcrb_command(out_dir):
    assert _run(out_dir, "state", "noon4") == EXIT_OK
    assert _run(out_dir, "qcrb", "--n-range", "1", "6", "--state", str(out_dir / "state.json")) == EXIT_OK

    strategies = pd.read_csv(out_dir / "strategies.csv")
    assert list(strategies.columns) == ["N", *STRATEGIES]
    assert list(strategies["N"]) == [1, 2, 3, 4, 5, 6]
    assert strategies.loc[strategies["N"] == 4, "platonic"].item() == pytest.approx(0.375)

    points = pd.read_csv(out_dir / "points.csv")
    assert list(points["label"]) == ["state"]
    assert points["sqcrb"].item() > 0.375
    assert points["dominant_weight"].item() == pytest.approx(1.0)


def test_simulate_command(out_dir):
    assert _run(out_dir, "simulate") == EXIT_OK

    summary = json.loads((out_dir / "source_summary.json").read_text())
    assert 0 < summary["fidelity"] < 1
    assert summary["params"]["n_max"] == 8
    ledger = pd.read_csv(out_dir / "ledger.csv")
    assert "tetrahedron" in set(ledger["name"])
    assert load_state(out_dir / "source_state.json").n_photons == 4


def test_tomo_command_round_trip(out_dir):
    assert _run(out_dir, "--seed", "2", "tomo", "--events", "20000", "--resamples", "0") == EXIT_OK

    counts = load_counts(out_dir / "counts.csv")
    assert counts.exposures.sum() == 20000
    payload = json.loads((out_dir / "reconstruction.json").read_text())
    assert payload["metadata"]["mc_errors"] is None
    assert payload["metadata"]["scalars"]["fidelity"] > 0.85

    again = out_dir / "again"
    assert _run(again, "tomo", "--counts", str(out_dir / "counts.csv"), "--resamples", "0") == EXIT_OK
    assert not (again / "counts.csv").exists()
    rebuilt = json.loads((again / "reconstruction.json").read_text())
    assert rebuilt["metadata"]["events"] == payload["metadata"]["events"]


def test_fig3_command(out_dir):
    small_grid = '{"phase_space": {"n_theta": 10, "n_phi": 12}}'
    assert _run(out_dir, "--set", small_grid, "figures", "fig3") == EXIT_OK

    header = json.loads((out_dir / "fig3_header.json").read_text())
    assert (header["n_theta"], header["n_phi"]) == (10, 12)
    frames = [pd.read_csv(out_dir / f"fig3_vertex{k}.csv") for k in range(4)]
    assert all(len(f) == 120 for f in frames)
    assert list(frames[0].columns) == ["theta", "phi", "W"]
    np.testing.assert_allclose(frames[3]["W"], frames[0]["W"], atol=1e-9)


def test_fig4_command(out_dir):
    assert _run(out_dir, "figures", "fig4") == EXIT_OK

    scan = pd.read_csv(out_dir / "fig4_scan.csv")
    assert list(scan.columns) == ["theta", "x", "y", "z"]
    assert len(scan) == 720
    np.testing.assert_allclose(scan["z"], 5 / 9 + 4 / 9 * np.cos(3 * scan["theta"]), atol=1e-9)


def test_fig5_command(out_dir):
    assert _run(out_dir, "figures", "fig5", "--n-max-photons", "12") == EXIT_OK

    bounds = pd.read_csv(out_dir / "fig5_bounds.csv")
    assert list(bounds.columns) == ["N", *FIG5_COLUMNS]
    row = bounds.loc[bounds["N"] == 4]
    assert row["platonic"].item() == pytest.approx(0.375)
    assert row["noon_simultaneous"].item() == pytest.approx(0.5625)
    assert row["coherent_sequential"].item() == pytest.approx(9 / 8)


@pytest.mark.slow
def test_qcrb_from_source(out_dir):
    overrides = '{"source": {"epsilon": 0.13, "t": 0.9, "tau": 0.9}, "tomo": {"events": 2434, "n_resamples": 10}}'
    assert _run(out_dir, "--seed", "4", "--set", overrides, "qcrb", "--n-range", "4", "4", "--from-source") == EXIT_OK

    points = pd.read_csv(out_dir / "points.csv")
    source = points.loc[points["label"] == "source"].iloc[0]
    assert 0.45 < source["sqcrb"] < 0.9
    assert np.isfinite(source["sqcrb_std"]) and 0 < source["sqcrb_std"] < 0.2
    assert source["dominant_sqcrb"] < 0.675
    assert 0 < source["dominant_weight"] <= 1
    assert 0 < source["fidelity"] < 1
