import numpy as np
import pytest
import sympy as sp

from services.event_ledger import (
    CLASSES,
    DESIRED,
    ETA,
    MU,
    T,
    TAU,
    build_ledger,
    class_monomial,
    class_weight,
    split_prefactor,
    vacuum_factor,
)
from services.source_sim import SourceParams, run_pipeline


def test_desired_class_monomial():
    monomial = class_monomial(CLASSES[DESIRED])

    assert sp.simplify(monomial - ETA**3 * T**3 * MU**2 * TAU**2) == 0


@pytest.mark.parametrize("name, expected", [
    ("extra_coherent_collinear_loss", ETA**4 * T**3 * (1 - T) * MU**2 * TAU**2),
    ("extra_coherent_signal_loss", ETA**4 * T**4 * MU**2 * TAU * (1 - TAU)),
    ("double_pair", ETA**2 * T**2 * MU**4 * TAU**4),
])
def test_contamination_monomials(name, expected):
    assert sp.simplify(class_monomial(CLASSES[name]) - expected) == 0


def test_desired_class_prefactor():
    # amplitudes -sqrt(6)/3 and -2 sqrt(3)/3 on |4,0> and |1,3>
    prefactor, _ = split_prefactor(CLASSES[DESIRED])

    assert prefactor == pytest.approx(2.0)


@pytest.mark.parametrize("name", sorted(CLASSES))
def test_every_class_reduces_to_a_monomial(name):
    prefactor, monomial = split_prefactor(CLASSES[name])

    assert prefactor > 0
    assert monomial.free_symbols <= {ETA, MU, T, TAU}


def test_vacuum_factor():
    p = SourceParams(eta=0.1, mu=0.2, t=0.5, tau=0.5)

    assert vacuum_factor(p) == pytest.approx(np.exp(-0.2) * np.sqrt(1 - 0.04) * (1 - 0.04))


@pytest.mark.parametrize("params", [
    {},
    {"eta": 0.02, "mu": 0.05, "t": 0.5, "tau": 0.7},
    {"alpha": 0.3},
])
def test_ledger_matches_simulator(params):
    p = SourceParams(**params)
    outcome = run_pipeline(p)

    for entry in outcome.ledger:
        assert entry.simulated == pytest.approx(entry.weight, rel=1e-6)


def test_ledger_entry_scales_like_its_monomial():
    base = SourceParams(eta=0.01, mu=0.01, t=0.9, tau=0.9)
    doubled = base.model_copy(update={"eta": 0.02})
    event = CLASSES["extra_coherent_collinear_loss"]

    ratio = (class_weight(event, doubled) / vacuum_factor(doubled)) / (class_weight(event, base) / vacuum_factor(base))
    assert ratio == pytest.approx(2.0**4, rel=1e-9)


def test_ledger_frame_and_ratio():
    ledger = build_ledger(SourceParams())
    frame = ledger.to_frame()

    assert list(frame["name"]) == list(CLASSES)
    assert frame.loc[frame["name"] == DESIRED, "monomial"].item() == sp.sstr(class_monomial(CLASSES[DESIRED]))
    assert frame["simulated"].isna().all()
    assert 0 < ledger.contamination_ratio() < np.inf
    with pytest.raises(KeyError):
        ledger.entry("unknown")


def test_non_default_alpha_keeps_symbolic_label():
    ledger = build_ledger(SourceParams(alpha=0.25))

    assert ledger.entry(DESIRED).prefactor is None
    assert "alpha" in ledger.entry(DESIRED).monomial
