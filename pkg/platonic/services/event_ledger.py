"""
Symbolic photon-event ledger for the heralded source.

Each event class is expanded as a polynomial in commuting creation operators,
pushed through the same optical steps as the numerical simulator, and turned
into a closed-form probability. For the default coherent amplitude every
probability is a numeric prefactor times a monomial in (eta, t, mu, tau).
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
import pandas as pd
import sympy as sp

from services.source_sim import EventClass, SourceParams
from tools.errors import PlatonicError

logger = logging.getLogger(__name__)

ETA, MU, T, TAU, ALPHA = sp.symbols("eta mu t tau alpha", positive=True)
H, V, S, R, EH, EV, ES, ER, D = sp.symbols("h v s r e_h e_v e_s e_r d")
MODES = (H, V, R, EH, EV, ES, ER, D)

DESIRED = "tetrahedron"
CLASSES = {
    DESIRED: EventClass(3, 0, 0, 1, 0, 0),
    "extra_coherent_collinear_loss": EventClass(4, 1, 0, 1, 0, 0),
    "extra_coherent_signal_loss": EventClass(4, 0, 0, 1, 1, 0),
    "splitter_discard": EventClass(4, 0, 1, 1, 0, 0),
    "double_pair": EventClass(2, 0, 0, 2, 0, 0),
}


@dataclass(frozen=True)
class LedgerEntry:
    name: str
    event: EventClass
    prefactor: float | None
    monomial: str
    weight: float
    simulated: float | None = None


def _collinear_part(k: int, default_alpha: bool) -> sp.Expr:
    """k-photon term of exp(eta a_H^2) exp(alpha_src a_V)."""
    amp = sp.sqrt(2 * ETA) if default_alpha else ALPHA / sp.sqrt(T)
    return sum(
        ETA**p * H ** (2 * p) / sp.factorial(p) * amp ** (k - 2 * p) * V ** (k - 2 * p) / sp.factorial(k - 2 * p)
        for p in range(k // 2 + 1)
    )


def _propagate(event: EventClass, default_alpha: bool) -> sp.Expr:
    root2 = sp.sqrt(2)
    collinear = _collinear_part(event.created, default_alpha)
    collinear = collinear.subs({H: sp.sqrt(T) * H + sp.sqrt(1 - T) * EH, V: sp.sqrt(T) * V + sp.sqrt(1 - T) * EV}, simultaneous=True)
    collinear = collinear.subs({H: (H - V) / root2, V: -(H + V) / root2}, simultaneous=True)

    pairs = MU**event.pairs * (S * R) ** event.pairs / sp.factorial(event.pairs)
    pairs = pairs.subs({S: sp.sqrt(TAU) * S + sp.sqrt(1 - TAU) * ES, R: sp.sqrt(TAU) * R + sp.sqrt(1 - TAU) * ER}, simultaneous=True)

    state = sp.expand(collinear * pairs)
    state = state.subs({V: (V + S) / root2, S: (V - S) / root2}, simultaneous=True).subs(S, D)
    return sp.expand(state.subs({H: V, V: H}, simultaneous=True))


@lru_cache(maxsize=64)
def class_probability(event: EventClass, default_alpha: bool = True) -> sp.Expr:
    """Unnormalized probability (vacuum factors excluded) of one event class."""
    state = _propagate(event, default_alpha)
    poly = sp.Poly(state, *MODES)
    total = sp.Integer(0)
    for powers, coeff in poly.terms():
        degree = dict(zip(MODES, powers))
        if degree[H] + degree[V] != 4:
            continue
        if degree[EH] + degree[EV] != event.lost_collinear or degree[D] != event.discarded:
            continue
        if degree[ES] != event.lost_signal or degree[ER] != event.lost_herald:
            continue
        if degree[R] != event.pairs - event.lost_herald or degree[R] < 1:
            continue
        norm = 1
        for power in powers:
            norm *= factorial(power)
        total += sp.expand(coeff**2) * norm
    return sp.expand(total)


def class_monomial(event: EventClass) -> sp.Expr:
    lost_tau = event.lost_signal + event.lost_herald
    return (
        ETA**event.created
        * T ** (event.created - event.lost_collinear)
        * (1 - T) ** event.lost_collinear
        * MU ** (2 * event.pairs)
        * TAU ** (2 * event.pairs - lost_tau)
        * (1 - TAU) ** lost_tau
    )


def split_prefactor(event: EventClass) -> tuple[float, sp.Expr]:
    """(numeric prefactor, monomial) for the default coherent amplitude."""
    expr = class_probability(event, True)
    monomial = class_monomial(event)
    ratio = sp.cancel(sp.factor(expr) / monomial)
    if ratio.free_symbols:
        raise PlatonicError(f"Event {event} does not reduce to a monomial: {ratio}")
    return float(ratio), monomial


def vacuum_factor(p: SourceParams) -> float:
    return float(np.exp(-p.source_displacement**2) * np.sqrt(1 - 4 * p.eta**2) * (1 - p.mu**2))


def class_weight(event: EventClass, p: SourceParams) -> float:
    """Absolute probability of the event class at the given parameters."""
    values = {ETA: p.eta, MU: p.mu, T: p.t, TAU: p.tau}
    if not p.uses_default_alpha:
        values[ALPHA] = p.coherent_amplitude
    expr = class_probability(event, p.uses_default_alpha)
    return vacuum_factor(p) * float(expr.subs(values))


class EventLedger:
    def __init__(self, entries: list[LedgerEntry]):
        self.entries = entries

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def entry(self, name: str) -> LedgerEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def contamination_ratio(self) -> float:
        """Listed non-tetrahedron weight relative to the tetrahedron class."""
        desired = self.entry(DESIRED).weight
        if desired == 0:
            return np.inf
        return sum(e.weight for e in self.entries if e.name != DESIRED) / desired

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for e in self.entries:
            rows.append({
                "name": e.name,
                "created": e.event.created,
                "lost_collinear": e.event.lost_collinear,
                "discarded": e.event.discarded,
                "pairs": e.event.pairs,
                "lost_signal": e.event.lost_signal,
                "lost_herald": e.event.lost_herald,
                "prefactor": e.prefactor,
                "monomial": e.monomial,
                "weight": e.weight,
                "simulated": e.simulated,
            })
        return pd.DataFrame(rows)


def build_ledger(p: SourceParams, simulated: dict[EventClass, float] | None = None) -> EventLedger:
    """
    Closed-form weights of the leading event classes.

    Args:
        p: Source parameters.
        simulated: Optional class probabilities from the numerical simulator,
            attached to the matching entries for comparison.
    """
    entries = []
    for name, event in CLASSES.items():
        if p.uses_default_alpha:
            prefactor, monomial = split_prefactor(event)
            label = sp.sstr(monomial)
        else:
            prefactor, label = None, sp.sstr(class_probability(event, False))
        weight = class_weight(event, p)
        sim = simulated.get(event, 0.0) if simulated is not None else None
        entries.append(LedgerEntry(name, event, prefactor, label, weight, sim))
        logger.debug("[LEDGER] %s weight=%.4e simulated=%s", name, weight, sim)
    ledger = EventLedger(entries)
    logger.info("[LEDGER] ✓ %d classes, contamination ratio %.3e", len(entries), ledger.contamination_ratio())
    return ledger
