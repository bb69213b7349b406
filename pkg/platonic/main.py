import argparse
import logging
import re
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from dotenv import load_dotenv
from pydantic import ValidationError

# Load env vars before reading any configuration
load_dotenv()

from processors.config import load_config
from processors.exporter import (
    write_constellation,
    write_counts,
    write_csv,
    write_density,
    write_json,
    write_ledger,
    write_state,
)
from processors.ingestion import load_constellation, load_counts, load_state
from services.orchestrator import run_orchestrator
from services.source_sim import run_pipeline
from services.tomography import coherence_report, default_bases, derived_scalars, reconstruct, simulate_counts
from tools.constellation import constellation_to_state, state_to_constellation
from tools.errors import ConvergenceError, InputValidationError
from tools.metrology import (
    STRATEGIES,
    as_density,
    closed_form_bounds,
    count_periodic_maxima,
    dominant_eigenstate,
    is_second_order_unpolarized,
    multipole_moments,
    rotation_scan,
    spin_moments,
    sqcrb,
    strategy_report,
)
from tools.phase_space import KERNEL, MAP_CENTER, vertex_projections
from tools.spin_core import PureSpinState, coherent_state, fidelity, noon_state, tetrahedron_state

logger = logging.getLogger("platonic")

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE = 0, 2, 3
FIG5_COLUMNS = ("coherent_sequential", "noon_simultaneous", "noon_sequential", "platonic")


def named_state(name: str) -> PureSpinState:
    """tetrahedron, noonN or coherentN (all photons H)."""
    if name == "tetrahedron":
        return tetrahedron_state()
    match = re.fullmatch(r"(noon|coherent)(\d+)", name)
    if match:
        kind, n = match.group(1), int(match.group(2))
        if n < 1:
            raise InputValidationError(f"Unknown state name '{name}'")
        return noon_state(n) if kind == "noon" else coherent_state(n, 0.0, 0.0)
    raise InputValidationError(f"Unknown state name '{name}' (use tetrahedron, noonN or coherentN)")


def _input_state(path, default=None):
    if path:
        return load_state(path)
    return default if default is not None else tetrahedron_state()


def cmd_state(args, config):
    out = config.out
    if args.constellation:
        state = constellation_to_state(load_constellation(args.constellation))
        label = Path(args.constellation).stem
    else:
        state = named_state(args.name)
        label = args.name
    constellation = state_to_constellation(state) if state.two_j >= 1 else None
    mean, second = spin_moments(state)
    diagnostics = is_second_order_unpolarized(state)
    report = {
        "name": label,
        "n_photons": state.n_photons,
        "moments": {"mean": mean, "second": second},
        "multipoles": multipole_moments(state),
        "unpolarized": {
            "passed": diagnostics.passed,
            "first_moment_norm": diagnostics.first_moment_norm,
            "second_moment_residual": diagnostics.second_moment_residual,
            "target": diagnostics.target,
        },
        "sqcrb": sqcrb(state),
    }
    write_state(out / "state.json", state)
    if constellation is not None:
        write_constellation(out / "constellation.json", constellation)
    write_json(out / "state_report.json", report)
    logger.info("[STATE] ✓ %s written to %s (unpolarized: %s)", label, out, diagnostics.passed)
    return report


def cmd_qcrb(args, config):
    rows = [strategy_report(n).as_row() for n in range(args.n_range[0], args.n_range[1] + 1)]
    write_csv(config.out / "strategies.csv", pd.DataFrame(rows, columns=["N", *STRATEGIES]))

    points = []
    target = tetrahedron_state()
    for path in args.state or []:
        rho = as_density(load_state(path))
        weight, main_state = dominant_eigenstate(rho)
        points.append({
            "label": Path(path).stem,
            "sqcrb": sqcrb(rho),
            "sqcrb_std": np.nan,
            "fidelity": fidelity(rho, target) if rho.has_sector(target.two_j) and rho.n_photons == 4 else np.nan,
            "dominant_sqcrb": sqcrb(main_state),
            "dominant_weight": weight,
        })
    if args.from_source:
        final = run_orchestrator("qcrb-from-source", config)
        bounds = final["bounds"]
        points.append({
            "label": "source",
            "sqcrb": bounds["reconstructed_sqcrb"],
            "sqcrb_std": bounds["reconstructed_sqcrb_std"],
            "fidelity": final["scalars"]["fidelity"],
            "dominant_sqcrb": bounds["dominant_sqcrb"],
            "dominant_weight": bounds["dominant_weight"],
        })
    if points:
        write_csv(config.out / "points.csv", pd.DataFrame(points))
    logger.info("[QCRB] ✓ %d rows, %d evaluated points", len(rows), len(points))
    return rows, points


def cmd_simulate(args, config):
    outcome = run_pipeline(config.source)
    target = tetrahedron_state()
    summary = {
        "params": config.source.model_dump(),
        "success_prob": outcome.success_prob,
        "truncation_residual": outcome.truncation_residual,
        "fidelity": fidelity(outcome.rho, target),
        "symmetric_population": outcome.rho.weight(4),
        "contamination_ratio": outcome.ledger.contamination_ratio(),
    }
    write_density(config.out / "source_state.json", outcome.rho, {"success_prob": outcome.success_prob})
    write_ledger(config.out / "ledger.csv", outcome.ledger)
    write_json(config.out / "source_summary.json", summary)
    logger.info("[SIMULATE] ✓ fidelity %.6f, success probability %.4e", summary["fidelity"], outcome.success_prob)
    return summary


def cmd_tomo(args, config):
    tomo = config.tomo
    target = tetrahedron_state()
    if args.counts:
        counts = load_counts(args.counts)
    else:
        rho = as_density(_input_state(args.state))
        counts = simulate_counts(rho, default_bases(), tomo.events, config.seed, tomo.allocation)
        write_counts(config.out / "counts.csv", counts)
    result = reconstruct(counts, target, n_resamples=tomo.n_resamples, seed=config.seed, workers=tomo.workers, tol=tomo.tol)
    scalars = derived_scalars(result.rho_hat, target)
    errors = result.mc_errors
    metadata = {
        "phi": result.phi,
        "log_likelihood": result.log_likelihood,
        "iterations": result.iterations,
        "events": counts.total_events,
        "scalars": scalars,
        "mc_errors": None if errors is None else {
            "n_resamples": errors.n_resamples,
            "n_failed": errors.n_failed,
            "scalars": {k: {"mean": m, "std": s} for k, (m, s) in errors.scalars.items()},
            "entry_std": {tj: np.stack([v.real, v.imag], axis=-1) for tj, v in errors.entry_std.items()},
        },
        "coherence": coherence_report(result.rho_hat),
    }
    write_density(config.out / "reconstruction.json", result.rho_hat, metadata)
    fid_std = errors.std("fidelity") if errors else float("nan")
    logger.info("[TOMO] ✓ fidelity %.4f ± %.4f, phi=%.4f", scalars["fidelity"], fid_std, result.phi)
    return metadata


def cmd_figures(args, config):
    out = config.out
    state = _input_state(args.state)
    rho = as_density(state)
    written = []
    if args.which == "fig3":
        ps = config.phase_space
        grids = vertex_projections(rho, n_theta=ps.n_theta, n_phi=ps.n_phi, workers=ps.workers)
        for k, grid in enumerate(grids):
            tt, pp = np.meshgrid(grid.thetas, grid.phis, indexing="ij")
            frame = pd.DataFrame({"theta": tt.ravel(), "phi": pp.ravel(), "W": grid.values.ravel()})
            written.append(write_csv(out / f"fig3_vertex{k}.csv", frame))
        header = {
            "kernel": KERNEL,
            "center": list(MAP_CENTER),
            "n_theta": ps.n_theta,
            "n_phi": ps.n_phi,
            "rotations": [g.metadata["rotation"] for g in grids],
        }
        written.append(write_json(out / "fig3_header.json", header))
    elif args.which == "fig4":
        thetas = np.arange(720) * (2 * np.pi / 720)
        curves = {name: rotation_scan(rho, axis, thetas) for name, axis in (("x", [1, 0, 0]), ("y", [0, 1, 0]), ("z", [0, 0, 1]))}
        written.append(write_csv(out / "fig4_scan.csv", pd.DataFrame({"theta": thetas, **curves})))
        maxima = {name: count_periodic_maxima(curve) for name, curve in curves.items()}
        logger.info("[FIGURES] maxima per rotation: %s", maxima)
    elif args.which == "fig5":
        rows = []
        for n in range(1, args.n_max_photons + 1):
            forms = closed_form_bounds(n)
            rows.append({"N": n, **{name: forms[name] for name in FIG5_COLUMNS}})
        written.append(write_csv(out / "fig5_bounds.csv", pd.DataFrame(rows, columns=["N", *FIG5_COLUMNS])))
    logger.info("[FIGURES] ✓ %s: %d file(s)", args.which, len(written))
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platonic",
        description="Multiparameter rotation metrology with N-photon polarization states.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--seed", type=int, default=None, help="Seed for stochastic commands.")
    parser.add_argument("--out", type=Path, default=None, help="Output directory.")
    parser.add_argument("--config", type=Path, default=None, help="TOML configuration file.")
    parser.add_argument("--set", dest="overrides", default=None, help="JSON object deep-merged over the config.")
    parser.add_argument("--nmax", type=int, default=None, help="Fock-space truncation of the source simulation.")
    parser.add_argument("--tol", type=float, default=None, help="Log-likelihood tolerance of the reconstruction.")
    parser.add_argument("--workers", type=int, default=None, help="Threads for grids and Monte-Carlo resamples.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("state", help="Write a named or constellation-defined state and its diagnostics.")
    p.add_argument("name", nargs="?", default="tetrahedron")
    p.add_argument("--constellation", type=Path, default=None)
    p.set_defaults(func=cmd_state)

    p = sub.add_parser("qcrb", help="Strategy bounds over a photon-number range.")
    p.add_argument("--n-range", type=int, nargs=2, default=[1, 20], metavar=("N_MIN", "N_MAX"))
    p.add_argument("--state", type=Path, action="append", help="State or density file to evaluate (repeatable).")
    p.add_argument("--from-source", action="store_true", help="Evaluate the simulated source after tomography.")
    p.set_defaults(func=cmd_qcrb)

    p = sub.add_parser("simulate", help="Run the source simulation.")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tomo", help="Simulate counts, reconstruct and estimate errors.")
    p.add_argument("--state", type=Path, default=None)
    p.add_argument("--counts", type=Path, default=None, help="Reconstruct from an existing counts CSV.")
    p.add_argument("--events", type=int, default=None)
    p.add_argument("--resamples", type=int, default=None)
    p.set_defaults(func=cmd_tomo)

    p = sub.add_parser("figures", help="Data behind the sphere maps, rotation scans and bound curves.")
    p.add_argument("which", choices=["fig3", "fig4", "fig5"])
    p.add_argument("--state", type=Path, default=None)
    p.add_argument("--n-max-photons", type=int, default=20)
    p.set_defaults(func=cmd_figures)
    return parser


def configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="[%(levelname)s] [%(name)s] %(message)s", force=True)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args)
    try:
        tomo_flags = {}
        if getattr(args, "events", None) is not None:
            tomo_flags["events"] = args.events
        if getattr(args, "resamples", None) is not None:
            tomo_flags["n_resamples"] = args.resamples
        flags = {
            "seed": args.seed, "out": args.out, "nmax": args.nmax, "tol": args.tol, "workers": args.workers,
            "tomo": tomo_flags or None,
        }
        config = load_config(args.config, args.overrides, flags)
        args.func(args, config)
    except (InputValidationError, ValidationError) as e:
        logger.error("✗ %s", e)
        return EXIT_VALIDATION
    except ConvergenceError as e:
        logger.error("✗ %s", e)
        return EXIT_CONVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
