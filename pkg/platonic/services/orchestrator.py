import logging
from dataclasses import replace

import numpy as np

from services.source_sim import leakage_channel, run_pipeline
from services.tomography import (
    align_phase,
    coherence_report,
    default_bases,
    derived_scalars,
    mle_reconstruct,
    monte_carlo_errors,
    simulate_counts,
)
from tools.metrology import closed_form_bounds, dominant_eigenstate, sqcrb
from tools.spin_core import fidelity, tetrahedron_state
from tools.validator import generate_insights

logger = logging.getLogger(__name__)

# job_id -> {"status", "progress", "result", "error", "stage_data"}
active_jobs = {}


def update_job(job_id, status, progress, result=None, error=None, stage_data=None):
    """Record the status of a job in the registry."""
    job = active_jobs.setdefault(job_id, {})
    job.update({"status": status, "progress": progress, "result": result, "error": error})
    if stage_data:
        job["stage_data"] = stage_data
    logger.debug("[%s] Updated: status=%s, progress=%s%%", job_id, status, progress)


def run_orchestrator(job_id, config):
    """
    Source simulation -> leakage -> counts -> reconstruction -> phase alignment
    -> Monte-Carlo errors -> bound report.

    Returns the result dict also stored under active_jobs[job_id]["result"].
    Failures mark the job as failed and re-raise.
    """
    target = tetrahedron_state()
    stage_data = {}
    try:
        # PHASE 1: SOURCE
        stage_data["source"] = {"status": "running", "input": config.source.model_dump(), "output": None}
        update_job(job_id, "Simulating Source", 5, stage_data=stage_data)
        outcome = run_pipeline(config.source.model_copy(update={"epsilon": 0.0}))
        stage_data["source"] = {
            "status": "completed",
            "input": config.source.model_dump(),
            "output": f"five-fold success probability {outcome.success_prob:.4e}",
            "stats": {
                "success_prob": outcome.success_prob,
                "truncation_residual": outcome.truncation_residual,
                "fidelity": fidelity(outcome.rho, target),
            },
        }

        # PHASE 2: LEAKAGE
        epsilon = config.source.epsilon
        stage_data["leakage"] = {"status": "running", "input": f"epsilon={epsilon}", "output": None}
        update_job(job_id, "Applying Leakage", 20, stage_data=stage_data)
        rho = leakage_channel(outcome.rho, epsilon) if epsilon > 0 else outcome.rho
        rho, insights = generate_insights(rho)
        stage_data["leakage"] = {
            "status": "completed",
            "input": f"epsilon={epsilon}",
            "output": f"symmetric population {insights['symmetric_population']:.4f}",
            "stats": insights,
        }

        # PHASE 3: COUNTS
        tomo = config.tomo
        bases = default_bases()
        stage_data["counts"] = {"status": "running", "input": f"{tomo.events} events over {len(bases)} bases", "output": None}
        update_job(job_id, "Simulating Counts", 35, stage_data=stage_data)
        counts = simulate_counts(rho, bases, tomo.events, config.seed, tomo.allocation)
        stage_data["counts"] = {
            "status": "completed",
            "input": f"{tomo.events} events over {len(bases)} bases",
            "output": f"{counts.total_events} detected events",
            "stats": {"detected": counts.total_events, "trials": tomo.events},
        }

        # PHASE 4: RECONSTRUCTION
        stage_data["reconstruction"] = {"status": "running", "input": f"{counts.total_events} events", "output": None}
        update_job(job_id, "Reconstructing", 50, stage_data=stage_data)
        result = mle_reconstruct(counts, tol=tomo.tol, max_iterations=tomo.max_iterations)
        stage_data["reconstruction"] = {
            "status": "completed",
            "input": f"{counts.total_events} events",
            "output": f"mean log-likelihood {result.log_likelihood:.6f}",
            "stats": {"iterations": result.iterations, "log_likelihood": result.log_likelihood},
        }

        # PHASE 5: PHASE ALIGNMENT
        stage_data["alignment"] = {"status": "running", "input": "tetrahedron", "output": None}
        update_job(job_id, "Aligning Phase", 65, stage_data=stage_data)
        phi, aligned = align_phase(result.rho_hat, target)
        scalars = derived_scalars(aligned, target)
        stage_data["alignment"] = {
            "status": "completed",
            "input": "tetrahedron",
            "output": f"phi={phi:.4f}",
            "stats": {"phi": phi, **scalars, "coherence": coherence_report(aligned)},
        }

        # PHASE 6: MONTE CARLO
        stage_data["monte_carlo"] = {"status": "running", "input": f"{tomo.n_resamples} resamples", "output": None}
        update_job(job_id, "Estimating Errors", 75, stage_data=stage_data)
        errors = None
        if tomo.n_resamples >= 2:
            errors = monte_carlo_errors(
                counts, n_resamples=tomo.n_resamples, seed=config.seed, target=target,
                workers=tomo.workers, tol=tomo.tol,
            )
        stage_data["monte_carlo"] = {
            "status": "completed" if errors else "skipped",
            "input": f"{tomo.n_resamples} resamples",
            "output": None if errors is None else f"{errors.n_failed} failed",
            "stats": {} if errors is None else {name: list(v) for name, v in errors.scalars.items()},
        }

        # PHASE 7: BOUNDS
        stage_data["bounds"] = {"status": "running", "input": "reconstruction", "output": None}
        update_job(job_id, "Reporting Bounds", 90, stage_data=stage_data)
        weight, main_state = dominant_eigenstate(aligned)
        forms = closed_form_bounds(4)
        bounds = {
            "reconstructed_sqcrb": scalars["sqcrb"],
            "reconstructed_sqcrb_std": errors.std("sqcrb") if errors else np.nan,
            "dominant_weight": weight,
            "dominant_fidelity": abs(main_state.overlap(target)) ** 2,
            "dominant_sqcrb": sqcrb(main_state),
            **{f"closed_{name}": value for name, value in forms.items()},
        }
        stage_data["bounds"] = {"status": "completed", "input": "reconstruction", "output": bounds, "stats": {}}

        final = {
            "source": outcome,
            "rho": rho,
            "counts": counts,
            "reconstruction": replace(result, rho_hat=aligned, phi=phi, mc_errors=errors),
            "scalars": scalars,
            "bounds": bounds,
        }
        update_job(job_id, "completed", 100, result=final, stage_data=stage_data)
        logger.info("[%s] ✓ pipeline completed: fidelity %.4f, s-QCRB %.4f", job_id, scalars["fidelity"], scalars["sqcrb"])
        return final

    except Exception as e:
        error_msg = f"Orchestration Error: {e}"
        logger.error("[%s] ✗ %s", job_id, error_msg)
        update_job(job_id, "failed", 0, error=error_msg, stage_data=stage_data)
        raise
