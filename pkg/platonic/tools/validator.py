import numpy as np
from pydantic import BaseModel, ValidationError
from scipy import linalg

from tools.spin_core import BlockDensityMatrix, Sector

CLIP_TOL = 1e-10


def generate_insights(rho: BlockDensityMatrix) -> tuple[BlockDensityMatrix, dict]:
    """
    Symmetrize every block, clip eigenvalues in (-1e-10, 0) to zero and renormalize.
    Returns: (cleaned_rho, insights)
    """
    messages = []
    sectors = []
    clipped = 0
    min_eig = np.inf
    for sector in rho.sectors:
        block = (sector.block + sector.block.conj().T) / 2
        vals, vecs = linalg.eigh(block)
        min_eig = min(min_eig, float(vals.min()))
        small = (vals < 0) & (vals > -CLIP_TOL)
        if np.any(small):
            clipped += int(small.sum())
            messages.append(f"Sector two_j={sector.two_j}: clipped {int(small.sum())} tiny negative eigenvalue(s)")
            vals = np.where(small, 0.0, vals)
        if float(np.trace(block).real) == 0:
            messages.append(f"Sector two_j={sector.two_j}: no population")
        sectors.append(Sector(sector.two_j, sector.mult, (vecs * vals) @ vecs.conj().T))

    total = sum(s.mult * float(np.trace(s.block).real) for s in sectors)
    cleaned = BlockDensityMatrix(tuple(Sector(s.two_j, s.mult, s.block / total) for s in sectors))
    if abs(total - 1.0) > 1e-12:
        messages.append(f"Renormalized weighted trace {total:.12f} -> 1")

    insights = {
        "symmetric_population": cleaned.weight(cleaned.n_photons),
        "populations": {s.two_j: cleaned.weight(s.two_j) for s in cleaned.sectors},
        "purity": cleaned.purity(),
        "min_eigenvalue": min_eig,
        "clipped": clipped,
        "messages": messages,
    }
    return cleaned, insights


def validate_document(data: dict, model: type[BaseModel]) -> dict:
    """
    Checks a parsed file against its document model.
    Returns a status dict: {"valid": bool, "errors": list, "data": dict}
    """
    try:
        validated = model.model_validate(data)
        return {"valid": True, "errors": [], "data": validated}
    except ValidationError as e:
        errors = []
        for err in e.errors():
            field = ".".join(str(part) for part in err["loc"]) or "<root>"
            errors.append(f"Field '{field}': {err['msg']}")
        return {"valid": False, "errors": errors, "data": data}
