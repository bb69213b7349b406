from dotenv import load_dotenv
load_dotenv()

from services.source_sim import SourceParams, leakage_channel, run_pipeline
from tools.spin_core import fidelity, tetrahedron_state
from tools.validator import generate_insights

# Weak source, lossless collinear paths: should come out close to the tetrahedron
params = SourceParams(eta=1e-3, mu=1e-3, t=1.0, tau=1.0)

outcome = run_pipeline(params)
print("Source parameters:", params.model_dump())
print("Five-fold success probability:", outcome.success_prob)
print("Fidelity with tetrahedron:", fidelity(outcome.rho, tetrahedron_state()))
print("-" * 50)

# 13% leakage into the spin-1 sectors
rho, insights = generate_insights(leakage_channel(outcome.rho, 0.13))

print("Ledger:")
print(outcome.ledger.to_frame().to_string(index=False))
print("-" * 50)
print("Insights Generated:")
for key, value in insights.items():
    print(f"- {key}: {value}")
