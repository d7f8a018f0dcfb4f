"""
Value function and its oracles
==============================

Solve the control problem on the shipped scenarios and compare the optimizer
with the Hopf-Cole construction and, on two points, with a grid search.
"""
from pathlib import Path

from entroflow.control import brute_force_oracle, hopf_cole_oracle, solve_value
from entroflow.io import load_scenario

here = Path(__file__).resolve().parent / "scenarios"

cfg = load_scenario(here / "linear_k2.cfg")
sc = cfg.build(here)
solved = solve_value(sc)
hc = hopf_cole_oracle(sc)
grid = brute_force_oracle(sc)
print(f"K2   solve={solved.value:.8f} hopf-cole={hc.value:.8f} grid={grid.value:.8f}")
print(f"     kkt={solved.kkt_residual:.1e} baseline={solved.baseline:.3f}")
print(f"     entropy-speed slack on the optimal curve={solved.theorem1.theorem1_slack:.3e}")

sc = load_scenario(here / "ring64.cfg").build(here)
solved = solve_value(sc)
hc = hopf_cole_oracle(sc)
gap = abs(solved.value - hc.value) / abs(hc.value)
print(f"ring solve={solved.value:.8f} hopf-cole={hc.value:.8f} relative gap={gap:.1e}")
print(f"     continuous-time Hopf-Cole value={hc.extra['continuum_value']:.8f}")
