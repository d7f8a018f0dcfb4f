"""Numerical laboratory for entropic control on finite metric measure spaces.

Modules
-------
space      weighted graphs, Dirichlet form, heat semigroup and kernel
curves     densities, curves, drift geometry and drift recovery
transport  exact and entropic W2, metric speed, contraction diagnostics
mollify    spatial and temporal regularization of curves and drifts
balance    osmotic velocity, entropy-generation identity, entropy-speed inequality
control    value function solver with Hopf-Cole and brute-force oracles
"""
__version__ = "0.1.0"

from .space import Space, grid, k2, load_space, ring  # noqa: E402
from .curves import (  # noqa: E402
    DriftField,
    MeasureCurve,
    dual_norm,
    entropy,
    forward_integrate,
    heat_flow_curve,
    recover_continuity_drift,
    recover_fp_drift,
    v_norm,
    z_inner,
)
from .balance import entropy_balance, osmotic_velocity, theorem1_check  # noqa: E402

__all__ = [
    "Space",
    "k2",
    "ring",
    "grid",
    "load_space",
    "MeasureCurve",
    "DriftField",
    "entropy",
    "z_inner",
    "v_norm",
    "recover_continuity_drift",
    "recover_fp_drift",
    "dual_norm",
    "forward_integrate",
    "heat_flow_curve",
    "osmotic_velocity",
    "entropy_balance",
    "theorem1_check",
]
