"""
Smoothing curves and drifts
===========================

Apply the spatial mollifier and the time convolution to a Fokker-Planck curve
and its drift.  As epsilon shrinks the smoothed curve approaches the original
and the smoothed drift norm approaches the original drift norm.
"""
import numpy as np

from entroflow.curves import DriftField, forward_integrate, random_density
from entroflow.mollify import eps_sweep
from entroflow.space import ring

rng = np.random.default_rng(3)
space = ring(32)
N, t = 64, -0.4
# potentials varying smoothly in time, so the time convolution is harmless
base = np.stack([space.heat_apply(p, 0.002) for p in 0.05 * rng.standard_normal((2, space.n))])
s_mid = t + (np.arange(N) + 0.5) * (-t / N)
psi = np.outer(np.cos(3 * s_mid), base[0]) + np.outer(np.sin(5 * s_mid), base[1])
V = DriftField.from_potentials(space, psi)
curve = forward_integrate(space, random_density(space, rng, 0.5, smooth=0.02), V, t)

print("      eps     sup L1     |V|      |V_eps|   |V_eps| inside")
for rep in eps_sweep(curve, V, [0.04, 0.01, 0.0025, 0.000625, 0.00015625]):
    print(
        f"{rep.eps:9.6f}  {rep.sup_l1:.3e}  {rep.norm_in:.5f}  {rep.norm_out:.5f}  {rep.norm_out_interior:.5f}"
    )
