"""
Wasserstein distances and heat-flow contraction
===============================================

Exact W2 by linear programming, the entropic approximation at the default
regularization, and the contraction of W2 under the heat flow on a ring.
"""
import numpy as np

from entroflow.curves import random_density
from entroflow.space import k2, ring
from entroflow.transport import contraction_report, default_reg, w2_exact, w2_sinkhorn

dist, coupling = w2_exact(k2(), [1.5, 0.5], [0.5, 1.5])
print(f"K2: W2^2 = {dist**2:.12f} (half of the mass crosses the unit edge)")

rng = np.random.default_rng(4)
space = ring(64)
mu, nu = random_density(space, rng), random_density(space, rng)
exact, coupling = w2_exact(space, mu, nu)
approx = w2_sinkhorn(space, mu, nu)
print(f"ring:64 exact={exact:.6f} sinkhorn={approx:.6f} reg={default_reg(space):.1e}")
print(f"coupling marginal error={coupling.marginal_error():.1e} dual residual={coupling.dual_residual:.1e}")

for s in (0.001, 0.01, 0.1):
    rep = contraction_report(space, mu, nu, s)
    print(f"s={s:5.3f} ratio={rep.ratio:.6f} implied K={rep.implied_K:.3f}")
