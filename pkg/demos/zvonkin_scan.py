"""
Resolvent equation behind the Zvonkin transform
===============================================

For a Hoelder drift ``b2`` we solve ``lambda u - L u = b2`` on a box and
watch the gradient of ``u`` shrink as ``lambda`` grows.  Once it drops
below 1/2 the map ``y -> y + u`` is a bi-Lipschitz change of variables.
"""

# %%

import numpy as np

from hamswitch.config import bundled
from hamswitch.zvonkin import gradient_bound, lambda_scan, self_convergence, solve_elliptic

model = bundled("reference").model

rows, lam_star = lambda_scan(model, 0)
print(f"{'lambda':>8s} {'grad bound':>11s} {'sup|u|':>9s} {'residual':>9s}")
for r in rows:
    print(f"{r['lambda']:8g} {r['gradient_bound']:11.4f} {r['sup_abs_f']:9.4f} {r['residual']:9.2e}")
print("smallest lambda with bound < 1/2:", lam_star)

# %%
# Maximum principle: ``sup |u| <= sup |b2| / lambda``.

sol = solve_elliptic(model, 0, 10.0)
print("sup|u| =", sol.sup_abs, " sup|b2|/lambda =", sol.b2_sup / 10.0)
print("gradient bound at lambda = 10:", gradient_bound(sol))

# %%
# Grid refinement.  Halving the step should cut the error by about 4.

print(self_convergence(model, 0, 10.0))

# %%
# The solution on one velocity slice.

g = sol.grid
j = np.argmin(np.abs(g.x))
print("u(x=0, y) at a few y:", np.round(sol.u[j, :: len(g.y) // 8], 4))
