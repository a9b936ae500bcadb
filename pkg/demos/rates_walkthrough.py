"""Evaluate a chain of rates by hand and check one of them on a trajectory.

Run: python demos/rates_walkthrough.py
"""

from fractions import Fraction

from ratelab import Space
from ratelab import mappings as mp
from ratelab import rate_calculus as rc
from ratelab import schemes as sc
from ratelab import transformers as tr
from ratelab import verifier as vf

half = Fraction(1, 2)
rho = rc.counterfunction_rate(rc.parse_eps_rate("inv 1"))

# Cauchy rate of the anchored Browder sequences -> bound for the viscosity version
inp = tr.TransformerInputs(b=1, delta=half, theta=rc.lift_cauchy(rho))
for eps in (Fraction(1), half, Fraction(1, 8)):
    res = tr.psi_viscosity_browder_single(inp, eps, rc.parse_counterfunction("affine 1 5"))
    print(f"eps={eps}: bound {res.value}, eps0={res.trace['eps0']}, M={res.trace['M']}")

# the bound only promises a window at or before it; find the actual one
space = Space(2, radius=0.5, b=1)
traj = sc.viscosity_browder_traj(space, mp.scaled_identity(0.5), mp.constant([0.4, 0.2]), sc.one_over_n_plus_1())
f = rc.parse_counterfunction("affine 1 5")
for eps in (half, Fraction(1, 8), Fraction(1, 64)):
    bound = tr.psi_viscosity_browder_single(inp, eps, f).value
    w = vf.find_metastable_window(traj, eps, f, bound)
    print(f"eps={eps}: window starts at {w.n} <= {bound}, spread {w.max_pairwise_distance:.3g}")

# Halpern side: sigma1 wraps the chain, so the bound grows with the divergence rate
twice = rc.DivergenceRate(lambda k: 2 * k, monotone=True, desc="2k")
hin = tr.TransformerInputs(b=1, delta=half, theta=rc.lift_cauchy(rho), A=twice)
print("viscosity-Halpern bound at eps=3:", tr.psi_viscosity_halpern_single(hin, 3, f).value)
