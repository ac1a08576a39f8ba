"""
Locating the critical field
==========================

Below the critical field h_c(beta), plus crossings of squares become rarer
as the square grows; above it they become more likely.  Bisection on the sign of that drift finds h_c.  At (almost)
infinite temperature the spins are independent, and h_c must match the
site-percolation threshold of the square lattice.
"""
import math

from isingiic import experiments as ex
from isingiic.model import ModelParams
from isingiic.percolation import independent_plus_probability, site_percolation_threshold
from isingiic.sampler import SamplerSpec

spec = SamplerSpec(seed=3)

p_site, _ = site_percolation_threshold("square")
beta = 1e-9
hc = ex.find_hc(beta, ModelParams("square"), spec, bracket=(0.0, 5e8), n=4,
                n_samples=1500, iters=6)
print(f"independent spins: plus density at h_c = {independent_plus_probability(beta, hc.value):.3f}"
      f" (site threshold {p_site:.3f})")

for beta in (0.2, 0.3):
    hc = ex.find_hc(beta, ModelParams("square"), spec, bracket=(-0.1, 0.6), n=8,
                    n_samples=1500, iters=6)
    print(f"beta={beta}: h_c in [{hc.ci95[0]:.3f}, {hc.ci95[1]:.3f}]")

print("exact square critical point", 0.5 * math.log(1 + math.sqrt(2)))
print("Binder estimate", ex.estimate_beta_c("square").value)
