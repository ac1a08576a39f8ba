"""
The innermost plus circuit
==========================

A circuit is a closed plus path around the box S(1).  Among all of them in
the annulus S(6) minus S(1), the innermost one encloses the fewest sites.
Here we sample a configuration slightly above the critical field, find
that circuit and draw it.
"""
import os

import numpy as np
from matplotlib import pyplot as plt

from isingiic.circuits import CircuitQuery, innermost_plus_circuit
from isingiic.lattice import enclosed_sites
from isingiic.model import ModelParams, SpinConfig
from isingiic.sampler import SamplerSpec, sample

out = os.environ.get("ISINGIIC_OUTPUT_DIR", "demo_output")
os.makedirs(out, exist_ok=True)

params = ModelParams("triangular", beta=0.2, h=0.15)
spec = SamplerSpec(box_size=6, margin=0, seed=4)
query = CircuitQuery(1, 6)

stream = sample(spec, params, 40)
window = stream.window
for spins in stream.spins:
    config = SpinConfig(window, spins, None)
    circuit = innermost_plus_circuit(config, query)
    if circuit is not None:
        break
print("circuit of length", len(circuit.sites), "enclosing", len(enclosed_sites(circuit)), "sites")

# the triangular lattice drawn with sheared rows, so the six neighbours
# sit at equal distances
def place(x, y):
    return x - 0.5 * y, y * np.sqrt(3) / 2

xy = np.array([place(x, y) for x, y in window.sites])
fig, ax = plt.subplots(figsize=(6, 6))
ax.scatter(*xy[spins > 0].T, s=40, c="tab:red", label="plus")
ax.scatter(*xy[spins < 0].T, s=40, c="tab:blue", label="minus")
loop = [place(x, y) for x, y in list(circuit.sites) + [circuit.sites[0]]]
ax.plot(*zip(*loop), "k-", lw=2, label="innermost circuit")
ax.set_aspect("equal")
ax.axis("off")
ax.legend(loc="upper right", fontsize=8)
fig.savefig(os.path.join(out, "innermost_circuit.svg"))
