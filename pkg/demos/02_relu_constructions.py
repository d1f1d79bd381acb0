"""
ReLU networks: what they can and cannot do
==========================================

A bias-free ReLU net is positively homogeneous, so it gives the same answer on
``x`` and ``2x``. That rules out one network for all lengths. For a single
length, explicit constructions exist; this script builds two and probes both
facts. Run with ``python demos/02_relu_constructions.py``.
"""

import numpy as np

from modadd import TaskSpec
from modadd import verify as V
from modadd.constructions import relu_construction, relu_construction_m2, relu_plan
from modadd.numerics import RngStream

# %%
# The m = 2 network uses 36 neurons per residue.
for p in (5, 11):
    cert = V.certify_construction("relu_m2", TaskSpec(p, 2))
    got = cert.witness["measured"]
    print(f"m=2 ReLU, p={p}: passed={cert.passed} width={got['width']} "
          f"min margin={got['min_margin']:.4f} |V|_2={got['v_spectral']:.3f}")

# %%
# For general m the construction approximates cos and sin of the sum through
# power sums and spline-approximated monomials. The width grows fast.
for m, p in ((2, 3), (3, 5)):
    plan = relu_plan(TaskSpec(p, m), 0.1)
    cert = V.certify_construction("relu_general", TaskSpec(p, m), {"tau": "0.1"})
    got = cert.witness["measured"]
    print(f"general ReLU (m={m}, p={p}): width {plan.width} (bound {plan.width_bound:.0f}), "
          f"margin {got['min_margin']:.3f}, mode error {got['mode_error']:.4f}, passed={cert.passed}")

# %%
# Homogeneity: a net that is perfect on bags of length 2 must repeat its answer
# for 2*e_1 at 3*e_1, and the labels 2 and 3 differ.
theta = relu_construction(TaskSpec(3, 2))
cert = V.relu_scale_invariance_witness(theta, 2, 3, alphas=(0.5, 2.0, 4.0))
w = cert.witness
print(f"prediction at 2e_1: {w['pred_m1']} (label {w['label_m1']}), "
      f"at 3e_1: {w['pred_m2']} (label {w['label_m2']})")

# %%
# The width lower bound counts sign changes along the path
# (m-s) e_0 + s e_1. A single neuron cannot follow twenty label changes.
rng = np.random.default_rng(0)
narrow = relu_construction_m2(3)
narrow.W, narrow.V = rng.normal(size=(1, 3)), rng.normal(size=(3, 1))
probe = V.relu_path_probe(narrow, TaskSpec(3, 20))
print("narrow net along the path:", {k: probe.witness[k] for k in ("achieved", "required", "budget_feasible")})
print("width needed:", V.capacity_bounds("relu_width_lb", 1, 3, m=20))

# %%
# On a random bias-free net, scaling the input never changes the answer.
# (The constructed net above has exact ties on symmetric bags, and scaling
# by 10 is not exact in floating point, so it is left out here.)
rand = relu_construction_m2(5)
rand.W, rand.V = rng.normal(size=(16, 5)), rng.normal(size=(5, 16))
print("prediction changes under scaling:",
      V.relu_scale_invariance_witness(rand, 2, 4, rng=RngStream(1, 0)).witness["alpha_mismatches"])
