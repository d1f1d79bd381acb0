"""
The Newton-Schulz map inside Muon
=================================

Five rounds of an odd quintic push every normalized singular value toward 1
without computing an SVD. This script compares the iteration with the scalar
map applied to singular values directly.
"""

import numpy as np

from modadd.optim import composed_quintic, newton_schulz_orthogonalize

rng = np.random.default_rng(3)
G = rng.normal(size=(32, 11))
U, s, Vt = np.linalg.svd(G, full_matrices=False)
out = newton_schulz_orthogonalize(G)

print("normalized singular values:", np.round(s / np.linalg.norm(G), 3))
print("after the quintic map     :", np.round(composed_quintic(s / np.linalg.norm(G)), 3))
print("singular values of output :", np.round(np.linalg.svd(out, compute_uv=False), 3))
print("max deviation from U g(S) V^T:",
      np.abs(out - U @ np.diag(composed_quintic(s / np.linalg.norm(G))) @ Vt).max())

grid = np.linspace(0, 1, 11)
print("g on [0, 1]:", np.round(composed_quintic(grid), 3))
