"""Warp an image with an affine sampler and compare gradients with finite differences."""

import numpy as np

from wardtrack.stn import AffineParams, generate_grid, sample, sample_grad, transform

rng = np.random.default_rng(0)
U = rng.normal(size=(6, 6, 1))
theta = AffineParams.from_components(scale=(0.9, 1.1), skew=(0.05, -0.03), translation=(0.013, -0.021))
G = generate_grid(theta, (6, 6))
up = rng.normal(size=(6, 6, 1))

_, dtheta = sample_grad(U, G, up)
h = 1e-6
numeric = np.zeros(6)
for k in range(6):
    tp, tm = np.array(theta.theta), np.array(theta.theta)
    tp[k] += h
    tm[k] -= h
    numeric[k] = (np.sum(up * transform(U, AffineParams(tp))) - np.sum(up * transform(U, AffineParams(tm)))) / (2 * h)

print("identity is exact:", np.array_equal(transform(U, AffineParams((1, 0, 0, 0, 1, 0))), U))
print("sampled range:", float(sample(U, G).min()), float(sample(U, G).max()))
for k, (a, n) in enumerate(zip(dtheta, numeric)):
    print(f"dL/dtheta[{k}]  analytic {a:+.8f}  numeric {n:+.8f}")
