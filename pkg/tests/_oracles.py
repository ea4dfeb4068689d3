"""Independent reference computations shared by the tests.

Nothing here calls into couplab's analytic derivatives: gradients come
from central differences and densities from scipy.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import multivariate_normal, norm

from couplab.mixture import GaussianMixture


def central_grad(f, x, h=1e-5):
    """Central-difference gradient of a scalar function of a 1-D array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def central_jvp(f, x, v, h=1e-5):
    """Directional derivative of a vector function along ``v``."""
    x = np.asarray(x, dtype=np.float64)
    return (np.asarray(f(x + h * v)) - np.asarray(f(x - h * v))) / (2 * h)


def scipy_mixture_density(weights, means, variances, x, alpha=1.0):
    """Diffused mixture density, component by component, through scipy."""
    total = 0.0
    for w, m, v in zip(weights, means, variances):
        m = np.atleast_1d(m)
        cov = (alpha * v + 1.0 - alpha) * np.eye(m.size)
        total += w * multivariate_normal(np.sqrt(alpha) * m, cov).pdf(x)
    return total


def normal_cdf(x):
    return float(norm.cdf(x))


def random_mixture(rng: np.random.Generator, max_k=4, max_d=3, dim=None) -> GaussianMixture:
    k = int(rng.integers(1, max_k + 1))
    d = dim or int(rng.integers(1, max_d + 1))
    w = rng.dirichlet(np.full(k, 2.0))
    w = w / w.sum()
    return GaussianMixture(w, rng.uniform(-3, 3, size=(k, d)), rng.uniform(0.2, 3.0, size=k))


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))
