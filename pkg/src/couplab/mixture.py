"""Isotropic Gaussian mixtures with closed-form diffused densities and scores.

Under the VP forward kernel ``N(sqrt(a) x0, (1 - a) I)`` a mixture stays a
mixture: component ``k`` becomes ``N(sqrt(a) mu_k, (a s_k^2 + 1 - a) I)``.
That gives exact ``log p_t``, ``grad log p_t`` and its Jacobian at any
schedule time, which stands in for a learned score network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .sde import Schedule, alpha_of

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DiffusedComponent:
    weight: float
    mean: np.ndarray
    variance: float


class GaussianMixture:
    """Mixture of isotropic Gaussians ``sum_k w_k N(mu_k, s_k^2 I)``.

    Parameters
    ----------
    weights : (K,) array_like
        Strictly positive, summing to one.
    means : (K, d) array_like
    variances : (K,) array_like
        Per-component isotropic variance ``s_k^2``.
    """

    def __init__(self, weights, means, variances):
        w = np.atleast_1d(np.asarray(weights, dtype=np.float64))
        mu = np.asarray(means, dtype=np.float64)
        if mu.ndim == 1:
            mu = mu[:, None]
        var = np.atleast_1d(np.asarray(variances, dtype=np.float64))
        if not (w.ndim == 1 and mu.ndim == 2 and var.ndim == 1):
            raise DomainError("weights (K,), means (K, d), variances (K,) expected")
        if not (len(w) == len(mu) == len(var)) or len(w) == 0:
            raise DomainError("component counts disagree")
        if np.any(w <= 0.0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be positive and sum to 1")
        if np.any(var <= 0.0) or not np.all(np.isfinite(mu)):
            raise DomainError("variances must be positive and means finite")
        self.weights = w
        self.means = mu
        self.variances = var
        for arr in (self.weights, self.means, self.variances):
            arr.setflags(write=False)

    @classmethod
    def from_components(cls, components):
        """Build from ``[(weight, mean, variance), ...]``."""
        w, mu, var = zip(*components)
        return cls(w, [np.atleast_1d(m) for m in mu], var)

    @classmethod
    def symmetric_pair(cls, mu=0.5, sigma=1.0, dim=1):
        """``1/2 N(-mu e1, sigma^2) + 1/2 N(mu e1, sigma^2)``; class 0 is the negative mode."""
        m = np.zeros((2, dim))
        m[0, 0], m[1, 0] = -mu, mu
        return cls([0.5, 0.5], m, [sigma**2, sigma**2])

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def __repr__(self):
        return (
            f"GaussianMixture(weights={self.weights.tolist()}, "
            f"means={self.means.tolist()}, variances={self.variances.tolist()})"
        )

    def diffused(self, t, schedule: Schedule) -> tuple[np.ndarray, np.ndarray]:
        """Means ``(K, d)`` and variances ``(K,)`` of the mixture at time ``t``."""
        if t == 0.0:
            return self.means, self.variances
        a = alpha_of(schedule, t)
        return math.sqrt(a) * self.means, a * self.variances + (1.0 - a)

    def diffused_components(self, t, schedule: Schedule) -> list[DiffusedComponent]:
        means, var = self.diffused(t, schedule)
        return [DiffusedComponent(float(w), m, float(v)) for w, m, v in zip(self.weights, means, var)]


def _component_terms(gmm: GaussianMixture, x, t, schedule):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != gmm.dim:
        raise DomainError(f"expected last axis of size {gmm.dim}, got shape {x.shape}")
    means, var = gmm.diffused(t, schedule)
    diff = x[..., None, :] - means  # (..., K, d)
    sq = np.einsum("...kd,...kd->...k", diff, diff)
    log_comp = np.log(gmm.weights) - 0.5 * gmm.dim * (LOG_2PI + np.log(var)) - 0.5 * sq / var
    return diff, var, log_comp


def _logsumexp(a):
    m = np.max(a, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, -1) + np.log(np.sum(np.exp(a - m), axis=-1))


def log_density(gmm: GaussianMixture, x, t=0.0, schedule: Schedule | None = None):
    schedule = schedule or Schedule()
    _, _, log_comp = _component_terms(gmm, x, t, schedule)
    out = _logsumexp(log_comp)
    return float(out) if np.ndim(out) == 0 else out


def responsibilities(gmm: GaussianMixture, x, t=0.0, schedule: Schedule | None = None):
    schedule = schedule or Schedule()
    _, _, log_comp = _component_terms(gmm, x, t, schedule)
    return np.exp(log_comp - _logsumexp(log_comp)[..., None])


def _score_parts(gmm, x, t, schedule):
    diff, var, log_comp = _component_terms(gmm, x, t, schedule)
    r = np.exp(log_comp - _logsumexp(log_comp)[..., None])
    m = -diff / var[:, None]  # per-component scores, (..., K, d)
    s = np.einsum("...k,...kd->...d", r, m)
    return r, m, var, s


def score_at(gmm: GaussianMixture, x, t=0.0, schedule: Schedule | None = None):
    """Exact ``grad_x log p_t(x)`` of the diffused mixture."""
    schedule = schedule or Schedule()
    return _score_parts(gmm, x, t, schedule)[3]


def score_jvp(gmm: GaussianMixture, x, t, v, schedule: Schedule | None = None):
    """Product of the score Jacobian (the Hessian of ``log p_t``) with ``v``.

    ``J v = -sum_k r_k v / v_k + sum_k r_k m_k (m_k . v) - s (s . v)``
    where ``m_k`` are per-component scores and ``s`` the mixture score.
    """
    schedule = schedule or Schedule()
    r, m, var, s = _score_parts(gmm, x, t, schedule)
    v = np.asarray(v, dtype=np.float64)
    mv = np.einsum("...kd,...d->...k", m, v)
    out = -np.einsum("...k,k->...", r, 1.0 / var)[..., None] * v
    out = out + np.einsum("...k,...kd->...d", r * mv, m)
    out = out - s * np.einsum("...d,...d->...", s, v)[..., None]
    return out


def sample(gmm: GaussianMixture, n: int, driver) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` points and their component labels."""
    if n < 1:
        raise DomainError("n must be at least 1")
    rng = driver.generator(0, tag=2)
    labels = rng.choice(gmm.n_components, size=n, p=gmm.weights)
    z = rng.standard_normal((n, gmm.dim))
    x = gmm.means[labels] + np.sqrt(gmm.variances[labels])[:, None] * z
    return x, labels
