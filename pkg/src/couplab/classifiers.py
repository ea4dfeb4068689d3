"""Differentiable synthetic classifiers.

Every model exposes ``probs(x)`` plus clamped ``log_prob``, its gradient
and Hessian-vector products for an arbitrary per-row label. The
guidance field of the purifier is the gradient of the log of the
*maximum* class probability, with the argmax label held fixed inside one
evaluation (ties go to the lowest class index).

Probabilities are clamped to ``[PROB_FLOOR, 1 - PROB_FLOOR]`` before any
logarithm; inside a clamped region the log-probability is constant, so
its derivatives vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FitError
from .mixture import GaussianMixture, _logsumexp, log_density, score_at, score_jvp

PROB_FLOOR = 1e-12
_LOG_CEIL = math.log1p(-PROB_FLOOR)
_LOG_FLOOR = math.log(PROB_FLOOR)


@dataclass(frozen=True)
class ConfidenceReport:
    probs: np.ndarray
    argmax_label: np.ndarray | int
    log_max: np.ndarray | float


def _as_states(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        raise DomainError(f"expected last axis of size {dim}, got shape {x.shape}")
    return x


def _labels_for(x, labels):
    return np.broadcast_to(np.asarray(labels, dtype=np.intp), x.shape[:-1])


def _gather(per_class, labels):
    """Pick ``per_class[..., y, :]`` row-wise for a ``(..., K, d)`` array."""
    idx = labels[..., None, None]
    return np.take_along_axis(per_class, np.broadcast_to(idx, labels.shape + (1, per_class.shape[-1])), axis=-2)[..., 0, :]


class _Classifier:
    n_classes: int
    dim: int

    def probs(self, x) -> np.ndarray:
        raise NotImplementedError

    def _log_probs_raw(self, x) -> np.ndarray:
        return np.log(self.probs(x))

    def log_prob(self, x, labels):
        x = _as_states(x, self.dim)
        lp = self._log_probs_raw(x)
        labels = _labels_for(x, labels)
        out = np.take_along_axis(lp, labels[..., None], axis=-1)[..., 0]
        return np.clip(out, _LOG_FLOOR, _LOG_CEIL)

    def _clamped(self, x, labels):
        lp = self._log_probs_raw(x)
        sel = np.take_along_axis(lp, labels[..., None], axis=-1)[..., 0]
        return (sel >= _LOG_CEIL) | (sel <= _LOG_FLOOR)

    def argmax(self, x):
        return np.argmax(self.probs(x), axis=-1)


class BayesClassifier(_Classifier):
    """Posterior ``p(y|x)`` of class-conditional Gaussian mixtures."""

    def __init__(self, class_conditionals, priors=None):
        self.class_conditionals = tuple(class_conditionals)
        if not self.class_conditionals:
            raise DomainError("need at least one class")
        k = len(self.class_conditionals)
        priors = np.full(k, 1.0 / k) if priors is None else np.asarray(priors, dtype=np.float64)
        if priors.shape != (k,) or np.any(priors <= 0) or abs(priors.sum() - 1.0) > 1e-12:
            raise DomainError("priors must be a positive probability vector, one per class")
        dims = {g.dim for g in self.class_conditionals}
        if len(dims) != 1:
            raise DomainError("class conditionals must share one dimension")
        self.priors = priors
        self.n_classes = k
        self.dim = dims.pop()
        self.marginal = GaussianMixture(
            np.concatenate([p * g.weights for p, g in zip(priors, self.class_conditionals)]),
            np.concatenate([g.means for g in self.class_conditionals]),
            np.concatenate([g.variances for g in self.class_conditionals]),
        )

    @classmethod
    def from_mixture(cls, gmm: GaussianMixture):
        """One class per mixture component, priors equal to the mixture weights."""
        classes = [GaussianMixture([1.0], m[None], [v]) for m, v in zip(gmm.means, gmm.variances)]
        return cls(classes, gmm.weights.copy())

    def _log_joint(self, x):
        return np.stack(
            [math.log(p) + np.asarray(log_density(g, x)) for p, g in zip(self.priors, self.class_conditionals)],
            axis=-1,
        )

    def _log_probs_raw(self, x):
        lj = self._log_joint(x)
        return lj - _logsumexp(lj)[..., None]

    def probs(self, x):
        x = _as_states(x, self.dim)
        return np.exp(self._log_probs_raw(x))

    def grad_log_prob(self, x, labels):
        x = _as_states(x, self.dim)
        labels = _labels_for(x, labels)
        per_class = np.stack([score_at(g, x) for g in self.class_conditionals], axis=-2)
        g = _gather(per_class, labels) - score_at(self.marginal, x)
        return np.where(self._clamped(x, labels)[..., None], 0.0, g)

    def hess_log_prob_vp(self, x, labels, v):
        x = _as_states(x, self.dim)
        labels = _labels_for(x, labels)
        v = np.broadcast_to(np.asarray(v, dtype=np.float64), x.shape)
        per_class = np.stack([score_jvp(g, x, 0.0, v) for g in self.class_conditionals], axis=-2)
        hv = _gather(per_class, labels) - score_jvp(self.marginal, x, 0.0, v)
        return np.where(self._clamped(x, labels)[..., None], 0.0, hv)


def _normal_pdf(x, mean, var):
    return np.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)


class NoisySineClassifier(_Classifier):
    """1-D two-class classifier with a sinusoidal perturbation of the evidence.

    ``p(y=1|x) = p1(x) / (p0(x) + p1(x) + c * n(x))`` with
    ``n(x) = amplitude * sin(frequency * x)``. The denominator is floored at
    ``PROB_FLOOR`` and the result clamped to ``[PROB_FLOOR, 1 - PROB_FLOOR]``;
    ``p(y=0|x) = 1 - p(y=1|x)``.
    """

    n_classes = 2
    dim = 1

    def __init__(self, p0=(-0.5, 1.0), p1=(0.5, 1.0), c=0.0, frequency=100.0, amplitude=0.01):
        if c < 0:
            raise DomainError("noise level c must be non-negative")
        if p0[1] <= 0 or p1[1] <= 0:
            raise DomainError("class variances must be positive")
        self.p0 = (float(p0[0]), float(p0[1]))
        self.p1 = (float(p1[0]), float(p1[1]))
        self.c = float(c)
        self.frequency = float(frequency)
        self.amplitude = float(amplitude)

    def __repr__(self):
        return f"NoisySineClassifier(p0={self.p0}, p1={self.p1}, c={self.c})"

    def _parts(self, x):
        """p1(x) with the first two derivatives of log p1, and the denominator with its derivatives."""
        (m0, v0), (m1, v1) = self.p0, self.p1
        n0, n1 = _normal_pdf(x, m0, v0), _normal_pdf(x, m1, v1)
        d0, d1 = -(x - m0) / v0, -(x - m1) / v1
        n0p, n1p = n0 * d0, n1 * d1
        n0pp, n1pp = n0 * (d0**2 - 1.0 / v0), n1 * (d1**2 - 1.0 / v1)
        w, a = self.frequency, self.amplitude
        noise = a * np.sin(w * x)
        den_raw = n0 + n1 + self.c * noise
        den_floored = den_raw < PROB_FLOOR
        den = np.where(den_floored, PROB_FLOOR, den_raw)
        den_p = np.where(den_floored, 0.0, n0p + n1p + self.c * a * w * np.cos(w * x))
        den_pp = np.where(den_floored, 0.0, n0pp + n1pp - self.c * a * w**2 * np.sin(w * x))
        return n1, d1, -1.0 / v1, den, den_p, den_pp

    def _p1(self, x):
        n1, _, _, den, _, _ = self._parts(x)
        raw = n1 / den
        return raw, np.clip(raw, PROB_FLOOR, 1.0 - PROB_FLOOR)

    def probs(self, x):
        x = _as_states(x, 1)
        _, p1 = self._p1(x[..., 0])
        return np.stack([1.0 - p1, p1], axis=-1)

    def _derivs(self, x):
        """Clamped p1, its two derivatives, d/dx and d2/dx2 of log p1, and the clamp mask."""
        n1, dlog1, ddlog1, den, den_p, den_pp = self._parts(x)
        p1_raw = n1 / den
        clamped = (p1_raw <= PROB_FLOOR) | (p1_raw >= 1.0 - PROB_FLOOR)
        p1 = np.clip(p1_raw, PROB_FLOOR, 1.0 - PROB_FLOOR)
        # log p1 = log n1 - log den, differentiated twice
        l1 = dlog1 - den_p / den
        l1pp = ddlog1 - (den_pp / den - (den_p / den) ** 2)
        dp = p1 * l1
        ddp = p1 * (l1pp + l1**2)
        return p1, dp, ddp, l1, l1pp, clamped

    def grad_log_prob(self, x, labels):
        x = _as_states(x, 1)
        labels = _labels_for(x, labels)
        p1, dp, _, l1, _, clamped = self._derivs(x[..., 0])
        g = np.where(labels == 1, l1, -dp / (1.0 - p1))
        return np.where(clamped, 0.0, g)[..., None]

    def hess_log_prob_vp(self, x, labels, v):
        x = _as_states(x, 1)
        labels = _labels_for(x, labels)
        v = np.broadcast_to(np.asarray(v, dtype=np.float64), x.shape)
        p1, dp, ddp, _, l1pp, clamped = self._derivs(x[..., 0])
        q = 1.0 - p1
        h0 = -ddp / q - (dp / q) ** 2
        h = np.where(labels == 1, l1pp, h0)
        return np.where(clamped, 0.0, h)[..., None] * v


@dataclass(frozen=True)
class LogisticClassifier(_Classifier):
    """Multinomial logistic regression ``softmax(W x + b)``."""

    weights: np.ndarray
    biases: np.ndarray
    loss_history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.biases, dtype=np.float64))
        if b.shape != (w.shape[0],):
            raise DomainError("one bias per class required")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def n_classes(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.weights.shape[1]

    def _log_probs_raw(self, x):
        logits = x @ self.weights.T + self.biases
        return logits - _logsumexp(logits)[..., None]

    def probs(self, x):
        x = _as_states(x, self.dim)
        return np.exp(self._log_probs_raw(x))

    def grad_log_prob(self, x, labels):
        x = _as_states(x, self.dim)
        labels = _labels_for(x, labels)
        p = np.exp(self._log_probs_raw(x))
        g = self.weights[labels] - p @ self.weights
        return np.where(self._clamped(x, labels)[..., None], 0.0, g)

    def hess_log_prob_vp(self, x, labels, v):
        # H = -(sum_j p_j w_j w_j^T - wbar wbar^T), independent of the label
        x = _as_states(x, self.dim)
        labels = _labels_for(x, labels)
        v = np.broadcast_to(np.asarray(v, dtype=np.float64), x.shape)
        p = np.exp(self._log_probs_raw(x))
        wv = v @ self.weights.T  # (..., K)
        wbar = p @ self.weights
        hv = -((p * wv) @ self.weights - wbar * np.sum(wbar * v, axis=-1, keepdims=True))
        return np.where(self._clamped(x, labels)[..., None], 0.0, hv)


def confidence(model, x) -> ConfidenceReport:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("confidence requires a finite input")
    p = model.probs(x)
    label = np.argmax(p, axis=-1)
    log_max = np.clip(np.log(np.take_along_axis(p, label[..., None], axis=-1)[..., 0]), _LOG_FLOOR, _LOG_CEIL)
    if label.ndim == 0:
        return ConfidenceReport(p, int(label), float(log_max))
    return ConfidenceReport(p, label, log_max)


def grad_log_max_conf(model, x):
    """Gradient of ``log max_y p(y|x)`` with the argmax held fixed."""
    x = _as_states(x, model.dim)
    return model.grad_log_prob(x, model.argmax(x))


def fd_step_for(x):
    """Central-difference step ``max(1e-5, 1e-7 ||x||)`` (row-wise)."""
    return np.maximum(1e-5, 1e-7 * np.linalg.norm(np.asarray(x), axis=-1, keepdims=True))


def hess_log_max_conf_vp(model, x, v, mode="analytic"):
    """Hessian of ``log max_y p(y|x)`` applied to ``v``, argmax held fixed."""
    x = _as_states(x, model.dim)
    labels = model.argmax(x)
    if mode == "analytic":
        return model.hess_log_prob_vp(x, labels, v)
    if mode in ("fd", "finite-difference"):
        v = np.broadcast_to(np.asarray(v, dtype=np.float64), x.shape)
        h = fd_step_for(x)
        return (model.grad_log_prob(x + h * v, labels) - model.grad_log_prob(x - h * v, labels)) / (2.0 * h)
    raise DomainError(f"unknown mode {mode!r}")


def fit_logistic(x, labels, epochs=200, learning_rate=0.5, n_classes=None) -> LogisticClassifier:
    """Full-batch gradient descent on mean cross-entropy.

    Weights start at zero and biases at the log class frequencies, so zero
    epochs yields the majority-class predictor.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    labels = np.asarray(labels, dtype=np.intp)
    k = int(n_classes or labels.max() + 1)
    counts = np.bincount(labels, minlength=k)
    if np.count_nonzero(counts) < 2:
        raise FitError("fit_logistic needs samples from at least two classes")
    n, d = x.shape
    onehot = np.eye(k)[labels]
    w = np.zeros((k, d))
    b = np.log(np.maximum(counts, 1) / n)
    history = []
    for _ in range(epochs + 1):
        logits = x @ w.T + b
        lp = logits - _logsumexp(logits)[:, None]
        history.append(float(-np.mean(np.sum(onehot * lp, axis=1))))
        if len(history) > epochs:
            break
        resid = np.exp(lp) - onehot  # d loss / d logits
        w = w - learning_rate * resid.T @ x / n
        b = b - learning_rate * resid.mean(axis=0)
    return LogisticClassifier(w, b, loss_history=tuple(history))
