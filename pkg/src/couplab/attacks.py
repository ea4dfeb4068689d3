"""PGD with expectation over transformation against purify-then-classify pipelines.

All routines are batched: ``x`` is ``(n, d)`` (a single ``(d,)`` input is
accepted and returned in the same shape) and ``y_true`` holds one label
per row. The attack loss is cross-entropy on clamped probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .adjoint import augmented_solve
from .errors import DomainError
from .purify import Defense
from .sde import NoiseDriver, alpha_of


@dataclass(frozen=True)
class AttackSpec:
    norm: str = "linf"
    epsilon: float = 0.5
    step_size: float = 0.1
    iters: int = 10
    eot_samples: int = 1
    grad_mode: str = "adjoint"
    random_start: bool = False
    # "fresh": new EOT noise every iteration; "shared": one frozen set reused throughout
    eot_noise: str = "fresh"

    def __post_init__(self):
        if self.norm not in ("linf", "l2"):
            raise DomainError(f"norm must be 'linf' or 'l2', got {self.norm!r}")
        if self.epsilon < 0:
            raise DomainError("epsilon must be non-negative")
        if self.iters < 0 or (self.iters > 0 and not self.step_size > 0):
            raise DomainError("need iters >= 0 and a positive step size")
        if self.eot_samples < 1:
            raise DomainError("eot_samples must be at least 1")
        if self.grad_mode not in ("adjoint", "bpda"):
            raise DomainError(f"grad_mode must be 'adjoint' or 'bpda', got {self.grad_mode!r}")
        if self.eot_noise not in ("fresh", "shared"):
            raise DomainError(f"eot_noise must be 'fresh' or 'shared', got {self.eot_noise!r}")


@dataclass
class AdvResult:
    x_adv: np.ndarray
    success: np.ndarray
    loss_history: np.ndarray


def project(x, x0, spec: AttackSpec):
    """Project ``x`` onto the ``epsilon`` ball around ``x0`` in the spec's norm."""
    x = np.asarray(x, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if spec.norm == "linf":
        return np.clip(x, x0 - spec.epsilon, x0 + spec.epsilon)
    delta = x - x0
    norm = np.linalg.norm(delta, axis=-1, keepdims=True)
    scale = np.where(norm > spec.epsilon, spec.epsilon / np.where(norm > 0, norm, 1.0), 1.0)
    return x0 + delta * scale


def cross_entropy(classifier, x, y):
    return -classifier.log_prob(x, y)


def bpda_grad(classifier, x_purified, y_true):
    """Cross-entropy gradient at the purified point, passed straight through the purifier."""
    return -classifier.grad_log_prob(x_purified, y_true)


def pathwise_grad(defense: Defense, x, y_true, driver, grad_mode="adjoint"):
    """Loss and gradient of one noise realisation of ``CE(defense(x), y_true)``."""
    adjoint = grad_mode == "adjoint" and defense.kind != "none"
    res = defense.purify(x, driver, record=adjoint)
    loss = cross_entropy(defense.classifier, res.x_out, y_true)
    g = bpda_grad(defense.classifier, res.x_out, y_true)
    if adjoint:
        g = augmented_solve(
            res.x_out, g, res.trajectory, defense.gmm, defense.classifier,
            defense.schedule, defense.guidance, verify_replay=False,
        )
        if defense.kind == "diffpure":
            g = math.sqrt(alpha_of(defense.schedule, defense.t_star)) * g
    return loss, g


def eot_grad(defense: Defense, x, y_true, spec: AttackSpec, driver: NoiseDriver, return_loss=False):
    """Mean pathwise gradient over ``spec.eot_samples`` independent noise realisations."""
    x = np.asarray(x, dtype=np.float64)
    if not defense.stochastic or spec.eot_samples == 1:
        loss, g = pathwise_grad(defense, x, y_true, driver, spec.grad_mode)
    else:
        xs = np.broadcast_to(x, (spec.eot_samples,) + x.shape)
        ys = np.broadcast_to(np.asarray(y_true), (spec.eot_samples,) + np.shape(y_true))
        loss, g = pathwise_grad(defense, xs, ys, driver, spec.grad_mode)
        loss, g = loss.mean(axis=0), g.mean(axis=0)
    return (loss, g) if return_loss else g


def _direction(g, norm):
    if norm == "linf":
        return np.sign(g)
    n = np.linalg.norm(g, axis=-1, keepdims=True)
    return np.divide(g, n, out=np.zeros_like(g), where=n > 0)


def _random_start(x, spec: AttackSpec, driver: NoiseDriver):
    rng = driver.generator(0, tag=7)
    if spec.norm == "linf":
        return x + rng.uniform(-spec.epsilon, spec.epsilon, size=x.shape)
    d = x.shape[-1]
    u = rng.standard_normal(x.shape)
    u /= np.maximum(np.linalg.norm(u, axis=-1, keepdims=True), 1e-300)
    r = spec.epsilon * rng.uniform(size=x.shape[:-1] + (1,)) ** (1.0 / d)
    return x + r * u


def pgd(defense: Defense, x, y_true, spec: AttackSpec, seed: int = 0, stream: int = 0) -> AdvResult:
    """Projected gradient ascent on the EOT cross-entropy, keeping the best iterate.

    Iterate ``i`` draws its EOT noise from substream ``i`` of
    ``NoiseDriver(seed, stream)`` (substream 0 throughout when
    ``eot_noise="shared"``); the final label check uses a separate stream.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None] if single else x
    yb = np.broadcast_to(np.asarray(y_true, dtype=np.intp), xb.shape[:-1])
    root = NoiseDriver(seed, stream)

    x_cur = xb.copy()
    if spec.random_start and spec.epsilon > 0 and spec.iters > 0:
        x_cur = project(_random_start(xb, spec, root.substream(1 << 20)), xb, spec)
    best_x = x_cur.copy()
    best_loss = np.full(xb.shape[:-1], -np.inf)
    history = []
    for i in range(spec.iters + 1):
        driver = root.substream(0 if spec.eot_noise == "shared" else i)
        loss, g = eot_grad(defense, x_cur, yb, spec, driver, return_loss=True)
        history.append(loss)
        better = loss > best_loss
        best_x[better] = x_cur[better]
        best_loss = np.where(better, loss, best_loss)
        if i == spec.iters:
            break
        x_cur = project(x_cur + spec.step_size * _direction(g, spec.norm), xb, spec)

    pred = defense.predict(best_x, root.substream((1 << 20) + 1))
    result = AdvResult(best_x, pred != yb, np.asarray(history))
    if single:
        result = AdvResult(best_x[0], result.success[0], result.loss_history[:, 0])
    return result
