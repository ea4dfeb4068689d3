"""Pathwise gradients through a recorded purification solve.

The adjoint is the exact derivative of the Euler recursion
``x_{k+1} = x_k + f(x_k, t_k) dt_k + g(t_k) sqrt(|dt_k|) z_k``: since the
noise does not depend on the state,

    dL/dx_k = (I + dt_k J_f(x_k, t_k))^T dL/dx_{k+1}.

The drift Jacobian is symmetric (the Hessians of ``log p_t`` and of the
log-confidence are), so a Jacobian-vector product serves as the
vector-Jacobian product. Integrating this from ``t = 0`` back to
``t_star`` is the augmented (state, gradient) system with frozen noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .classifiers import fd_step_for, hess_log_max_conf_vp
from .errors import DomainError, ReplayError
from .mixture import score_jvp
from .purify import GuidanceSpec, guided_drift
from .sde import Schedule, Trajectory, beta_at


@dataclass(frozen=True)
class JvpMode:
    mode: str = "analytic"
    fd_step: float | None = None  # None: max(1e-5, 1e-7 ||x||) per row

    def __post_init__(self):
        if self.mode not in ("analytic", "fd", "finite-difference"):
            raise DomainError(f"unknown jvp mode {self.mode!r}")


@dataclass
class AugmentedState:
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        if np.shape(self.x) != np.shape(self.z):
            raise DomainError("state and gradient dimensions differ")


class JvpResult(NamedTuple):
    value: np.ndarray
    near_boundary: np.ndarray | bool


def _near_boundary(classifier, x, v):
    if classifier is None:
        return np.zeros(x.shape[:-1], dtype=bool)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    u = np.divide(v, norm, out=np.zeros_like(v), where=norm > 0)
    h = fd_step_for(x)
    label = classifier.argmax(x)
    return (classifier.argmax(x + h * u) != label) | (classifier.argmax(x - h * u) != label)


def drift_jvp(x, t, v, gmm, classifier, schedule: Schedule, guidance: GuidanceSpec | None, mode: JvpMode = JvpMode()) -> JvpResult:
    """``J v`` for the Jacobian ``J`` of the guided drift at ``(x, t)``."""
    x = np.asarray(x, dtype=np.float64)
    v = np.broadcast_to(np.asarray(v, dtype=np.float64), x.shape)
    lam = 0.0 if guidance is None else guidance.lam
    guided = classifier is not None and lam != 0.0
    if mode.mode == "analytic":
        beta = beta_at(schedule, t)
        inner = np.zeros_like(x) if gmm is None else score_jvp(gmm, x, t, v, schedule)
        if guided:
            inner = inner + lam * hess_log_max_conf_vp(classifier, x, v, "analytic")
        value = -0.5 * beta * v - beta * inner
        near = _near_boundary(classifier, x, v) if guided else np.zeros(x.shape[:-1], dtype=bool)
    else:
        h = fd_step_for(x) if mode.fd_step is None else mode.fd_step
        up = guided_drift(x + h * v, t, gmm, classifier, schedule, guidance)
        down = guided_drift(x - h * v, t, gmm, classifier, schedule, guidance)
        value = (up - down) / (2.0 * h)
        near = np.zeros(x.shape[:-1], dtype=bool)
    if near.ndim == 0:
        near = bool(near)
    return JvpResult(value, near)


def augmented_solve(
    x_ben,
    grad_out,
    recorded: Trajectory,
    gmm,
    classifier,
    schedule: Schedule,
    guidance: GuidanceSpec | None,
    mode: JvpMode = JvpMode(),
    verify_replay: bool = True,
    rtol: float = 1e-9,
):
    """Map ``dL/dx_ben`` to ``dL/dx_adv`` along ``recorded``.

    With ``verify_replay`` every recorded step is regenerated from its
    start state and stored increment; a mismatch means the trajectory was
    not produced by this drift and raises :class:`ReplayError`.
    """
    if recorded.increments is None:
        raise ReplayError("trajectory was recorded without noise increments")
    x_ben = np.asarray(x_ben, dtype=np.float64)
    z = np.array(grad_out, dtype=np.float64)
    if z.shape != x_ben.shape or x_ben.shape != recorded.states.shape[1:]:
        raise DomainError(
            f"shape mismatch: x_ben {x_ben.shape}, grad_out {z.shape}, path {recorded.states.shape[1:]}"
        )
    if not np.allclose(x_ben, recorded.states[-1], rtol=rtol, atol=rtol):
        raise ReplayError("x_ben is not the endpoint of the recorded trajectory")
    times, states = recorded.times, recorded.states
    for k in range(len(times) - 2, -1, -1):
        t, dt = times[k], times[k + 1] - times[k]
        x = states[k]
        if verify_replay:
            x_next = (
                x
                + guided_drift(x, t, gmm, classifier, schedule, guidance) * dt
                + math.sqrt(beta_at(schedule, t) * abs(dt)) * recorded.increments[k]
            )
            if not np.allclose(x_next, states[k + 1], rtol=rtol, atol=rtol):
                raise ReplayError(f"recorded step {k} does not replay with its increment")
        z = z + dt * drift_jvp(x, t, z, gmm, classifier, schedule, guidance, mode).value
    return z


def path_crosses_boundary(trajectory: Trajectory, classifier) -> np.ndarray:
    """Per path: does the argmax label change anywhere along the recorded states?"""
    labels = classifier.argmax(trajectory.states)
    return np.any(labels != labels[0], axis=0)


def fd_pathwise_grad(pipeline, x, h: float = 1e-5):
    """Central differences of a scalar ``pipeline(x)`` with frozen noise.

    ``pipeline`` must be deterministic, i.e. it replays one noise stream
    for every evaluation.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (pipeline(x + e) - pipeline(x - e)) / (2.0 * h)
    return grad
