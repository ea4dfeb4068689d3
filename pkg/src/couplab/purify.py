"""Guided reverse-time VP-SDE purification and its baselines.

The solve integrates ``dx = f(x, t) dt + sqrt(beta(t)) dw`` from ``t_star``
down to 0 with

    f(x, t) = -1/2 beta(t) x - beta(t) [score(x, t) + lam * grad log max_y p(y|x)]

Passing ``gmm=None`` drops the score term and ``classifier=None`` (or
``lam=0``) drops the guidance, which recovers the score-free linear SDE
used by the closed-form checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .classifiers import grad_log_max_conf
from .errors import DomainError
from .mixture import score_at
from .sde import (
    DEFAULT_STEP,
    NoiseDriver,
    Schedule,
    TimeGrid,
    Trajectory,
    alpha_of,
    beta_at,
    euler_maruyama,
    forward_perturb,
)


@dataclass(frozen=True)
class GuidanceSpec:
    lam: float = 1.0

    def __post_init__(self):
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise DomainError(f"guidance weight must be finite and >= 0, got {self.lam}")


@dataclass(frozen=True)
class PurifySpec:
    t_star: float = 0.1
    step: float = DEFAULT_STEP
    noise: bool = True
    seed: int = 0
    stream: int = 0
    record_trajectory: bool = False
    record_increments: bool = False
    record_confidence: bool = False

    def __post_init__(self):
        if not (0.0 <= self.t_star <= 1.0):
            raise DomainError(f"t_star must lie in [0, 1], got {self.t_star}")
        if not self.step > 0.0:
            raise DomainError("step must be positive")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.t_star, 0.0, self.step)

    def driver(self) -> NoiseDriver:
        return NoiseDriver(self.seed, self.stream)


@dataclass
class PurifyResult:
    x_out: np.ndarray
    trajectory: Trajectory | None = None
    confidence_trace: list | None = None
    info: dict = field(default_factory=dict)


def guided_drift(x, t, gmm, classifier, schedule: Schedule, guidance: GuidanceSpec | None = None):
    x = np.asarray(x, dtype=np.float64)
    beta = beta_at(schedule, t)
    push = np.zeros_like(x) if gmm is None else score_at(gmm, x, t, schedule)
    lam = 0.0 if guidance is None else guidance.lam
    if classifier is not None and lam != 0.0:
        push = push + lam * grad_log_max_conf(classifier, x)
    return -0.5 * beta * x - beta * push


def _solve(x_adv, drift, schedule, spec: PurifySpec, driver, classifier):
    grid = spec.grid
    record_states = spec.record_trajectory or spec.record_confidence or spec.record_increments
    traj = euler_maruyama(
        drift,
        lambda t: math.sqrt(beta_at(schedule, t)),
        x_adv,
        grid,
        driver if driver is not None else spec.driver(),
        noise_enabled=spec.noise,
        record_increments=spec.record_increments,
        record_states=record_states,
    )
    trace = None
    if spec.record_confidence and classifier is not None:
        trace = [(float(t), classifier.probs(x)) for t, x in zip(traj.times, traj.states)]
    return PurifyResult(
        x_out=traj.endpoint,
        trajectory=traj if (spec.record_trajectory or spec.record_increments) else None,
        confidence_trace=trace,
    )


def coup_purify(x_adv, gmm, classifier, schedule: Schedule, guidance: GuidanceSpec, spec: PurifySpec, driver=None):
    """Classifier-confidence guided purification of ``x_adv`` (one or a batch of states).

    ``driver`` overrides the spec's ``(seed, stream)`` noise, e.g. with a
    :class:`~couplab.sde.ReplayNoise` for common random numbers.
    """

    def drift(x, t):
        return guided_drift(x, t, gmm, classifier, schedule, guidance)

    return _solve(x_adv, drift, schedule, spec, driver, classifier)


def reverse_purify(x_adv, gmm, schedule: Schedule, spec: PurifySpec, driver=None, classifier=None):
    """Guidance-free reverse-time solve; ``classifier`` is only used for confidence records."""
    return coup_purify(x_adv, gmm, classifier, schedule, GuidanceSpec(0.0), spec, driver=driver)


def diffpure_purify(x, gmm, schedule: Schedule, spec: PurifySpec, driver=None, classifier=None):
    """Forward-kernel noising to ``t_star`` followed by the reverse solve."""
    driver = driver if driver is not None else spec.driver()
    if spec.noise:
        x_mid = forward_perturb(x, spec.t_star, schedule, driver)
    else:
        x_mid = math.sqrt(alpha_of(schedule, spec.t_star)) * np.asarray(x, dtype=np.float64)
    result = reverse_purify(x_mid, gmm, schedule, spec, driver=driver, classifier=classifier)
    result.info["x_forward"] = x_mid
    return result


def confidence_trace(x_adv, tracked_labels, gmm, classifier, schedule: Schedule, guidance: GuidanceSpec, spec: PurifySpec):
    """Rows ``(t, p(y_true|x_t), p(y_adv|x_t))`` along a noise-free solve."""
    y_true, y_adv = tracked_labels
    for y in (y_true, y_adv):
        if not 0 <= y < classifier.n_classes:
            raise DomainError(f"label {y} out of range")
    spec = replace(spec, noise=False, record_trajectory=True)
    traj = coup_purify(x_adv, gmm, classifier, schedule, guidance, spec).trajectory
    p = classifier.probs(traj.states)
    return np.column_stack([traj.times, p[..., y_true].reshape(len(traj.times), -1)[:, 0],
                            p[..., y_adv].reshape(len(traj.times), -1)[:, 0]])


DEFENSE_KINDS = ("none", "reverse_only", "coup", "diffpure")


@dataclass(frozen=True)
class Defense:
    """A purify-then-classify pipeline.

    ``kind`` is one of ``none``, ``reverse_only``, ``coup`` or ``diffpure``.
    """

    kind: str
    classifier: object
    gmm: object = None
    schedule: Schedule = field(default_factory=Schedule)
    lam: float = 1.0
    t_star: float = 0.1
    step: float = DEFAULT_STEP

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise DomainError(f"unknown defense {self.kind!r}; expected one of {DEFENSE_KINDS}")

    @property
    def stochastic(self) -> bool:
        return self.kind != "none" and self.t_star > 0.0

    @property
    def guidance(self) -> GuidanceSpec:
        return GuidanceSpec(self.lam if self.kind == "coup" else 0.0)

    def spec(self, **kw) -> PurifySpec:
        return PurifySpec(t_star=self.t_star, step=self.step, **kw)

    def purify(self, x, driver, record=False, noise=True) -> PurifyResult:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "none":
            traj = Trajectory(np.array([0.0]), x[None].copy(), np.zeros((0,) + x.shape))
            return PurifyResult(x.copy(), trajectory=traj if record else None)
        spec = self.spec(noise=noise, record_increments=record, record_trajectory=record)
        if self.kind == "diffpure":
            return diffpure_purify(x, self.gmm, self.schedule, spec, driver=driver)
        return coup_purify(x, self.gmm, self.classifier, self.schedule, self.guidance, spec, driver=driver)

    def predict(self, x, driver, noise=True) -> np.ndarray:
        return self.classifier.argmax(self.purify(x, driver, noise=noise).x_out)
