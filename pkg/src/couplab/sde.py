"""VP-SDE schedule arithmetic, Euler-Maruyama integration and noise streams.

States are float64 arrays whose last axis is the state dimension ``d``;
any leading axes index independent paths, so a batch of ``n`` paths in
``d`` dimensions is an ``(n, d)`` array.

Reverse-time solves use a signed step: integrating from ``t_star`` down
to 0 gives negative ``dt`` and the noise is scaled by ``sqrt(|dt|)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IntegrationError

DEFAULT_STEP = 1e-3

_MASK64 = (1 << 64) - 1


def _check_time(t, name="t"):
    t_arr = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t_arr)) or np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {t!r}")
    return t_arr


@dataclass(frozen=True)
class Schedule:
    """Affine noise rate ``beta(t) = beta_min + t (beta_max - beta_min)``."""

    beta_min: float = 0.1
    beta_max: float = 20.0

    def __post_init__(self):
        if not (0.0 < self.beta_min < self.beta_max):
            raise DomainError(
                f"need 0 < beta_min < beta_max, got ({self.beta_min}, {self.beta_max})"
            )

    def beta(self, t):
        return beta_at(self, t)

    def gamma(self, t_star):
        return gamma_of(self, t_star)

    def alpha(self, t):
        return alpha_of(self, t)


def beta_at(schedule: Schedule, t):
    t = _check_time(t)
    out = schedule.beta_min + t * (schedule.beta_max - schedule.beta_min)
    return float(out) if out.ndim == 0 else out


def gamma_of(schedule: Schedule, t_star):
    """Half-integral of beta over ``[0, t_star]``."""
    t = _check_time(t_star, "t_star")
    out = 0.5 * (schedule.beta_min * t + 0.5 * (schedule.beta_max - schedule.beta_min) * t**2)
    return float(out) if out.ndim == 0 else out


def alpha_of(schedule: Schedule, t):
    """Signal retention ``exp(-int_0^t beta)`` of the forward kernel."""
    out = np.exp(-2.0 * np.asarray(gamma_of(schedule, t)))
    return float(out) if out.ndim == 0 else out


def linear_reverse_stats(schedule: Schedule, t_star) -> tuple[float, float]:
    """Scale and std of the score-free reverse solve started at ``t_star``.

    The endpoint is distributed as ``N(scale * x, std**2 I)``.
    """
    g = gamma_of(schedule, t_star)
    return math.exp(g), math.sqrt(math.expm1(2.0 * g))


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    step: float = DEFAULT_STEP

    def __post_init__(self):
        _check_time(self.t_start, "t_start")
        _check_time(self.t_end, "t_end")
        if not (self.step > 0.0 and math.isfinite(self.step)):
            raise DomainError(f"step must be positive, got {self.step!r}")

    @property
    def n_steps(self) -> int:
        span = abs(self.t_start - self.t_end)
        if span == 0.0:
            return 0
        # 0.1 / 1e-3 is 100.00000000000001 in binary; don't count that as a 101st step
        return max(1, math.ceil(span / self.step - 1e-9))

    @property
    def times(self) -> np.ndarray:
        n = self.n_steps
        direction = 1.0 if self.t_end >= self.t_start else -1.0
        ts = self.t_start + direction * self.step * np.arange(n + 1, dtype=np.float64)
        ts[-1] = self.t_end
        return ts


class NoiseDriver:
    """Counter-based standard normal stream.

    Draws for step ``k`` are produced by a Philox generator keyed by
    ``(master_seed, stream_id)`` with the step index (and an optional tag)
    placed in the high counter words, so any step can be regenerated
    without touching the others.
    """

    def __init__(self, master_seed: int, stream_id: int = 0):
        if master_seed < 0 or stream_id < 0:
            raise DomainError("master_seed and stream_id must be non-negative")
        self.master_seed = int(master_seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64

    def __repr__(self):
        return f"NoiseDriver(master_seed={self.master_seed}, stream_id={self.stream_id})"

    def __eq__(self, other):
        return (
            isinstance(other, NoiseDriver)
            and (self.master_seed, self.stream_id) == (other.master_seed, other.stream_id)
        )

    def __hash__(self):
        return hash((self.master_seed, self.stream_id))

    def generator(self, step: int, tag: int = 0) -> np.random.Generator:
        bitgen = np.random.Philox(
            key=np.array([self.master_seed, self.stream_id], dtype=np.uint64),
            counter=np.array([0, 0, int(step) & _MASK64, int(tag) & _MASK64], dtype=np.uint64),
        )
        return np.random.Generator(bitgen)

    def normal(self, step: int, shape, tag: int = 0) -> np.ndarray:
        return self.generator(step, tag).standard_normal(shape)

    def substream(self, index: int) -> "NoiseDriver":
        """A driver for the ``index``-th child stream (used for EOT and trials)."""
        seed_seq = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(self.stream_id, int(index))
        )
        return NoiseDriver(int(seed_seq.generate_state(1, dtype=np.uint64)[0]), 0)


class ReplayNoise:
    """Replays recorded increments ``z_k``; broadcasts them against ``shape``.

    Broadcasting lets a single recorded path drive a whole batch of
    perturbed inputs with common random numbers.
    """

    def __init__(self, increments):
        self.increments = np.asarray(increments, dtype=np.float64)

    def normal(self, step: int, shape, tag: int = 0) -> np.ndarray:
        if step >= len(self.increments):
            raise IndexError(f"no recorded increment for step {step}")
        return np.broadcast_to(self.increments[step], shape)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    increments: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise DomainError("times and states must have equal length")
        if self.increments is not None and len(self.increments) != len(self.times) - 1:
            raise DomainError("increments must have length len(times) - 1")

    @property
    def endpoint(self) -> np.ndarray:
        return self.states[-1]

    @property
    def dim(self) -> int:
        return self.states.shape[-1]


def euler_maruyama(
    drift,
    diffusion,
    x0,
    grid: TimeGrid,
    driver=None,
    noise_enabled: bool = True,
    record_increments: bool = False,
    record_states: bool = True,
) -> Trajectory:
    """Explicit Euler-Maruyama solve of ``dx = drift(x, t) dt + diffusion(t) dw``.

    ``x_{k+1} = x_k + drift(x_k, t_k) dt_k + diffusion(t_k) sqrt(|dt_k|) z_k``
    with ``dt_k`` signed. When ``record_states`` is false only the first
    and last states are kept.
    """
    x = np.array(x0, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1)
    times = grid.times
    n = len(times) - 1
    if noise_enabled and n > 0 and driver is None:
        raise DomainError("a noise driver is required when noise is enabled")

    states = [x.copy()] if record_states else None
    increments = [] if record_increments else None
    for k in range(n):
        t = times[k]
        dt = times[k + 1] - t
        x_next = x + np.asarray(drift(x, t)) * dt
        if noise_enabled:
            z = driver.normal(k, x.shape)
            x_next = x_next + diffusion(t) * math.sqrt(abs(dt)) * z
            if record_increments:
                increments.append(np.array(z, dtype=np.float64))
        elif record_increments:
            increments.append(np.zeros_like(x))
        if not np.all(np.isfinite(x_next)):
            raise IntegrationError(f"non-finite state at step {k} (t={t:.6g})", step=k)
        x = x_next
        if record_states:
            states.append(x.copy())

    if record_states:
        states_arr = np.stack(states)
    elif n > 0:
        states_arr = np.stack([np.array(x0, dtype=np.float64).reshape(x.shape), x])
        times = times[[0, -1]]
    else:
        states_arr = x[None].copy()
    inc_arr = None
    if record_increments:
        inc_arr = np.stack(increments) if increments else np.zeros((0,) + x.shape)
    return Trajectory(times=times, states=states_arr, increments=inc_arr)


def forward_perturb(x0, t, schedule: Schedule, driver, tag: int = 1) -> np.ndarray:
    """Exact sample from the VP forward kernel ``N(sqrt(alpha_t) x0, (1 - alpha_t) I)``."""
    alpha = alpha_of(schedule, t)
    x0 = np.asarray(x0, dtype=np.float64)
    if alpha == 1.0:
        return x0.copy()
    z = driver.normal(0, x0.shape, tag=tag)
    return math.sqrt(alpha) * x0 + math.sqrt(1.0 - alpha) * z
