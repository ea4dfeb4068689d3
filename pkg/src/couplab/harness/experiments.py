"""Experiment drivers: flip probabilities, bound audits, credibility, robustness.

Monte Carlo work is split into fixed-size chunks, chunk ``i`` drawing
from ``NoiseDriver(seed, i)``. Chunking depends only on the trial count,
so results do not depend on how many worker threads run the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..adjoint import path_crosses_boundary
from ..attacks import AttackSpec, pgd
from ..classifiers import BayesClassifier, NoisySineClassifier, grad_log_max_conf
from ..errors import DomainError
from ..mixture import GaussianMixture, sample, score_at
from ..purify import Defense, GuidanceSpec, PurifySpec, coup_purify
from ..sde import (
    DEFAULT_STEP,
    NoiseDriver,
    ReplayNoise,
    Schedule,
    euler_maruyama,
    beta_at,
    gamma_of,
)
from .stats import Z95, proportion_ci, two_proportion_z

CHUNK = 10_000


def run_tasks(fn, tasks, threads=1):
    """``[fn(t) for t in tasks]``, optionally on a thread pool; order is preserved."""
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _chunks(trials, size=CHUNK):
    return [(i, min(size, trials - start)) for i, start in enumerate(range(0, trials, size))]


@dataclass(frozen=True)
class BoundConstants:
    C_s: float
    C_p: float
    C_x: float


@dataclass(frozen=True)
class FlipEstimate:
    probability: float
    ci_half_width: float
    trials: int
    flips: int


def toy_setup(mu=0.5, sigma=1.0, c=0.0):
    """The 1-D two-Gaussian toy problem and its noisy classifier."""
    gmm = GaussianMixture.symmetric_pair(mu, sigma)
    clf = NoisySineClassifier(p0=(-mu, sigma**2), p1=(mu, sigma**2), c=c)
    return gmm, clf


def _flip_indicators(x0, lam, c, t_star, step, n, seed, stream, mode, mu, sigma, schedule, noise=True):
    gmm, clf = toy_setup(mu, sigma, c)
    spec = PurifySpec(t_star=t_star, step=step, noise=noise, seed=seed, stream=stream,
                      record_trajectory=(mode == "first-passage"))
    x = np.full((n, 1), float(x0))
    res = coup_purify(x, gmm, clf, schedule, GuidanceSpec(lam), spec)
    if mode == "endpoint":
        return res.x_out[:, 0] < 0.0
    return np.any(res.trajectory.states[..., 0] < 0.0, axis=0)


def _check_mode(mode):
    if mode not in ("endpoint", "first-passage"):
        raise DomainError(f"mode must be 'endpoint' or 'first-passage', got {mode!r}")


def flip_probability(
    x0=0.2, lam=1.0, c=0.0, t_star=0.1, step=DEFAULT_STEP, trials=100_000,
    mode="endpoint", seed=0, mu=0.5, sigma=1.0, schedule=None, threads=1,
) -> FlipEstimate:
    """Monte Carlo label-flip probability of the 1-D toy purification.

    ``endpoint`` counts purified states below 0; ``first-passage`` counts
    paths that visit the negative half-line at any grid time.
    """
    if np.size(x0) != 1:
        raise DomainError("flip_probability is defined for the 1-D toy problem only")
    _check_mode(mode)
    if trials < 1:
        raise DomainError("trials must be at least 1")
    schedule = schedule or Schedule()
    x0 = float(np.ravel(x0)[0])

    def chunk(task):
        stream, n = task
        return int(np.count_nonzero(
            _flip_indicators(x0, lam, c, t_star, step, n, seed, stream, mode, mu, sigma, schedule)
        ))

    flips = sum(run_tasks(chunk, _chunks(trials), threads))
    p, half = proportion_ci(flips, trials)
    return FlipEstimate(p, half, trials, flips)


@dataclass
class Prop1Report:
    lambdas: list
    estimates: list
    comparisons: list = field(default_factory=list)

    @property
    def probabilities(self):
        return [e.probability for e in self.estimates]


def prop1_audit(
    mu=0.5, sigma=1.0, x0=0.2, lambda_list=(0.0, 1.0), c=0.0, trials=100_000, seed=0,
    t_star=0.1, step=DEFAULT_STEP, weights=(0.5, 0.5), schedule=None, threads=1,
) -> Prop1Report:
    """First-passage flip probabilities for each guidance weight on shared noise.

    Each ``lam > 0`` is compared against ``lam = 0`` with a two-proportion
    z-test, the per-trial dominance rate on the shared streams and the
    noise-free pathwise comparison.
    """
    if not (mu > 0 and sigma > 0) or abs(weights[0] - weights[1]) > 1e-12:
        raise DomainError("the comparison needs the symmetric setup N(+-mu, sigma^2) with equal weights")
    if x0 <= 0:
        raise DomainError("x0 must be positive")
    schedule = schedule or Schedule()
    lambdas = [float(v) for v in lambda_list]
    chunks = _chunks(trials)

    def indicators(lam, noise=True, n_chunks=chunks):
        parts = run_tasks(
            lambda task: _flip_indicators(x0, lam, c, t_star, step, task[1], seed, task[0],
                                          "first-passage", mu, sigma, schedule, noise),
            n_chunks, threads,
        )
        return np.concatenate(parts)

    flags = {lam: indicators(lam) for lam in lambdas}
    estimates = []
    for lam in lambdas:
        k = int(np.count_nonzero(flags[lam]))
        p, half = proportion_ci(k, trials)
        estimates.append(FlipEstimate(p, half, trials, k))
    report = Prop1Report(lambdas, estimates)
    if 0.0 not in flags:
        return report
    base = flags[0.0]
    base_det = indicators(0.0, noise=False, n_chunks=[(0, 1)])[0]
    for lam in lambdas:
        if lam == 0.0:
            continue
        z, pval = two_proportion_z(int(base.sum()), trials, int(flags[lam].sum()), trials)
        det = indicators(lam, noise=False, n_chunks=[(0, 1)])[0]
        report.comparisons.append({
            "lambda": lam,
            "z": z,
            "p_value": pval,
            "dominance_rate": float(np.mean(flags[lam] <= base)),
            "noise_free_dominates": bool(det <= base_det),
        })
    return report


@dataclass(frozen=True)
class BoundAudit:
    violations: int
    max_ratio: float
    constants: BoundConstants
    trials: int


def bound_audit(
    x, lam=1.0, t_star=0.1, step=DEFAULT_STEP, trials=1000, seed=0,
    gmm="toy", classifier="bayes", schedule=None, noise=True, threads=1,
) -> BoundAudit:
    """Check every sampled path against the guided-VP distance bound.

    For each path the constants are empirical suprema along that path:
    ``C_s = 2 max ||score||``, ``C_p = 2 max(lam, 1) max ||grad log max p||``
    and ``C_x = max ||x||``. The noise term is the endpoint of the
    score-free reverse solve started at 0 and driven by the same
    increments. A path violates the bound when

        ||x_out - x|| > (1 + 10 step) [gamma (C_s + C_p) + (e^gamma - 1) C_x + ||noise||].

    Pass ``gmm=None`` / ``classifier=None`` to drop the score / guidance.
    """
    schedule = schedule or Schedule()
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if isinstance(gmm, str):
        gmm = GaussianMixture.symmetric_pair(0.5, 1.0, dim=x.shape[-1])
    if isinstance(classifier, str):
        classifier = BayesClassifier.from_mixture(gmm)
    gamma = gamma_of(schedule, t_star)
    guidance = GuidanceSpec(lam)
    tol = 1.0 + 10.0 * step

    def chunk(task):
        stream, n = task
        spec = PurifySpec(t_star=t_star, step=step, noise=noise, seed=seed, stream=stream,
                          record_trajectory=True, record_increments=True)
        xs = np.broadcast_to(x, (n,) + x.shape).copy()
        traj = coup_purify(xs, gmm, classifier, schedule, guidance, spec).trajectory
        states, times = traj.states, traj.times
        norm = lambda a: np.linalg.norm(a, axis=-1)
        c_x = norm(states).max(axis=0)
        c_s = np.zeros(n)
        c_p = np.zeros(n)
        # the final state is never fed to the drift
        for t, s in zip(times[:-1], states[:-1]):
            if gmm is not None:
                c_s = np.maximum(c_s, norm(score_at(gmm, s, t, schedule)))
            if classifier is not None and lam != 0.0:
                c_p = np.maximum(c_p, norm(grad_log_max_conf(classifier, s)))
        c_s, c_p = 2.0 * c_s, 2.0 * max(lam, 1.0) * c_p
        noise_part = euler_maruyama(
            lambda y, t: -0.5 * beta_at(schedule, t) * y,
            lambda t: math.sqrt(beta_at(schedule, t)),
            np.zeros_like(xs), spec.grid, ReplayNoise(traj.increments),
            noise_enabled=noise, record_states=False,
        ).endpoint
        lhs = norm(traj.endpoint - xs)
        bound = gamma * (c_s + c_p) + math.expm1(gamma) * c_x + norm(noise_part)
        ratio = np.divide(lhs, bound, out=np.zeros_like(lhs), where=bound > 0)
        violated = lhs > tol * bound
        return int(violated.sum()), float(ratio.max()), float(c_s.max()), float(c_p.max()), float(c_x.max())

    if t_star == 0.0:
        return BoundAudit(0, 0.0, BoundConstants(0.0, 0.0, float(np.linalg.norm(x))), trials)
    parts = run_tasks(chunk, _chunks(trials, 1000), threads)
    v, r, cs, cp, cx = zip(*parts)
    return BoundAudit(sum(v), max(r), BoundConstants(max(cs), max(cp), max(cx)), trials)


def credibility_band(n, p_x, delta_x, c_quantile=1.0):
    """Half-width ``(c/2) sqrt((1/n)(1/(p_x dx) - 1))`` of a windowed posterior estimate."""
    mass = p_x * delta_x
    if n < 1:
        raise DomainError("n must be at least 1")
    if not 0.0 < mass < 1.0:
        raise DomainError(f"need 0 < p_x * delta_x < 1, got {mass}")
    return 0.5 * c_quantile * math.sqrt((1.0 / mass - 1.0) / n)


@dataclass(frozen=True)
class CredibilityCheck:
    empirical_std: float
    std_ci_half_width: float
    formula_half_width: float
    repetitions: int

    @property
    def ratio(self):
        return self.empirical_std / self.formula_half_width


def credibility_empirical(
    n=10_000, delta_x=0.05, x=0.0, mu=0.5, sigma=1.0, c_quantile=1.0,
    repetitions=2000, seed=0, threads=1,
) -> CredibilityCheck:
    """Spread of windowed posterior estimates at the symmetric class boundary.

    Each repetition draws ``n`` training points, ``n/2`` per class, and
    estimates ``p(y=1|x)`` as the class-1 share of the points falling in
    ``(x - dx/2, x + dx/2)``.
    """
    half = n // 2
    p_x = math.exp(-0.5 * (x - mu) ** 2 / sigma**2) / math.sqrt(2 * math.pi * sigma**2)

    def chunk(task):
        stream, reps = task
        rng = NoiseDriver(seed, stream).generator(0, tag=3)
        est = np.empty(reps)
        lo, hi = x - delta_x / 2, x + delta_x / 2
        for r in range(reps):
            pts = rng.standard_normal((2, half)) * sigma + np.array([[-mu], [mu]])
            inside = np.count_nonzero((pts > lo) & (pts < hi), axis=1)
            total = inside.sum()
            est[r] = inside[1] / total if total else 0.5
        return est

    est = np.concatenate(run_tasks(chunk, _chunks(repetitions, 250), threads))
    sd = float(est.std(ddof=1))
    return CredibilityCheck(
        sd, Z95 * sd / math.sqrt(2 * (repetitions - 1)),
        credibility_band(n, p_x, delta_x, c_quantile), repetitions,
    )


@dataclass(frozen=True)
class RobustnessResult:
    clean_accuracy: float
    clean_ci: float
    robust_accuracy: float
    robust_ci: float
    n_eval: int
    boundary_crossings: int = 0

    @property
    def clean_correct(self):
        return round(self.clean_accuracy * self.n_eval)

    @property
    def robust_correct(self):
        return round(self.robust_accuracy * self.n_eval)


def robustness_eval(
    gmm: GaussianMixture, classifier, defense="coup", attack: AttackSpec | None = None,
    n_eval=512, seed=0, lam=1.0, t_star=0.1, step=DEFAULT_STEP, schedule=None,
    threads=1, chunk=128,
) -> RobustnessResult:
    """Clean and robust accuracy of a defended classifier on mixture samples.

    Labels are mixture component indices. Clean and attacked inputs are
    classified with the same fresh noise stream, so an empty attack
    reproduces the clean accuracy exactly.
    """
    if n_eval < 1:
        raise DomainError("n_eval must be at least 1")
    schedule = schedule or Schedule()
    attack = attack or AttackSpec(epsilon=0.0, iters=0)
    pipeline = Defense(defense, classifier, gmm, schedule, lam=lam, t_star=t_star, step=step)
    x, y = sample(gmm, n_eval, NoiseDriver(seed, 1 << 30))

    def run(task):
        idx, _ = task
        sl = slice(idx * chunk, (idx + 1) * chunk)
        xb, yb = x[sl], y[sl]
        root = NoiseDriver(seed, idx)
        clean = pipeline.predict(xb, root.substream((1 << 20) + 1)) == yb
        adv = pgd(pipeline, xb, yb, attack, seed=seed, stream=idx)
        crossed = 0
        if pipeline.kind != "none":
            traj = pipeline.purify(adv.x_adv, root.substream((1 << 20) + 1), record=True).trajectory
            crossed = int(np.count_nonzero(path_crosses_boundary(traj, classifier)))
        return int(clean.sum()), int(np.count_nonzero(~adv.success)), crossed

    parts = run_tasks(run, _chunks(n_eval, chunk), threads)
    clean_k = sum(p[0] for p in parts)
    robust_k = sum(p[1] for p in parts)
    clean, clean_half = proportion_ci(clean_k, n_eval)
    robust, robust_half = proportion_ci(robust_k, n_eval)
    return RobustnessResult(clean, clean_half, robust, robust_half, n_eval, sum(p[2] for p in parts))
