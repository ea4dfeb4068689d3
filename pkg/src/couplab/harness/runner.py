"""Config-driven experiment cells and parameter sweeps.

A *cell* is one ``(lambda, c, t_star)`` point of an experiment; it runs
with a single integer seed and returns a list of :class:`ResultRow`.
Sweeps take the Cartesian product of the configured lists and give cell
``i`` the seed ``cell_seed(master_seed, i)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DomainError
from ..purify import GuidanceSpec, PurifySpec, coup_purify
from .config import ExperimentConfig
from .experiments import (
    bound_audit,
    credibility_empirical,
    flip_probability,
    prop1_audit,
    robustness_eval,
    run_tasks,
)
from .io import ResultRow


@dataclass(frozen=True)
class Cell:
    index: int
    lam: float
    c: float
    t_star: float


def cell_seed(master_seed: int, index: int) -> int:
    """Seed of sweep cell ``index``, independent of how many cells there are."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def cells(cfg: ExperimentConfig) -> list[Cell]:
    product = list(itertools.product(cfg.lambdas, cfg.cs, cfg.t_stars))
    if not product:
        raise ConfigError("sweep has an empty parameter product")
    return [Cell(i, lam, c, t) for i, (lam, c, t) in enumerate(product)]


def toy_params(cfg: ExperimentConfig):
    """``(mu, sigma)`` of a 1-D symmetric equal-weight two-component mixture config."""
    gmm = cfg.mixture()
    if gmm.dim != 1:
        raise DomainError("this experiment is defined for a 1-D mixture only")
    m, v, w = gmm.means[:, 0], gmm.variances, gmm.weights
    if gmm.n_components != 2 or abs(m[0] + m[1]) > 1e-12 or m[1] <= 0 or v[0] != v[1] or w[0] != w[1]:
        raise DomainError("this experiment needs the symmetric pair N(-mu, s^2), N(mu, s^2) with equal weights")
    return float(m[1]), float(np.sqrt(v[0]))


def _x0(cfg: ExperimentConfig) -> np.ndarray:
    return np.asarray(cfg["purifier"]["x0"], dtype=np.float64)


def purify_result(cfg: ExperimentConfig, lam: float, c: float, t_star: float, seed: int, noise=None):
    """Guided purification of the configured input with its full trajectory recorded."""
    noise = cfg["purifier"]["noise"] if noise is None else noise
    x = _x0(cfg)
    gmm = cfg.mixture()
    if x.shape != (gmm.dim,):
        raise DomainError(f"x0 has {x.size} components but the mixture is {gmm.dim}-D")
    spec = PurifySpec(t_star=t_star, step=cfg["purifier"]["step"], noise=noise, seed=seed, record_trajectory=True)
    return coup_purify(x, gmm, cfg.classifier(c), cfg.schedule(), GuidanceSpec(lam), spec)


def run_cell(cfg: ExperimentConfig, kind: str, cell: Cell, seed: int, threads: int = 1) -> list[ResultRow]:
    exp, pur = cfg["experiment"], cfg["purifier"]
    step = pur["step"]
    lam, c, t_star = cell.lam, cell.c, cell.t_star

    def row(metric, value, ci=None, trials=exp["trials"], lam=lam):
        return ResultRow(kind, lam, c, t_star, step, trials, metric, float(value), ci, seed)

    if kind == "flip_probability":
        mu, sigma = toy_params(cfg)
        x0 = _x0(cfg)
        if x0.size != 1:
            raise DomainError("flip_probability needs a scalar x0")
        est = flip_probability(
            float(x0[0]), lam, c, t_star, step, exp["trials"], exp["mode"], seed,
            mu=mu, sigma=sigma, schedule=cfg.schedule(), threads=threads,
        )
        return [row(f"flip_probability_{exp['mode']}", est.probability, est.ci_half_width)]

    if kind == "prop1":
        mu, sigma = toy_params(cfg)
        lams = (0.0,) if lam == 0.0 else (0.0, lam)
        rep = prop1_audit(
            mu, sigma, float(_x0(cfg)[0]), lams, c, exp["trials"], seed,
            t_star=t_star, step=step, schedule=cfg.schedule(), threads=threads,
        )
        rows = [row("first_passage_flip", e.probability, e.ci_half_width, lam=l)
                for l, e in zip(rep.lambdas, rep.estimates)]
        for comp in rep.comparisons:
            rows += [
                row("z_vs_lambda0", comp["z"]),
                row("p_value_vs_lambda0", comp["p_value"]),
                row("dominance_rate", comp["dominance_rate"]),
                row("noise_free_dominates", float(comp["noise_free_dominates"])),
            ]
        return rows

    if kind == "bound_audit":
        res = bound_audit(
            _x0(cfg), lam, t_star, step, exp["trials"], seed, gmm=cfg.mixture(),
            classifier=cfg.classifier(c), schedule=cfg.schedule(), noise=pur["noise"], threads=threads,
        )
        k = res.constants
        return [row("violations", res.violations), row("max_ratio", res.max_ratio),
                row("C_s", k.C_s), row("C_p", k.C_p), row("C_x", k.C_x)]

    if kind == "credibility":
        mu, sigma = toy_params(cfg)
        chk = credibility_empirical(
            exp["n_samples"], exp["delta_x"], 0.0, mu, sigma, exp["c_quantile"],
            exp["repetitions"], seed, threads,
        )
        reps = exp["repetitions"]
        return [row("empirical_std", chk.empirical_std, chk.std_ci_half_width, trials=reps),
                row("formula_half_width", chk.formula_half_width, trials=reps),
                row("ratio", chk.ratio, trials=reps)]

    if kind == "robustness":
        res = robustness_eval(
            cfg.mixture(), cfg.classifier(c), exp["defense"], cfg.attack(), exp["n_eval"], seed,
            lam=lam, t_star=t_star, step=step, schedule=cfg.schedule(), threads=threads,
        )
        n = exp["n_eval"]
        return [row("clean_accuracy", res.clean_accuracy, res.clean_ci, trials=n),
                row("robust_accuracy", res.robust_accuracy, res.robust_ci, trials=n),
                row("boundary_crossings", res.boundary_crossings, trials=n)]

    if kind == "purify":
        x_out = np.atleast_1d(purify_result(cfg, lam, c, t_star, seed).x_out)
        return [row(f"x_out_{i}", v, trials=1) for i, v in enumerate(x_out)]

    if kind == "trace":
        res = purify_result(cfg, lam, c, t_star, seed, noise=False)
        p = cfg.classifier(c).probs(res.x_out)
        return [row("final_p_true", p[exp["y_true"]], trials=1),
                row("final_p_adv", p[exp["y_adv"]], trials=1)]

    raise ConfigError(f"unknown experiment kind {kind!r}")


def sweep(cfg: ExperimentConfig, kind: str | None = None, threads: int | None = None) -> list[ResultRow]:
    """Run every cell of the configured product; rows come back in cell order."""
    kind = kind or cfg["experiment"]["kind"]
    threads = cfg["experiment"]["threads"] if threads is None else threads
    todo = cells(cfg)
    master = cfg["experiment"]["master_seed"]
    # parallelism goes to the cells when there are several, else into the cell
    inner = threads if len(todo) == 1 else 1
    parts = run_tasks(lambda cell: run_cell(cfg, kind, cell, cell_seed(master, cell.index), inner),
                      todo, threads)
    return [r for part in parts for r in part]

