"""TOML experiment configuration: schema, validation and model construction.

A config has one section per concern (``experiment``, ``schedule``,
``mixture``, ``classifier``, ``purifier``, ``attack``); every key is
checked against the schema below and unknown keys are rejected. See
``configs/example.toml`` for a complete file.
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..attacks import AttackSpec
from ..classifiers import BayesClassifier, LogisticClassifier, NoisySineClassifier, fit_logistic
from ..errors import ConfigError, CouplabError
from ..mixture import GaussianMixture, sample
from ..sde import NoiseDriver, Schedule

EXPERIMENTS = ("flip_probability", "prop1", "bound_audit", "credibility", "robustness", "purify", "trace")

_num = (int, float)
_SWEEPABLE = {("purifier", "lambda"), ("purifier", "t_star"), ("classifier", "c")}

# section -> key -> (accepted types, default)
SCHEMA = {
    "experiment": {
        "kind": (str, "flip_probability"),
        "master_seed": (int, 0),
        "trials": (int, 100_000),
        "threads": (int, 1),
        "output": (str, ""),
        "mode": (str, "endpoint"),
        "n_eval": (int, 512),
        "defense": (str, "coup"),
        "repetitions": (int, 2000),
        "n_samples": (int, 10_000),
        "delta_x": (_num, 0.05),
        "c_quantile": (_num, 1.0),
        "y_true": (int, 1),
        "y_adv": (int, 0),
    },
    "schedule": {"beta_min": (_num, 0.1), "beta_max": (_num, 20.0)},
    "mixture": {
        "components": (list, [
            {"weight": 0.5, "mean": [-0.5], "variance": 1.0},
            {"weight": 0.5, "mean": [0.5], "variance": 1.0},
        ]),
    },
    "classifier": {
        "kind": (str, "noisy_sine"),
        "c": (_num + (list,), 0.0),
        "weights": (list, []),
        "biases": (list, []),
        "n_train": (int, 2000),
        "epochs": (int, 200),
        "learning_rate": (_num, 0.5),
    },
    "purifier": {
        "lambda": (_num + (list,), 1.0),
        "t_star": (_num + (list,), 0.1),
        "step": (_num, 1e-3),
        "noise": (bool, True),
        "x0": (list, [0.2]),
    },
    "attack": {
        "norm": (str, "linf"),
        "epsilon": (_num, 0.5),
        "step_size": (_num, 0.125),
        "iters": (int, 20),
        "eot_samples": (int, 8),
        "grad_mode": (str, "adjoint"),
        "random_start": (bool, True),
        "eot_noise": (str, "fresh"),
    },
}


def _check_type(section, key, value, types):
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"[{section}] {key}: expected {types}, got a boolean")
    if not isinstance(value, types):
        raise ConfigError(f"[{section}] {key}: expected {types}, got {type(value).__name__}")
    if isinstance(value, list) and (section, key) in _SWEEPABLE:
        if not all(isinstance(v, _num) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"[{section}] {key}: sweep lists must hold numbers only")


@dataclass
class ExperimentConfig:
    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        data = {section: {k: copy.deepcopy(d) for k, (_, d) in keys.items()} for section, keys in SCHEMA.items()}
        for section, values in raw.items():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            if not isinstance(values, dict):
                raise ConfigError(f"[{section}] must be a table")
            for key, value in values.items():
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key [{section}] {key}")
                _check_type(section, key, value, SCHEMA[section][key][0])
                data[section][key] = value
        cfg = cls(data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        return cls.from_dict(raw)

    def __getitem__(self, section):
        return self.data[section]

    def validate(self):
        exp = self.data["experiment"]
        if exp["kind"] not in EXPERIMENTS:
            raise ConfigError(f"experiment kind must be one of {EXPERIMENTS}")
        if exp["trials"] < 1 or exp["threads"] < 1 or exp["n_eval"] < 1 or exp["repetitions"] < 2:
            raise ConfigError("trials, threads, n_eval must be >= 1 and repetitions >= 2")
        if exp["master_seed"] < 0:
            raise ConfigError("master_seed must be non-negative")
        if exp["mode"] not in ("endpoint", "first-passage"):
            raise ConfigError("mode must be 'endpoint' or 'first-passage'")
        if exp["defense"] not in ("none", "reverse_only", "coup", "diffpure"):
            raise ConfigError("defense must be none, reverse_only, coup or diffpure")
        if self.data["classifier"]["kind"] not in ("noisy_sine", "bayes", "logistic", "logistic_fit"):
            raise ConfigError("classifier kind must be noisy_sine, bayes, logistic or logistic_fit")
        for lam in self.lambdas:
            if lam < 0:
                raise ConfigError("lambda must be non-negative")
        for t in self.t_stars:
            if not 0.0 <= t <= 1.0:
                raise ConfigError("t_star must lie in [0, 1]")
        for c in self.cs:
            if c < 0:
                raise ConfigError("c must be non-negative")
        if not self.data["purifier"]["step"] > 0:
            raise ConfigError("step must be positive")
        try:
            self.schedule()
            self.mixture()
            AttackSpec(**self.data["attack"])
        except CouplabError as exc:
            raise ConfigError(str(exc)) from exc
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed mixture or attack section: {exc}") from exc

    @staticmethod
    def _as_list(v):
        return [float(x) for x in v] if isinstance(v, list) else [float(v)]

    @property
    def lambdas(self):
        return self._as_list(self.data["purifier"]["lambda"])

    @property
    def t_stars(self):
        return self._as_list(self.data["purifier"]["t_star"])

    @property
    def cs(self):
        return self._as_list(self.data["classifier"]["c"])

    def digest(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def schedule(self) -> Schedule:
        s = self.data["schedule"]
        return Schedule(float(s["beta_min"]), float(s["beta_max"]))

    def mixture(self) -> GaussianMixture:
        comps = self.data["mixture"]["components"]
        if not comps:
            raise ConfigError("mixture needs at least one component")
        return GaussianMixture.from_components(
            [(float(c["weight"]), np.asarray(c["mean"], dtype=float), float(c["variance"])) for c in comps]
        )

    def attack(self) -> AttackSpec:
        return AttackSpec(**self.data["attack"])

    def classifier(self, c=None):
        spec = self.data["classifier"]
        kind = spec["kind"]
        gmm = self.mixture()
        if kind == "bayes":
            return BayesClassifier.from_mixture(gmm)
        if kind == "noisy_sine":
            if gmm.dim != 1 or gmm.n_components != 2:
                raise ConfigError("noisy_sine needs a 1-D two-component mixture")
            if c is None:
                c = self.cs[0] if self.cs else 0.0
            return NoisySineClassifier(
                p0=(gmm.means[0, 0], gmm.variances[0]), p1=(gmm.means[1, 0], gmm.variances[1]), c=c
            )
        if kind == "logistic":
            if not spec["weights"]:
                raise ConfigError("logistic classifier needs weights and biases")
            return LogisticClassifier(np.asarray(spec["weights"], float), np.asarray(spec["biases"], float))
        seed = self.data["experiment"]["master_seed"]
        x, y = sample(gmm, spec["n_train"], NoiseDriver(seed, (1 << 31) + 7))
        return fit_logistic(x, y, spec["epochs"], spec["learning_rate"], n_classes=gmm.n_components)
