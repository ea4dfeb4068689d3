from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import central_grad
from couplab.attacks import (
    AttackSpec,
    bpda_grad,
    cross_entropy,
    eot_grad,
    pathwise_grad,
    pgd,
    project,
)
from couplab.classifiers import BayesClassifier, LogisticClassifier
from couplab.errors import DomainError
from couplab.mixture import GaussianMixture
from couplab.purify import Defense, reverse_purify
from couplab.sde import NoiseDriver, ReplayNoise, alpha_of

TOY = GaussianMixture.symmetric_pair(0.5, 1.0)
BAYES = BayesClassifier.from_mixture(TOY)
BLOBS = GaussianMixture([0.5, 0.5], [[-2.0, 0.0], [2.0, 0.0]], [0.25, 0.25])
TILTED = LogisticClassifier([[-1.0, -1.0], [1.0, 1.0]], [0.0, 0.0])


def _ce(defense, x, y, increments):
    """Cross-entropy of the pipeline with the noise path frozen."""
    out = defense.purify(x, ReplayNoise(increments)).x_out
    return float(cross_entropy(defense.classifier, out, y))


def _cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestProject:
    def test_l2_radial(self):
        out = project([3.0, 4.0], [0.0, 0.0], AttackSpec(norm="l2", epsilon=1.0))
        np.testing.assert_allclose(out, [0.6, 0.8], rtol=1e-15)

    def test_inside_unchanged(self):
        for norm in ("linf", "l2"):
            np.testing.assert_array_equal(project([0.1, -0.2], [0.0, 0.0], AttackSpec(norm=norm, epsilon=1.0)), [0.1, -0.2])

    def test_zero_budget(self):
        x0 = np.array([0.3, -1.0])
        for norm in ("linf", "l2"):
            np.testing.assert_array_equal(project([5.0, 5.0], x0, AttackSpec(norm=norm, epsilon=0.0)), x0)

    def test_linf_clip(self):
        np.testing.assert_array_equal(project([2.0, -0.1, -3.0], [0.0, 0.0, 0.0], AttackSpec(epsilon=0.5)), [0.5, -0.1, -0.5])


class TestSpec:
    @pytest.mark.parametrize("kw", [
        {"norm": "l1"}, {"epsilon": -0.1}, {"step_size": 0.0}, {"eot_samples": 0},
        {"grad_mode": "fd"}, {"eot_noise": "mixed"}, {"iters": -1},
    ])
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            AttackSpec(**kw)

    def test_zero_iters_allows_zero_step(self):
        AttackSpec(iters=0, step_size=0.0)


class TestBpda:
    def test_identity_purifier_is_exact(self):
        x = np.array([0.3, -0.4])
        d = Defense("coup", TILTED, BLOBS, t_star=0.0)
        _, g = pathwise_grad(d, x, 1, NoiseDriver(0), grad_mode="bpda")
        fd = central_grad(lambda y: float(cross_entropy(TILTED, y, 1)), x, h=1e-6)
        np.testing.assert_allclose(g, fd, rtol=1e-7)

    def test_logistic_structure(self):
        rng = np.random.default_rng(0)
        clf = LogisticClassifier(rng.standard_normal((3, 2)), rng.standard_normal(3))
        for _ in range(20):
            x, y = rng.standard_normal(2), int(rng.integers(3))
            p = clf.probs(x)
            expected = (p - np.eye(3)[y]) @ clf.weights
            np.testing.assert_allclose(bpda_grad(clf, x, y), expected, rtol=1e-10, atol=1e-14)
            fd = central_grad(lambda z: float(cross_entropy(clf, z, y)), x, h=1e-6)
            np.testing.assert_allclose(bpda_grad(clf, x, y), fd, rtol=1e-6, atol=1e-9)

    def test_saturated_region_is_zero(self):
        clf = LogisticClassifier([[-40.0], [40.0]], [0.0, 0.0])
        np.testing.assert_array_equal(bpda_grad(clf, np.array([3.0]), 1), 0.0)


class TestEot:
    def test_single_sample_equals_pathwise(self):
        d = Defense("coup", BAYES, TOY)
        spec = AttackSpec(eot_samples=1)
        g = eot_grad(d, np.array([0.2]), 1, spec, NoiseDriver(3))
        _, ref = pathwise_grad(d, np.array([0.2]), 1, NoiseDriver(3))
        np.testing.assert_array_equal(g, ref)

    def test_deterministic_pipeline(self):
        d = Defense("none", TILTED)
        x = np.array([0.3, 0.1])
        a = eot_grad(d, x, 1, AttackSpec(eot_samples=1), NoiseDriver(0))
        b = eot_grad(d, x, 1, AttackSpec(eot_samples=16), NoiseDriver(0))
        np.testing.assert_array_equal(a, b)

    def test_variance_shrinks_like_one_over_n(self):
        d = Defense("coup", BAYES, TOY)

        def spread(n):
            # batch rows draw independent noise, so 100 rows are 100 repetitions
            g = eot_grad(d, np.full((100, 1), 0.2), np.ones(100, dtype=int), AttackSpec(eot_samples=n), NoiseDriver(100 + n))
            return np.var(g[:, 0], ddof=1)

        ratio = spread(1) / spread(16)
        # each variance has relative SE ~ sqrt(2/99); a factor of two either way is > 4 SE
        assert 8.0 < ratio < 32.0


class TestPathwise:
    @pytest.mark.parametrize("kind", ["coup", "reverse_only", "diffpure"])
    def test_adjoint_matches_frozen_fd(self, kind):
        d = Defense(kind, TILTED, BLOBS, lam=1.0)
        x = np.array([0.6, 0.2])
        driver = NoiseDriver(5)
        _, g = pathwise_grad(d, x, 1, driver)
        if kind == "diffpure":
            # forward leg is sqrt(alpha) x + noise: freeze that noise as well
            res = d.purify(x, driver, record=True)
            root = np.sqrt(alpha_of(d.schedule, d.t_star))
            fwd = res.info["x_forward"] - root * x

            def f(y):
                replay = ReplayNoise(res.trajectory.increments)
                out = reverse_purify(root * y + fwd, BLOBS, d.schedule, d.spec(), driver=replay).x_out
                return float(cross_entropy(TILTED, out, 1))
        else:
            inc = d.purify(x, driver, record=True).trajectory.increments

            def f(y):
                return _ce(d, y, 1, inc)
        fd = central_grad(f, x, h=1e-5)
        np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-8)

    def test_pgd_direction_matches_fd_ascent(self):
        d = Defense("coup", TILTED, BLOBS, lam=1.0)
        rng = np.random.default_rng(4)
        for k in range(10):
            x = rng.uniform(0.3, 1.5, 2)
            driver = NoiseDriver(k)
            g = eot_grad(d, x, 1, AttackSpec(eot_samples=1), driver)
            inc = d.purify(x, driver, record=True).trajectory.increments
            fd = central_grad(lambda y: _ce(d, y, 1, inc), x, h=1e-5)
            assert _cosine(g, fd) > 0.99


class TestPgd:
    def test_classifier_only_bayes(self):
        res = pgd(Defense("none", BAYES), np.array([0.2]), 1, AttackSpec(epsilon=0.3, step_size=0.1, iters=10))
        assert res.x_adv[0] == pytest.approx(-0.1, abs=1e-12)
        assert bool(res.success)

    @pytest.mark.parametrize("spec", [AttackSpec(iters=0), AttackSpec(epsilon=0.0, iters=5)])
    def test_no_movement(self, spec):
        x = np.array([[0.2], [-0.3]])
        res = pgd(Defense("none", BAYES), x, [1, 1], spec)
        np.testing.assert_array_equal(res.x_adv, x)
        assert res.success.tolist() == [False, True]

    def test_best_iterate_not_worse_than_start(self):
        d = Defense("coup", TILTED, BLOBS)
        x = np.random.default_rng(1).uniform(-1, 1, (16, 2))
        y = TILTED.argmax(x)
        res = pgd(d, x, y, AttackSpec(epsilon=0.5, step_size=0.2, iters=4, eot_samples=2), seed=2)
        best = res.loss_history.max(axis=0)
        assert np.all(best >= res.loss_history[0])

    def test_deterministic(self):
        d = Defense("coup", TILTED, BLOBS)
        x = np.array([[0.4, 0.1], [-0.2, 0.3]])
        spec = AttackSpec(epsilon=0.5, iters=3, eot_samples=2, random_start=True)
        a, b = pgd(d, x, [1, 0], spec, seed=9), pgd(d, x, [1, 0], spec, seed=9)
        np.testing.assert_array_equal(a.x_adv, b.x_adv)
        np.testing.assert_array_equal(a.loss_history, b.loss_history)

    def test_bpda_mode_runs(self):
        d = Defense("coup", TILTED, BLOBS)
        res = pgd(d, np.array([0.3, 0.3]), 1, AttackSpec(epsilon=1.0, step_size=0.25, iters=6, grad_mode="bpda"))
        assert np.max(np.abs(res.x_adv - 0.3)) <= 1.0 + 1e-9

    @settings(max_examples=40, deadline=None)
    @given(
        norm=st.sampled_from(["linf", "l2"]),
        eps=st.floats(0, 2),
        step=st.floats(0.01, 3),
        iters=st.integers(0, 4),
        start=st.booleans(),
        seed=st.integers(0, 2**31),
    )
    def test_budget_invariant(self, norm, eps, step, iters, start, seed):
        spec = AttackSpec(norm=norm, epsilon=eps, step_size=step, iters=iters, random_start=start)
        x = np.random.default_rng(seed).uniform(-2, 2, (3, 2))
        res = pgd(Defense("none", TILTED), x, [0, 1, 1], spec, seed=seed)
        dist = np.abs(res.x_adv - x).max(-1) if norm == "linf" else np.linalg.norm(res.x_adv - x, axis=-1)
        assert np.all(dist <= eps + 1e-9)
