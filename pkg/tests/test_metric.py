"""Monte-Carlo rho estimation: identities, consistency, concurrency."""

import numpy as np
import pytest

from imitation_privacy import (
    SCALED_L2,
    SQUARED,
    FunctionImitation,
    GaussianTestSampler,
    Learner,
    LinearTaskSampler,
    Module,
    TaskDegenerateError,
    check_eps_delta,
    empirical_rho,
    estimate_rho,
    fit_module,
    self_imitation,
    zero_imitation,
)
from imitation_privacy.attacks import ApiView, rotation_attack
from imitation_privacy.core import linear_fn
from imitation_privacy.learners import fit_ols
from imitation_privacy.metric import FixedTaskSampler
from imitation_privacy.rng import child_rng

from oracles import population_squared_rho_linear


def _module(seed=0, n=40, p=2):
    X = child_rng(seed, "metric-data").normal(size=(n, p))
    return Module(Learner.make("ols"), X)


class TestEstimateRho:
    def test_self_imitation_is_exactly_zero(self):
        module = _module()
        sampler = LinearTaskSampler(module.data, noise_sigma=0.2)
        for loss in (SCALED_L2, SQUARED):
            est = estimate_rho(module, self_imitation(module), sampler,
                               GaussianTestSampler(2), loss,
                               n_tasks=6, n_test=16, seed=3)
            assert est.rho_hat == 0.0
            assert np.all(est.per_task_losses == 0.0)

    def test_zero_imitation_scores_one_with_zero_variance(self):
        module = _module()
        sampler = LinearTaskSampler(module.data, noise_sigma=0.2)
        est = estimate_rho(module, zero_imitation(2), sampler,
                           GaussianTestSampler(2), SCALED_L2,
                           n_tasks=8, n_test=16, seed=4)
        assert est.rho_hat == 1.0
        assert est.std_error == 0.0
        assert np.all(est.per_task_losses == 1.0)

    def test_degenerate_task_raises_with_trial_info(self):
        module = _module()
        sampler = FixedTaskSampler((np.zeros(40),))
        with pytest.raises(TaskDegenerateError) as exc:
            estimate_rho(module, zero_imitation(2), sampler,
                         GaussianTestSampler(2), SCALED_L2,
                         n_tasks=2, n_test=8, seed=5)
        assert exc.value.trial == 0 and exc.value.seed == 5

    def test_skipped_points_are_counted(self):
        module = _module(seed=1, n=10, p=2)

        class GridSampler:
            def sample(self, n_test, rng):
                grid = rng.normal(size=(n_test, 2))
                grid[0] = 0.0  # module output is exactly 0 here
                return grid

        sampler = LinearTaskSampler(module.data, noise_sigma=0.0)
        est = estimate_rho(module, zero_imitation(2), sampler, GridSampler(),
                           SCALED_L2, n_tasks=3, n_test=10, seed=6)
        assert est.skipped_fraction == pytest.approx(0.1)
        assert est.rho_hat == 1.0

    def test_consistency_toward_quadrature_oracle(self):
        # imitation = module coefficients shifted by a fixed delta, so the
        # squared-loss rho has the closed form ||delta||^2
        module = _module(seed=2, n=60, p=2)
        delta = np.array([0.3, -0.2])

        def factory(y):
            beta = fit_ols(module.data, y).coefficients
            return linear_fn(beta + delta)

        imitation = FunctionImitation("offset", factory)
        sampler = LinearTaskSampler(module.data, noise_sigma=0.1)
        rho_ref = population_squared_rho_linear(np.zeros(2), delta)
        assert rho_ref == pytest.approx(float(delta @ delta), rel=1e-10)
        errors = []
        for n_test in (50, 100, 200):
            est = estimate_rho(module, imitation, sampler,
                               GaussianTestSampler(2), SQUARED,
                               n_tasks=40, n_test=n_test, seed=9)
            errors.append(abs(est.rho_hat - rho_ref))
        assert errors[2] < errors[1] < errors[0]

    def test_parallel_serial_equivalence(self):
        module = _module(seed=3)
        sampler = LinearTaskSampler(module.data, noise_sigma=0.3)

        def factory(y):
            beta = fit_ols(module.data, y).coefficients
            return linear_fn(beta + np.array([0.1, -0.05]))

        imitation = FunctionImitation("offset", factory)
        kwargs = dict(task_sampler=sampler, test_sampler=GaussianTestSampler(2),
                      loss_fn=SCALED_L2, n_tasks=12, n_test=20, seed=11)
        est1 = estimate_rho(module, imitation, jobs=1, **kwargs)
        est4 = estimate_rho(module, imitation, jobs=4, **kwargs)
        assert np.array_equal(est1.per_task_losses, est4.per_task_losses)
        assert est1.rho_hat == est4.rho_hat
        assert np.ptp(est1.per_task_losses) > 0  # the check has teeth

    def test_rho_above_one_reported_as_is(self):
        module = _module(seed=4, n=30, p=1)

        def factory(y):
            beta = fit_ols(module.data, y).coefficients
            return linear_fn(3.0 * beta)

        sampler = LinearTaskSampler(module.data, noise_sigma=0.0)
        est = estimate_rho(module, FunctionImitation("triple", factory), sampler,
                           GaussianTestSampler(1), SCALED_L2,
                           n_tasks=4, n_test=16, seed=12)
        assert est.rho_hat == pytest.approx(4.0, abs=1e-8)  # (3b-b)^2/b^2

    def test_csv_row_format(self):
        module = _module(seed=5)
        sampler = LinearTaskSampler(module.data, noise_sigma=0.1)
        est = estimate_rho(module, zero_imitation(2), sampler,
                           GaussianTestSampler(2), SCALED_L2,
                           n_tasks=3, n_test=5, seed=13, label="zero")
        row = est.csv_row("exp-1")
        parts = row.split(",")
        assert parts[0] == "exp-1" and parts[1] == "zero"
        assert float(parts[2]) == 1.0
        assert int(parts[4]) == 3 and int(parts[5]) == 5


class TestEmpiricalRho:
    def test_identical_imitation_zero(self):
        module = _module(seed=6)
        tasks = [child_rng(6, "task", i).normal(size=40) for i in range(3)]
        est = empirical_rho(module, self_imitation(module), tasks, SCALED_L2)
        assert est.rho_hat == 0.0

    def test_zero_imitation_one(self):
        module = _module(seed=7)
        tasks = [child_rng(7, "task", i).normal(size=40) for i in range(3)]
        est = empirical_rho(module, zero_imitation(2), tasks, SCALED_L2)
        assert est.rho_hat == 1.0

    def test_closed_form_offset_instance(self):
        # 3-row instance computed by hand: losses (x'd)^2/(x'b)^2 per row
        X = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 2.0]])
        beta = np.array([1.0, 1.0])
        delta = np.array([0.5, -0.25])
        module = Module(Learner.make("ols"), X)
        imitation = FunctionImitation("offset", lambda y: linear_fn(beta + delta))
        est = empirical_rho(module, imitation, [X @ beta], SCALED_L2)
        expected = (0.25 + 0.015625 + 0.0625) / 3.0  # = 0.109375
        assert est.rho_hat == pytest.approx(expected, abs=1e-12)


class TestEpsDelta:
    def _setup(self, seed=8):
        module = _module(seed=seed)
        sampler = LinearTaskSampler(module.data, noise_sigma=0.2)
        return module, sampler, GaussianTestSampler(2)

    def test_exact_copy_breaches_any_delta_below_one(self):
        module, tasks, tests = self._setup()
        verdict = check_eps_delta(module, [self_imitation(module)], eps=0.01,
                                  delta=0.5, task_sampler=tasks,
                                  test_sampler=tests, loss_fn=SCALED_L2,
                                  n_tasks=4, n_test=8, n_random_trials=5, seed=2)
        assert verdict.verdict == "breached"
        assert verdict.breach_probability == 1.0

    def test_zero_imitation_is_private_at_half(self):
        module, tasks, tests = self._setup()
        verdict = check_eps_delta(module, [zero_imitation(2)], eps=0.5,
                                  delta=0.1, task_sampler=tasks,
                                  test_sampler=tests, loss_fn=SCALED_L2,
                                  n_tasks=4, n_test=8, n_random_trials=5, seed=3)
        assert verdict.verdict == "private"
        assert verdict.breach_probability == 0.0

    def test_rotation_family_breaches(self):
        n, p = 20000, 3
        X = child_rng(9, "eps-data").normal(size=(n, p))
        module = Module(Learner.make("ols"), X)
        api = ApiView(module, "fitted")
        imitation, _, _ = rotation_attack(api, n, p, sigma=0.1, seed=9)
        sampler = LinearTaskSampler(module.data, noise_sigma=0.1)
        verdict = check_eps_delta(module, [imitation], eps=0.05, delta=0.2,
                                  task_sampler=sampler,
                                  test_sampler=GaussianTestSampler(p),
                                  loss_fn=SQUARED, n_tasks=6, n_test=16,
                                  n_random_trials=4, seed=10)
        assert verdict.verdict == "breached"
        assert all(e["best_imitation"] == "covariance-rotation"
                   for e in verdict.evidence)

    def test_empty_family_rejected(self):
        module, tasks, tests = self._setup()
        with pytest.raises(ValueError):
            check_eps_delta(module, [], eps=0.1, delta=0.1, task_sampler=tasks,
                            test_sampler=tests, loss_fn=SCALED_L2,
                            n_tasks=2, n_test=4, n_random_trials=2, seed=1)

    def test_eps_delta_range_checked(self):
        module, tasks, tests = self._setup()
        with pytest.raises(ValueError):
            check_eps_delta(module, [zero_imitation(2)], eps=1.5, delta=0.1,
                            task_sampler=tasks, test_sampler=tests,
                            loss_fn=SCALED_L2, n_tasks=2, n_test=4,
                            n_random_trials=2, seed=1)
