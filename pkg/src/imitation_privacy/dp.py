"""Interplay between local differential privacy and imitation privacy.

A Laplace-privatized data release satisfies local DP at any noise level, yet
a bias-corrected regression on the released data imitates the module with
vanishing error as n grows.  Conversely, releasing one exact feature column
destroys DP while barely denting imitation privacy.  The two experiments
together witness that neither notion implies the other.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Learner, Module, as_data_matrix, as_label_vector, linear_fn
from .learners import OlsModel, fit_ols
from .metric import (
    FunctionImitation,
    GaussianTestSampler,
    LinearTaskSampler,
    PrivacyEstimate,
    estimate_rho,
    zero_imitation,
)
from .rng import child_rng


class BoundViolationError(ValueError):
    def __init__(self, offenders):
        preview = ", ".join(f"({i},{j})" for i, j in offenders[:8])
        more = "" if len(offenders) <= 8 else f" and {len(offenders) - 8} more"
        super().__init__(f"data entries exceed the declared bound at {preview}{more}")
        self.offenders = offenders


class NotIdentifiableError(RuntimeError):
    """Corrected Gram matrix is not positive definite; needs larger n."""


@dataclass(frozen=True)
class LaplaceParams:
    """Per-entry Laplace mechanism for data supported on [-b, b].

    scale = 2b/alpha gives alpha-local differential privacy; the injected
    per-entry noise variance is tau^2 = 2 * scale^2 = 8 b^2 / alpha^2.
    """

    bound: float
    alpha: float

    def __post_init__(self):
        if self.bound <= 0 or self.alpha <= 0:
            raise ValueError("bound and alpha must be positive")

    @property
    def scale(self) -> float:
        return 2.0 * self.bound / self.alpha

    @property
    def tau2(self) -> float:
        return 2.0 * self.scale**2


@dataclass(frozen=True)
class PrivatizedData:
    """A noisy release X + Laplace(scale) of the same shape, reproducible
    under its seed."""

    values: np.ndarray
    params: LaplaceParams
    seed: int


def laplace_mechanism(X, params: LaplaceParams, seed: int) -> PrivatizedData:
    """Release X with i.i.d. per-entry Laplace noise of scale 2b/alpha."""
    X = as_data_matrix(X)
    over = np.argwhere(np.abs(X) > params.bound)
    if over.size:
        raise BoundViolationError([(int(i), int(j)) for i, j in over])
    rng = child_rng(seed, "laplace")
    noise = rng.laplace(0.0, params.scale, size=X.shape)
    return PrivatizedData(values=X + noise, params=params, seed=seed)


def bias_corrected_fit(privatized: PrivatizedData, y) -> OlsModel:
    """Regression on privatized data with the noise variance subtracted from
    the Gram matrix: solves (X~'X~/n - tau^2 I) beta = X~'y/n.

    Consistent for the clean-data OLS limit; raises when the corrected Gram
    is not yet positive definite.
    """
    X = privatized.values
    n, p = X.shape
    y = as_label_vector(y, n_rows=n)
    gram = X.T @ X / n - privatized.params.tau2 * np.eye(p)
    eigmin = float(np.linalg.eigvalsh(gram)[0])
    if eigmin <= 0:
        raise NotIdentifiableError(
            f"corrected Gram matrix has min eigenvalue {eigmin:.3g} <= 0; "
            "the release is too noisy at this n, use a larger sample"
        )
    beta = np.linalg.solve(gram, X.T @ y / n)
    return OlsModel(coefficients=beta, intercept=None, rank=p, rank_deficient=False)


def bounded_uniform_data(n: int, p: int, bound: float, seed: int) -> np.ndarray:
    """i.i.d. uniform entries on [-bound, bound]."""
    return child_rng(seed, "bounded-uniform").uniform(-bound, bound, size=(n, p))


def dp_breach_experiment(params: LaplaceParams, n_grid: Sequence[int], p: int,
                         loss_fn, n_tasks: int, n_test: int, seed: int,
                         task_beta_scale: float = 1.0,
                         task_noise_sigma: float = 0.1) -> list:
    """DP-satisfied release, imitation-breached: measure rho of the
    bias-corrected imitation at each n and return the (decreasing) curve.

    Task and test draws share RNG keys across the grid so the curve is
    comparable point to point.
    """
    rows = []
    for n in sorted(n_grid):
        X = bounded_uniform_data(n, p, params.bound, child_rng(seed, "data", n).integers(2**31))
        module = Module(Learner.make("ols"), X)
        released = laplace_mechanism(X, params, seed=int(child_rng(seed, "release", n).integers(2**31)))

        def factory(y, _released=released):
            model = bias_corrected_fit(_released, y)
            return linear_fn(model.coefficients, provenance=("bias-corrected",))

        imitation = FunctionImitation("bias-corrected", factory)
        task_sampler = LinearTaskSampler(module.data, beta_scale=task_beta_scale,
                                         noise_sigma=task_noise_sigma)
        test_sampler = GaussianTestSampler(p)
        est = estimate_rho(module, imitation, task_sampler, test_sampler, loss_fn,
                           n_tasks=n_tasks, n_test=n_test, seed=seed,
                           label=f"dp-breach-n{n}")
        rows.append({"n": n, "estimate": est})
    return rows


def partial_release_experiment(bob: Module, released_cols: Sequence[int],
                               loss_fn, n_tasks: int, n_test: int, seed: int,
                               task_beta_scale: float = 1.0,
                               task_noise_sigma: float = 0.1):
    """DP-breached release, imitation-preserved: the best same-learner
    imitation from a proper subset of exactly released columns.

    Returns ``(rho_partial, rho_none)`` estimates, the latter being the
    no-information zero-imitation baseline.
    """
    p = bob.n_features
    released = sorted(set(int(c) for c in released_cols))
    if not released:
        raise ValueError("released column set must be nonempty")
    if len(released) >= p:
        raise ValueError("released column set must be a proper subset")
    if released[0] < 0 or released[-1] >= p:
        raise ValueError(f"released columns out of range for p={p}")
    cols = np.array(released, dtype=int)
    X_released = bob.data[:, cols].copy()

    def factory(y):
        model = fit_ols(X_released, y)
        gamma = model.coefficients

        def batch(M):
            M = np.asarray(M, dtype=float)
            return M[:, cols] @ gamma

        from .core import PredictionFn

        return PredictionFn(batch=batch, input_dim=p, provenance=("partial-release",))

    imitation = FunctionImitation("partial-release", factory)
    task_sampler = LinearTaskSampler(bob.data, beta_scale=task_beta_scale,
                                     noise_sigma=task_noise_sigma)
    test_sampler = GaussianTestSampler(p)
    rho_partial = estimate_rho(bob, imitation, task_sampler, test_sampler, loss_fn,
                               n_tasks=n_tasks, n_test=n_test, seed=seed,
                               label="partial-release")
    rho_none = estimate_rho(bob, zero_imitation(p), task_sampler, test_sampler,
                            loss_fn, n_tasks=n_tasks, n_test=n_test, seed=seed,
                            label="no-information")
    return rho_partial, rho_none
