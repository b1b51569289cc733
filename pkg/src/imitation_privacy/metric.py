"""Monte-Carlo estimation of the imitation-privacy value rho.

rho is the expected loss between the imitation's and the module's induced
prediction functions, averaged over task labels (outer expectation) and
future data points (inner expectation).  A value of 0 means the imitation is
perfect; under scaled-L2 loss the trivial zero imitation scores exactly 1.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    EPS_DENOM,
    LossFn,
    Module,
    PredictionFn,
    as_data_matrix,
    as_label_vector,
    constant_fn,
    evaluate,
    fit_module,
    pair_losses,
)
from .rng import child_rng


class TaskDegenerateError(RuntimeError):
    """Every test point of some task was skipped (module output ~ 0)."""

    def __init__(self, trial: int, seed: int):
        super().__init__(
            f"all test points skipped for task trial {trial} (seed {seed}): "
            f"module output is below {EPS_DENOM} everywhere"
        )
        self.trial = trial
        self.seed = seed


# ---------------------------------------------------------------------------
# Samplers


@dataclass(frozen=True)
class LinearTaskSampler:
    """Tasks y = design @ beta + sigma * eta with beta redrawn per trial.

    ``design`` is the row set labels are generated on; by default the
    module's own observed rows, so the task actually depends on the module's
    private features.
    """

    design: np.ndarray
    beta_scale: float = 1.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "design", as_data_matrix(self.design, min_cols=0))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        n, p = self.design.shape
        beta = rng.normal(0.0, self.beta_scale, size=p)
        y = self.design @ beta
        if self.noise_sigma > 0:
            y = y + rng.normal(0.0, self.noise_sigma, size=n)
        return y


@dataclass(frozen=True)
class FunctionFamilyTaskSampler:
    """Tasks y = f(design rows) + sigma * eta with f drawn from a family."""

    design: np.ndarray
    make_fn: Callable[[float], Callable[[np.ndarray], np.ndarray]]
    param_low: float
    param_high: float
    noise_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "design", as_data_matrix(self.design, min_cols=0))

    def sample_param(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.param_low, self.param_high))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        f = self.make_fn(self.sample_param(rng))
        y = np.asarray(f(self.design), dtype=float)
        if self.noise_sigma > 0:
            y = y + rng.normal(0.0, self.noise_sigma, size=y.size)
        return y


@dataclass(frozen=True)
class FixedTaskSampler:
    """Draws uniformly from a fixed collection of label vectors."""

    labels: tuple

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        idx = int(rng.integers(0, len(self.labels)))
        return np.asarray(self.labels[idx], dtype=float)


@dataclass(frozen=True)
class GaussianTestSampler:
    """Future data x~ drawn i.i.d. Gaussian with the given covariance."""

    p: int
    covariance: Optional[np.ndarray] = None

    def sample(self, n_test: int, rng: np.random.Generator) -> np.ndarray:
        if self.covariance is None:
            return rng.normal(size=(n_test, self.p))
        L = np.linalg.cholesky(np.asarray(self.covariance, dtype=float))
        return rng.normal(size=(n_test, self.p)) @ L.T


# ---------------------------------------------------------------------------
# Imitation adapters


@dataclass(frozen=True)
class FunctionImitation:
    """Minimal imitation: a per-task factory mapping y to a prediction fn."""

    name: str
    factory: Callable[[np.ndarray], PredictionFn]

    def imitate(self, y: np.ndarray) -> PredictionFn:
        return self.factory(np.asarray(y, dtype=float))


def zero_imitation(p: int) -> FunctionImitation:
    """The trivial imitation that outputs 0 for every input and task."""
    return FunctionImitation("zero", lambda y: constant_fn(0.0, p, ("zero-imitation",)))


def self_imitation(module: Module, fit_seed: int = 0) -> FunctionImitation:
    """Diagnostic imitation with full access to the module (rho must be 0)."""
    return FunctionImitation("self", lambda y: fit_module(module, y, seed=fit_seed))


# ---------------------------------------------------------------------------
# Estimates


@dataclass
class PrivacyEstimate:
    """Monte-Carlo estimate of rho with trial metadata.

    ``rho_hat`` is the mean of per-task losses; ``skipped_fraction`` is the
    share of test points excluded by the scaled-L2 degenerate-denominator
    rule.  Values above 1 are reported as-is.
    """

    rho_hat: float
    std_error: float
    n_tasks: int
    n_test: int
    skipped_fraction: float
    per_task_losses: np.ndarray
    label: str = ""

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "rho_hat": self.rho_hat,
            "std_error": self.std_error,
            "n_tasks": self.n_tasks,
            "n_test": self.n_test,
            "skipped_fraction": self.skipped_fraction,
            "per_task_losses": self.per_task_losses.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_row(self, experiment_id: str) -> str:
        return ",".join(
            [
                experiment_id,
                self.label,
                repr(float(self.rho_hat)),
                repr(float(self.std_error)),
                str(self.n_tasks),
                str(self.n_test),
                repr(float(self.skipped_fraction)),
            ]
        )


CSV_HEADER = "experiment_id,label,rho_hat,std_error,n_tasks,n_test,skipped_fraction"


def _summarize(per_task: np.ndarray, n_test: int, skipped: int, total: int,
               label: str) -> PrivacyEstimate:
    rho = float(np.mean(per_task))
    se = float(np.std(per_task, ddof=1) / np.sqrt(per_task.size)) if per_task.size > 1 else 0.0
    return PrivacyEstimate(
        rho_hat=rho,
        std_error=se,
        n_tasks=per_task.size,
        n_test=n_test,
        skipped_fraction=skipped / total if total else 0.0,
        per_task_losses=per_task,
        label=label,
    )


def estimate_rho(module: Module, imitation, task_sampler, test_sampler,
                 loss_fn: LossFn, n_tasks: int, n_test: int, seed: int,
                 jobs: int = 1, label: str = "") -> PrivacyEstimate:
    """Monte-Carlo rho: average over task draws of the mean test-point loss.

    Each task trial owns the RNG streams keyed by (seed, "task", t) and
    (seed, "test", t), so results are bit-identical whether trials run
    serially or across workers.
    """
    if n_tasks < 1 or n_test < 1:
        raise ValueError("n_tasks and n_test must be positive")

    def one_trial(t: int):
        y = task_sampler.sample(child_rng(seed, "task", t))
        f_mod = fit_module(module, y, seed=0)
        f_imi = imitation.imitate(y)
        x_test = test_sampler.sample(n_test, child_rng(seed, "test", t))
        a = evaluate(f_imi, x_test)
        b = evaluate(f_mod, x_test)
        losses, keep = pair_losses(loss_fn, a, b)
        kept = int(keep.sum())
        if kept == 0:
            raise TaskDegenerateError(trial=t, seed=seed)
        return float(losses[keep].mean()), n_test - kept

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one_trial, range(n_tasks)))
    else:
        results = [one_trial(t) for t in range(n_tasks)]

    per_task = np.array([r[0] for r in results])
    skipped = sum(r[1] for r in results)
    return _summarize(per_task, n_test, skipped, n_tasks * n_test, label)


def empirical_rho(module: Module, imitation, tasks: Sequence, loss_fn: LossFn,
                  label: str = "") -> PrivacyEstimate:
    """rho with the inner expectation replaced by the average over the
    module's own training rows."""
    tasks = [as_label_vector(t, n_rows=module.n_rows) for t in tasks]
    if not tasks:
        raise ValueError("empirical_rho needs at least one task")
    X = module.data
    per_task = []
    skipped = 0
    for t, y in enumerate(tasks):
        f_mod = fit_module(module, y, seed=0)
        f_imi = imitation.imitate(y)
        losses, keep = pair_losses(loss_fn, evaluate(f_imi, X), evaluate(f_mod, X))
        kept = int(keep.sum())
        if kept == 0:
            raise TaskDegenerateError(trial=t, seed=0)
        per_task.append(float(losses[keep].mean()))
        skipped += X.shape[0] - kept
    return _summarize(np.array(per_task), X.shape[0], skipped,
                      len(tasks) * X.shape[0], label)


@dataclass
class EpsDeltaVerdict:
    """Outcome of an (eps, delta)-privacy check against an imitation class."""

    verdict: str  # "private" | "breached"
    eps: float
    delta: float
    breach_probability: float
    evidence: list  # per trial: {"trial", "best_imitation", "rho"}

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "eps": self.eps,
            "delta": self.delta,
            "breach_probability": self.breach_probability,
            "evidence": self.evidence,
        }


def check_eps_delta(module: Module, imitation_family: Sequence, eps: float,
                    delta: float, task_sampler, test_sampler, loss_fn: LossFn,
                    n_tasks: int, n_test: int, n_random_trials: int,
                    seed: int) -> EpsDeltaVerdict:
    """Estimate Pr[inf over the family of rho <= eps] over randomized runs.

    The module is declared breached when that probability exceeds delta.
    Evidence records the minimizing imitation of every trial.
    """
    if not 0.0 <= eps <= 1.0 or not 0.0 <= delta <= 1.0:
        raise ValueError("eps and delta must lie in [0, 1]")
    family = list(imitation_family)
    if not family:
        raise ValueError("imitation family must be nonempty")
    hits = 0
    evidence = []
    for r in range(n_random_trials):
        best_rho = np.inf
        best_name = None
        for k, imi in enumerate(family):
            est = estimate_rho(
                module, imi, task_sampler, test_sampler, loss_fn,
                n_tasks=n_tasks, n_test=n_test,
                seed=int(child_rng(seed, "eps-delta", r).integers(0, 2**63 - 1)),
            )
            if est.rho_hat < best_rho:
                best_rho = est.rho_hat
                best_name = getattr(imi, "name", f"imitation-{k}")
        if best_rho <= eps:
            hits += 1
        evidence.append({"trial": r, "best_imitation": best_name, "rho": best_rho})
    prob = hits / n_random_trials
    return EpsDeltaVerdict(
        verdict="breached" if prob > delta else "private",
        eps=eps,
        delta=delta,
        breach_probability=prob,
        evidence=evidence,
    )
