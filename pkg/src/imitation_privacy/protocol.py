"""Two-party assisted learning: iterative residual exchange and additive
prediction.

Stage I: Alice fits the task label on her features and sends the fitted
residual to Bob, who treats it as his label, fits, and returns his residual;
the parties alternate until a stopping criterion is met.  Stage II: each
party evaluates the sum of its per-round component models on its own side of
a new observation and only the scalars cross the boundary.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    DimensionMismatchError,
    FitFailureError,
    Module,
    PredictionFn,
    array_fingerprint,
    as_label_vector,
    evaluate,
)
from .core import fit_module
from .rng import child_seed

STOP_RULES = ("fixed-k", "relative-improvement")


@dataclass(frozen=True)
class ProtocolConfig:
    max_rounds: int = 30
    stop_rule: str = "relative-improvement"
    theta: float = 1e-6

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.stop_rule not in STOP_RULES:
            raise ValueError(f"stop_rule must be one of {STOP_RULES}")
        if self.theta <= 0:
            raise ValueError("theta must be positive")


@dataclass(frozen=True)
class RoundRecord:
    """One Stage I round: Alice's fit and residual, then Bob's."""

    index: int
    alice_fn: PredictionFn
    alice_residual: np.ndarray
    bob_fn: PredictionFn
    bob_residual: np.ndarray
    mse_after: float


@dataclass
class ProtocolTranscript:
    """Full record of Stage I: per-round component functions and residuals.

    Holds residual vectors and fitted models only; neither party's feature
    matrix is ever copied in.
    """

    rounds: list
    mse_trace: list
    stopped_reason: str
    label_fingerprint: str

    def replay_predictor(self) -> "AssistedPredictor":
        """Rebuild the final predictor from the recorded component models."""
        alice = PartyPredictor(tuple(r.alice_fn for r in self.rounds))
        bob = PartyPredictor(tuple(r.bob_fn for r in self.rounds))
        return AssistedPredictor(alice=alice, bob=bob)

    def to_summary(self) -> list:
        return [
            {
                "round": r.index,
                "alice_residual_norm": float(np.linalg.norm(r.alice_residual)),
                "bob_residual_norm": float(np.linalg.norm(r.bob_residual)),
                "mse": r.mse_after,
            }
            for r in self.rounds
        ]


@dataclass(frozen=True)
class PartyPredictor:
    """Sum of one party's per-round component models."""

    components: tuple

    @property
    def input_dim(self) -> int:
        return self.components[0].input_dim if self.components else 0

    def evaluate_rows(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[0])
        for fn in self.components:
            out += evaluate(fn, X)
        return out

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(1, -1)
        return float(self.evaluate_rows(x)[0])


@dataclass(frozen=True)
class AssistedPredictor:
    """Joint predictor f_A(x_A) + f_B(x_B) evaluated separately per party."""

    alice: PartyPredictor
    bob: PartyPredictor


def _zero_fn(p: int) -> PredictionFn:
    return PredictionFn(batch=lambda M: np.zeros(np.asarray(M).shape[0]),
                        input_dim=p, provenance=("zero-component",))


def run_stage1(alice: Module, bob: Module, y, cfg: ProtocolConfig,
               seed: int = 0):
    """Alternating residual fitting for up to ``cfg.max_rounds`` rounds.

    Returns ``(AssistedPredictor, ProtocolTranscript)``.  Rows of the two
    parties must be collated (equal count, aligned by record).  Alice fits
    first.  Under the relative-improvement rule a final round in which both
    parties fit essentially nothing is dropped from the transcript.
    """
    if alice.n_rows != bob.n_rows:
        raise DimensionMismatchError(
            f"parties are not collated: {alice.n_rows} vs {bob.n_rows} rows"
        )
    y = as_label_vector(y, n_rows=alice.n_rows)
    scale = float(np.linalg.norm(y)) or 1.0

    rounds = []
    mse_trace = []
    target = y
    reason = "max-rounds"
    prev_norm = float(np.linalg.norm(y))
    for i in range(cfg.max_rounds):
        try:
            f_a = fit_module(alice, target, seed=child_seed(seed, "alice", i))
        except FitFailureError as exc:
            raise FitFailureError(f"Alice's fit failed in round {i}: {exc}",
                                  cause=exc.cause)
        fitted_a = evaluate(f_a, alice.data)
        e_a = target - fitted_a

        if bob.n_features == 0:
            f_b = _zero_fn(0)
            fitted_b = np.zeros_like(e_a)
        else:
            try:
                f_b = fit_module(bob, e_a, seed=child_seed(seed, "bob", i))
            except FitFailureError as exc:
                raise FitFailureError(f"Bob's fit failed in round {i}: {exc}",
                                      cause=exc.cause)
            fitted_b = evaluate(f_b, bob.data)
        e_b = e_a - fitted_b

        vacuous = (np.linalg.norm(fitted_a) <= 1e-12 * scale
                   and np.linalg.norm(fitted_b) <= 1e-12 * scale)
        if vacuous and cfg.stop_rule == "relative-improvement" and rounds:
            reason = "no-improvement"
            break

        mse = float(np.mean(e_b**2))
        rounds.append(RoundRecord(index=i, alice_fn=f_a, alice_residual=e_a,
                                  bob_fn=f_b, bob_residual=e_b, mse_after=mse))
        mse_trace.append(mse)

        norm = float(np.linalg.norm(e_b))
        if cfg.stop_rule == "relative-improvement" and prev_norm > 0:
            if (prev_norm - norm) / prev_norm < cfg.theta:
                reason = "relative-improvement"
                target = e_b
                break
        prev_norm = norm
        target = e_b

    transcript = ProtocolTranscript(
        rounds=rounds,
        mse_trace=mse_trace,
        stopped_reason=reason,
        label_fingerprint=array_fingerprint(y),
    )
    return transcript.replay_predictor(), transcript


def stage2_predict(pred: AssistedPredictor, xA_star, xB_star) -> float:
    """f_A(x_A*) + f_B(x_B*).  Each party's evaluation happens on its own
    component; only the two scalars are combined."""
    a = np.asarray(xA_star, dtype=float).reshape(-1)
    b = np.asarray(xB_star, dtype=float).reshape(-1)
    if pred.alice.components and a.size != pred.alice.input_dim:
        raise DimensionMismatchError(
            f"Alice-side point has {a.size} features, expected {pred.alice.input_dim}"
        )
    if pred.bob.components and b.size != pred.bob.input_dim:
        raise DimensionMismatchError(
            f"Bob-side point has {b.size} features, expected {pred.bob.input_dim}"
        )
    alice_part = pred.alice(a) if pred.alice.components else 0.0
    bob_part = pred.bob(b) if pred.bob.components else 0.0
    return alice_part + bob_part


def stage2_predict_rows(pred: AssistedPredictor, XA, XB) -> np.ndarray:
    """Vectorized Stage II over collated rows."""
    XA = np.asarray(XA, dtype=float)
    XB = np.asarray(XB, dtype=float)
    if XA.shape[0] != XB.shape[0]:
        raise DimensionMismatchError("Stage II rows are not collated")
    out = np.zeros(XA.shape[0])
    if pred.alice.components:
        out += pred.alice.evaluate_rows(XA)
    if pred.bob.components:
        out += pred.bob.evaluate_rows(XB)
    return out


def oracle_fit(XA, XB, y, learner=None):
    """Fit the designated learner on column-concatenated features.

    Returns ``(oracle_error, oracle_fn)`` where the error is the training MSE
    achievable with both parties' features pooled.
    """
    from .core import Learner

    XA = np.asarray(XA, dtype=float)
    XB = np.asarray(XB, dtype=float)
    if XA.shape[0] != XB.shape[0]:
        raise DimensionMismatchError(
            f"row counts differ: {XA.shape[0]} vs {XB.shape[0]}"
        )
    joint = np.hstack([XA, XB])
    module = Module(learner or Learner.make("ols"), joint)
    y = as_label_vector(y, n_rows=joint.shape[0])
    fn = fit_module(module, y, seed=0)
    resid = y - evaluate(fn, joint)
    return float(np.mean(resid**2)), fn


def transcript_contains_matrix(transcript: ProtocolTranscript, X) -> bool:
    """Structural audit: does any array stored in the transcript equal X?

    Used to assert that no copy of a party's feature matrix leaked into the
    exchanged record.
    """
    X = np.asarray(X, dtype=float)
    candidates = []
    for r in transcript.rounds:
        candidates.extend([r.alice_residual, r.bob_residual])
    for arr in candidates:
        arr = np.asarray(arr)
        if arr.shape == X.shape and np.array_equal(arr, X):
            return True
        if X.ndim == 2 and X.shape[1] == 1 and arr.shape == (X.shape[0],):
            if np.array_equal(arr, X[:, 0]):
                return True
    return False
