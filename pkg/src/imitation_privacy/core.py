"""Foundational abstractions: data, labels, learners, modules, prediction
functions, loss functions, and information sets.

A *module* is a learning algorithm paired with privately held feature data.
Handing it a task label vector induces a concrete prediction function.  An
adversary never sees the module's data; it only sees an *information set* of
queries, responses, and declared side information.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

# Scaled-L2 loss is undefined when the reference output is essentially zero;
# such test points are skipped and counted.
EPS_DENOM = 1e-12

LABEL_KINDS = ("regression", "class-label", "probability")

# Closed enumeration for side-information tags (Information Set contents that
# were NOT obtained by querying the service).
SIDE_INFO_TAGS = frozenset(
    {
        "model-class",
        "covariance",
        "noise-level",
        "response-mode",
        "feature-bounds",
        "task-oracle",
        "function-family",
        "released-features",
        "privacy-noise-variance",
        "data-dimensions",
    }
)


class DimensionMismatchError(ValueError):
    """Shapes of interacting arrays do not agree."""


class FitFailureError(RuntimeError):
    """A learner could not produce a prediction function."""

    def __init__(self, message: str, cause: str = ""):
        super().__init__(message)
        self.cause = cause


class DegenerateDenominatorError(ValueError):
    """Scaled-L2 loss evaluated against an essentially zero reference output."""

    def __init__(self, a: float, b: float):
        super().__init__(
            f"scaled-L2 loss undefined for reference output b={b!r} "
            f"(|b| <= {EPS_DENOM}); imitation output was a={a!r}"
        )
        self.a = a
        self.b = b


def as_data_matrix(values, min_cols: int = 1) -> np.ndarray:
    """Validate and return a feature matrix as float64, n x p.

    Requires at least one row, ``min_cols`` columns, and finite entries.
    """
    X = np.asarray(values, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatchError(f"data matrix must be 2-D, got shape {X.shape}")
    n, p = X.shape
    if n < 1:
        raise DimensionMismatchError("data matrix needs at least one row")
    if p < min_cols:
        raise DimensionMismatchError(
            f"data matrix needs at least {min_cols} column(s), got {p}"
        )
    if X.size and not np.all(np.isfinite(X)):
        raise ValueError("data matrix entries must be finite")
    return X


def as_label_vector(values, n_rows: Optional[int] = None, kind: str = "regression") -> np.ndarray:
    """Validate and return a label vector as float64, length n."""
    if kind not in LABEL_KINDS:
        raise ValueError(f"unknown label kind {kind!r}; expected one of {LABEL_KINDS}")
    y = np.asarray(values, dtype=float)
    if y.ndim != 1:
        raise DimensionMismatchError(f"label vector must be 1-D, got shape {y.shape}")
    if y.size < 1:
        raise DimensionMismatchError("label vector must be nonempty")
    if not np.all(np.isfinite(y)):
        raise ValueError("label entries must be finite")
    if n_rows is not None and y.size != n_rows:
        raise DimensionMismatchError(
            f"label vector has length {y.size}, expected {n_rows}"
        )
    if kind == "probability" and (y.min() < 0.0 or y.max() > 1.0):
        raise ValueError("probability labels must lie in [0, 1]")
    return y


def array_fingerprint(a: np.ndarray) -> str:
    """Stable content hash of an array (shape + bytes)."""
    arr = np.ascontiguousarray(np.asarray(a, dtype=float))
    h = hashlib.sha256()
    h.update(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class Learner:
    """A named learning algorithm with fixed hyperparameters.

    Fitting the same (X, y) with the same seed yields an identical prediction
    function.  ``hyperparams`` is stored as a sorted tuple of pairs so that
    learners are hashable and comparable.
    """

    algorithm: str
    hyperparams: tuple = ()

    @staticmethod
    def make(algorithm: str, **hyperparams) -> "Learner":
        return Learner(algorithm, tuple(sorted(hyperparams.items())))

    def params(self) -> dict:
        return dict(self.hyperparams)


@dataclass(frozen=True)
class Module:
    """A learner bound to private feature data, optionally with an intrinsic
    task label.  Given any label vector it induces a prediction function."""

    learner: Learner
    data: np.ndarray
    intrinsic_label: Optional[np.ndarray] = None

    def __post_init__(self):
        # Zero-column data is tolerated so a party in the assisted protocol
        # can contribute nothing; plain data matrices require p >= 1.
        X = as_data_matrix(self.data, min_cols=0)
        object.__setattr__(self, "data", X)
        if self.intrinsic_label is not None:
            y = as_label_vector(self.intrinsic_label, n_rows=X.shape[0])
            object.__setattr__(self, "intrinsic_label", y)

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_features(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class PredictionFn:
    """An evaluable mapping from feature rows to scalar outputs.

    ``batch`` maps an (m, p) matrix to an m-vector.  ``provenance`` records
    which learner/data/label/seed produced the function, as content hashes,
    so functions never retain references to private data.
    """

    batch: Callable[[np.ndarray], np.ndarray]
    input_dim: int
    provenance: tuple = ()

    def __call__(self, x) -> float:
        row = np.asarray(x, dtype=float).reshape(1, -1)
        if row.shape[1] != self.input_dim:
            raise DimensionMismatchError(
                f"input has {row.shape[1]} features, function expects {self.input_dim}"
            )
        return float(self.batch(row)[0])


def constant_fn(value: float, input_dim: int, provenance: tuple = ("constant",)) -> PredictionFn:
    v = float(value)
    return PredictionFn(
        batch=lambda X: np.full(np.asarray(X).shape[0], v),
        input_dim=input_dim,
        provenance=provenance + (v,),
    )


def linear_fn(coefficients, intercept: float = 0.0, provenance: tuple = ("linear",)) -> PredictionFn:
    beta = np.asarray(coefficients, dtype=float).reshape(-1).copy()
    c = float(intercept)
    return PredictionFn(
        batch=lambda X: np.asarray(X, dtype=float) @ beta + c,
        input_dim=beta.size,
        provenance=provenance + (array_fingerprint(beta), c),
    )


def evaluate(fn: PredictionFn, X) -> np.ndarray:
    """Row-wise application of a prediction function: element i is fn(x_i)."""
    M = as_data_matrix(X, min_cols=0)
    if M.shape[1] != fn.input_dim:
        raise DimensionMismatchError(
            f"data has {M.shape[1]} features, function expects {fn.input_dim}"
        )
    out = np.asarray(fn.batch(M), dtype=float)
    if out.shape != (M.shape[0],):
        raise FitFailureError(
            f"prediction function returned shape {out.shape}, expected ({M.shape[0]},)"
        )
    return out


@dataclass(frozen=True)
class LossFn:
    """Pointwise loss between an imitation output and a module output.

    kinds: ``scaled-l2`` -> (a-b)^2 / b^2, ``zero-one`` -> 1{a != b},
    ``squared`` -> (a-b)^2.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in ("scaled-l2", "zero-one", "squared"):
            raise ValueError(f"unknown loss kind {self.kind!r}")


SCALED_L2 = LossFn("scaled-l2")
ZERO_ONE = LossFn("zero-one")
SQUARED = LossFn("squared")

_LOSSES = {"scaled-l2": SCALED_L2, "zero-one": ZERO_ONE, "squared": SQUARED}


def loss_by_name(name: str) -> LossFn:
    try:
        return _LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; expected one of {sorted(_LOSSES)}")


def loss(loss_fn: LossFn, a: float, b: float) -> float:
    """Scalar loss(a, b) where a is the imitation output and b the module's."""
    a = float(a)
    b = float(b)
    if loss_fn.kind == "scaled-l2":
        if abs(b) <= EPS_DENOM:
            raise DegenerateDenominatorError(a, b)
        return (a - b) ** 2 / b**2
    if loss_fn.kind == "zero-one":
        return 0.0 if a == b else 1.0
    return (a - b) ** 2


def pair_losses(loss_fn: LossFn, a: np.ndarray, b: np.ndarray):
    """Vectorized losses with a keep-mask.

    Returns ``(losses, keep)`` where ``keep`` marks points that were not
    skipped.  Only scaled-L2 skips points (those with |b| <= EPS_DENOM);
    skipped entries hold 0 in ``losses`` and False in ``keep``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"loss inputs differ in shape: {a.shape} vs {b.shape}")
    if loss_fn.kind == "zero-one":
        return (a != b).astype(float), np.ones_like(a, dtype=bool)
    if loss_fn.kind == "squared":
        return (a - b) ** 2, np.ones_like(a, dtype=bool)
    keep = np.abs(b) > EPS_DENOM
    out = np.zeros_like(a)
    np.divide((a - b) ** 2, b**2, out=out, where=keep)
    return out, keep


@dataclass(frozen=True)
class InformationSet:
    """Everything an adversary holds: queries sent, responses received, and
    declared side information (facts not obtained through the service)."""

    queries: tuple = ()
    responses: tuple = ()
    side_info: tuple = ()

    def __post_init__(self):
        if len(self.queries) != len(self.responses):
            raise ValueError(
                f"queries/responses length mismatch: "
                f"{len(self.queries)} vs {len(self.responses)}"
            )
        for tag, _ in self.side_info:
            if tag not in SIDE_INFO_TAGS:
                raise ValueError(f"unknown side-info tag {tag!r}")

    def side(self, tag: str):
        for t, v in self.side_info:
            if t == tag:
                return v
        raise KeyError(tag)

    @property
    def n_queries(self) -> int:
        return len(self.queries)


@dataclass(frozen=True)
class QueryBudget:
    """Stage I label-query budget k1 and per-query Stage II budget k2.

    ``k2 = None`` means unbounded Stage II access.
    """

    k1: int
    k2: Optional[int] = None

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be nonnegative")
        if self.k2 is not None and self.k2 < 0:
            raise ValueError("k2 must be nonnegative or None for unbounded")


def fit_module(module: Module, y, seed: int = 0) -> PredictionFn:
    """Fit the module's learner to label vector y, producing f(module, y).

    Deterministic: repeated calls with identical inputs and seed return a
    bit-identical prediction function.
    """
    from . import learners  # deferred to avoid an import cycle

    y = as_label_vector(y, n_rows=module.n_rows)
    return learners.fit_prediction_fn(module.learner, module.data, y, seed)
