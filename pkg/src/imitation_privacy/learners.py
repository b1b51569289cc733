"""Concrete learning algorithms used by modules and adversaries.

Ordinary least squares, binary logistic regression, a binary regression tree,
and a linear threshold classifier.  Fitted models are immutable value objects
that serialize to JSON for report reproducibility.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    DimensionMismatchError,
    FitFailureError,
    Learner,
    PredictionFn,
    array_fingerprint,
    as_data_matrix,
    as_label_vector,
)

# Weight magnitude at which logistic fitting is declared divergent
# (separable data pushes the MLE to infinity).
LOGISTIC_WEIGHT_BOUND = 30.0


# ---------------------------------------------------------------------------
# Ordinary least squares


@dataclass(frozen=True)
class OlsModel:
    """Least-squares linear model.

    coefficients minimize ||y - X b||^2; for rank-deficient X the minimum-norm
    solution is returned and ``rank_deficient`` is set.
    """

    coefficients: np.ndarray
    intercept: Optional[float]
    rank: int
    rank_deficient: bool

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = X @ self.coefficients
        if self.intercept is not None:
            out = out + self.intercept
        return out

    def to_json(self) -> str:
        return json.dumps(
            {
                "algorithm": "ols",
                "hyperparameters": {"intercept": self.intercept is not None},
                "parameters": {
                    "coefficients": self.coefficients.tolist(),
                    "intercept": self.intercept,
                    "rank": self.rank,
                    "rank_deficient": self.rank_deficient,
                },
            },
            sort_keys=True,
        )


def fit_ols(X, y, intercept: bool = False) -> OlsModel:
    """Least-squares fit of y on X.

    Full-rank designs give the unique minimizer (residual orthogonal to every
    column of X); rank-deficient designs give the minimum-norm solution with
    the ``rank_deficient`` flag set.
    """
    X = as_data_matrix(X, min_cols=0)
    y = as_label_vector(y, n_rows=X.shape[0])
    n, p = X.shape
    if p == 0 and not intercept:
        return OlsModel(np.zeros(0), None, 0, False)
    design = np.hstack([X, np.ones((n, 1))]) if intercept else X
    beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if not np.all(np.isfinite(beta)):
        raise FitFailureError("least-squares solution is not finite", cause="singular design")
    deficient = rank < design.shape[1]
    if intercept:
        return OlsModel(beta[:-1].copy(), float(beta[-1]), int(rank), bool(deficient))
    return OlsModel(beta.copy(), None, int(rank), bool(deficient))


# ---------------------------------------------------------------------------
# Logistic regression


@dataclass(frozen=True)
class LogisticModel:
    """Binary logistic model with weights w and bias b.

    ``output`` selects what the model reports: calibrated probabilities in
    (0, 1) or hard 0/1 labels.
    """

    weights: np.ndarray
    bias: float
    output: str = "probability"
    converged: bool = True
    diverged: bool = False
    n_iter: int = 0
    loglik_trace: tuple = ()

    def logits(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        z = np.clip(self.logits(X), -700, 700)
        # probabilities stay in the open interval even at saturated logits
        return np.clip(1.0 / (1.0 + np.exp(-z)), 1e-15, 1.0 - 1e-15)

    def predict_label(self, X) -> np.ndarray:
        return (self.logits(X) >= 0).astype(float)

    def predict(self, X) -> np.ndarray:
        if self.output == "label":
            return self.predict_label(X)
        return self.predict_proba(X)

    def to_json(self) -> str:
        return json.dumps(
            {
                "algorithm": "logistic",
                "hyperparameters": {"output": self.output},
                "parameters": {
                    "weights": self.weights.tolist(),
                    "bias": self.bias,
                    "converged": self.converged,
                    "diverged": self.diverged,
                    "n_iter": self.n_iter,
                },
            },
            sort_keys=True,
        )


def _log_likelihood(z: np.ndarray, y: np.ndarray) -> float:
    # log p(y|z) = y*z - log(1 + e^z), computed stably
    return float(np.sum(y * z - np.logaddexp(0.0, z)))


def fit_logistic(X, y, max_iter: int = 100, tol: float = 1e-10,
                 output: str = "probability") -> LogisticModel:
    """Maximum-likelihood logistic fit by damped Newton iterations.

    Each step is halved until the log-likelihood does not decrease, so the
    trace is non-decreasing.  Separable data drives the weights to the
    magnitude bound; the fit is then flagged ``diverged`` and clipped.
    """
    X = as_data_matrix(X)
    y = as_label_vector(y, n_rows=X.shape[0])
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic labels must be binary {0, 1}")
    n, p = X.shape
    D = np.hstack([X, np.ones((n, 1))])
    w = np.zeros(p + 1)
    z = D @ w
    ll = _log_likelihood(z, y)
    trace = [ll]
    converged = False
    diverged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = 1.0 / (1.0 + np.exp(-np.clip(z, -700, 700)))
        grad = D.T @ (y - mu)
        if np.linalg.norm(grad) <= tol:
            converged = True
            break
        s = np.maximum(mu * (1.0 - mu), 1e-12)
        H = D.T @ (D * s[:, None])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        # step halving: accept the first damped step that does not lose likelihood
        t = 1.0
        for _ in range(50):
            w_new = w + t * step
            z_new = D @ w_new
            ll_new = _log_likelihood(z_new, y)
            if ll_new >= ll:
                break
            t *= 0.5
        w, z, ll = w_new, z_new, ll_new
        trace.append(ll)
        if np.linalg.norm(w) > LOGISTIC_WEIGHT_BOUND:
            diverged = True
            w = w * (LOGISTIC_WEIGHT_BOUND / np.linalg.norm(w))
            z = D @ w
            break
    if ll >= -1e-8 * n:
        # perfect separation: the likelihood is at its supremum and the MLE
        # sits at infinity, whatever the current weight norm
        diverged = True
        converged = False
    return LogisticModel(
        weights=w[:p].copy(),
        bias=float(w[p]),
        output=output,
        converged=converged,
        diverged=diverged,
        n_iter=it,
        loglik_trace=tuple(trace),
    )


# ---------------------------------------------------------------------------
# Binary regression tree


@dataclass(frozen=True)
class TreeNode:
    """Split node (feature, threshold, children) or leaf (value, rows, id)."""

    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    value: Optional[float] = None
    rows: tuple = ()
    leaf_id: Optional[str] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass(frozen=True)
class RegressionTree:
    """Binary regression tree: greedy least-squares splits, mean-valued leaves.

    Every training row reaches exactly one leaf; leaf identifiers are unique
    path strings (root "r", then "L"/"R" per branch).
    """

    root: TreeNode
    n_features: int
    max_depth: int
    min_leaf: int

    def _route(self, x: np.ndarray) -> TreeNode:
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def predict_row(self, x) -> float:
        return self._route(np.asarray(x, dtype=float)).value

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.array([self._route(row).value for row in X])

    def leaf_id(self, x) -> str:
        return self._route(np.asarray(x, dtype=float)).leaf_id

    def leaf_ids(self, X) -> list:
        X = np.asarray(X, dtype=float)
        return [self._route(row).leaf_id for row in X]

    def leaves(self) -> list:
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend([node.right, node.left])
        return out

    def to_json(self) -> str:
        def encode(node):
            if node.is_leaf:
                return {"leaf": node.leaf_id, "value": node.value, "rows": list(node.rows)}
            return {
                "feature": node.feature,
                "threshold": node.threshold,
                "left": encode(node.left),
                "right": encode(node.right),
            }

        return json.dumps(
            {
                "algorithm": "tree",
                "hyperparameters": {"max_depth": self.max_depth, "min_leaf": self.min_leaf},
                "parameters": encode(self.root),
            },
            sort_keys=True,
        )


def _best_split(X: np.ndarray, y: np.ndarray, rows: np.ndarray, min_leaf: int):
    """SSE-minimizing (feature, threshold) over midpoints of adjacent sorted
    distinct values.  Ties break to the lowest feature index, then the
    smallest threshold (guaranteed by scan order and strict improvement)."""
    best = None  # (sse, feature, threshold)
    y_sub = y[rows]
    for j in range(X.shape[1]):
        v = X[rows, j]
        order = np.argsort(v, kind="stable")
        v_sorted = v[order]
        y_sorted = y_sub[order]
        csum = np.cumsum(y_sorted)
        csq = np.cumsum(y_sorted**2)
        total_sum = csum[-1]
        total_sq = csq[-1]
        m = rows.size
        for i in range(m - 1):
            if v_sorted[i] == v_sorted[i + 1]:
                continue
            n_l = i + 1
            n_r = m - n_l
            if n_l < min_leaf or n_r < min_leaf:
                continue
            s_l = csum[i]
            s_r = total_sum - s_l
            sse = (total_sq) - s_l**2 / n_l - s_r**2 / n_r
            thr = 0.5 * (v_sorted[i] + v_sorted[i + 1])
            if best is None or sse < best[0] - 1e-15:
                best = (sse, j, thr)
    return best


def fit_tree(X, y, max_depth: int, min_leaf: int = 1) -> RegressionTree:
    """Greedy top-down least-squares regression tree.

    Recursion stops at ``max_depth``, when a child would fall below
    ``min_leaf`` rows, or when no split improves the SSE.  Degenerate inputs
    yield a single-leaf tree.
    """
    X = as_data_matrix(X)
    y = as_label_vector(y, n_rows=X.shape[0])
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")

    def build(rows: np.ndarray, depth: int, path: str) -> TreeNode:
        y_sub = y[rows]
        mean = float(np.mean(y_sub))
        sse_here = float(np.sum((y_sub - mean) ** 2))
        if depth >= max_depth or rows.size < 2 * min_leaf or sse_here <= 1e-24:
            return TreeNode(value=mean, rows=tuple(int(r) for r in rows), leaf_id=path)
        found = _best_split(X, y, rows, min_leaf)
        if found is None or found[0] >= sse_here - 1e-15:
            return TreeNode(value=mean, rows=tuple(int(r) for r in rows), leaf_id=path)
        _, j, thr = found
        mask = X[rows, j] <= thr
        left = build(rows[mask], depth + 1, path + "L")
        right = build(rows[~mask], depth + 1, path + "R")
        return TreeNode(feature=j, threshold=float(thr), left=left, right=right)

    root = build(np.arange(X.shape[0]), 0, "r")
    return RegressionTree(root=root, n_features=X.shape[1], max_depth=max_depth, min_leaf=min_leaf)


# ---------------------------------------------------------------------------
# Linear threshold classifier


@dataclass(frozen=True)
class LinearClassifier:
    """Halfspace classifier: sign(w . x + c), ties resolved to +1."""

    weights: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if np.linalg.norm(w) == 0.0:
            raise ValueError("classifier weights must be nonzero")
        object.__setattr__(self, "weights", w)

    def decision(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.offset

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision(X) >= 0.0, 1.0, -1.0)

    def to_json(self) -> str:
        return json.dumps(
            {
                "algorithm": "linear-threshold",
                "hyperparameters": {},
                "parameters": {"weights": self.weights.tolist(), "offset": self.offset},
            },
            sort_keys=True,
        )


def classify(model: LinearClassifier, x) -> int:
    """Label of a single point: +1 on the boundary and the positive side."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.weights.size:
        raise DimensionMismatchError(
            f"point has {x.size} features, classifier expects {model.weights.size}"
        )
    return 1 if float(x @ model.weights + model.offset) >= 0.0 else -1


# ---------------------------------------------------------------------------
# Learner dispatch used by core.fit_module


def fit_prediction_fn(learner: Learner, X: np.ndarray, y: np.ndarray, seed: int) -> PredictionFn:
    params = learner.params()
    prov = (
        learner.algorithm,
        learner.hyperparams,
        array_fingerprint(X),
        array_fingerprint(y),
        int(seed),
    )
    if learner.algorithm == "ols":
        try:
            model = fit_ols(X, y, intercept=params.get("intercept", False))
        except FitFailureError:
            raise
        except np.linalg.LinAlgError as exc:
            raise FitFailureError("least-squares fit failed", cause=str(exc))
        beta = model.coefficients
        c = model.intercept or 0.0
        return PredictionFn(
            batch=lambda M: np.asarray(M, dtype=float) @ beta + c,
            input_dim=X.shape[1],
            provenance=prov,
        )
    if learner.algorithm == "logistic":
        model = fit_logistic(
            X,
            y,
            max_iter=params.get("max_iter", 100),
            tol=params.get("tol", 1e-10),
            output=params.get("output", "probability"),
        )
        return PredictionFn(batch=model.predict, input_dim=X.shape[1], provenance=prov)
    if learner.algorithm == "tree":
        if "max_depth" not in params:
            raise FitFailureError("tree learner requires a max_depth hyperparameter",
                                  cause="missing hyperparameter")
        model = fit_tree(X, y, max_depth=params["max_depth"], min_leaf=params.get("min_leaf", 1))
        return PredictionFn(batch=model.predict, input_dim=X.shape[1], provenance=prov)
    raise FitFailureError(
        f"unknown learner algorithm {learner.algorithm!r}", cause="unknown algorithm"
    )


def fit_model(learner: Learner, X: np.ndarray, y: np.ndarray):
    """Fit and return the raw model object (not wrapped in a PredictionFn)."""
    params = learner.params()
    if learner.algorithm == "ols":
        return fit_ols(X, y, intercept=params.get("intercept", False))
    if learner.algorithm == "logistic":
        return fit_logistic(X, y, max_iter=params.get("max_iter", 100),
                            tol=params.get("tol", 1e-10),
                            output=params.get("output", "probability"))
    if learner.algorithm == "tree":
        return fit_tree(X, y, max_depth=params["max_depth"], min_leaf=params.get("min_leaf", 1))
    raise FitFailureError(f"unknown learner algorithm {learner.algorithm!r}")
