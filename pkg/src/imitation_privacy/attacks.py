"""Attack strategies that build imitation systems from black-box access.

Every attack runs in two phases: a query phase that talks to the target only
through an :class:`ApiView` (which logs every exchange), and a pure solve
phase that reads nothing but the logged information set.  Re-running an
attack against a :class:`ReplayApiView` over a frozen log therefore
reproduces its output bit-for-bit, no matter what happened to the target in
between; the tamper audit relies on this.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    DimensionMismatchError,
    InformationSet,
    Learner,
    Module,
    PredictionFn,
    QueryBudget,
    as_data_matrix,
    as_label_vector,
    evaluate,
    fit_module,
    linear_fn,
)
from .learners import LinearClassifier, LogisticModel, RegressionTree, fit_logistic, fit_ols
from .rng import child_rng


class QueryBudgetExceededError(RuntimeError):
    pass


class OneClassObservedError(RuntimeError):
    """Random probing never produced both class labels."""


class InsufficientQueriesError(ValueError):
    def __init__(self, k1: int, needed: int):
        super().__init__(
            f"column-space recovery needs k1 >= min(p, n-p) = {needed}, got {k1}"
        )
        self.k1 = k1
        self.needed = needed


class SingularQuerySystemError(RuntimeError):
    """The linear system induced by the queries is singular."""


class ReplayMismatchError(RuntimeError):
    """A replayed attack diverged from the frozen query log."""


class InconsistentOrderError(RuntimeError):
    """No row order satisfies the co-leaf interval constraints."""

    def __init__(self, violated_triples):
        trips = ", ".join(str(t) for t in violated_triples) or "unknown"
        super().__init__(f"co-leaf constraints are unsatisfiable; violating query triples: {trips}")
        self.violated_triples = violated_triples


class CoverDictionaryEmptyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Black-box view of a target


RESPONSE_MODES = ("probability", "label", "leaf-identifier", "fitted", "residual")


def _target_features(target) -> int:
    if isinstance(target, Module):
        return target.n_features
    if isinstance(target, (LogisticModel,)):
        return target.weights.size
    if isinstance(target, LinearClassifier):
        return target.weights.size
    if isinstance(target, RegressionTree):
        return target.n_features
    raise TypeError(f"unsupported target type {type(target).__name__}")


class ApiView:
    """Black-box prediction access to a target, with query accounting.

    Responses are computed only through the target's fit/evaluate surface.
    Every exchange (including side-information oracle draws) is appended to
    ``log`` so the attack's whole information set can be replayed.
    """

    def __init__(self, target, response_mode: str, budget: Optional[QueryBudget] = None,
                 fit_seed: int = 0):
        if response_mode not in RESPONSE_MODES:
            raise ValueError(f"response mode must be one of {RESPONSE_MODES}")
        self.target = target
        self.response_mode = response_mode
        self.budget = budget
        self.fit_seed = fit_seed
        self.rows_sent = 0
        self.labels_sent = 0
        self.handles_issued = 0
        self.log = []

    # -- accounting -------------------------------------------------------

    @property
    def n_features(self) -> int:
        return _target_features(self.target)

    @property
    def query_count(self) -> int:
        return self.rows_sent + self.labels_sent

    def _charge(self, amount: int):
        if self.budget is not None and self.query_count + amount > self.budget.k1:
            raise QueryBudgetExceededError(
                f"query budget k1={self.budget.k1} exhausted "
                f"({self.query_count} used, {amount} requested)"
            )

    def _record(self, kind: str, query, response):
        self.log.append({"kind": kind, "query": query, "response": response})

    # -- MLaaS row queries --------------------------------------------------

    def query_rows(self, X):
        """Predictions for feature rows, in the view's response mode."""
        X = as_data_matrix(X)
        if X.shape[1] != self.n_features:
            raise DimensionMismatchError(
                f"queries have {X.shape[1]} features, target expects {self.n_features}"
            )
        self._charge(X.shape[0])
        t = self.target
        if self.response_mode == "probability":
            resp = np.asarray(t.predict_proba(X), dtype=float)
        elif self.response_mode == "label":
            if isinstance(t, LogisticModel):
                resp = np.asarray(t.predict_label(X), dtype=float)
            else:
                resp = np.asarray(t.predict(X), dtype=float)
        elif self.response_mode == "leaf-identifier":
            resp = list(t.leaf_ids(X))
        else:
            raise ValueError(f"row queries unsupported in {self.response_mode!r} mode")
        self.rows_sent += X.shape[0]
        self._record("rows", X.copy(), resp.copy() if hasattr(resp, "copy") else list(resp))
        return resp

    # -- Stage I label queries ----------------------------------------------

    def _module_fit(self, y: np.ndarray) -> PredictionFn:
        if not isinstance(self.target, Module):
            raise TypeError("label queries require a Module target")
        return fit_module(self.target, y, seed=self.fit_seed)

    def query_label(self, y):
        """Submit a task label; the module fits it and returns fitted values
        (``fitted`` mode) or residuals (``residual`` mode)."""
        if self.response_mode not in ("fitted", "residual"):
            raise ValueError(f"label queries unsupported in {self.response_mode!r} mode")
        y = as_label_vector(y, n_rows=self.target.n_rows)
        self._charge(1)
        fitted = evaluate(self._module_fit(y), self.target.data)
        resp = fitted if self.response_mode == "fitted" else y - fitted
        self.labels_sent += 1
        self._record("label", y.copy(), resp.copy())
        return resp

    def stage2_handle(self, y) -> PredictionFn:
        """Submit a Stage I label and keep unlimited Stage II access to the
        induced prediction function (the k2 = infinity idealization)."""
        y = as_label_vector(y, n_rows=self.target.n_rows)
        self._charge(1)
        handle = self._module_fit(y)
        self.labels_sent += 1
        self.handles_issued += 1
        self._record("stage2", y.copy(), handle)
        return handle

    # -- declared side-information oracles -----------------------------------

    def sample_correlated_label(self, beta, sigma: float, rng: np.random.Generator):
        """Task-generation oracle: a label correlated with the target's
        private features, y = X beta + sigma * eta.  Granted as declared side
        information; the draw is logged so replays see the same label."""
        beta = np.asarray(beta, dtype=float)
        y = self.target.data @ beta
        if sigma > 0:
            y = y + sigma * rng.normal(size=y.size)
        self._record("task-oracle", beta.copy(), y.copy())
        return y

    def sample_family_label(self, fn: Callable, sigma: float, rng: np.random.Generator):
        """Task-generation oracle for function families: y = f(X) + sigma*eta."""
        y = np.asarray(fn(self.target.data), dtype=float)
        if sigma > 0:
            y = y + sigma * rng.normal(size=y.size)
        self._record("family-oracle", None, y.copy())
        return y

    # -- information set -------------------------------------------------------

    def info_set(self, side_info: tuple = ()) -> InformationSet:
        queries = tuple((e["kind"], e["query"]) for e in self.log)
        responses = tuple((e["kind"], e["response"]) for e in self.log)
        return InformationSet(queries=queries, responses=responses, side_info=side_info)


class ReplayApiView:
    """Replays a frozen query log; never touches any target.

    Queries must arrive in the original order with identical payloads.  Used
    by the tamper audit: an attack re-run against the replay view must emit
    the same output as the live run.
    """

    def __init__(self, log: Sequence, response_mode: Optional[str] = None):
        self._entries = list(log)
        self._pos = 0
        self.response_mode = response_mode
        self.rows_sent = 0
        self.labels_sent = 0
        self.handles_issued = 0
        self.n_features = None
        for e in self._entries:
            if e["kind"] == "rows":
                self.n_features = e["query"].shape[1]
                break

    @property
    def query_count(self):
        return self.rows_sent + self.labels_sent

    def _next(self, kind: str, query):
        if self._pos >= len(self._entries):
            raise ReplayMismatchError("replay ran past the end of the log")
        entry = self._entries[self._pos]
        self._pos += 1
        if entry["kind"] != kind:
            raise ReplayMismatchError(
                f"replay expected {entry['kind']!r} query, got {kind!r}"
            )
        logged = entry["query"]
        if logged is not None and query is not None:
            if not np.array_equal(np.asarray(logged), np.asarray(query)):
                raise ReplayMismatchError("replayed query payload diverged from the log")
        return entry["response"]

    def query_rows(self, X):
        X = np.asarray(X, dtype=float)
        resp = self._next("rows", X)
        self.rows_sent += X.shape[0]
        return resp

    def query_label(self, y):
        resp = self._next("label", np.asarray(y, dtype=float))
        self.labels_sent += 1
        return resp

    def stage2_handle(self, y):
        resp = self._next("stage2", np.asarray(y, dtype=float))
        self.labels_sent += 1
        self.handles_issued += 1
        return resp

    def sample_correlated_label(self, beta, sigma, rng):
        return self._next("task-oracle", np.asarray(beta, dtype=float))

    def sample_family_label(self, fn, sigma, rng):
        return self._next("family-oracle", None)

    def info_set(self, side_info: tuple = ()) -> InformationSet:
        queries = tuple((e["kind"], e["query"]) for e in self._entries[: self._pos])
        responses = tuple((e["kind"], e["response"]) for e in self._entries[: self._pos])
        return InformationSet(queries=queries, responses=responses, side_info=side_info)


# ---------------------------------------------------------------------------
# Imitation system


@dataclass(frozen=True)
class ImitationSystem:
    """An information set plus a hacking algorithm: maps any task label to an
    imitating prediction function.  The factory is a pure function of the
    information set and declared side info, never of the target's data."""

    name: str
    algorithm: str
    info: InformationSet
    factory: Callable[[np.ndarray], PredictionFn]
    params: tuple = ()

    def imitate(self, y) -> PredictionFn:
        return self.factory(np.asarray(y, dtype=float))


# ---------------------------------------------------------------------------
# Equation-solving extraction of a logistic target


def solve_logit_system(X: np.ndarray, probs: np.ndarray):
    """Recover (weights, bias) from p+1 probability responses by inverting
    the logistic link and solving the induced linear system."""
    X = np.asarray(X, dtype=float)
    probs = np.asarray(probs, dtype=float)
    z = np.log(probs / (1.0 - probs))
    A = np.hstack([X, np.ones((X.shape[0], 1))])
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatchError("equation solving needs exactly p+1 query rows")
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise SingularQuerySystemError("query matrix is singular")
    v = np.linalg.solve(A, z)
    return v[:-1], float(v[-1])


def equation_solving_extract(api, p: int, seed: int = 0):
    """Extract a probability-mode logistic target with exactly p+1 queries.

    Sends p+1 random Gaussian rows, applies the logit to the responses, and
    solves the (p+1)x(p+1) system.  A singular draw is retried once.
    Returns ``(LogisticModel, diagnostics, InformationSet)``.
    """
    if api.response_mode not in (None, "probability"):
        raise ValueError("equation solving requires probability responses")
    rng = child_rng(seed, "equation-solving")
    last_exc = None
    for attempt in range(2):
        X = rng.normal(size=(p + 1, p))
        probs = api.query_rows(X)
        try:
            w, b = solve_logit_system(X, probs)
        except SingularQuerySystemError as exc:
            last_exc = exc
            continue
        model = LogisticModel(weights=w, bias=b, output="probability")
        info = api.info_set(side_info=(("model-class", "logistic"),
                                       ("response-mode", "probability")))
        diagnostics = {"queries": int(api.query_count), "attempts": attempt + 1}
        return model, diagnostics, info
    raise last_exc


# ---------------------------------------------------------------------------
# Path finding against a tree target


@dataclass
class RecoveredPartition:
    """Axis-aligned cell per leaf identifier, recovered by interval search."""

    cells: dict
    box_lo: np.ndarray
    box_hi: np.ndarray
    resolution: float
    coverage_fraction: float
    queries_used: int

    def classify(self, x) -> Optional[str]:
        x = np.asarray(x, dtype=float)
        tol = self.resolution
        for leaf_id in sorted(self.cells):
            lo, hi = self.cells[leaf_id]
            if np.all(x >= lo - tol) and np.all(x <= hi + tol):
                return leaf_id
        return None

    def classify_rows(self, X) -> list:
        return [self.classify(row) for row in np.asarray(X, dtype=float)]


def _bisect_face(api, point: np.ndarray, dim: int, inner: float, outer: float,
                 leaf: str, delta: float) -> float:
    """Coordinate along ``dim`` where the leaf identifier changes between
    ``inner`` (inside the cell) and ``outer``."""
    probe = point.copy()
    probe[dim] = outer
    if api.query_rows(probe[None, :])[0] == leaf:
        return outer
    # invariant: a stays inside the cell, b outside
    a, b = inner, outer
    while abs(b - a) > delta:
        mid = 0.5 * (a + b)
        probe[dim] = mid
        if api.query_rows(probe[None, :])[0] == leaf:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def path_finding_extract(api, feature_boxes, delta_split: float = 1e-6):
    """Recover the target tree's leaf partition from leaf-identifier queries.

    For each undiscovered region the attack probes the center, finds the
    surrounding cell by per-dimension bisection, and recurses on the
    remainder.  If the budget runs out a partial partition is returned with
    its coverage fraction.
    """
    if api.response_mode not in (None, "leaf-identifier"):
        raise ValueError("path finding requires leaf-identifier responses")
    boxes = [(float(lo), float(hi)) for lo, hi in feature_boxes]
    box_lo = np.array([b[0] for b in boxes])
    box_hi = np.array([b[1] for b in boxes])
    d = box_lo.size
    total_volume = float(np.prod(box_hi - box_lo))
    cells = {}
    covered = 0.0
    worklist = [(box_lo.copy(), box_hi.copy())]
    exhausted = False
    while worklist:
        lo, hi = worklist.pop()
        if np.any(hi - lo <= delta_split):
            continue
        center = 0.5 * (lo + hi)
        try:
            leaf = api.query_rows(center[None, :])[0]
            if leaf not in cells:
                cell_lo = np.empty(d)
                cell_hi = np.empty(d)
                for j in range(d):
                    cell_lo[j] = _bisect_face(api, center, j, center[j], box_lo[j],
                                              leaf, delta_split)
                    cell_hi[j] = _bisect_face(api, center, j, center[j], box_hi[j],
                                              leaf, delta_split)
                cells[leaf] = (cell_lo, cell_hi)
        except QueryBudgetExceededError:
            exhausted = True
            break
        cell_lo, cell_hi = cells[leaf]
        inter_lo = np.maximum(cell_lo, lo)
        inter_hi = np.minimum(cell_hi, hi)
        if np.any(inter_hi <= inter_lo):
            continue
        covered += float(np.prod(inter_hi - inter_lo))
        cur_lo, cur_hi = lo.copy(), hi.copy()
        for j in range(d):
            if inter_lo[j] - cur_lo[j] > delta_split:
                slab_hi = cur_hi.copy()
                slab_hi[j] = inter_lo[j]
                worklist.append((cur_lo.copy(), slab_hi))
            if cur_hi[j] - inter_hi[j] > delta_split:
                slab_lo = cur_lo.copy()
                slab_lo[j] = inter_hi[j]
                worklist.append((slab_lo, cur_hi.copy()))
            cur_lo[j], cur_hi[j] = inter_lo[j], inter_hi[j]
    return RecoveredPartition(
        cells=cells,
        box_lo=box_lo,
        box_hi=box_hi,
        resolution=delta_split,
        coverage_fraction=min(covered / total_volume, 1.0) if total_volume else 1.0,
        queries_used=int(api.rows_sent),
    )


# ---------------------------------------------------------------------------
# Label-only boundary extraction of a linear classifier


def boundary_extract(api, p: int, n_boundary: int, tol: float = 1e-9,
                     box: tuple = (-10.0, 10.0), seed: int = 0,
                     probe_budget: int = 2000):
    """Approximate the decision boundary from class labels alone.

    Finds boundary points by bisecting random chords between opposite-label
    points, then fits the homogeneous system [x 1] v = 0 by SVD.
    Returns ``(LinearClassifier, diagnostics, InformationSet)``.
    """
    if api.response_mode not in (None, "label"):
        raise ValueError("boundary extraction requires label responses")
    if n_boundary < p + 1:
        raise ValueError("need at least p+1 boundary points")
    rng = child_rng(seed, "boundary")
    lo, hi = box
    pos = neg = None
    probes = 0
    while (pos is None or neg is None) and probes < probe_budget:
        x = rng.uniform(lo, hi, size=p)
        lab = float(api.query_rows(x[None, :])[0])
        probes += 1
        if lab > 0 and pos is None:
            pos = x
        elif lab < 0 and neg is None:
            neg = x
    if pos is None or neg is None:
        raise OneClassObservedError(
            f"only one class observed in {probes} random probes"
        )
    points = []
    counts = []
    while len(points) < n_boundary:
        x = rng.uniform(lo, hi, size=p)
        lab = float(api.query_rows(x[None, :])[0])
        a, b = (x, neg) if lab > 0 else (pos, x)
        d0 = float(np.linalg.norm(a - b))
        steps = 0
        while np.linalg.norm(a - b) > tol:
            mid = 0.5 * (a + b)
            if float(api.query_rows(mid[None, :])[0]) > 0:
                a = mid
            else:
                b = mid
            steps += 1
        points.append(0.5 * (a + b))
        counts.append({"steps": steps, "chord": d0,
                       "bound": int(math.ceil(math.log2(d0 / tol)))})
    M = np.hstack([np.array(points), np.ones((n_boundary, 1))])
    _, _, vt = np.linalg.svd(M)
    v = vt[-1]
    w, c = v[:p], float(v[p])
    if float(pos @ w + c) < 0:
        w, c = -w, -c
    model = LinearClassifier(weights=w, offset=c)
    info = api.info_set(side_info=(("model-class", "linear-threshold"),
                                   ("response-mode", "label"),
                                   ("feature-bounds", box)))
    diagnostics = {"queries": int(api.query_count), "bisections": counts,
                   "probes": probes}
    return model, diagnostics, info


# ---------------------------------------------------------------------------
# Adaptive retraining (active query selection near the current boundary)


def _train_linear_from_labels(X: np.ndarray, labels: np.ndarray) -> LinearClassifier:
    y01 = (np.asarray(labels) > 0).astype(float)
    if y01.min() == y01.max():
        # single class observed: constant classifier pointing at that class
        w = np.zeros(X.shape[1])
        w[0] = 1e-6
        return LinearClassifier(weights=w, offset=1e6 if y01[0] == 1 else -1e6)
    model = fit_logistic(X, y01, max_iter=60, tol=1e-8)
    w = model.weights
    if np.linalg.norm(w) == 0:
        w = np.zeros(X.shape[1])
        w[0] = 1e-12
    return LinearClassifier(weights=w, offset=model.bias)


def adaptive_retrain(api, budget_n: int, seed_m: int, box: tuple = (-10.0, 10.0),
                     seed: int = 0, jitter: float = 0.05, curve_eval=None):
    """Adaptive training: random seed round, then rounds of queries chosen by
    line search toward the current imitating model's boundary.

    ``budget_n`` total queries split into an m-point seed round plus
    (n-m)/m adaptive rounds; the division must be exact.  ``curve_eval``, if
    given, is called on each round's model to build the learning curve as
    (queries used, measured rho) pairs.
    Returns ``(ImitationSystem, LinearClassifier, curve, InformationSet)``.
    """
    if seed_m < 1 or budget_n < seed_m or (budget_n - seed_m) % seed_m != 0:
        raise ValueError(
            f"budget arithmetic invalid: n={budget_n}, m={seed_m} "
            f"(need m >= 1, n >= m, and m | n-m)"
        )
    rounds = (budget_n - seed_m) // seed_m
    p = api.n_features
    lo, hi = box
    rng = child_rng(seed, "adaptive")
    X = rng.uniform(lo, hi, size=(seed_m, p))
    labels = np.asarray(api.query_rows(X), dtype=float)
    model = _train_linear_from_labels(X, labels)
    curve = []
    if curve_eval is not None:
        curve.append((seed_m, float(curve_eval(model))))
    for r in range(rounds):
        raw = rng.uniform(lo, hi, size=(seed_m, p))
        w, c = model.weights, model.offset
        denom = float(w @ w)
        proj = raw - ((raw @ w + c) / denom)[:, None] * w[None, :]
        proj = proj + rng.normal(0.0, jitter, size=proj.shape)
        proj = np.clip(proj, lo, hi)
        labs = np.asarray(api.query_rows(proj), dtype=float)
        X = np.vstack([X, proj])
        labels = np.concatenate([labels, labs])
        model = _train_linear_from_labels(X, labels)
        if curve_eval is not None:
            curve.append((seed_m * (r + 2), float(curve_eval(model))))
    info = api.info_set(side_info=(("model-class", "linear-threshold"),
                                   ("response-mode", "label"),
                                   ("feature-bounds", box)))
    final = model

    def factory(_y):
        return PredictionFn(batch=final.predict, input_dim=p,
                            provenance=("adaptive-retrain",))

    system = ImitationSystem(name="adaptive-retrain", algorithm="adaptive-retrain",
                             info=info, factory=factory,
                             params=(("n", budget_n), ("m", seed_m)))
    return system, model, curve, info


def random_query_baseline(api, budget_n: int, box: tuple = (-10.0, 10.0),
                          seed: int = 0, curve_eval=None):
    """Non-adaptive baseline: the degenerate schedule n = m (one random round)."""
    return adaptive_retrain(api, budget_n, budget_n, box=box, seed=seed,
                            curve_eval=curve_eval)


# ---------------------------------------------------------------------------
# Column-space recovery from Stage I label queries


@dataclass(frozen=True)
class SpanBasis:
    """Orthonormal basis of the recovered column space."""

    basis: np.ndarray
    rank: int
    rank_deficient: bool


def _orthonormalize(A: np.ndarray, rel_tol: float = 1e-10):
    if A.size == 0:
        return np.zeros((A.shape[0], 0)), 0
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] <= 0:
        return np.zeros((A.shape[0], 0)), 0
    rank = int(np.sum(s > rel_tol * s[0]))
    return U[:, :rank], rank


def recover_column_space(api, k1: int, n: int, p: int, seed: int = 0,
                         labels=None):
    """Recover span(X_B) of an OLS module from k1 random label queries.

    Needs k1 >= min(p, n-p).  When p <= n-p the fitted values P y span the
    column space directly; otherwise the residuals (I-P) y span the
    orthogonal complement, which is then complemented back.
    Returns ``(SpanBasis, InformationSet)``.
    """
    if api.response_mode not in ("fitted", "residual"):
        raise ValueError("column-space recovery requires fitted or residual responses")
    needed = min(p, n - p)
    if k1 < needed:
        raise InsufficientQueriesError(k1, needed)
    rng = child_rng(seed, "column-space")
    if labels is None:
        labels = rng.normal(size=(k1, n))
    else:
        labels = np.asarray(labels, dtype=float)
        if labels.shape != (k1, n):
            raise DimensionMismatchError(
                f"labels must be ({k1}, {n}), got {labels.shape}"
            )
    fitted_cols = []
    residual_cols = []
    for y in labels:
        resp = np.asarray(api.query_label(y), dtype=float)
        if api.response_mode == "fitted":
            fitted_cols.append(resp)
            residual_cols.append(y - resp)
        else:
            residual_cols.append(resp)
            fitted_cols.append(y - resp)
    info = api.info_set(side_info=(("model-class", "ols"),
                                   ("data-dimensions", (n, p))))
    if p <= n - p:
        basis, rank = _orthonormalize(np.column_stack(fitted_cols))
        return SpanBasis(basis, rank, rank < p), info
    comp, comp_rank = _orthonormalize(np.column_stack(residual_cols))
    if comp_rank == 0:
        return SpanBasis(np.zeros((n, 0)), 0, True), info
    U, s, _ = np.linalg.svd(comp, full_matrices=True)
    basis = U[:, comp_rank:]
    return SpanBasis(basis, basis.shape[1], comp_rank < n - p), info


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Principal angles between the column spans of two matrices."""
    Qa, _ = _orthonormalize(np.asarray(A, dtype=float))
    Qb, _ = _orthonormalize(np.asarray(B, dtype=float))
    s = np.linalg.svd(Qa.T @ Qb, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))


# ---------------------------------------------------------------------------
# Covariance-rotation reconstruction


def solve_rotation(x_tilde, queries):
    """Solve the basis-mixing matrix from cross-covariance responses.

    ``queries`` is a list of (beta_t, K_t) pairs with K_t the empirical
    cross-covariance between the chosen basis ``x_tilde`` and the t-th
    correlated label.  With identity feature covariance K = Q^T-mixing B, so
    Q_hat = K B^{-1} and rows are unmixed by X_hat = x_tilde inv(Q_hat)^T.
    Returns ``(Q_hat, X_hat)``.
    """
    X_t = as_data_matrix(x_tilde)
    n, p = X_t.shape
    if len(queries) != p:
        raise DimensionMismatchError(
            f"rotation solve needs exactly p={p} queries, got {len(queries)}"
        )
    B = np.column_stack([np.asarray(b, dtype=float) for b, _ in queries])
    K = np.column_stack([np.asarray(k, dtype=float) for _, k in queries])
    if B.shape != (p, p) or K.shape != (p, p):
        raise DimensionMismatchError("beta and K vectors must have length p")
    if np.linalg.cond(B) > 1e12:
        raise SingularQuerySystemError("query coefficient matrix is singular")
    Q_hat = K @ np.linalg.inv(B)
    if np.linalg.cond(Q_hat) > 1e12:
        raise SingularQuerySystemError("recovered mixing matrix is singular")
    X_hat = X_t @ np.linalg.inv(Q_hat).T
    return Q_hat, X_hat


def rotation_attack(api, n: int, p: int, sigma: float, seed: int = 0):
    """Full covariance-rotation pipeline against an OLS module.

    Recovers span(X_B), then sends p correlated labels (granted by the
    task-generation oracle) and solves for the mixing matrix using the
    identity-covariance side information.  The imitation fits OLS on the
    reconstructed data.
    Returns ``(ImitationSystem, X_hat, InformationSet)``.
    """
    span, _ = recover_column_space(api, min(p, n - p), n, p, seed=seed)
    x_tilde = span.basis * math.sqrt(n)
    rng = child_rng(seed, "rotation-betas")
    pairs = []
    for t in range(p):
        beta = rng.normal(size=p)
        y_t = api.sample_correlated_label(
            beta, sigma, child_rng(seed, "rotation-noise", t)
        )
        api.query_label(y_t)
        K_t = x_tilde.T @ y_t / n
        pairs.append((beta, K_t))
    _, X_hat = solve_rotation(x_tilde, pairs)
    info = api.info_set(side_info=(("model-class", "ols"),
                                   ("covariance", "identity"),
                                   ("task-oracle", "linear"),
                                   ("noise-level", sigma),
                                   ("data-dimensions", (n, p))))

    def factory(y):
        model = fit_ols(X_hat, y)
        return linear_fn(model.coefficients, provenance=("covariance-rotation",))

    system = ImitationSystem(name="covariance-rotation",
                             algorithm="covariance-rotation",
                             info=info, factory=factory,
                             params=(("n", n), ("p", p), ("sigma", sigma)))
    return system, X_hat, info


# ---------------------------------------------------------------------------
# Tree structure recovery from basis-vector Stage I queries


@dataclass
class RowOrderResult:
    """A total order over data rows consistent with all co-leaf constraints.

    Leaf-pattern evidence identifies the order only up to reflection, so
    ``ambiguous_reflection`` is always flagged.
    """

    order: list
    ambiguous_reflection: bool
    extremes: list
    co_leaf_sets: list


def _sets_feasible(sets, n_rows, anchors):
    """Backtracking search for an order with every set contiguous."""
    first, last = anchors
    placed = []
    used = [False] * n_rows

    def violates(prefix):
        pos = {r: i for i, r in enumerate(prefix)}
        k = len(prefix)
        for s in sets:
            inside = sorted(pos[r] for r in s if r in pos)
            if not inside:
                continue
            contiguous = inside[-1] - inside[0] + 1 == len(inside)
            if not contiguous:
                return True
            if len(inside) < len(s) and inside[-1] != k - 1:
                # unplaced members exist but the placed block is buried
                return True
        return False

    def dfs():
        k = len(placed)
        if k == n_rows:
            return True
        for r in range(n_rows):
            if used[r]:
                continue
            if k == 0 and first is not None and r != first:
                continue
            if k == n_rows - 1 and last is not None and r != last:
                continue
            if k < n_rows - 1 and last is not None and r == last:
                continue
            placed.append(r)
            used[r] = True
            if not violates(placed) and dfs():
                return True
            placed.pop()
            used[r] = False
        return False

    return placed if dfs() else None


def _find_violating_triples(sets_with_idx, n_rows):
    bad = []
    for a in range(len(sets_with_idx)):
        for b in range(a + 1, len(sets_with_idx)):
            for c in range(b + 1, len(sets_with_idx)):
                chosen = [sets_with_idx[a], sets_with_idx[b], sets_with_idx[c]]
                rows = sorted(set().union(*(s for _, s in chosen)))
                if len(rows) > 8:
                    continue
                remap = {r: i for i, r in enumerate(rows)}
                small = [frozenset(remap[r] for r in s) for _, s in chosen]
                if _sets_feasible(small, len(rows), (None, None)) is None:
                    bad.append(tuple(q for q, _ in chosen))
    return bad


def tree_structure_recover(responses):
    """Recover the order of a module's rows from basis-query responses.

    ``responses`` is a list of (basis query e_i, fitted-value vector o_i).
    Rows j, k are co-leaf for query i iff o_i[j] and o_i[k] are both nonzero;
    each co-leaf set must be contiguous in the row order.  All-zero responses
    mark beginning/ending rows and anchor the two ends.
    """
    if not responses:
        raise ValueError("need at least one (query, response) pair")
    n = len(responses)
    sets_with_idx = []
    extremes = []
    for e, o in responses:
        e = np.asarray(e, dtype=float)
        o = np.asarray(o, dtype=float)
        if e.size != n or o.size != n:
            raise DimensionMismatchError("queries and responses must have length n")
        nz = np.flatnonzero(np.abs(e) > 1e-12)
        if nz.size != 1:
            raise ValueError("each query must be a (scaled) standard basis vector")
        idx = int(nz[0])
        members = frozenset(int(j) for j in np.flatnonzero(np.abs(o) > 1e-12))
        if members:
            sets_with_idx.append((idx, members))
        else:
            extremes.append(idx)
    if len(extremes) > 2:
        raise InconsistentOrderError([tuple(extremes)])
    anchors = (None, None)
    if len(extremes) == 2:
        anchors = (min(extremes), max(extremes))
    elif len(extremes) == 1:
        anchors = (extremes[0], None)
    order = _sets_feasible([s for _, s in sets_with_idx], n, anchors)
    if order is None:
        raise InconsistentOrderError(
            _find_violating_triples(sets_with_idx, n) or [tuple(extremes)]
        )
    # canonical orientation: ascending endpoints unless anchored
    if anchors == (None, None) and order[0] > order[-1]:
        order = order[::-1]
    return RowOrderResult(
        order=list(order),
        ambiguous_reflection=True,
        extremes=sorted(extremes),
        co_leaf_sets=[(q, set(s)) for q, s in sets_with_idx],
    )


def basis_query_tree_attack(api, n: Optional[int] = None, seed: int = 0):
    """Send every standard basis vector as a Stage I label to a tree module
    and recover the row order from the fitted values.  ``n`` defaults to the
    target module's row count; replays must pass it explicitly."""
    if n is None:
        target = getattr(api, "target", None)
        if not isinstance(target, Module):
            raise TypeError("basis-query attack needs n or a Module target")
        n = target.n_rows
    responses = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        o = api.query_label(e)
        responses.append((e, np.asarray(o, dtype=float)))
    result = tree_structure_recover(responses)
    info = api.info_set(side_info=(("model-class", "tree"),))
    return result, info


# ---------------------------------------------------------------------------
# Epsilon-cover dictionary imitation


@dataclass(frozen=True)
class CoverSpec:
    """An explicit epsilon-cover of a parametric function family.

    ``param_grid`` realizes the cover; its log-size stands in for the
    family's metric entropy when sizing the Stage I dictionary.
    """

    param_grid: tuple
    make_fn: Callable[[float], Callable]
    eps: float
    sigma: float
    description: str = ""

    @property
    def cover_size(self) -> int:
        return len(self.param_grid)

    @property
    def log_cover_size(self) -> float:
        return math.log(len(self.param_grid)) if self.param_grid else float("-inf")

    def verify_cover(self, member_params, X) -> float:
        """Max over sampled members of the L2(P_X) distance to the nearest
        grid element, estimated on the sample X."""
        X = np.asarray(X, dtype=float)
        grid_vals = np.stack([np.asarray(self.make_fn(g)(X), dtype=float)
                              for g in self.param_grid])
        worst = 0.0
        for prm in member_params:
            fv = np.asarray(self.make_fn(prm)(X), dtype=float)
            d = np.sqrt(np.mean((grid_vals - fv[None, :]) ** 2, axis=1))
            worst = max(worst, float(d.min()))
        return worst


def epsilon_cover_imitate(cover: CoverSpec, api, n: int, seed: int = 0):
    """Dictionary imitation for tasks drawn from a restricted family.

    Stage I sends one label per cover element and stores the module's Stage
    II behavior; at imitation time a new task is matched to the dictionary
    entry minimizing ||y_j - y*|| and that entry's stored function is
    replayed.
    Returns ``(ImitationSystem, match_index, InformationSet)`` where
    ``match_index(y)`` exposes the matched dictionary slot.
    """
    if not cover.param_grid:
        raise CoverDictionaryEmptyError("the cover grid is empty")
    labels = []
    handles = []
    for j, prm in enumerate(cover.param_grid):
        fn = cover.make_fn(prm)
        y_j = api.sample_family_label(fn, cover.sigma,
                                      child_rng(seed, "cover-noise", j))
        if y_j.size != n:
            raise DimensionMismatchError(
                f"family labels have length {y_j.size}, expected {n}"
            )
        handles.append(api.stage2_handle(y_j))
        labels.append(y_j)
    Y = np.stack(labels)

    def match_index(y_star) -> int:
        y_star = np.asarray(y_star, dtype=float)
        return int(np.argmin(np.linalg.norm(Y - y_star[None, :], axis=1)))

    def factory(y_star):
        return handles[match_index(y_star)]

    info = api.info_set(side_info=(("function-family", cover.description),
                                   ("noise-level", cover.sigma),
                                   ("task-oracle", "family")))
    system = ImitationSystem(name="epsilon-cover", algorithm="epsilon-cover",
                             info=info, factory=factory,
                             params=(("eps", cover.eps), ("k1", cover.cover_size)))
    return system, match_index, info
