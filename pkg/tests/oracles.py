"""Independent oracles used to cross-check the implementation.

These deliberately avoid the library's own code paths: least squares is
re-solved through hand-rolled normal equations with Gaussian elimination,
projections go through modified Gram-Schmidt, stumps are found by exhaustive
enumeration, and expectations are computed with Gauss-Hermite quadrature.
"""

import numpy as np


def gaussian_elimination_solve(A, b):
    """Solve A x = b by partial-pivot Gaussian elimination (no numpy.linalg)."""
    A = [list(map(float, row)) for row in np.asarray(A, dtype=float)]
    b = list(map(float, np.asarray(b, dtype=float)))
    n = len(A)
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(A[r][col]))
        if abs(A[pivot][col]) < 1e-14:
            raise ZeroDivisionError("singular system")
        A[col], A[pivot] = A[pivot], A[col]
        b[col], b[pivot] = b[pivot], b[col]
        for r in range(col + 1, n):
            f = A[r][col] / A[col][col]
            for c in range(col, n):
                A[r][c] -= f * A[col][c]
            b[r] -= f * b[col]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        s = sum(A[r][c] * x[c] for c in range(r + 1, n))
        x[r] = (b[r] - s) / A[r][r]
    return np.array(x)


def normal_equations_ols(X, y):
    """Brute-force least squares: solve X'X beta = X'y by elimination."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return gaussian_elimination_solve(X.T @ X, X.T @ y)


def mgs_orthonormal_basis(X):
    """Orthonormal basis of span(X) by modified Gram-Schmidt."""
    X = np.asarray(X, dtype=float)
    cols = []
    for j in range(X.shape[1]):
        v = X[:, j].astype(float).copy()
        for q in cols:
            v -= (q @ v) * q
        norm = np.sqrt(v @ v)
        if norm > 1e-12:
            cols.append(v / norm)
    return np.column_stack(cols) if cols else np.zeros((X.shape[0], 0))


def mgs_projection(X, y):
    """Orthogonal projection of y onto span(X) via the MGS basis."""
    Q = mgs_orthonormal_basis(X)
    y = np.asarray(y, dtype=float)
    return Q @ (Q.T @ y)


def principal_angles_oracle(A, B):
    """Principal angles between spans via MGS bases and an SVD of Qa'Qb."""
    Qa = mgs_orthonormal_basis(A)
    Qb = mgs_orthonormal_basis(B)
    s = np.linalg.svd(Qa.T @ Qb, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))


def exhaustive_stump(X, y, min_leaf=1):
    """Exhaustive search over every (feature, midpoint) depth-1 split.

    Returns ``(sse, feature, threshold, fitted)``; a single-leaf fit when no
    split helps.  Tie-break: lowest feature index, then smallest threshold.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    base_fit = np.full(n, y.mean())
    best = (float(np.sum((y - base_fit) ** 2)), None, None, base_fit)
    for j in range(p):
        values = np.unique(X[:, j])
        for a, b in zip(values[:-1], values[1:]):
            thr = 0.5 * (a + b)
            left = X[:, j] <= thr
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            fitted = np.where(left, y[left].mean(), y[~left].mean())
            sse = float(np.sum((y - fitted) ** 2))
            if sse < best[0] - 1e-15:
                best = (sse, j, thr, fitted)
    return best


def gauss_hermite_expectation(fn, dims, order=64):
    """E[fn(z)] for z ~ N(0, I_dims) on a tensor Gauss-Hermite grid."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    weights = weights / weights.sum()
    grids = np.meshgrid(*([nodes] * dims), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    w = np.ones(pts.shape[0])
    for axis in range(dims):
        w *= np.tile(
            np.repeat(weights, order ** (dims - axis - 1)), order**axis
        )
    return float(np.sum(w * fn(pts)))


def population_squared_rho_linear(beta, gamma, order=96):
    """Population rho under squared loss for linear module beta vs linear
    imitation gamma with x ~ N(0, I): exactly ||gamma - beta||^2, computed by
    quadrature for independence from the algebra."""
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    delta = gamma - beta
    # reduce to the 1-d statistic delta'x ~ N(0, ||delta||^2)
    scale = float(np.linalg.norm(delta))
    return gauss_hermite_expectation(lambda z: (scale * z[:, 0]) ** 2, 1, order)


def population_scaled_rho_linear(beta, gamma, order=96, eps_denom=1e-12):
    """Gauss-Hermite value of E[((gamma-beta)'x)^2 / (beta'x)^2].

    The true expectation diverges whenever gamma - beta has a component
    perpendicular to beta; the quadrature reports the finite truncation with
    the estimator's own skip rule applied to the denominator.
    """
    beta = np.asarray(beta, dtype=float)
    delta = np.asarray(gamma, dtype=float) - beta
    nb = float(np.linalg.norm(beta))
    c = float(delta @ beta) / nb**2
    s = float(np.sqrt(max(np.linalg.norm(delta) ** 2 - (c * nb) ** 2, 0.0)))

    def fn(z):
        denom = nb * z[:, 0]
        num = c * nb * z[:, 0] + s * z[:, 1]
        keep = np.abs(denom) > eps_denom
        out = np.zeros(z.shape[0])
        out[keep] = (num[keep] / denom[keep]) ** 2
        return out

    return gauss_hermite_expectation(fn, 2, order)
