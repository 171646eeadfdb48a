"""Sparse regression of model coefficients from kinematic targets.

Two sparsifiers are provided. ``stlsq`` ridge-solves on the active
support and zeroes coefficients below the threshold until the support
stabilizes, then re-fits the survivors without regularization.
``sr3_constrained`` alternates a relaxed least-squares step (solved as
a KKT system so linear equality constraints hold exactly) with a hard
threshold on the auxiliary weights, constrained entries exempt from
thresholding. ``threshold_sweep`` drives either one across candidate
thresholds and keeps the best-scoring fit.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import EmptyModelError, IllConditionedError, InfeasibleConstraintsError

__all__ = [
    "OptimizerConfig",
    "SparseCoefficients",
    "ConstraintSet",
    "ridge_solve",
    "stlsq",
    "sr3_constrained",
    "refit_support",
    "threshold_sweep",
    "model_to_dict",
]

STLSQ_MAX_ITER = 20
SR3_MAX_ITER = 30
SR3_TOL = 1e-10
CONSTRAINT_TOL = 1e-8


@dataclass(frozen=True)
class OptimizerConfig:
    """Shared knobs: threshold, ridge weight alpha (stlsq only),
    relaxation nu (sr3 only), and an optional max_iter override."""

    threshold: float
    alpha: float = 0.05
    nu: float = 1.0
    max_iter: int = None

    def __post_init__(self):
        if not np.isfinite(self.threshold) or self.threshold < 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold!r}")
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha!r}")
        if not np.isfinite(self.nu) or self.nu <= 0:
            raise ValueError(f"nu must be > 0, got {self.nu!r}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter!r}")


@dataclass(frozen=True)
class SparseCoefficients:
    """Coefficient matrix (n_terms, n_equations) with its support mask."""

    matrix: np.ndarray
    support: np.ndarray
    iterations: int
    converged: bool

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        support = np.asarray(self.support, dtype=bool)
        if matrix.shape != support.shape or matrix.ndim != 2:
            raise ValueError("matrix and support must be 2-D with equal shapes")
        if np.any(matrix[~support] != 0.0):
            raise ValueError("coefficients outside the support must be zero")
        matrix = matrix.copy()
        support = support.copy()
        matrix.flags.writeable = False
        support.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "support", support)

    @property
    def n_terms(self):
        return self.matrix.shape[0]

    @property
    def n_equations(self):
        return self.matrix.shape[1]


@dataclass(frozen=True)
class ConstraintSet:
    """Equality constraints C xi = d over the stacked coefficients.

    The stacking is equation-major: entry e * n_terms + j addresses
    term j of equation e, terms in library order.
    """

    C: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        d = np.asarray(self.d, dtype=float)
        if C.ndim != 2 or d.ndim != 1 or C.shape[0] != d.size:
            raise ValueError("C must be (r, n) and d (r,)")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(d))):
            raise ValueError("constraints must be finite")
        C = C.copy()
        d = d.copy()
        C.flags.writeable = False
        d.flags.writeable = False
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)

    @property
    def n_rows(self):
        return self.C.shape[0]


def _as_targets(Y):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2:
        raise ValueError(f"targets must be 1-D or 2-D, got shape {Y.shape}")
    return Y


def ridge_solve(theta, y, alpha):
    """Solve (theta^T theta + alpha I) xi = theta^T y.

    y may be a vector or a matrix of stacked targets; the result has
    the matching shape. A singular normal system (possible only when
    alpha is 0) raises IllConditionedError.
    """
    theta = np.asarray(theta, dtype=float)
    if alpha < 0 or not np.isfinite(alpha):
        raise ValueError(f"alpha must be >= 0, got {alpha!r}")
    gram = theta.T @ theta
    if alpha > 0:
        gram = gram + alpha * np.eye(gram.shape[0])
    rhs = theta.T @ np.asarray(y, dtype=float)
    try:
        factor = cho_factor(gram)
    except LinAlgError:
        raise IllConditionedError(
            "normal equations are singular; add ridge weight or drop columns"
        ) from None
    sol = cho_solve(factor, rhs)
    if not np.all(np.isfinite(sol)):
        raise IllConditionedError("ridge solution is non-finite")
    return sol


def _lstsq_on_support(theta, Y, support):
    """Unregularized least squares per equation, zero off-support."""
    p, m = support.shape
    coef = np.zeros((p, m))
    for e in range(m):
        active = support[:, e]
        if not active.any():
            continue
        sol, *_ = np.linalg.lstsq(theta[:, active], Y[:, e], rcond=None)
        coef[active, e] = sol
    return coef


def stlsq(theta, Y, config):
    """Sequentially thresholded least squares.

    Ridge-solves on the current support, zeroes entries with
    |coefficient| < threshold, and repeats until the support is stable
    or max_iter (default 20) passes. Final coefficients are re-fit on
    the final support with no regularization. Raises EmptyModelError
    if every term of an equation is eliminated.
    """
    theta = np.asarray(theta, dtype=float)
    Y = _as_targets(Y)
    if theta.ndim != 2 or theta.shape[0] != Y.shape[0]:
        raise ValueError("theta must be (n, p) with n matching the targets")
    p = theta.shape[1]
    m = Y.shape[1]
    max_iter = config.max_iter if config.max_iter is not None else STLSQ_MAX_ITER
    support = np.ones((p, m), dtype=bool)
    converged = False
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        coef = np.zeros((p, m))
        for e in range(m):
            active = support[:, e]
            coef[active, e] = ridge_solve(theta[:, active], Y[:, e], config.alpha)
        new_support = support & (np.abs(coef) >= config.threshold)
        for e in range(m):
            if not new_support[:, e].any():
                raise EmptyModelError(
                    f"threshold {config.threshold} removed every term "
                    f"from equation {e}"
                )
        if np.array_equal(new_support, support):
            converged = True
            break
        support = new_support
    coef = _lstsq_on_support(theta, Y, support)
    return SparseCoefficients(
        matrix=coef, support=support, iterations=iterations, converged=converged
    )


def refit_support(theta, Y, support):
    """Plain least squares on a fixed support (threshold-zero refit)."""
    theta = np.asarray(theta, dtype=float)
    Y = _as_targets(Y)
    support = np.asarray(support, dtype=bool)
    coef = _lstsq_on_support(theta, Y, support)
    return SparseCoefficients(matrix=coef, support=support, iterations=1, converged=True)


def _pinned_mask(constraints, p, m):
    """(p, m) mask of entries that appear in any constraint row."""
    mask = np.zeros((p, m), dtype=bool)
    if constraints is None:
        return mask
    cols = np.any(constraints.C != 0.0, axis=0)
    for e in range(m):
        mask[:, e] = cols[e * p:(e + 1) * p]
    return mask


def _solve_kkt(A_blocks, C, d, rhs_top):
    """Solve [blockdiag(A) C^T; C 0] [xi; mu] = [rhs_top; d]."""
    pm = rhs_top.size
    r = d.size
    K = np.zeros((pm + r, pm + r))
    offset = 0
    for A in A_blocks:
        w = A.shape[0]
        K[offset:offset + w, offset:offset + w] = A
        offset += w
    K[:pm, pm:] = C.T
    K[pm:, :pm] = C
    rhs = np.concatenate([rhs_top, d])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    if not np.all(np.isfinite(sol)):
        raise IllConditionedError("constrained system produced a non-finite solution")
    # one round of iterative refinement; ill-scaled gram blocks otherwise
    # leave rounding error well above the constraint tolerance
    corr, *_ = np.linalg.lstsq(K, rhs - K @ sol, rcond=None)
    sol = sol + corr
    xi = sol[:pm]
    if r:
        # snap onto the constraint manifold (least-norm correction)
        fix, *_ = np.linalg.lstsq(C, C @ xi - d, rcond=None)
        xi = xi - fix
    if not np.all(np.isfinite(xi)):
        raise IllConditionedError("constrained system produced a non-finite solution")
    return xi


def sr3_constrained(theta, Y, config, constraints=None):
    """Sparse relaxed regression with exact linear equality constraints.

    Minimizes 0.5 ||Y - theta Xi||^2 + lambda R(W) + ||Xi - W||^2 / (2 nu)
    subject to C vec(Xi) = d, where R is a weighted l0 penalty whose
    proximal step is a hard threshold at the configured threshold.
    Constrained entries are never thresholded. Stops when the weights
    move less than 1e-10 in max norm, or after max_iter (default 30)
    sweeps, in which case the last iterate is returned with
    ``converged`` False. The returned coefficients are re-fit on the
    final support under the same constraints.
    """
    theta = np.asarray(theta, dtype=float)
    Y = _as_targets(Y)
    if theta.ndim != 2 or theta.shape[0] != Y.shape[0]:
        raise ValueError("theta must be (n, p) with n matching the targets")
    p = theta.shape[1]
    m = Y.shape[1]
    max_iter = config.max_iter if config.max_iter is not None else SR3_MAX_ITER
    if constraints is not None:
        if constraints.C.shape[1] != p * m:
            raise ValueError(
                f"constraints expect {constraints.C.shape[1]} stacked "
                f"coefficients, model has {p * m}"
            )
        feas, *_ = np.linalg.lstsq(constraints.C, constraints.d, rcond=None)
        gap = np.max(np.abs(constraints.C @ feas - constraints.d))
        if gap > CONSTRAINT_TOL * (1.0 + np.max(np.abs(constraints.d), initial=0.0)):
            raise InfeasibleConstraintsError(
                f"equality constraints are inconsistent (residual {gap:.3g})"
            )
    pinned = _pinned_mask(constraints, p, m)

    gram = theta.T @ theta
    A = gram + np.eye(p) / config.nu
    thY = theta.T @ Y

    W = _lstsq_on_support(theta, Y, np.ones((p, m), dtype=bool))
    Xi = W
    converged = False
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        rhs = thY + W / config.nu
        if constraints is None:
            try:
                factor = cho_factor(A)
            except LinAlgError:
                raise IllConditionedError("relaxed step is singular") from None
            Xi = cho_solve(factor, rhs)
        else:
            xi = _solve_kkt(
                [A] * m, constraints.C, constraints.d, rhs.T.reshape(-1)
            )
            Xi = xi.reshape(m, p).T
        W_new = np.where(pinned | (np.abs(Xi) >= config.threshold), Xi, 0.0)
        delta = np.max(np.abs(W_new - W)) if W_new.size else 0.0
        W = W_new
        if delta < SR3_TOL:
            converged = True
            break

    support = (W != 0.0) | pinned
    coef = _refit_constrained(theta, Y, support, constraints, p, m)
    support = coef != 0.0
    if constraints is not None:
        gap = np.max(np.abs(constraints.C @ coef.T.reshape(-1) - constraints.d))
        if gap > CONSTRAINT_TOL:
            raise InfeasibleConstraintsError(
                f"constraint residual {gap:.3g} after refit"
            )
    return SparseCoefficients(
        matrix=coef, support=support, iterations=iterations, converged=converged
    )


def _refit_constrained(theta, Y, support, constraints, p, m):
    """Least squares on the support, subject to the constraints."""
    if constraints is None:
        return _lstsq_on_support(theta, Y, support)
    flat_support = support.T.reshape(-1)
    idx = np.nonzero(flat_support)[0]
    gram = theta.T @ theta
    A_blocks = []
    rhs_parts = []
    for e in range(m):
        active = support[:, e]
        A_blocks.append(gram[np.ix_(active, active)])
        rhs_parts.append(theta[:, active].T @ Y[:, e])
    C_s = constraints.C[:, idx]
    xi_s = _solve_kkt(A_blocks, C_s, constraints.d, np.concatenate(rhs_parts))
    coef = np.zeros((p, m))
    offset = 0
    for e in range(m):
        active = support[:, e]
        w = int(active.sum())
        coef[active, e] = xi_s[offset:offset + w]
        offset += w
    return coef


def threshold_sweep(fit_fn, score_fn, thresholds):
    """Fit at each candidate threshold and keep the best score.

    Thresholds are tried in ascending order; a later candidate replaces
    the incumbent only on a strictly better score, so ties go to the
    smallest threshold. A fit that raises a numerical error (or scores
    NaN) is recorded as -inf. If every candidate fails the last error
    is re-raised. Returns (best_threshold, best_fit, best_score,
    records) with one (threshold, score, error_message) record per
    candidate.
    """
    ordered = sorted(float(t) for t in thresholds)
    if not ordered:
        raise ValueError("thresholds must be non-empty")
    best = None
    records = []
    last_error = None
    for lam in ordered:
        try:
            fit = fit_fn(lam)
        except (EmptyModelError, IllConditionedError) as exc:
            records.append((lam, -np.inf, str(exc)))
            last_error = exc
            continue
        score = score_fn(fit)
        if score is None or np.isnan(score):
            score = -np.inf
        score = float(score)
        records.append((lam, score, None))
        if best is None or score > best[2]:
            best = (lam, fit, score)
    if best is None:
        raise last_error
    return best[0], best[1], best[2], records


def model_to_dict(coeffs, library, lhs_names, threshold, optimizer):
    """JSON-ready dump: one equation per target with retained terms."""
    if len(lhs_names) != coeffs.n_equations:
        raise ValueError("one lhs name per equation is required")
    if len(library) != coeffs.n_terms:
        raise ValueError("library size must match the coefficient rows")
    equations = []
    names = library.names
    for e, lhs in enumerate(lhs_names):
        terms = [
            {"name": names[j], "coefficient": float(coeffs.matrix[j, e])}
            for j in range(coeffs.n_terms)
            if coeffs.support[j, e]
        ]
        equations.append({"lhs": lhs, "terms": terms})
    return {
        "equations": equations,
        "threshold": float(threshold),
        "optimizer": optimizer,
        "iterations": int(coeffs.iterations),
        "converged": bool(coeffs.converged),
    }
