"""l1-regularized least squares (BPDN) via SpaRSA, plus a QR least-squares refiner.

The solver minimizes

    0.5 * ||A x - y||^2 + reg * sum_i w_i |x_i|

for real or complex ``A``. Complex problems use the complex soft threshold
(magnitude shrink, phase kept). Weights default to one; a zero weight leaves
the coefficient unpenalized.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


# smallest reg / ||A^H y||_inf at which stopping also waits for the KKT certificate
KKT_MIN_REG = 1e-5


class RankDeficientError(np.linalg.LinAlgError):
    """Least-squares matrix is (numerically) rank deficient."""

    def __init__(self, cond: float, limit: float):
        super().__init__(f"matrix is rank deficient: condition number {cond:.3e} exceeds {limit:.1e}")
        self.condition_number = cond


@dataclass(frozen=True, eq=False)
class BpdnProblem:
    matrix: np.ndarray
    observation: np.ndarray
    reg: float
    weights: np.ndarray | None = None

    def __post_init__(self):
        A = np.asarray(self.matrix)
        y = np.asarray(self.observation)
        if A.ndim != 2 or A.shape[1] < 1:
            raise ValueError("dictionary must be a 2-D matrix with at least one column")
        if y.shape != (A.shape[0],):
            raise ValueError(f"observation length {y.shape} does not match {A.shape[0]} rows")
        if not np.all(np.isfinite(y)):
            raise ValueError("observation must be finite")
        if not self.reg > 0:
            raise ValueError("regularizer must be positive")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (A.shape[1],) or np.any(w < 0):
                raise ValueError("weights must be nonnegative, one per column")

    @property
    def weight_vector(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.matrix.shape[1])
        return np.asarray(self.weights, dtype=float)

    def objective(self, x: np.ndarray) -> float:
        r = self.matrix @ x - self.observation
        return 0.5 * float(np.vdot(r, r).real) + self.reg * float(np.sum(self.weight_vector * np.abs(x)))


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rule and SpaRSA step-size safeguards.

    ``continuation`` solves a decreasing sequence of regularizers (factor
    ``continuation_factor``) with warm starts before the target value.
    ``working_set_min`` enables an active-set refinement for problems with at
    least that many columns: the solve is finished on the active columns using
    their Gram matrix, and optimality is then re-checked on the full problem.

    ``method="homotopy"`` replaces SpaRSA by the exact LARS-lasso path (real
    problems only); ``max_iterations`` then bounds the number of path steps.
    It is the better choice for very coherent dictionaries, where SpaRSA needs
    orders of magnitude more iterations to settle the support.
    """

    max_iterations: int = 10000
    tolerance: float = 1e-6
    alpha_min: float = 1e-30
    alpha_max: float = 1e30
    backtrack_factor: float = 2.0
    sufficient_decrease: float = 1e-5
    continuation: bool = True
    continuation_factor: float = 0.2
    working_set_min: int = 1000
    working_set_rounds: int = 8
    working_set_iterations: int = 20000
    method: str = "sparsa"
    kkt_tolerance: float | None = 1e-4  # also require the optimality certificate before stopping
    debug: bool = False

    def __post_init__(self):
        if self.method not in ("sparsa", "homotopy"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.kkt_tolerance is not None and not self.kkt_tolerance > 0:
            raise ValueError("kkt_tolerance must be positive or None")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.backtrack_factor > 1:
            raise ValueError("backtrack_factor must exceed 1")


@dataclass(frozen=True, eq=False)
class SparseSolution:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)


def soft_threshold(v, t):
    """Shrink ``v`` toward zero by ``t`` in magnitude (elementwise, real or complex)."""
    v = np.asarray(v)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("threshold must be nonnegative")
    mag = np.abs(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > t, 1.0 - t / np.where(mag > 0, mag, 1.0), 0.0)
    out = v * scale
    return out[()] if out.ndim == 0 else out


class _Dense:
    """Smooth part 0.5||Ax - y||^2 evaluated through A."""

    def __init__(self, A, y):
        self.A = A
        self.AH = A.conj().T
        self.y = y
        self.yy = float(np.vdot(y, y).real)

    def start(self, x):
        r = self.A @ x - self.y
        return r, 0.5 * float(np.vdot(r, r).real)

    def grad(self, x, r):
        return self.AH @ r

    def step(self, x_new, x, r):
        r_new = self.A @ x_new - self.y
        return r_new, 0.5 * float(np.vdot(r_new, r_new).real)

    @staticmethod
    def curvature(s, r_new, r):
        d = r_new - r
        return float(np.vdot(d, d).real)


class _Gram:
    """Same smooth part using Q = A^H A and b = A^H y (cheap when few columns)."""

    def __init__(self, A, y):
        self.Q = A.conj().T @ A
        self.b = A.conj().T @ y
        self.yy = float(np.vdot(y, y).real)

    def _f(self, x, Qx):
        return 0.5 * float(np.vdot(x, Qx).real) - float(np.vdot(self.b, x).real) + 0.5 * self.yy

    def start(self, x):
        Qx = self.Q @ x
        return Qx, self._f(x, Qx)

    def grad(self, x, Qx):
        return Qx - self.b

    def step(self, x_new, x, Qx):
        Qx_new = self.Q @ x_new
        return Qx_new, max(self._f(x_new, Qx_new), 0.0)

    @staticmethod
    def curvature(s, Qx_new, Qx):
        return float(np.vdot(s, Qx_new - Qx).real)


def kkt_satisfied(g, x, w, reg, tol) -> bool:
    """Subgradient optimality: g_i = -reg w_i sign(x_i) on the support, |g_i| <= reg w_i off it."""
    nz = x != 0
    on = np.abs(g[nz] + reg * w[nz] * x[nz] / np.abs(x[nz])) <= tol * reg * w[nz]
    off = np.abs(g[~nz]) <= reg * w[~nz] * (1 + tol)
    return bool(on.all() and off.all())


def _sparsa(smooth, w, reg, x, config, tol, max_iter, history=None, kkt=None):
    """Monotone SpaRSA at a fixed regularizer. Returns (x, obj, iterations, converged).

    With ``kkt`` set, a small objective change only ends the run once the
    optimality conditions also hold to that relative tolerance.
    """
    state, f = smooth.start(x)
    obj = f + reg * float(np.sum(w * np.abs(x)))
    g = smooth.grad(x, state)
    alpha = 1.0
    for it in range(1, max_iter + 1):
        while True:
            x_new = soft_threshold(x - g / alpha, reg * w / alpha)
            s = x_new - x
            ss = float(np.vdot(s, s).real)
            state_new, f_new = smooth.step(x_new, x, state)
            obj_new = f_new + reg * float(np.sum(w * np.abs(x_new)))
            if ss == 0.0 or obj_new <= obj - 0.5 * config.sufficient_decrease * alpha * ss:
                break
            alpha *= config.backtrack_factor
            if alpha > config.alpha_max:
                # step collapsed; x is stationary to working precision
                return x, obj, it, True
        if config.debug:
            assert obj_new <= obj + 1e-12 * max(abs(obj), 1.0), "objective increased"
        if history is not None:
            history.append(obj_new)
        rel = abs(obj - obj_new) / max(abs(obj_new), np.finfo(float).tiny)
        if ss > 0:
            curv = smooth.curvature(s, state_new, state)
            alpha = min(max(curv / ss, config.alpha_min), config.alpha_max)
        x, state, obj = x_new, state_new, obj_new
        g = smooth.grad(x, state)
        if ss == 0.0 or (rel < tol and (kkt is None or kkt_satisfied(g, x, w, reg, kkt))):
            return x, obj, it, True
    return x, obj, max_iter, False


def _kkt_violators(g, x, w, reg, slack):
    """Indices of zero coefficients whose gradient exceeds the (weighted) threshold."""
    return np.flatnonzero((x == 0) & (np.abs(g) > reg * w * (1 + slack)))


def solve_bpdn(problem: BpdnProblem, config: SolverConfig | None = None, x0=None) -> SparseSolution:
    """Minimize 0.5||Ax - y||^2 + reg*||w * x||_1 with SpaRSA.

    Columns with zero weight are eliminated exactly before iterating: the
    problem is projected onto the orthogonal complement of their span, and
    their coefficients are recovered by least squares afterwards. This keeps
    a free coefficient from trading places with nearly collinear penalized
    columns during the iterations.

    Parameters
    ----------
    problem : BpdnProblem
    config : SolverConfig, optional
    x0 : array, optional
        Warm start; defaults to zeros.

    Returns
    -------
    SparseSolution
        ``converged`` is False when the iteration budget ran out first.
    """
    config = config or SolverConfig()
    A = np.asarray(problem.matrix)
    y = np.asarray(problem.observation)
    dtype = np.result_type(A.dtype, y.dtype, float)
    A = A.astype(dtype, copy=False)
    y = y.astype(dtype, copy=False)
    w = problem.weight_vector
    n = A.shape[1]
    x = np.zeros(n, dtype=dtype) if x0 is None else np.array(x0, dtype=dtype)
    free = w == 0
    history: list = []
    if not free.any():
        x, iterations, converged = _solve_penalized(A, y, w, float(problem.reg), x, config, history)
    else:
        pen = ~free
        Q, _ = np.linalg.qr(A[:, free])
        Ap = A[:, pen] - Q @ (Q.conj().T @ A[:, pen])
        yp = y - Q @ (Q.conj().T @ y)
        xp = np.zeros(int(pen.sum()), dtype=dtype)
        iterations, converged = 0, True
        if pen.any():
            xp, iterations, converged = _solve_penalized(Ap, yp, w[pen], float(problem.reg), x[pen], config, history)
        x = np.zeros(n, dtype=dtype)
        x[pen] = xp
        x[free] = np.linalg.lstsq(A[:, free], y - A[:, pen] @ xp, rcond=None)[0]
    obj = problem.objective(x)
    return SparseSolution(x=x, objective=obj, iterations=iterations, converged=converged, history=history)


def _homotopy(A, y, w, reg, config):
    """Exact lasso by the LARS path; weights are folded into column scales."""
    from sklearn.linear_model import lars_path

    if np.iscomplexobj(A) or np.iscomplexobj(y):
        raise ValueError("homotopy method supports real problems only")
    m = A.shape[0]
    X = A / w[None, :]
    with warnings.catch_warnings():
        # near-collinear atoms trigger benign drop/regularization notices
        warnings.simplefilter("ignore")
        alphas, _, coefs, n_iter = lars_path(
            X, y, method="lasso", alpha_min=reg / m, max_iter=config.max_iterations,
            return_path=False, return_n_iter=True,
        )
    x = np.ravel(coefs) / w
    converged = n_iter < config.max_iterations or alphas[-1] <= reg / m * (1 + 1e-12)
    return x, int(n_iter), bool(converged)


def _solve_penalized(A, y, w, reg, x, config, history):
    """Continuation stages, the target stage, and the optional working-set finish."""
    n = A.shape[1]
    if config.method == "homotopy":
        return _homotopy(A, y, w, reg, config)
    dense = _Dense(A, y)
    # below this level the problem is close to exact interpolation and a
    # certificate relative to reg would ask for accuracy beyond round-off
    kkt = config.kkt_tolerance if reg >= KKT_MIN_REG * float(np.max(np.abs(dense.AH @ y), initial=0.0)) else None
    # continuation path from near the zero-solution threshold down to reg
    regs = [reg]
    if config.continuation:
        g0 = np.abs(dense.AH @ (A @ x - y))
        penalized = w > 0
        top = float(np.max(g0[penalized] / w[penalized])) if penalized.any() else 0.0
        level = 0.5 * top
        stages = []
        while level > reg:
            stages.append(level)
            level *= config.continuation_factor
        regs = stages + [reg]

    iterations = 0
    budget = config.max_iterations
    for stage_reg in regs[:-1]:
        x, _, used, _ = _sparsa(dense, w, stage_reg, x, config, 1e-3, budget - iterations)
        iterations += used
        if iterations >= budget:
            break

    converged = False
    if iterations < budget:
        use_ws = n >= config.working_set_min
        tol = max(config.tolerance, 1e-3) if use_ws else config.tolerance
        x, _, used, converged = _sparsa(dense, w, reg, x, config, tol, budget - iterations, history,
                                        None if use_ws else kkt)
        iterations += used
        if use_ws:
            x, extra, converged = _working_set(A, y, w, reg, x, config, history, kkt)
            iterations += extra
    return x, iterations, converged


def _working_set(A, y, w, reg, x, config, history, kkt=None):
    """Finish the solve on active columns; grow the set with KKT violators.

    Returns (x, iterations, converged); iterations count restricted steps.
    """
    AH = A.conj().T
    iterations = 0
    converged = False
    for _ in range(config.working_set_rounds):
        g = AH @ (A @ x - y)
        viol = _kkt_violators(g, x, w, reg, 1e-4)
        if converged and viol.size == 0:
            break
        active = np.flatnonzero(x != 0)
        cap = 4 * max(active.size, 16)
        if viol.size > cap:
            score = np.abs(g[viol]) / np.maximum(w[viol], 1e-300)
            viol = viol[np.argsort(-score)[:cap]]
        ws = np.union1d(np.union1d(active, viol), np.flatnonzero(w == 0))
        xs, _, used, converged = _sparsa(
            _Gram(A[:, ws], y), w[ws], reg, x[ws].copy(), config, config.tolerance,
            config.working_set_iterations, history, kkt,
        )
        iterations += used
        x = np.zeros_like(x)
        x[ws] = xs
    else:
        g = AH @ (A @ x - y)
        converged = converged and _kkt_violators(g, x, w, reg, 1e-4).size == 0
    return x, iterations, converged


def solve_least_squares(A, y, cond_limit: float = 1e10) -> np.ndarray:
    """Least-squares solution of ``A r ~ y`` through a pivoted QR factorization."""
    A = np.asarray(A)
    y = np.asarray(y)
    if A.ndim != 2 or y.shape != (A.shape[0],):
        raise ValueError("shape mismatch between matrix and observation")
    if A.shape[0] < A.shape[1]:
        raise RankDeficientError(np.inf, cond_limit)
    dtype = np.result_type(A.dtype, y.dtype, float)
    Q, R, perm = scipy.linalg.qr(A.astype(dtype), mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    cond = np.inf if diag[-1] == 0 else float(np.linalg.cond(R))
    if not cond < cond_limit:
        raise RankDeficientError(cond, cond_limit)
    z = scipy.linalg.solve_triangular(R, Q.conj().T @ y.astype(dtype))
    r = np.empty_like(z)
    r[perm] = z
    return r
