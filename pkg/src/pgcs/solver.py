"""LASSO in an orthonormal basis, cross-validation error, LASSO-CV and graph-TV recovery.

The LASSO objective is ``||y - Phi x||^2 + mu ||Psi^T x||_1`` with no 1/2 in
front of the residual. With ``theta = Psi^T x`` it becomes the synthesis
problem ``||y - A theta||^2 + mu ||theta||_1`` for ``A = Phi Psi``. The
default ``lars`` method follows the exact homotopy path down to ``mu`` and
then polishes with restarted FISTA; ``fista`` runs the iterative solver alone.
"""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lars_path

from . import _kernels
from .graph_core import Graph
from .sensing import kfold_splits

MU_GRID = tuple(float(10 ** (-3 + 6 * t / 19)) for t in range(20))

TOL = 1e-10
MAX_ITER = 20000
_EMPTY = np.zeros(0)


class SolverError(ValueError):
    pass


def check_grid(grid) -> tuple:
    grid = tuple(float(g) for g in grid)
    if not grid:
        raise SolverError("mu grid is empty")
    if any(g < 0 for g in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise SolverError("mu grid must be non-negative and strictly increasing")
    return grid


def lipschitz(A: np.ndarray) -> float:
    """Lipschitz constant ``2 sigma_max(A)^2`` of the residual gradient."""
    if A.size == 0:
        return 1.0
    small = A @ A.T if A.shape[0] <= A.shape[1] else A.T @ A
    top = float(np.linalg.eigvalsh(small)[-1])
    return 2.0 * top if top > 0 else 1.0


@dataclass
class LassoResult:
    x: np.ndarray
    theta: np.ndarray
    mu: float
    objective: float
    iterations: int
    converged: bool
    history: np.ndarray | None = None


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise SolverError("non-finite input to solver")


def _path(A, y, mu_min):
    """Knots of the LASSO path in sklearn's alpha scale, largest alpha first."""
    m = A.shape[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        alphas, _, coefs = lars_path(A, y, method="lasso", alpha_min=mu_min / (2.0 * m))
    return alphas, coefs


def _on_path(alphas, coefs, mu, m):
    # the solution is piecewise linear in alpha between knots
    a = mu / (2.0 * m)
    if a >= alphas[0]:
        return np.zeros(coefs.shape[0])
    if a <= alphas[-1]:
        return coefs[:, -1].copy()
    j = int(np.searchsorted(-alphas, -a))
    w = (alphas[j - 1] - a) / (alphas[j - 1] - alphas[j])
    return (1 - w) * coefs[:, j - 1] + w * coefs[:, j]


def path_solutions(A, y, grid):
    """Homotopy starting points for every mu in ``grid`` from one LARS path."""
    A = np.ascontiguousarray(A, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    alphas, coefs = _path(A, y, min(grid))
    return [_on_path(alphas, coefs, mu, A.shape[0]) for mu in grid]


def solve_synthesis(A, y, mu, theta0=None, Lc=None, At=None, tol=TOL, max_iter=MAX_ITER,
                    history=False, method="lars"):
    """Minimize ``||y - A theta||^2 + mu ||theta||_1``; returns (theta, iters, F, converged, hist).

    With ``method="lars"`` the start is the homotopy solution at ``mu`` unless
    ``theta0`` is given, and FISTA only polishes it. ``iters`` counts FISTA
    iterations.
    """
    A = np.ascontiguousarray(A, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if mu < 0:
        raise SolverError("mu must be non-negative")
    if method not in ("lars", "fista"):
        raise SolverError(f"unknown method {method!r}")
    n = A.shape[1]
    if theta0 is not None:
        th0 = np.ascontiguousarray(theta0, dtype=float)
    elif method == "lars" and A.size:
        alphas, coefs = _path(A, y, mu)
        th0 = _on_path(alphas, coefs, mu, A.shape[0])
    else:
        th0 = np.zeros(n)
    if Lc is None:
        Lc = lipschitz(A)
    if At is None:
        At = np.ascontiguousarray(A.T)
    hist = np.full(max_iter + 1, np.nan) if history else _EMPTY
    th, it, F, ok = _kernels.fista(A, At, y, float(mu), float(Lc), th0, tol, max_iter, hist)
    if history:
        hist = hist[: it + 1]
        hist = hist[~np.isnan(hist)]
    return th, int(it), float(F), bool(ok), (hist if history else None)


def check_orthonormal(Psi, tol=1e-6):
    Psi = np.asarray(Psi, dtype=float)
    if Psi.ndim != 2 or Psi.shape[0] != Psi.shape[1]:
        raise SolverError("Psi must be square")
    err = np.abs(Psi.T @ Psi - np.eye(Psi.shape[0])).max()
    if err > tol:
        raise SolverError(f"Psi is not orthonormal (max deviation {err:.2e})")


def lasso(y, Phi, Psi, mu, theta0=None, orthonormal_check=True, history=False,
          tol=TOL, max_iter=MAX_ITER, method="lars") -> LassoResult:
    y = np.asarray(y, dtype=float)
    Phi = np.asarray(Phi, dtype=float)
    Psi = np.asarray(getattr(Psi, "vectors", Psi), dtype=float)
    _finite(y, Phi, Psi)
    if Phi.shape[0] != y.shape[0] or Phi.shape[1] != Psi.shape[0]:
        raise SolverError(f"shape mismatch: y {y.shape}, Phi {Phi.shape}, Psi {Psi.shape}")
    if orthonormal_check:
        check_orthonormal(Psi)
    if not np.isfinite(mu) or mu < 0:
        raise SolverError(f"invalid mu {mu}")
    A = Phi @ Psi
    th, it, F, ok, hist = solve_synthesis(A, y, mu, theta0, tol=tol, max_iter=max_iter,
                                          history=history, method=method)
    return LassoResult(Psi @ th, th, float(mu), F, it, ok, hist)


def cve(y, Phi, Psi, mu, split, orthonormal_check=True) -> tuple[float, np.ndarray]:
    """CV error on the held-out rows of ``split = (recovery_rows, cv_rows)`` and the recovery."""
    rec, cv = (np.asarray(s, dtype=int) for s in split)
    if cv.size == 0:
        raise SolverError("empty CV fold")
    if rec.size == 0:
        raise SolverError("empty recovery set")
    y = np.asarray(y, dtype=float)
    Phi = np.asarray(Phi, dtype=float)
    res = lasso(y[rec], Phi[rec], Psi, mu, orthonormal_check=orthonormal_check)
    r = y[cv] - Phi[cv] @ res.x
    return float(r @ r), res.x


def kfold_cve(y, Phi, Psi, mu, K=5) -> float:
    """Sum of the K single-fold CV errors."""
    y = np.asarray(y, dtype=float)
    return sum(cve(y, Phi, Psi, mu, split)[0] for split in kfold_splits(y.shape[0], K))


@dataclass
class _Fold:
    A: np.ndarray
    At: np.ndarray
    L: float
    A_cv: np.ndarray
    rec: np.ndarray
    cv: np.ndarray


@dataclass
class CvResult:
    mu: float
    errors: dict
    x: np.ndarray
    theta: np.ndarray
    converged: bool = True
    grid: tuple = field(default=())

    @property
    def error(self) -> float:
        return self.errors[self.mu]


class FoldOperators:
    """Synthesis operators for every fold of one (Phi, Psi) pair.

    Building ``A = Phi Psi`` and the per-fold step sizes dominates the cost of
    short LASSO runs, so they are computed once and reused for any ``y`` and
    ``mu``. Non-orthonormal ``Psi`` is accepted here (the approximate
    perturbed bases are not orthonormal).
    """

    def __init__(self, Phi, Psi, K: int = 5, method: str = "lars"):
        if method not in ("lars", "fista"):
            raise SolverError(f"unknown method {method!r}")
        self.method = method
        Phi = np.asarray(Phi, dtype=float)
        self.Psi = np.ascontiguousarray(getattr(Psi, "vectors", Psi), dtype=float)
        _finite(Phi, self.Psi)
        A = np.ascontiguousarray(Phi @ self.Psi)
        self.m = A.shape[0]
        self.K = K
        self.A = A
        self.At = np.ascontiguousarray(A.T)
        self.L = lipschitz(A)
        self.folds = []
        for rec, cv in kfold_splits(self.m, K):
            Ar = np.ascontiguousarray(A[rec])
            self.folds.append(_Fold(Ar, np.ascontiguousarray(Ar.T), lipschitz(Ar),
                                    np.ascontiguousarray(A[cv]), rec, cv))

    def fold_error(self, y, mu, k, theta0=None):
        f = self.folds[k]
        th, _, _, ok, _ = solve_synthesis(f.A, y[f.rec], mu, theta0, f.L, f.At,
                                          method=self.method)
        r = y[f.cv] - f.A_cv @ th
        return float(r @ r), th, ok

    def kfold_error(self, y, mu, warm=None):
        """Summed CV error at ``mu``; ``warm`` is an optional list of per-fold starts."""
        y = np.asarray(y, dtype=float)
        total = 0.0
        thetas = []
        ok = True
        for k in range(self.K):
            e, th, c = self.fold_error(y, mu, k, None if warm is None else warm[k])
            total += e
            thetas.append(th)
            ok &= c
        return total, thetas, ok

    def grid_errors(self, y, grid=MU_GRID) -> tuple[dict, bool]:
        """CV error for every mu in ``grid``.

        One LARS path per fold supplies the start for every grid value; the
        ``fista`` method sweeps the grid downward with warm starts instead.
        """
        grid = check_grid(grid)
        y = np.asarray(y, dtype=float)
        errors = {}
        ok = True
        if self.method == "lars":
            for f in self.folds:
                starts = path_solutions(f.A, y[f.rec], grid)
                for mu, th0 in zip(grid, starts):
                    th, _, _, c, _ = solve_synthesis(f.A, y[f.rec], mu, th0, f.L, f.At)
                    r = y[f.cv] - f.A_cv @ th
                    errors[mu] = errors.get(mu, 0.0) + float(r @ r)
                    ok &= c
            return errors, ok
        warm = None
        for mu in reversed(grid):
            errors[mu], warm, c = self.kfold_error(y, mu, warm)
            ok &= c
        return {mu: errors[mu] for mu in grid}, ok

    def fold_signals(self, y, mu) -> list[np.ndarray]:
        """Per-fold recovered signals at ``mu`` (cold start)."""
        _, ths, _ = self.kfold_error(y, mu)
        return [self.Psi @ th for th in ths]

    def warm_from(self, xs) -> list:
        if self.method == "lars":
            return [None] * self.K
        # exact inverse only for orthonormal Psi; any start is valid for FISTA
        return [self.Psi.T @ x for x in xs]

    def refit(self, y, mu, grid=MU_GRID):
        """LASSO on all rows at ``mu``, continued down from the larger grid values."""
        y = np.asarray(y, dtype=float)
        th = None
        steps = continuation(grid, mu) if self.method == "fista" else [float(mu)]
        for m in steps:
            th, _, _, ok, _ = solve_synthesis(self.A, y, m, th, self.L, self.At,
                                              method=self.method)
        return self.Psi @ th, th, ok

    def lasso_cv(self, y, grid=MU_GRID) -> CvResult:
        errors, ok = self.grid_errors(y, grid)
        return self.finish(y, errors, ok)

    def finish(self, y, errors: dict, ok=True) -> CvResult:
        mu = best_mu(errors)
        x, th, c = self.refit(y, mu, tuple(errors))
        return CvResult(mu, errors, x, th, ok and c, tuple(errors))


class _Best:
    """Smallest complete error seen so far, shared between worker threads."""

    def __init__(self, bound):
        self.value = bound
        self._lock = threading.Lock()

    def offer(self, v):
        with self._lock:
            if v < self.value:
                self.value = v


def scan_at_mu(y, mu, items, build, bound=np.inf, mapper=map, start=None):
    """K-fold CV error at a fixed ``mu`` for many candidate operators.

    ``build(item)`` returns the fold operators of one candidate and ``start``
    optionally gives per-fold signals used as warm starts. Fold 0 is scored
    for every candidate first; the other folds are then run in increasing
    order of that partial error and a candidate is dropped once its running
    sum exceeds the smallest complete error found so far (or ``bound``).
    Fold errors are non-negative, so a dropped candidate can neither win nor
    tie and the argmin is the same as with exhaustive scoring.

    Returns one ``(error, ops, converged)`` per item; dropped items carry
    ``inf`` and ``None``.
    """
    y = np.asarray(y, dtype=float)
    items = list(items)

    def first(item):
        ops = build(item)
        warm = ops.warm_from(start) if start is not None else [None] * ops.K
        e0, _, c = ops.fold_error(y, mu, 0, warm[0])
        return e0, ops, warm, c

    partial = list(mapper(first, items))
    best = _Best(bound)

    def finish(i):
        e, ops, warm, c = partial[i]
        for k in range(1, ops.K):
            if e > best.value:
                return np.inf, None, c
            ek, _, ck = ops.fold_error(y, mu, k, warm[k])
            e += ek
            c &= ck
        if e > best.value:
            return np.inf, None, c
        best.offer(e)
        return e, ops, c

    order = sorted(range(len(items)), key=lambda i: (partial[i][0], i))
    done = dict(zip(order, mapper(finish, order)))
    return [done[i] for i in range(len(items))]


def continuation(grid, mu) -> list[float]:
    """Grid values above ``mu`` in descending order, then ``mu`` itself."""
    return sorted((g for g in grid if g > mu), reverse=True) + [float(mu)]


def best_mu(errors: dict) -> float:
    """Minimizer over the grid; exact ties go to the smaller mu."""
    return min(errors, key=lambda mu: (errors[mu], mu))


def lasso_cv(y, Phi, Psi, grid=MU_GRID, K=5, orthonormal_check=True) -> CvResult:
    if orthonormal_check:
        check_orthonormal(getattr(Psi, "vectors", Psi))
    return FoldOperators(Phi, Psi, K).lasso_cv(y, grid)


# graph total variation

def incidence(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    e = np.asarray(g.sorted_edges(), dtype=np.int64).reshape(-1, 2)
    return np.ascontiguousarray(e[:, 0]), np.ascontiguousarray(e[:, 1])


def graph_tv(x, g: Graph) -> float:
    x = np.asarray(x, dtype=float)
    src, dst = incidence(g)
    return float(np.abs(x[src] - x[dst]).sum())


@dataclass
class TvResult:
    x: np.ndarray
    mu: float
    objective: float
    iterations: int
    converged: bool


class TvOperator:
    """Precomputed primal prox for graph-TV recovery with a fixed Phi and graph."""

    def __init__(self, Phi, g: Graph):
        Phi = np.ascontiguousarray(Phi, dtype=float)
        _finite(Phi)
        if Phi.shape[1] != g.n:
            raise SolverError(f"Phi has {Phi.shape[1]} columns for a graph on {g.n} nodes")
        self.Phi = Phi
        self.src, self.dst = incidence(g)
        maxdeg = int(g.degrees().max()) if len(g) else 0
        # ||D||^2 <= 2 * max degree for the edge incidence operator
        self.tau = self.sigma = 0.99 / np.sqrt(2.0 * maxdeg) if maxdeg else 1.0
        n = g.n
        self.M = np.ascontiguousarray(np.linalg.inv(np.eye(n) + 2 * self.tau * Phi.T @ Phi))

    def solve(self, y, mu, x0=None, tol=TOL, max_iter=MAX_ITER) -> TvResult:
        y = np.ascontiguousarray(y, dtype=float)
        _finite(y)
        if not np.isfinite(mu) or mu < 0:
            raise SolverError(f"invalid mu {mu}")
        q = 2 * self.tau * self.M @ (self.Phi.T @ y)
        x0 = np.zeros(self.Phi.shape[1]) if x0 is None else np.ascontiguousarray(x0, dtype=float)
        x, it, F, ok = _kernels.chambolle_pock_tv(self.Phi, y, self.M, q, self.src, self.dst,
                                                  float(mu), self.tau, self.sigma, x0, tol,
                                                  max_iter)
        return TvResult(x, float(mu), float(F), int(it), bool(ok))


def tv_solve(y, Phi, g: Graph, mu, **kw) -> TvResult:
    return TvOperator(Phi, g).solve(y, mu, **kw)


class TvFoldOperators:
    """K-fold CV for graph-TV recovery; mirrors :class:`FoldOperators`."""

    def __init__(self, Phi, g: Graph, K: int = 5, tol=1e-8, max_iter=5000):
        Phi = np.asarray(Phi, dtype=float)
        self.m = Phi.shape[0]
        self.K = K
        self.tol, self.max_iter = tol, max_iter
        self.full = TvOperator(Phi, g)
        self.folds = [(TvOperator(Phi[rec], g), rec, cv, Phi[cv])
                      for rec, cv in kfold_splits(self.m, K)]

    def fold_error(self, y, mu, k, x0=None):
        op, rec, cv, Phi_cv = self.folds[k]
        res = op.solve(y[rec], mu, x0, self.tol, self.max_iter)
        r = y[cv] - Phi_cv @ res.x
        return float(r @ r), res.x, res.converged

    def kfold_error(self, y, mu, warm=None):
        y = np.asarray(y, dtype=float)
        total = 0.0
        xs = []
        ok = True
        for k in range(self.K):
            e, x, c = self.fold_error(y, mu, k, None if warm is None else warm[k])
            total += e
            xs.append(x)
            ok &= c
        return total, xs, ok

    def fold_signals(self, y, mu):
        return self.kfold_error(y, mu)[1]

    def warm_from(self, xs):
        return list(xs)

    def grid_errors(self, y, grid=MU_GRID):
        grid = check_grid(grid)
        errors = {}
        warm = None
        ok = True
        for mu in reversed(grid):
            errors[mu], warm, c = self.kfold_error(y, mu, warm)
            ok &= c
        return {mu: errors[mu] for mu in grid}, ok

    def refit(self, y, mu, grid=MU_GRID):
        x = None
        for m in continuation(grid, mu):
            res = self.full.solve(y, m, x, tol=self.tol, max_iter=self.max_iter)
            x = res.x
        return res.x, res.x, res.converged

    def finish(self, y, errors: dict, ok=True) -> CvResult:
        mu = best_mu(errors)
        x, _, c = self.refit(y, mu, tuple(errors))
        return CvResult(mu, errors, x, x, ok and c, tuple(errors))

    def lasso_cv(self, y, grid=MU_GRID) -> CvResult:
        errors, ok = self.grid_errors(y, grid)
        return self.finish(y, errors, ok)


def tv_cv(y, Phi, g: Graph, grid=MU_GRID, K=5, **kw) -> CvResult:
    return TvFoldOperators(Phi, g, K, **kw).lasso_cv(y, grid)
