"""Compiled inner loops for the LASSO and graph-TV solvers."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _objective(b, Ath, th, mu):
    r = 0.0
    for i in range(b.shape[0]):
        d = b[i] - Ath[i]
        r += d * d
    l1 = 0.0
    for i in range(th.shape[0]):
        l1 += abs(th[i])
    return r + mu * l1


@njit(cache=True, nogil=True, fastmath=True)
def _matvec(M, v, out):
    for i in range(M.shape[0]):
        acc = 0.0
        for j in range(M.shape[1]):
            acc += M[i, j] * v[j]
        out[i] = acc


@njit(cache=True, nogil=True)
def _grad_step(At, b, Av, v, step, thr, r, g, out):
    # out = soft(v + step * At (b - Av), thr)
    for i in range(b.shape[0]):
        r[i] = b[i] - Av[i]
    _matvec(At, r, g)
    for i in range(v.shape[0]):
        u = v[i] + step * g[i]
        if u > thr:
            out[i] = u - thr
        elif u < -thr:
            out[i] = u + thr
        else:
            out[i] = 0.0


@njit(cache=True, nogil=True)
def fista(A, At, b, mu, Lc, th0, tol, max_iter, hist):
    """Restarted FISTA on ||b - A th||^2 + mu ||th||_1 with step 1/Lc.

    Accepted iterates never increase the objective: when the momentum step
    raises it, momentum is reset and a plain proximal-gradient step is taken
    from the current point. Returns (theta, iterations, objective, converged).
    ``hist`` receives the objective per accepted iterate if it is non-empty.
    """
    m, n = A.shape
    th = th0.copy()
    Ath = np.empty(m)
    _matvec(A, th, Ath)
    z = th.copy()
    Az = Ath.copy()
    new = np.empty(n)
    Anew = np.empty(m)
    r = np.empty(m)
    g = np.empty(n)
    thr = mu / Lc
    step = 2.0 / Lc
    F = _objective(b, Ath, th, mu)
    record = hist.shape[0] > 0
    if record:
        hist[0] = F
    tk = 1.0
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        _grad_step(At, b, Az, z, step, thr, r, g, new)
        _matvec(A, new, Anew)
        Fn = _objective(b, Anew, new, mu)
        if Fn > F:
            tk = 1.0
            _grad_step(At, b, Ath, th, step, thr, r, g, new)
            _matvec(A, new, Anew)
            Fn = _objective(b, Anew, new, mu)
            if Fn > F:
                # no descent left at machine precision
                converged = True
                if record:
                    hist[it] = F
                break
            z[:] = new
            Az[:] = Anew
        else:
            tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            beta = (tk - 1.0) / tn
            for i in range(n):
                z[i] = new[i] + beta * (new[i] - th[i])
            for i in range(m):
                Az[i] = Anew[i] + beta * (Anew[i] - Ath[i])
            tk = tn
        dec = F - Fn
        th[:] = new
        Ath[:] = Anew
        Fprev = F
        F = Fn
        if record:
            hist[it] = F
        if dec <= tol * Fprev:
            converged = True
            break
    return th, it, F, converged


@njit(cache=True, nogil=True)
def _tv_objective(b, Phi, x, src, dst, mu):
    r = b - Phi @ x
    tv = 0.0
    for e in range(src.shape[0]):
        tv += abs(x[src[e]] - x[dst[e]])
    return r @ r + mu * tv


@njit(cache=True, nogil=True)
def chambolle_pock_tv(Phi, b, M, q, src, dst, mu, tau, sigma, x0, tol, max_iter):
    """Primal-dual iterations for ||b - Phi x||^2 + mu * sum_e |x_src - x_dst|.

    ``M`` is (I + 2 tau Phi^T Phi)^-1 and ``q = 2 tau M Phi^T b``, so the
    primal prox is ``M v + q``. The dual variable lives on edges and is
    clipped to [-mu, mu]. Returns the best-objective iterate seen.
    """
    n = x0.shape[0]
    E = src.shape[0]
    x = x0.copy()
    xbar = x0.copy()
    p = np.zeros(E)
    v = np.empty(n)
    best = x.copy()
    F = _tv_objective(b, Phi, x, src, dst, mu)
    Fbest = F
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        for e in range(E):
            t = p[e] + sigma * (xbar[src[e]] - xbar[dst[e]])
            if t > mu:
                t = mu
            elif t < -mu:
                t = -mu
            p[e] = t
        v[:] = x
        for e in range(E):
            v[src[e]] -= tau * p[e]
            v[dst[e]] += tau * p[e]
        xn = M @ v + q
        for i in range(n):
            xbar[i] = 2.0 * xn[i] - x[i]
        x[:] = xn
        Fn = _tv_objective(b, Phi, x, src, dst, mu)
        if Fn < Fbest:
            Fbest = Fn
            best[:] = x
        if abs(F - Fn) <= tol * max(F, 1e-300):
            converged = True
            F = Fn
            break
        F = Fn
    return best, it, Fbest, converged
