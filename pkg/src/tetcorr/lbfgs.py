"""Limited-memory BFGS minimizer with a strong Wolfe line search.

Works on arrays of any shape (inner products flatten). The objective
callable returns (value, gradient); every accepted iterate satisfies the
sufficient-decrease condition, so the sequence of accepted values is
monotone non-increasing. Deterministic: no randomness, fixed evaluation
order.
"""

from dataclasses import dataclass

import numpy as np

GRAD_TOL = "grad_tol"
STEP_TOL = "step_tol"
MAX_ITERS = "max_iters"


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    n_iters: int
    n_evals: int
    status: str


def _vdot(a, b):
    return float(np.dot(a.ravel(), b.ravel()))


class _CountedFun:
    def __init__(self, fun):
        self.fun = fun
        self.n = 0

    def __call__(self, x):
        self.n += 1
        f, g = self.fun(x)
        return float(f), g


def _zoom(fun, x, d, phi0, dphi0, a_lo, phi_lo, g_lo, a_hi, c1, c2, max_iters=40):
    """Bisection zoom; returns (a, f, g) meeting strong Wolfe, or the best
    sufficient-decrease point seen, or None."""
    fallback = (a_lo, phi_lo, g_lo) if a_lo > 0.0 else None
    for _ in range(max_iters):
        a = 0.5 * (a_lo + a_hi)
        if a <= 0.0 or abs(a_hi - a_lo) <= 1e-16 * max(1.0, abs(a_lo)):
            break
        f, g = fun(x + a * d)
        if not np.isfinite(f) or f > phi0 + c1 * a * dphi0 or f >= phi_lo:
            a_hi = a
            continue
        dphi = _vdot(g, d)
        if abs(dphi) <= -c2 * dphi0:
            return a, f, g
        if dphi * (a_hi - a_lo) >= 0.0:
            a_hi = a_lo
        a_lo, phi_lo, g_lo = a, f, g
        fallback = (a_lo, phi_lo, g_lo)
    return fallback


def _wolfe_search(fun, x, f0, g0, d, c1, c2, alpha0, max_expand=20):
    """Strong Wolfe line search (bracket + zoom along direction d)."""
    phi0 = f0
    dphi0 = _vdot(g0, d)
    if dphi0 >= 0.0:
        return None
    a_prev, phi_prev, g_prev = 0.0, phi0, g0
    a = alpha0
    for i in range(max_expand):
        f, g = fun(x + a * d)
        if not np.isfinite(f):
            return _zoom(fun, x, d, phi0, dphi0, a_prev, phi_prev, g_prev, a, c1, c2)
        if f > phi0 + c1 * a * dphi0 or (i > 0 and f >= phi_prev):
            return _zoom(fun, x, d, phi0, dphi0, a_prev, phi_prev, g_prev, a, c1, c2)
        dphi = _vdot(g, d)
        if abs(dphi) <= -c2 * dphi0:
            return a, f, g
        if dphi >= 0.0:
            return _zoom(fun, x, d, phi0, dphi0, a, f, g, a_prev, c1, c2)
        a_prev, phi_prev, g_prev = a, f, g
        a *= 2.0
    return None


def minimize_lbfgs(fun, x0, grad_tol=1e-6, max_iters=200, memory=10,
                   c1=1e-4, c2=0.9):
    """Minimize fun(x) -> (value, grad) starting from x0.

    Returns an LbfgsResult whose status is one of 'grad_tol' (gradient norm
    below tolerance), 'step_tol' (line search could not find further
    decrease), or 'max_iters'.
    """
    fun = _CountedFun(fun)
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    s_hist, y_hist, rho_hist = [], [], []
    status = MAX_ITERS
    it = 0
    for it in range(max_iters):
        gnorm = np.linalg.norm(g.ravel())
        if gnorm <= grad_tol:
            status = GRAD_TOL
            break
        d = _two_loop(g, s_hist, y_hist, rho_hist)
        alpha0 = min(1.0, 1.0 / gnorm) if not s_hist else 1.0
        hit = _wolfe_search(fun, x, f, g, d, c1, c2, alpha0)
        if hit is None:
            # Steepest descent retry before giving up on this iterate.
            d = -g
            hit = _wolfe_search(fun, x, f, g, d, c1, c2, min(1.0, 1.0 / gnorm))
        if hit is None:
            status = STEP_TOL
            break
        a, f_new, g_new = hit
        if not f_new < f:
            status = STEP_TOL
            break
        s = a * d
        y = g_new - g
        ys = _vdot(y, s)
        if ys > 1e-10 * np.linalg.norm(y.ravel()) * np.linalg.norm(s.ravel()):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / ys)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
        x = x + s
        f, g = f_new, g_new
    else:
        it = max_iters
    if status == MAX_ITERS and np.linalg.norm(g.ravel()) <= grad_tol:
        status = GRAD_TOL
    return LbfgsResult(x, f, g, it, fun.n, status)


def _two_loop(g, s_hist, y_hist, rho_hist):
    """Two-loop recursion: approximate -H g from stored curvature pairs."""
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        a = rho * _vdot(s, q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        y = y_hist[-1]
        gamma = _vdot(s_hist[-1], y) / max(_vdot(y, y), 1e-300)
        q *= gamma
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
        b = rho * _vdot(y, q)
        q += (a - b) * s
    return -q
