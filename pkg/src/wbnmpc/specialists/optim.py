"""First-order and quasi-Newton optimisers over flat parameter vectors."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class Adam:
    """Adam with bias correction, updating ``theta`` in place."""

    def __init__(self, theta: np.ndarray, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.theta = theta
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros_like(theta)
        self.v = np.zeros_like(theta)
        self.t = 0

    def step(self, grad: np.ndarray) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1 - b1) * grad
        self.v *= b2
        self.v += (1 - b2) * grad * grad
        mhat = self.m / (1 - b1**self.t)
        vhat = self.v / (1 - b2**self.t)
        self.theta -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class LineSearchError(RuntimeError):
    pass


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic interpolating (a, fa, ga), (b, fb, gb), or None."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def strong_wolfe(phi, phi0: float, dphi0: float, alpha0: float = 1.0, c1: float = 1e-4,
                 c2: float = 0.9, alpha_max: float = 1e10, max_iter: int = 30):
    """Step length satisfying the strong Wolfe conditions.

    ``phi(alpha)`` returns ``(value, directional_derivative, payload)``.
    Returns ``(alpha, value, payload)``; raises :class:`LineSearchError`.
    """
    if dphi0 >= 0:
        raise LineSearchError("not a descent direction")

    def zoom(lo, flo, glo, hi, fhi, ghi):
        for _ in range(max_iter):
            a = _cubic_min(lo, flo, glo, hi, fhi, ghi)
            lo_b, hi_b = min(lo, hi), max(lo, hi)
            span = hi_b - lo_b
            if a is None or not (lo_b + 0.1 * span <= a <= hi_b - 0.1 * span):
                a = 0.5 * (lo + hi)
            fa, ga, pay = phi(a)
            if fa > phi0 + c1 * a * dphi0 or fa >= flo:
                hi, fhi, ghi = a, fa, ga
            else:
                if abs(ga) <= -c2 * dphi0:
                    return a, fa, pay
                if ga * (hi - lo) >= 0:
                    hi, fhi, ghi = lo, flo, glo
                lo, flo, glo = a, fa, ga
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        raise LineSearchError("zoom failed")

    a_prev, f_prev, g_prev = 0.0, phi0, dphi0
    a = alpha0
    for i in range(max_iter):
        fa, ga, pay = phi(a)
        if not math.isfinite(fa):
            # shrink into the finite region
            a = 0.5 * (a_prev + a)
            continue
        if fa > phi0 + c1 * a * dphi0 or (i > 0 and fa >= f_prev):
            return zoom(a_prev, f_prev, g_prev, a, fa, ga)
        if abs(ga) <= -c2 * dphi0:
            return a, fa, pay
        if ga >= 0:
            return zoom(a, fa, ga, a_prev, f_prev, g_prev)
        a_prev, f_prev, g_prev = a, fa, ga
        a = min(2.0 * a, alpha_max)
    raise LineSearchError("bracketing failed")


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    iterations: int
    message: str


def lbfgs(fun, x0: np.ndarray, memory: int = 10, max_iter: int = 500,
          gtol: float = 1e-12, ftol: float = 0.0, callback=None) -> LbfgsResult:
    """Limited-memory BFGS with two-loop recursion and strong-Wolfe search.

    ``fun(x) -> (f, grad)``.  On line-search failure the best iterate so far
    is returned.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    if not math.isfinite(f):
        raise FloatingPointError("non-finite objective at the initial point")
    S: deque = deque(maxlen=memory)
    Y: deque = deque(maxlen=memory)
    RHO: deque = deque(maxlen=memory)
    msg = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= gtol:
            msg = "gtol"
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(S), reversed(Y), reversed(RHO)):
            a = rho * s.dot(q)
            alphas.append(a)
            q -= a * y
        if S:
            gamma = S[-1].dot(Y[-1]) / Y[-1].dot(Y[-1])
        else:
            gamma = 1.0 / max(1.0, np.linalg.norm(g))
        r = gamma * q
        for s, y, rho, a in zip(S, Y, RHO, reversed(alphas)):
            b = rho * y.dot(r)
            r += s * (a - b)
        d = -r
        dphi0 = g.dot(d)
        if dphi0 >= 0:
            S.clear(); Y.clear(); RHO.clear()
            d = -g
            dphi0 = g.dot(d)

        def phi(alpha):
            xn = x + alpha * d
            fn, gn = fun(xn)
            return fn, gn.dot(d), (xn, gn)

        try:
            alpha, f_new, (x_new, g_new) = strong_wolfe(phi, f, dphi0, alpha0=1.0)
        except LineSearchError as exc:
            log.debug("L-BFGS line search failed at iteration %d: %s", it, exc)
            msg = "line_search_failed"
            break
        s = x_new - x
        y = g_new - g
        sy = s.dot(y)
        if sy > 1e-20 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            RHO.append(1.0 / sy)
        f_old = f
        x, f, g = x_new, f_new, g_new
        if callback is not None:
            callback(it, x, f)
        if ftol > 0 and (f_old - f) <= ftol * max(abs(f_old), abs(f), 1e-300):
            msg = "ftol"
            break
    return LbfgsResult(x, float(f), it, msg)
