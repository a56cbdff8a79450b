"""Dense primal active-set QP for the Gauss-Newton subproblem."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class QpResult:
    x: np.ndarray
    active: list
    iterations: int
    converged: bool


def solve_qp(G: np.ndarray, c: np.ndarray, A: np.ndarray, b: np.ndarray,
             x0: np.ndarray | None = None, max_iter: int = 500, tol: float = 1e-12) -> QpResult:
    """Minimise ``0.5 x'Gx + c'x`` subject to ``A x <= b``.

    ``G`` must be positive definite and ``x0`` feasible (default 0, which
    needs ``b >= 0``).  Classical primal active-set iteration with an empty
    initial working set; each equality-constrained subproblem is solved
    through its KKT system.
    """
    n = len(c)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if np.any(A @ x > b + 1e-9):
        raise ValueError("initial point is infeasible")
    W: list[int] = []
    for it in range(1, max_iter + 1):
        g = G @ x + c
        k = len(W)
        if k:
            Aw = A[W]
            K = np.zeros((n + k, n + k))
            K[:n, :n] = G
            K[:n, n:] = Aw.T
            K[n:, :n] = Aw
            rhs = np.concatenate([-g, np.zeros(k)])
            sol = np.linalg.solve(K, rhs)
            p, lam = sol[:n], sol[n:]
        else:
            p = np.linalg.solve(G, -g)
            lam = np.zeros(0)
        if np.max(np.abs(p)) <= tol * max(1.0, np.max(np.abs(x))):
            if k == 0 or lam.min() >= -tol:
                return QpResult(x, W, it, True)
            del W[int(np.argmin(lam))]
            continue
        Ap = A @ p
        slack = b - A @ x
        alpha, block = 1.0, -1
        mask = Ap > tol
        if W:
            mask[W] = False
        if mask.any():
            idx = np.flatnonzero(mask)
            ratios = np.maximum(slack[idx], 0.0) / Ap[idx]
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                alpha, block = float(ratios[j]), int(idx[j])
        x = x + alpha * p
        if block >= 0:
            W.append(block)
    return QpResult(x, W, max_iter, False)
