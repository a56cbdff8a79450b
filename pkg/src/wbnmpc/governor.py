"""Runtime mixing-weight estimation over a frozen specialist library.

Each control step the Governor fits simplex weights ``w`` so that the Euler
step ``x_{k-1} + dt * sum_i w_i Psi_i(x_{k-1}, u_{k-1})`` best explains the
measured dynamic states over a sliding window, then EMA-smooths the result.
"""
from __future__ import annotations

import logging
import math
import os
import time
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

try:  # pragma: no cover - depends on the build
    from . import _simplex_kernel
except ImportError:  # pragma: no cover
    _simplex_kernel = None

log = logging.getLogger(__name__)

# same switch as the tape backends
USE_KERNEL = _simplex_kernel is not None and os.environ.get("WBNMPC_BACKEND", "").lower() != "python"

DYN = slice(3, 6)  # vx, vy, omega


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def fd_derivative(x_k, x_prev, dt: float) -> np.ndarray:
    """Backward difference quotient with the heading difference wrapped."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    diff = np.asarray(x_k, dtype=np.float64) - np.asarray(x_prev, dtype=np.float64)
    diff[..., 2] = wrap_angle(diff[..., 2])
    return diff / dt


_SUPPORTS: dict[int, np.ndarray] = {}


def _supports(n: int) -> np.ndarray:
    """Boolean masks of all nonempty supports of {0..n-1}.

    Rows are in tie-break order: larger supports first, lexicographic
    within a size.
    """
    if n not in _SUPPORTS:
        rows = []
        for k in range(n, 0, -1):
            for comb in combinations(range(n), k):
                m = np.zeros(n, dtype=bool)
                m[list(comb)] = True
                rows.append(m)
        _SUPPORTS[n] = np.array(rows)
    return _SUPPORTS[n]


def _support_weights_numpy(G, c, Mf, ridge) -> np.ndarray:
    """Batched KKT solves over all supports; columns outside a support get
    an identity row and zero right-hand side.  Singular or non-finite rows
    are re-solved with ``ridge`` on the diagonal."""
    m, n = Mf.shape
    K = np.zeros((m, n + 1, n + 1))
    K[:, :n, :n] = 2 * G * (Mf[:, :, None] * Mf[:, None, :])
    K[:, range(n), range(n)] += 1.0 - Mf
    K[:, :n, n] = Mf
    K[:, n, :n] = Mf
    rhs = np.zeros((m, n + 1))
    rhs[:, :n] = 2 * c * Mf
    rhs[:, n] = 1.0
    try:
        sol = np.linalg.solve(K, rhs[..., None])[..., 0]
        bad = ~np.all(np.isfinite(sol), axis=1)
    except np.linalg.LinAlgError:
        sol = np.empty_like(rhs)
        bad = np.zeros(m, dtype=bool)
        for i in range(m):
            try:
                sol[i] = np.linalg.solve(K[i], rhs[i])
                bad[i] = not np.all(np.isfinite(sol[i]))
            except np.linalg.LinAlgError:
                bad[i] = True
    if bad.any():
        Kr = K[bad].copy()
        Kr[:, range(n), range(n)] += ridge * Mf[bad]
        sol[bad] = np.linalg.solve(Kr, rhs[bad][..., None])[..., 0]
    return sol[:, :n] * Mf


def _support_weights(G, c, M, ridge, use_kernel=None) -> np.ndarray:
    if (USE_KERNEL if use_kernel is None else use_kernel) and G.shape[0] <= 32:
        W = np.empty(M.shape)
        _simplex_kernel.support_weights(np.ascontiguousarray(G), np.ascontiguousarray(c),
                                        M.view(np.uint8), ridge, W)
        return W
    return _support_weights_numpy(G, c, M.astype(np.float64), ridge)


def simplex_lstsq(A: np.ndarray, b: np.ndarray, ridge: float = 1e-10,
                  use_kernel: bool | None = None) -> tuple[np.ndarray, float]:
    """Exact minimiser of ``||A w - b||^2`` over the probability simplex.

    Enumerates every support ``S`` and solves the equality-constrained
    problem restricted to ``S`` (compiled kernel, or one padded numpy
    batch).  The best feasible candidate wins; ties go to the larger
    support, then to the lexicographically smaller one.  Returns ``(w, objective)``.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = A.shape[1]
    if n == 0:
        raise ValueError("need at least one column")
    G = A.T @ A
    c = A.T @ b
    bb = float(b @ b)
    scale = max(float(np.trace(G)) / n, 1e-300)
    if use_kernel is None:
        use_kernel = USE_KERNEL
    W = _support_weights(G, c, _supports(n), 2 * ridge * scale, use_kernel)
    if use_kernel and n <= 32:
        f = np.empty(len(W))
        _simplex_kernel.candidate_objectives(np.ascontiguousarray(G), np.ascontiguousarray(c), bb, W, f)
    else:
        bad = ~np.all(W >= -1e-12, axis=1)
        W = np.clip(W, 0.0, None)
        tot = W.sum(axis=1, keepdims=True)
        bad |= ~(tot[:, 0] > 0)
        W /= np.where(bad[:, None], 1.0, tot)
        f = np.einsum("ij,jk,ik->i", W, G, W) - 2 * W @ c + bb
        f[bad] = np.inf
    fmin = f.min()
    tol = 1e-12 * max(bb, abs(fmin), 1e-300)
    j = int(np.flatnonzero(f <= fmin + tol)[0])  # rows already in tie-break order
    return W[j].copy(), max(float(f[j]), 0.0)


def project_simplex(w) -> np.ndarray:
    w = np.clip(np.asarray(w, dtype=np.float64), 0.0, None)
    s = w.sum()
    return w / s if s > 0 else np.full(len(w), 1.0 / len(w))


@dataclass
class MeasurementWindow:
    """Ring buffer of (x_k, x_{k-1}, u_{k-1}) with cached specialist outputs."""

    capacity: int = 20
    dt: float = 0.02
    entries: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.entries = deque(self.entries, maxlen=self.capacity)

    def __len__(self):
        return len(self.entries)

    def push(self, x_k, x_prev, u_prev, lib) -> None:
        x_k = np.asarray(x_k, dtype=np.float64)
        x_prev = np.asarray(x_prev, dtype=np.float64)
        u_prev = np.asarray(u_prev, dtype=np.float64)
        psi = lib.predict(x_prev, u_prev)  # (N, 3)
        # regression rows are cached so system() is a single stack
        rows = self.dt * psi.T
        rhs = x_k[DYN] - x_prev[DYN]
        self.entries.append((x_k, x_prev, u_prev, psi, rows, rhs))

    def system(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked regression ``A w ~ b`` over dynamic components."""
        A = np.concatenate([e[4] for e in self.entries])
        b = np.concatenate([e[5] for e in self.entries])
        return A, b


def objective(window: MeasurementWindow, w) -> float:
    A, b = window.system()
    r = A @ np.asarray(w) - b
    return float(r @ r)


def solve_weights(window: MeasurementWindow, lib=None) -> np.ndarray:
    """Simplex-constrained least-squares weights for the current window.

    ``lib`` is only needed to size the fallback when the window is empty;
    specialist outputs are cached in the window at push time.
    """
    if len(window) == 0:
        n = len(lib) if lib is not None else 1
        return np.full(n, 1.0 / n)
    A, b = window.system()
    w, _ = simplex_lstsq(A, b)
    return w


@dataclass
class GovernorState:
    w_raw: np.ndarray
    w_smooth: np.ndarray
    alpha: float = 0.1
    window: MeasurementWindow = field(default_factory=MeasurementWindow)

    def __post_init__(self):
        self.w_raw = project_simplex(self.w_raw)
        self.w_smooth = project_simplex(self.w_smooth)
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    @classmethod
    def initial(cls, w0, alpha: float = 0.1, window: int = 20, dt: float = 0.02) -> "GovernorState":
        w0 = np.asarray(w0, dtype=np.float64)
        return cls(w0.copy(), w0.copy(), alpha, MeasurementWindow(window, dt))


def ema_update(state: GovernorState, w_new) -> GovernorState:
    """``w_smooth <- (1 - alpha) * w_smooth + alpha * w_new`` (in place)."""
    w_new = np.asarray(w_new, dtype=np.float64)
    state.w_raw = w_new.copy()
    ws = (1.0 - state.alpha) * state.w_smooth + state.alpha * w_new
    # convex combination of simplex points; renormalise rounding only
    state.w_smooth = ws / ws.sum()
    return state


def governor_step(state: GovernorState, x_k, x_prev, u_prev, lib,
                  clock=time.perf_counter) -> tuple[GovernorState, float]:
    """Push one measurement, re-estimate and smooth the weights.

    Returns the state and the wall-clock latency of the whole update,
    including evaluation of the specialists on the new measurement.
    """
    t0 = clock()
    state.window.push(x_k, x_prev, u_prev, lib)
    if len(state.window) >= 2:
        try:
            w = solve_weights(state.window, lib)
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.warning("governor solve failed (%s); using uniform weights", exc)
            w = np.full(len(state.w_smooth), 1.0 / len(state.w_smooth))
        ema_update(state, w)
    latency = clock() - t0
    return state, latency
