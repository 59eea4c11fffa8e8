"""Sum capacity of the cooperative downlink through its minimax dual.

The capacity under per-antenna power constraints is::

    min_q max_s  logdet(sum_i s_i h_i h_i^H + diag(q)) - sum_i log q_i
    s.t. s >= 0, sum(s) <= N P, q >= q_min, sum(q) <= N

``g(q) = max_s (...)`` is convex.  It is minimized with Kelley's cutting
plane method: each inner maximization is a small max-det program whose
certified gap turns its value into a rigorous upper bound on ``g(q)``, and
Danskin's theorem gives the cut slope
``d g / d q_k = [(sum_i s_i h_i h_i^H + diag q)^{-1}]_kk - 1/q_k``.

Plain Kelley iterations converge slowly beyond a handful of users, so the
query points come first from a barrier path-following Newton method on the
saddle system itself.  The cutting-plane LP still supplies the lower bound,
so the returned bracket is certified whichever way the points were found.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .barrier import Status, solve_maxdet
from .program import MatExpr, MaxDetProgram

log = logging.getLogger(__name__)

Q_MIN = 1e-6


@dataclass
class MinimaxResult:
    """Bracket on the saddle value.  ``value`` is the certified upper end."""

    value: float
    lower: float
    q: np.ndarray
    s: np.ndarray
    iterations: int
    status: Status
    history: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return (self.value - self.lower) / (1.0 + abs(self.value))


def inner_max(H: np.ndarray, P: float, q: np.ndarray, tol: float = 1e-9):
    """Maximize over ``s`` for fixed ``q``.

    Returns ``(upper, value, grad, s)`` where ``value`` is the attained
    objective, ``upper = value + certified gap`` and ``grad`` is a
    subgradient of ``g`` at ``q``.
    """
    H = np.asarray(H, dtype=complex)
    N = H.shape[0]
    q = np.asarray(q, dtype=float)
    # channels whitened by diag(q)^{-1/2}; row i of H is h_i^T, column vector h_i
    Gw = H / np.sqrt(q)[None, :]
    prog = MaxDetProgram()
    s = prog.scalar_var(N)
    prog.add_le(s.sum(), N * P)
    coef = np.einsum("ia,ib->iab", Gw, Gw.conj())
    prog.maximize(logdets=[(1.0, MatExpr(s.idx, coef, np.eye(N)))])
    prog.start = np.full(N, P / 2.0)
    sol = solve_maxdet(prog, tol=tol)
    sv = sol.value(s)
    S = np.einsum("i,ia,ib->ab", sv, H, H.conj())
    M = S + np.diag(q)
    grad = np.real(np.diag(np.linalg.inv(M))) - 1.0 / q
    return sol.objective + sol.abs_gap, sol.objective, grad, sv


def _saddle_derivatives(A, q, s):
    """Value, gradient and Hessian of f(q, s) = logdet(diag q + A diag(s) A^H) - sum log q."""
    M = np.diag(q) + (A * s) @ A.conj().T
    Minv = np.linalg.inv(M)
    sign, ld = np.linalg.slogdet(M)
    f = ld - np.sum(np.log(q))
    MA = Minv @ A
    AMA = A.conj().T @ MA
    gq = np.diag(Minv).real - 1.0 / q
    gs = np.diag(AMA).real
    Hqq = -np.abs(Minv) ** 2 + np.diag(1.0 / q ** 2)
    Hss = -np.abs(AMA) ** 2
    Hqs = -np.abs(MA) ** 2
    return f, gq, gs, Hqq, Hqs, Hss


def _saddle_path(H, P, target, max_newton=60):
    """Approximate saddle point by path-following on the barrier-smoothed problem.

    Minimizes over q and maximizes over s the function
    ``t f(q, s) + phi_q(q) - phi_s(s)`` for increasing t, where phi_q, phi_s
    are log barriers of the two feasible sets.  Returns q, or None if
    Newton's method fails to make progress.
    """
    N = H.shape[0]
    A = H.T
    q = np.full(N, 0.9)
    s = np.full(N, P / 2.0)
    theta = 2.0 * (N + 1)

    def residual(q, s, t):
        f, gq, gs, Hqq, Hqs, Hss = _saddle_derivatives(A, q, s)
        rq_slack = N - q.sum()
        rs_slack = N * P - s.sum()
        gq = t * gq - 1.0 / (q - Q_MIN) + 1.0 / rq_slack
        gs = t * gs + 1.0 / s - 1.0 / rs_slack
        Jqq = t * Hqq + np.diag(1.0 / (q - Q_MIN) ** 2) + 1.0 / rq_slack ** 2
        Jss = t * Hss - np.diag(1.0 / s ** 2) - 1.0 / rs_slack ** 2
        J = np.block([[Jqq, t * Hqs], [t * Hqs.T, Jss]])
        return f, np.concatenate([gq, gs]), J

    def interior(q, s):
        return (np.all(q > Q_MIN) and q.sum() < N and np.all(s > 0) and s.sum() < N * P)

    t = 1.0
    while True:
        for _ in range(max_newton):
            f, r, J = residual(q, s, t)
            try:
                d = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError:
                return None
            rn = np.linalg.norm(r)
            step = 1.0
            while step > 1e-12:
                qn, sn = q + step * d[:N], s + step * d[N:]
                if interior(qn, sn):
                    rn_new = np.linalg.norm(residual(qn, sn, t)[1])
                    if rn_new <= (1.0 - 0.3 * step) * rn:
                        break
                step *= 0.6
            else:
                break
            q, s = qn, sn
            if np.max(np.abs(d[:N]) / q) < 1e-10 and np.max(np.abs(d[N:]) / (s + P)) < 1e-10:
                break
        if theta / t <= target * (1.0 + abs(f)):
            return q
        t *= 10.0
        if t > 1e14:
            return q


def solve_minimax_bc(H, P: float, tol: float = 1e-4, *, max_iter: int = 500,
                     inner_tol: float | None = None) -> MinimaxResult:
    """Certified sum capacity (nats) of the cooperative downlink on channel ``H``.

    The outer loop stops once ``upper - lower <= tol * (1 + |upper|)``; on
    hitting ``max_iter`` the best bracket is returned with status
    MAX_ITERATIONS.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    N = H.shape[0]
    if H.shape != (N, N):
        raise ValueError("channel matrix must be square")
    if P <= 0:
        raise ValueError("power must be positive")
    if inner_tol is None:
        inner_tol = min(1e-9, tol * 1e-3)

    q = _saddle_path(H, P, 1e-3 * tol)
    if q is None:
        q = np.ones(N)
    cuts_A, cuts_b = [], []
    best_upper, best_q, best_s = np.inf, q, None
    lower = -np.inf
    history = []
    bounds = [(Q_MIN, float(N))] * N + [(None, None)]
    c = np.zeros(N + 1)
    c[-1] = 1.0
    A_sum = np.append(np.ones(N), 0.0)[None, :]

    for it in range(1, max_iter + 1):
        upper, val, grad, sv = inner_max(H, P, q, inner_tol)
        if upper < best_upper:
            best_upper, best_q, best_s = upper, q.copy(), sv
        # cut: z >= val + grad @ (q' - q)
        cuts_A.append(np.append(grad, -1.0))
        cuts_b.append(grad @ q - val)
        lp = linprog(c, A_ub=np.vstack([np.array(cuts_A), A_sum]),
                     b_ub=np.append(cuts_b, float(N)), bounds=bounds, method="highs")
        if lp.status != 0:
            log.warning("cutting-plane LP failed: %s", lp.message)
            break
        lower = max(lower, lp.fun)
        history.append((best_upper, lower))
        if best_upper - lower <= tol * (1.0 + abs(best_upper)):
            break
        q = np.clip(lp.x[:N], Q_MIN, None)

    converged = best_upper - lower <= tol * (1.0 + abs(best_upper))
    status = Status.OPTIMAL if converged else Status.MAX_ITERATIONS
    if not converged:
        log.warning("minimax stopped with bracket [%.6g, %.6g]", lower, best_upper)
    return MinimaxResult(best_upper, lower, best_q, best_s, it, status, history)
