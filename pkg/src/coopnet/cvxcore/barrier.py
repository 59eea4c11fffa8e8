"""Log-barrier interior-point method for :class:`MaxDetProgram` instances.

Each outer stage centers ``-t * F(x) + phi(x)`` with damped Newton steps and
backtracking, then multiplies ``t`` by ``mu``.  At a central point the
duality gap is ``theta / t`` where ``theta`` is the barrier degree, so the
stopping rule doubles as the optimality certificate.

Newton systems are formed in the real coordinates of the variables.  The
Hessian is kept as diagonal (scalar variables) + one block per PSD variable
+ a list of low-rank factors, and solved densely for small programs or with
the Woodbury identity otherwise.  The inverse of a PSD block is applied in
closed form, ``X -> Y X Y``.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .program import (
    Compiled,
    MatExpr,
    MaxDetProgram,
    hermitian_basis,
    params_gram,
    params_inner,
    params_to_matrix,
)

log = logging.getLogger(__name__)

DENSE_MAX = 1500
CENTERING_EPS = 1e-10
SOLVE_RTOL = 1e-9


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"


class SolverError(RuntimeError):
    """A solve ended without an optimality certificate."""

    def __init__(self, message: str, status: Status | None = None):
        super().__init__(message)
        self.status = status


@dataclass
class Solution:
    """Result of :func:`solve_maxdet`.

    ``gap`` is the certified gap relative to ``1 + |objective|``; ``abs_gap``
    is the absolute one.  ``multipliers`` holds the dual estimates recovered
    from the barrier (``linear``, ``concave`` and one matrix per PSD block in
    ``lmi``).  ``history`` lists the objective at the end of every centering
    stage.
    """

    x: np.ndarray
    objective: float
    gap: float
    abs_gap: float
    iterations: int
    status: Status
    t: float = np.inf
    multipliers: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    compiled: Compiled | None = None

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def value(self, var):
        if hasattr(var, "matrix"):
            return var.matrix(self.x)
        return var.value(self.x)


# ---------------------------------------------------------------------------
# term evaluation
# ---------------------------------------------------------------------------

def _logdet_parts(M: MatExpr, x: np.ndarray, need_hess: bool):
    """Value, gradient (over ``M.idx``) and Hessian factor of ``logdet M(x)``.

    The Hessian of ``logdet`` equals ``-F @ F.T``.  Returns None outside the domain.
    """
    Mx = M.value(x)
    try:
        L = np.linalg.cholesky(Mx)
    except np.linalg.LinAlgError:
        return None
    d = np.diag(L).real
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        return None
    value = 2.0 * np.sum(np.log(d))
    if len(M.idx) == 0:
        return value, np.zeros(0), np.zeros((0, 0))
    m = M.size
    if m == 1:
        K = (M.coef[:, 0, 0] / Mx[0, 0]).real
        return value, K, (K[:, None] if need_hess else None)
    Linv = scipy.linalg.solve_triangular(L, np.eye(m), lower=True)
    K = Linv @ M.coef @ Linv.conj().T
    grad = np.trace(K, axis1=1, axis2=2).real
    F = None
    if need_hess:
        Kf = K.reshape(len(M.idx), m * m)
        F = np.hstack([Kf.real, Kf.imag])
    return value, grad, F


def _scatter(n, idx, F):
    out = np.zeros((n, F.shape[1]))
    np.add.at(out, idx, F)
    return out


@dataclass
class _Hessian:
    n: int
    diag: np.ndarray
    blocks: list          # (idx, r, real, Y, Yinv)
    lowrank: list         # dense (n, k) factors; contribution U @ U.T
    scalar_idx: np.ndarray

    def _U(self):
        if not self.lowrank:
            return np.zeros((self.n, 0))
        return np.hstack(self.lowrank)

    def dense(self) -> np.ndarray:
        H = np.diag(self.diag)
        for idx, r, real, _, Yinv in self.blocks:
            E = hermitian_basis(r, real)
            H[np.ix_(idx, idx)] += params_inner(Yinv @ E @ Yinv, real)
        U = self._U()
        H += U @ U.T
        return H

    def apply_block_inverse(self, B: np.ndarray) -> np.ndarray:
        """Apply ``D^{-1}`` where D is the diagonal + block part."""
        out = np.zeros_like(B)
        s = self.scalar_idx
        out[s] = B[s] / self.diag[s, None]
        for idx, r, real, Y, _ in self.blocks:
            gram = params_gram(r, real)
            X = params_to_matrix((B[idx] / gram[:, None]).T, r, real)
            out[idx] = (params_inner(Y @ X @ Y, real) / gram).T
        return out

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        for idx, r, real, _, Yinv in self.blocks:
            X = params_to_matrix(v[idx], r, real)
            out[idx] += params_inner(Yinv @ X @ Yinv, real)
        U = self._U()
        return out + U @ (U.T @ v)

    def _dense_solve(self, rhs: np.ndarray) -> np.ndarray:
        H = self.dense()
        try:
            cf = scipy.linalg.cho_factor(H, check_finite=False)
            return scipy.linalg.cho_solve(cf, rhs, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            w, V = np.linalg.eigh(H)
            w = np.maximum(w, 1e-14 * max(w.max(initial=0.0), 1.0))
            return V @ ((V.T @ rhs) / w)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Newton direction.  Large systems try the structured solve first and fall
        back to dense Cholesky when its residual shows lost accuracy."""
        structured = self.n > DENSE_MAX and np.all(self.diag[self.scalar_idx] > 0)
        if not structured:
            return self._dense_solve(rhs)
        dx = self._factored_solve(rhs)
        if np.linalg.norm(rhs - self.apply(dx)) <= SOLVE_RTOL * np.linalg.norm(rhs):
            return dx
        log.debug("structured Newton solve inaccurate (n=%d); using dense Cholesky", self.n)
        return self._dense_solve(rhs)

    def _half(self, B: np.ndarray, transpose: bool) -> np.ndarray:
        """Apply ``L^{-1}`` (or ``L^{-T}``) where ``D = L L^T`` is the diagonal + block part.

        In orthonormal coordinates a block of D is ``X -> Y^-1 X Y^-1``, whose
        inverse square root is ``X -> Y^(1/2) X Y^(1/2)``.  The square root is
        taken from ``Y^-1`` so that ``L L^T`` matches :meth:`apply` to roundoff.
        """
        out = np.zeros_like(B)
        s = self.scalar_idx
        out[s] = B[s] / np.sqrt(self.diag[s, None])
        for idx, r, real, _, Yinv in self.blocks:
            gram = params_gram(r, real)
            # factor from Yinv itself so that L L^T is exactly the D used by apply()
            w, V = np.linalg.eigh(Yinv)
            Yh = (V / np.sqrt(w)) @ V.conj().T
            scale = np.sqrt(gram) if transpose else gram
            X = params_to_matrix((B[idx] / scale[:, None]).T, r, real)
            out[idx] = (params_inner(Yh @ X @ Yh, real) / (gram if transpose else np.sqrt(gram))).T
        return out

    def _factored_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(L L^T + U U^T) dx = rhs`` as ``L^-T (I + V V^T)^-1 L^-1 rhs``.

        With the thin SVD ``V = L^-1 U = Q S W^T`` the middle inverse is
        ``I - Q diag(s^2 / (1 + s^2)) Q^T``.  Accuracy degrades once the
        gradient nearly cancels against huge rank-one barrier terms, which is
        why :meth:`solve` checks the residual.
        """
        U = self._U()
        if U.shape[1]:
            Q, R = np.linalg.qr(self._half(U, False))
            E, sv, _ = np.linalg.svd(R)
            Q = Q @ E
            w = sv ** 2 / (1.0 + sv ** 2)

        def inverse(r):
            z = self._half(r[:, None], False)[:, 0]
            if U.shape[1]:
                z = z - Q @ ((Q.T @ z) * w)
            return self._half(z[:, None], True)[:, 0]

        dx = inverse(rhs)
        for _ in range(3):
            res = rhs - self.apply(dx)
            if np.linalg.norm(res) <= 1e-3 * SOLVE_RTOL * np.linalg.norm(rhs):
                break
            dx += inverse(res)
        return dx


class _Barrier:
    """Evaluates ``f_t(x) = -t F(x) + phi(x)`` with gradient and Hessian."""

    def __init__(self, cp: Compiled):
        self.cp = cp
        G = cp.G
        nnz = (G != 0).sum(axis=1)
        is_scalar = np.zeros(cp.n, dtype=bool)
        is_scalar[cp.scalar_idx] = True
        single = np.zeros(len(G), dtype=bool)
        single_col = np.zeros(len(G), dtype=np.intp)
        for i in np.flatnonzero(nnz == 1):
            j = int(np.flatnonzero(G[i])[0])
            if is_scalar[j]:
                single[i] = True
                single_col[i] = j
        self.single = single
        self.single_col = single_col[single]
        self.single_coef = G[single, single_col[single]] if single.any() else np.zeros(0)
        self.G_multi = G[~single]

    def slacks(self, x):
        """All constraint slacks, or None outside the domain."""
        cp = self.cp
        s_lin = cp.h - cp.G @ x
        if np.any(s_lin <= 0):
            return None
        s_conc = []
        for M, e, e0 in cp.concave:
            parts = _logdet_parts(M, x, False)
            if parts is None:
                return None
            s_conc.append(parts[0] + e @ x + e0)
        s_conc = np.array(s_conc)
        if np.any(s_conc <= 0):
            return None
        return s_lin, s_conc

    def evaluate(self, x, t, need_hess=True):
        cp = self.cp
        n = cp.n
        s_lin = cp.h - cp.G @ x
        if np.any(s_lin <= 0):
            return None
        value = -np.sum(np.log(s_lin))
        grad = cp.G.T @ (1.0 / s_lin)
        diag = np.zeros(n)
        lowrank = []
        if need_hess:
            sl = s_lin[self.single]
            np.add.at(diag, self.single_col, (self.single_coef / sl) ** 2)
            if len(self.G_multi):
                lowrank.append(self.G_multi.T / s_lin[~self.single])

        blocks = []
        for idx, r, real in cp.blocks:
            Y = params_to_matrix(x[idx], r, real)
            try:
                L = np.linalg.cholesky(Y)
            except np.linalg.LinAlgError:
                return None
            d = np.diag(L).real
            if np.any(d <= 0):
                return None
            value -= 2.0 * np.sum(np.log(d))
            Linv = scipy.linalg.solve_triangular(L, np.eye(r), lower=True)
            Yinv = Linv.conj().T @ Linv
            grad[idx] -= params_inner(Yinv, real)
            if need_hess:
                blocks.append((idx, r, real, Y, Yinv))

        for M in cp.extra_lmis:
            parts = _logdet_parts(M, x, need_hess)
            if parts is None:
                return None
            v, g, F = parts
            value -= v
            np.add.at(grad, M.idx, -g)
            if need_hess and F.size:
                lowrank.append(_scatter(n, M.idx, F))

        for M, e, e0 in cp.concave:
            parts = _logdet_parts(M, x, need_hess)
            if parts is None:
                return None
            v, g, F = parts
            s = v + e @ x + e0
            if s <= 0:
                return None
            value -= np.log(s)
            gs = e.copy()
            np.add.at(gs, M.idx, g)
            grad -= gs / s
            if need_hess:
                lowrank.append((gs / s)[:, None])
                if F.size:
                    lowrank.append(_scatter(n, M.idx, F) / np.sqrt(s))

        if t > 0:
            value -= t * (cp.c @ x + cp.c0)
            grad -= t * cp.c
            for w, M in cp.obj_terms:
                parts = _logdet_parts(M, x, need_hess)
                if parts is None:
                    return None
                v, g, F = parts
                value -= t * w * v
                np.add.at(grad, M.idx, -t * w * g)
                if need_hess and F.size and w > 0:
                    lowrank.append(_scatter(n, M.idx, F) * np.sqrt(t * w))
        else:
            if not np.isfinite(cp.objective(x)):
                return None

        if not np.isfinite(value):
            return None
        if not need_hess:
            return value, grad, None
        return value, grad, _Hessian(n, diag, blocks, lowrank, cp.scalar_idx)

    def multipliers(self, x, t):
        cp = self.cp
        s_lin, s_conc = self.slacks(x)
        lmi = []
        for idx, r, real in cp.blocks:
            Y = params_to_matrix(x[idx], r, real)
            lmi.append(np.linalg.inv(Y) / t)
        return {"linear": 1.0 / (t * s_lin), "concave": 1.0 / (t * s_conc), "lmi": lmi}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _polish(bar: _Barrier, x, t, g, dx, steps=4):
    """Full Newton steps judged by gradient norm, for when f_t is too large to compare."""
    gn = np.linalg.norm(g)
    for _ in range(steps):
        res = bar.evaluate(x + dx, t)
        if res is None:
            break
        _, gx, Hx = res
        gxn = np.linalg.norm(gx)
        if not gxn < gn:
            break
        x, g, gn = x + dx, gx, gxn
        dx = Hx.solve(-g)
    return x


def _center(bar: _Barrier, x, t, max_newton, alpha, beta, stop=None):
    """Damped Newton centering.  Returns (x, steps, converged, stopped)."""
    for k in range(max_newton):
        val, g, H = bar.evaluate(x, t)
        dx = H.solve(-g)
        lam2 = float(-g @ dx)
        # second test: decrement below the roundoff floor of f_t itself
        if not lam2 > 0:
            if np.linalg.norm(g) == 0:
                return x, k, True, False
            raise FloatingPointError("Newton system solve lost accuracy (nonpositive decrement)")
        if lam2 / 2.0 <= CENTERING_EPS:
            return x, k, True, False
        if lam2 <= 1e-13 * abs(val):
            return _polish(bar, x, t, g, dx), k, True, False
        slope = g @ dx
        s = 1.0
        while True:
            xn = x + s * dx
            res = bar.evaluate(xn, t, need_hess=False)
            if res is not None and res[0] <= val + alpha * s * slope:
                break
            s *= beta
            if s < 1e-14:
                # roundoff floor: Newton decrement is already tiny relative to f
                ok = lam2 <= 1e-8 * max(1.0, abs(val))
                return x, k + 1, ok, False
        x = xn
        if stop is not None and stop(x, in_stage=True):
            return x, k + 1, True, True
    return x, max_newton, False, False


def _run(cp: Compiled, x, tol, max_newton, mu, alpha, beta, t0, stop=None):
    bar = _Barrier(cp)
    theta = cp.barrier_degree
    t = t0
    total = 0
    history = []
    while True:
        x, steps, converged, stopped = _center(bar, x, t, max_newton, alpha, beta, stop)
        total += steps
        F = cp.objective(x)
        history.append(F)
        abs_gap = theta / t
        if stopped or (stop is not None and stop(x, in_stage=False)):
            return x, t, total, history, Status.OPTIMAL, bar
        if not converged:
            log.warning("Newton centering did not converge at t=%.3g", t)
            return x, t, total, history, Status.MAX_ITERATIONS, bar
        if abs_gap <= tol * (1.0 + abs(F)):
            return x, t, total, history, Status.OPTIMAL, bar
        t *= mu


def _strictly_feasible(cp: Compiled, x) -> bool:
    return _Barrier(cp).evaluate(x, 0.0, need_hess=False) is not None


def _phase_one(cp: Compiled, x0, max_newton, mu, alpha, beta):
    """Find a strictly feasible point by minimizing a common slack shift.

    Returns the point, or None when the program has no strictly feasible point.
    """
    n = cp.n
    x0 = np.asarray(x0, dtype=float)
    # structured PSD blocks become general matrix constraints Y + sigma*I
    lmis = []
    for idx, r, real in cp.blocks:
        E = hermitian_basis(r, real)
        coef = np.concatenate([E, np.eye(r)[None]])
        lmis.append(MatExpr(np.append(idx, n), coef, np.zeros((r, r))))
    for M in cp.extra_lmis:
        lmis.append(MatExpr(np.append(M.idx, n), np.concatenate([M.coef, np.eye(M.size)[None]]),
                            M.const))
    concave = [(M, np.append(e, 1.0), e0) for M, e, e0 in cp.concave]

    # initial shift
    viol = [0.0]
    s_lin = cp.h - cp.G @ x0
    viol.append(-s_lin.min(initial=np.inf))
    for idx, r, real in cp.blocks:
        viol.append(-np.linalg.eigvalsh(params_to_matrix(x0[idx], r, real)).min())
    for M in cp.extra_lmis:
        viol.append(-np.linalg.eigvalsh(M.value(x0)).min())
    for M, e, e0 in cp.concave:
        parts = _logdet_parts(M, x0, False)
        if parts is None:
            return None
        viol.append(-(parts[0] + e @ x0 + e0))
    sigma0 = max(viol) + 1.0

    G = np.hstack([cp.G, -np.ones((len(cp.h), 1))])
    bound = np.zeros((1, n + 1))
    bound[0, n] = -1.0
    c = np.zeros(n + 1)
    c[n] = -1.0
    aux = Compiled(
        n=n + 1, c=c, c0=0.0,
        G=np.vstack([G, bound]), h=np.append(cp.h, 1.0),
        obj_terms=[], concave=concave, blocks=[],
        scalar_idx=np.append(cp.scalar_idx, n).astype(np.intp),
        extra_lmis=lmis,
    )

    def stop(z, in_stage):
        return z[n] < (-1e-6 if in_stage else 0.0)

    z0 = np.append(x0, sigma0)
    z, *_ = _run(aux, z0, 1e-8, max_newton, mu, alpha, beta, 1.0, stop=stop)
    if z[n] >= 0:
        return None
    x = z[:n]
    return x if _strictly_feasible(cp, x) else None


def solve_maxdet(prog, tol: float = 1e-6, *, x0=None, max_newton: int = 200,
                 mu: float = 10.0, alpha: float = 0.3, beta: float = 0.6,
                 t0: float = 1.0) -> Solution:
    """Solve a determinant-maximization program to relative accuracy ``tol``.

    Parameters
    ----------
    prog : MaxDetProgram or Compiled
        Program to solve.  ``prog.start`` (or ``x0``) is used as the initial
        point when strictly feasible; otherwise a phase-I problem is solved.
    tol : float
        Target for ``abs_gap / (1 + |objective|)``.

    Returns
    -------
    Solution
        ``status`` is OPTIMAL when the certificate meets ``tol``,
        MAX_ITERATIONS (with the last iterate) when a Newton stage stalls,
        and INFEASIBLE when phase I fails.
    """
    if isinstance(prog, MaxDetProgram):
        if x0 is None:
            x0 = prog.start
        cp = prog.compile()
    else:
        cp = prog
    x = np.zeros(cp.n) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (cp.n,):
        raise ValueError(f"starting point has shape {x.shape}, expected ({cp.n},)")

    if not _strictly_feasible(cp, x):
        log.debug("starting point not strictly feasible; running phase I")
        x = _phase_one(cp, x, max_newton, mu, alpha, beta)
        if x is None:
            return Solution(np.zeros(cp.n), -np.inf, np.inf, np.inf, 0,
                            Status.INFEASIBLE, compiled=cp)

    x, t, iters, history, status, bar = _run(cp, x, tol, max_newton, mu, alpha, beta, t0)
    F = cp.objective(x)
    abs_gap = cp.barrier_degree / t
    return Solution(
        x=x, objective=F, gap=abs_gap / (1.0 + abs(F)), abs_gap=abs_gap,
        iterations=iters, status=status, t=t,
        multipliers=bar.multipliers(x, t), history=history, compiled=cp,
    )
