"""Independent reference solutions built on cvxpy (conic solvers, not the barrier code)."""
from __future__ import annotations

import cvxpy as cp
import numpy as np

SOLVER = "CLARABEL"


def _solve(prob):
    prob.solve(solver=SOLVER)
    assert prob.status in ("optimal", "optimal_inaccurate"), prob.status
    return prob.value


def sin_sum_rate(H, P, clusters=None, power="per-antenna", weights=None):
    """SIN surrogate optimum (nats).  ``clusters`` are lists of 0-based base positions."""
    H = np.asarray(H, dtype=complex)
    N = H.shape[0]
    clusters = clusters or [list(range(N))] * N
    Q = [cp.Variable((len(c), len(c)), hermitian=True) for c in clusters]
    R = cp.Variable(N, nonneg=True)
    cons = [q >> 0 for q in Q]
    for i in range(N):
        # h Q h^H: signal of each user at user i
        p = [cp.real(H[i, c] @ q @ H[i, c].conj()) for c, q in zip(clusters, Q)]
        interf = sum(p[j] for j in range(N) if j != i)
        cons.append(R[i] <= cp.log(1 + sum(p)) - interf)
    if power == "per-antenna":
        for b in range(N):
            terms = [cp.real(q[c.index(b), c.index(b)]) for c, q in zip(clusters, Q) if b in c]
            cons.append(sum(terms) <= P)
    else:
        cons.append(sum(cp.real(cp.trace(q)) for q in Q) <= P)
    w = np.ones(N) if weights is None else np.asarray(weights)
    return _solve(cp.Problem(cp.Maximize(w @ R), cons))


def zf_gamma(H, P):
    W2 = np.abs(np.linalg.inv(H)) ** 2
    g = cp.Variable(H.shape[0], nonneg=True)
    val = _solve(cp.Problem(cp.Maximize(cp.sum(cp.log(1 + g))), [W2 @ g <= P]))
    return g.value, val


def real_embedding(A):
    """Real representation [[Re, -Im], [Im, Re]] of a complex matrix."""
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def mimo_sin_sum_rate(channels, P):
    """MIMO SIN optimum through the real embedding of each logdet (halved)."""
    mt = channels[0].shape[1]
    N = len(channels)
    Q = [cp.Variable((mt, mt), hermitian=True) for _ in range(N)]
    R = cp.Variable(N, nonneg=True)
    cons = [q >> 0 for q in Q] + [sum(cp.real(cp.trace(q)) for q in Q) <= P]
    for i, Hi in enumerate(channels):
        m = Hi.shape[0]
        S = np.eye(m) + sum(Hi @ q @ Hi.conj().T for q in Q)
        Sr = cp.bmat([[cp.real(S), -cp.imag(S)], [cp.imag(S), cp.real(S)]])
        interf = sum(cp.real(cp.trace(Hi @ Q[j] @ Hi.conj().T)) for j in range(N) if j != i)
        cons.append(R[i] <= 0.5 * cp.log_det((Sr + Sr.T) / 2) - interf)
    return _solve(cp.Problem(cp.Maximize(cp.sum(R)), cons))
