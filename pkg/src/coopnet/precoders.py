"""Transmission schemes for the cooperative downlink.

Every scheme is a pure function of the channel, the per-base power ``P`` and
its configuration.  Optimization runs in nats; returned rates use ``unit``.

Convention: the signal of user k reaches user i with power ``h_i Q_k h_i^H``
where ``h_i`` is row i of the channel matrix (``y_i = h_i x + z_i``).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .covariance import (
    Cluster,
    CovarianceSet,
    ValidationError,
    check_clusters,
    check_psd,
    full_clusters,
)
from .cvxcore import (
    LinExpr,
    MatExpr,
    MaxDetProgram,
    Solution,
    SolverError,
    Status,
    solve_maxdet,
    solve_minimax_bc,
)
from .netmodel import _entries, convert, exact_rates, wrap_distance

__all__ = [
    "Cluster",
    "CovarianceSet",
    "MimoSinResult",
    "SingularChannelError",
    "SinResult",
    "Utility",
    "UtilityKind",
    "ZFResult",
    "closest_base_clusters",
    "covariance_to_precoder",
    "dpc_sum_rate",
    "mimo_exact_rates",
    "sin_mimo_precode",
    "sin_precode",
    "zf_covariances",
    "zf_rates",
]

ZF_COND_LIMIT = 1e12
PF_EPS = 1e-9


class SingularChannelError(ValueError):
    """Channel matrix too ill-conditioned for zero-forcing."""

    def __init__(self, cond: float):
        super().__init__(f"channel condition number {cond:.3e} exceeds the zero-forcing limit")
        self.cond = cond


class UtilityKind(enum.Enum):
    SUM_RATE = "SumRate"
    WEIGHTED_SUM_RATE = "WeightedSumRate"
    PROPORTIONAL_FAIR = "ProportionalFair"


@dataclass(frozen=True)
class Utility:
    """Concave, coordinatewise nondecreasing utility of the user rates."""

    kind: UtilityKind = UtilityKind.SUM_RATE
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind is UtilityKind.WEIGHTED_SUM_RATE:
            if self.weights is None or any(w < 0 for w in self.weights):
                raise ValueError("weighted sum rate needs nonnegative weights")

    @classmethod
    def sum_rate(cls):
        return cls()

    @classmethod
    def weighted(cls, weights):
        return cls(UtilityKind.WEIGHTED_SUM_RATE, tuple(float(w) for w in weights))

    @classmethod
    def proportional_fair(cls):
        return cls(UtilityKind.PROPORTIONAL_FAIR)

    def __call__(self, rates) -> float:
        r = np.asarray(rates, dtype=float)
        if self.kind is UtilityKind.SUM_RATE:
            return float(r.sum())
        if self.kind is UtilityKind.WEIGHTED_SUM_RATE:
            return float(np.dot(self.weights, r))
        return float(np.sum(np.log(r + PF_EPS)))

    def _objective(self, prog: MaxDetProgram, R, live, n_users: int):
        """Install ``U`` over the rate variables ``R`` of the users ``live``."""
        if self.kind is UtilityKind.PROPORTIONAL_FAIR:
            prog.maximize(logdets=[(1.0, MatExpr.from_lin(R[k] + PF_EPS)) for k in range(len(R))])
            return
        w = np.ones(n_users) if self.weights is None else np.asarray(self.weights, dtype=float)
        if len(w) != n_users:
            raise ValueError("one weight per user is required")
        prog.maximize(linear=R.dot(w[list(live)]))


# ---------------------------------------------------------------------------
# clusters and precoders
# ---------------------------------------------------------------------------

def closest_base_clusters(n_bases: int, size: int) -> list[Cluster]:
    """Each user served by the ``size`` nearest bases (its own plus neighbours each side)."""
    if size < 1 or size > n_bases:
        raise ValidationError(f"cluster size {size} outside 1..{n_bases}")
    if size % 2 == 0:
        raise ValidationError(f"cluster size must be odd, got {size}")
    half = (size - 1) // 2
    clusters = []
    for i in range(1, n_bases + 1):
        bases = sorted(((i - 1 + k) % n_bases) + 1 for k in range(-half, half + 1))
        assert all(wrap_distance(i, j, n_bases) <= half for j in bases)
        clusters.append(Cluster(i, tuple(bases)))
    return clusters


def covariance_to_precoder(Q) -> np.ndarray:
    """Precoder ``G = V D^(1/2)`` with ``G G^H = Q``; inactive streams are dropped."""
    Q = check_psd(Q)
    w, V = np.linalg.eigh((Q + Q.conj().T) / 2)
    tr = max(np.trace(Q).real, 0.0)
    keep = w >= 1e-10 * tr if tr > 0 else np.zeros(len(w), dtype=bool)
    keep = keep[::-1]
    w, V = w[::-1], V[:, ::-1]
    return V[:, keep] * np.sqrt(w[keep])


# ---------------------------------------------------------------------------
# DPC
# ---------------------------------------------------------------------------

def dpc_sum_rate(H, P: float, tol: float = 1e-4, unit: str = "bits") -> float:
    """Certified sum capacity of the fully cooperative network (upper end of the bracket)."""
    res = solve_minimax_bc(_entries(H), P, tol)
    if res.status is not Status.OPTIMAL:
        raise SolverError(f"minimax bracket [{res.lower:.6g}, {res.value:.6g}] not closed",
                          res.status)
    return convert(res.value, unit)


# ---------------------------------------------------------------------------
# ZF
# ---------------------------------------------------------------------------

@dataclass
class ZFResult:
    gamma: np.ndarray
    rates: np.ndarray
    W: np.ndarray
    solution: Solution = field(repr=False)

    @property
    def base_powers(self) -> np.ndarray:
        return (np.abs(self.W) ** 2) @ self.gamma


def zf_rates(H, P: float, tol: float = 1e-6, unit: str = "bits",
             cond_limit: float = ZF_COND_LIMIT) -> ZFResult:
    """Zero-forcing with ``W = H^-1`` and optimal per-user gains under per-base power ``P``."""
    Hm = _entries(H)
    N = Hm.shape[0]
    if P <= 0:
        raise ValueError("power must be positive")
    cond = np.linalg.cond(Hm)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularChannelError(cond)
    W = np.linalg.inv(Hm)
    W2 = np.abs(W) ** 2

    prog = MaxDetProgram()
    g = prog.scalar_var(N, name="gamma")
    for k in range(N):
        prog.add_le(g.dot(W2[k]), P)
    prog.maximize(logdets=[(1.0, MatExpr.from_lin(g[i] + 1.0)) for i in range(N)])
    prog.start = np.full(N, P / (2.0 * W2.sum(axis=1).max()))
    sol = solve_maxdet(prog, tol)
    if not sol.optimal:
        raise SolverError("zero-forcing power allocation did not converge", sol.status)
    gamma = np.maximum(sol.value(g), 0.0)
    return ZFResult(gamma, convert(np.log1p(gamma), unit), W, sol)


def zf_covariances(zf: ZFResult) -> CovarianceSet:
    """Full-coordination covariances ``gamma_i w_i w_i^H`` realising the ZF rates."""
    W = zf.W
    mats = [zf.gamma[i] * np.outer(W[:, i], W[:, i].conj()) for i in range(W.shape[1])]
    return CovarianceSet.full_coordination(mats)


# ---------------------------------------------------------------------------
# SIN, single-antenna users
# ---------------------------------------------------------------------------

@dataclass
class SinResult:
    covariances: CovarianceSet
    tilde_rates: np.ndarray
    exact_rates: np.ndarray
    utility_value: float
    solution: Solution = field(repr=False)


def _null_basis(dim: int, vectors) -> np.ndarray | None:
    """Orthonormal basis of the complement of span(vectors), or None for no restriction."""
    vectors = [v for v in vectors if np.linalg.norm(v) > 0]
    if not vectors:
        return None
    V = np.array(vectors).conj()
    return scipy.linalg.null_space(V)


def _start_point(n_vars, Qv, R, live, conc_parts, power_rows, P):
    """Scaled identity covariances with surrogate rates at half their bound."""
    x = np.zeros(n_vars)
    eps = 0.5 * P
    for _ in range(80):
        for v in Qv:
            if v is not None:
                x[v.idx[:v.r]] = eps
        if all(row.value(x) < P for row in power_rows):
            f = np.array([np.log1p(tot.value(x)) - itf.value(x) for tot, itf in conc_parts])
            if np.all(f > 0):
                x[R.idx] = f / 2.0
                return x
        eps /= 2.0
    return None


def _silent_users(Hm, clusters, pos):
    """Users that cannot receive anything: no channel from their own cluster,
    or every direction of their cluster is needed to null toward silent users."""
    N = Hm.shape[0]
    silent = {i for i in range(N) if not np.any(Hm[i, pos[i]])}
    bases = {}
    while True:
        grew = False
        for j in range(N):
            if j in silent:
                continue
            B = _null_basis(clusters[j].size, [Hm[i, pos[j]].conj() for i in sorted(silent)])
            if B is not None and B.shape[1] == 0:
                silent.add(j)
                grew = True
            bases[j] = B
        if not grew:
            return sorted(silent), bases


def sin_precode(H, P: float, clusters=None, utility: Utility | None = None,
                tol: float = 1e-6, unit: str = "bits", power: str = "per-antenna") -> SinResult:
    """Soft interference nulling covariances for single-antenna users.

    Maximizes ``U(R~)`` over covariances restricted to each user's cluster,
    where ``R~_i = log(1 + total received power) - interference power``.
    ``clusters=None`` means full coordination.  ``power`` selects per-base
    constraints (``"per-antenna"``) or one pooled constraint (``"sum"``).

    A user with no channel from its own cluster gets zero rate.  Since
    ``R~ >= 0`` then forces its interference to vanish, the other users'
    covariances are restricted to the orthogonal complement of its channel.
    """
    Hm = _entries(H)
    N = Hm.shape[0]
    if P <= 0:
        raise ValueError("power must be positive")
    if power not in ("per-antenna", "sum"):
        raise ValueError(f"unknown power constraint {power!r}")
    utility = utility or Utility.sum_rate()
    clusters = check_clusters(full_clusters(N) if clusters is None else clusters, N)
    pos = [c.positions() for c in clusters]
    silent, bases = _silent_users(Hm, clusters, pos)
    live = [i for i in range(N) if i not in silent]
    if not live:
        raise ValidationError("no user has a nonzero channel from its cluster")

    prog = MaxDetProgram()
    Qv = [None if j in silent else
          prog.psd_var(clusters[j].size, basis=bases[j], name=f"Q{clusters[j].user}")
          for j in range(N)]
    R = prog.scalar_var(len(live), name="R")

    conc_parts = []
    for k, i in enumerate(live):
        # p[j]: power of user j's signal at user i
        p = [Qv[j].quad(Hm[i, pos[j]].conj()) if Qv[j] is not None else LinExpr()
             for j in range(N)]
        total = sum(p, LinExpr())
        interf = total - p[i]
        prog.add_logdet_ge(MatExpr.from_lin(total + 1.0), -interf - R[k])
        conc_parts.append((total, interf))

    power_rows = []
    if power == "per-antenna":
        for b in range(N):
            terms = [Qv[j].diag_entry(int(np.flatnonzero(pos[j] == b)[0]))
                     for j in range(N) if Qv[j] is not None and b in pos[j]]
            if terms:
                power_rows.append(sum(terms, LinExpr()))
    else:
        power_rows.append(sum((v.trace() for v in Qv if v is not None), LinExpr()))
    for row in power_rows:
        prog.add_le(row, P)

    utility._objective(prog, R, live, N)
    prog.start = _start_point(prog.n_vars, Qv, R, live, conc_parts, power_rows, P)
    sol = solve_maxdet(prog, tol)
    if not sol.optimal:
        raise SolverError(f"SIN program ended with status {sol.status.value}", sol.status)

    blocks = []
    for j, c in enumerate(clusters):
        Q = np.zeros((c.size, c.size), dtype=complex) if Qv[j] is None else sol.value(Qv[j])
        blocks.append((Q + Q.conj().T) / 2)
    cov = CovarianceSet(N, clusters, blocks)
    tilde = np.zeros(N)
    tilde[live] = np.maximum(sol.value(R), 0.0)
    tilde_u = convert(tilde, unit)
    exact = exact_rates(Hm, cov, unit=unit)
    return SinResult(cov, tilde_u, exact, utility(tilde_u), sol)


# ---------------------------------------------------------------------------
# SIN, multi-antenna single cell
# ---------------------------------------------------------------------------

@dataclass
class MimoSinResult:
    covariances: list
    tilde_rates: np.ndarray
    exact_rates: np.ndarray
    utility_value: float
    solution: Solution = field(repr=False)


def mimo_exact_rates(channels, covariances, unit: str = "bits") -> np.ndarray:
    """``log det(I + all signals) - log det(I + interference)`` for every user."""
    rates = []
    for i, Hi in enumerate(channels):
        Hi = np.atleast_2d(Hi)
        m = Hi.shape[0]
        S = [Hi @ Q @ Hi.conj().T for Q in covariances]
        total = np.eye(m) + sum(S)
        interf = np.eye(m) + sum(S[j] for j in range(len(S)) if j != i)
        rates.append(np.linalg.slogdet(total)[1] - np.linalg.slogdet(interf)[1])
    return convert(np.array(rates), unit)


def sin_mimo_precode(channels, P: float, utility: Utility | None = None,
                     tol: float = 1e-6, unit: str = "bits") -> MimoSinResult:
    """SIN for one multi-antenna base serving multi-antenna users under a sum power limit."""
    chans = [np.atleast_2d(np.asarray(Hi, dtype=complex)) for Hi in channels]
    if not chans:
        raise ValueError("at least one user is required")
    mt = chans[0].shape[1]
    if any(Hi.shape[1] != mt for Hi in chans):
        raise ValidationError("all user channels must have the same number of transmit antennas")
    if P <= 0:
        raise ValueError("power must be positive")
    utility = utility or Utility.sum_rate()
    N = len(chans)

    prog = MaxDetProgram()
    Qv = [prog.psd_var(mt, name=f"Q{j + 1}") for j in range(N)]
    R = prog.scalar_var(N, name="R")
    conc_parts = []
    for i, Hi in enumerate(chans):
        m = Hi.shape[0]
        total = sum((v.congruence(Hi) for v in Qv), MatExpr([], np.zeros((0, m, m)), np.eye(m)))
        G = Hi.conj().T @ Hi
        interf = sum((Qv[j].lin(G) for j in range(N) if j != i), LinExpr())
        prog.add_logdet_ge(total, -interf - R[i])
        conc_parts.append((total, interf))
    power_row = sum((v.trace() for v in Qv), LinExpr())
    prog.add_le(power_row, P)
    utility._objective(prog, R, range(N), N)

    x = np.zeros(prog.n_vars)
    eps = P / (2.0 * N * mt)
    for _ in range(80):
        for v in Qv:
            x[v.idx[:mt]] = eps
        f = np.array([np.linalg.slogdet(tot.value(x))[1] - itf.value(x) for tot, itf in conc_parts])
        if np.all(f > 0):
            x[R.idx] = f / 2.0
            prog.start = x
            break
        eps /= 2.0

    sol = solve_maxdet(prog, tol)
    if not sol.optimal:
        raise SolverError(f"MIMO SIN program ended with status {sol.status.value}", sol.status)
    covs = [(Q + Q.conj().T) / 2 for Q in (sol.value(v) for v in Qv)]
    tilde = convert(np.maximum(sol.value(R), 0.0), unit)
    return MimoSinResult(covs, tilde, mimo_exact_rates(chans, covs, unit), utility(tilde), sol)
