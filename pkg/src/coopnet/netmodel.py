"""Wraparound line network: geometry, Rayleigh channels and rate formulas.

Noise has unit variance, so ``P`` doubles as the per-base SNR.  Rates are
computed in nats and converted at the return boundary; ``unit="bits"``
(the default) divides by ``ln 2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import CovarianceSet, ValidationError, check_psd

LN2 = np.log(2.0)
UNITS = {"bits": LN2, "nats": 1.0}


def convert(nats, unit: str = "bits"):
    """Convert a rate (or array of rates) in nats to ``unit``."""
    try:
        return np.asarray(nats) / UNITS[unit] if np.ndim(nats) else float(nats) / UNITS[unit]
    except KeyError:
        raise ValueError(f"unknown rate unit {unit!r}; use 'bits' or 'nats'") from None


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class NetworkGeometry:
    """Line of ``n_bases`` bases spaced ``dx`` apart, each user ``dy`` from its base."""

    n_bases: int = 19
    dx: float = 1.0
    dy: float = 1.0
    eta: float = 4.0
    power: float = 1.0

    def __post_init__(self):
        if int(self.n_bases) != self.n_bases or self.n_bases < 1:
            raise ValueError(f"n_bases must be a positive integer, got {self.n_bases}")
        for name in ("dx", "dy", "eta", "power"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive real, got {v}")


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """One fading block.  ``entries[i, j]`` is the gain from Base j+1 to User i+1."""

    entries: np.ndarray
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.entries[i]


def _entries(H) -> np.ndarray:
    if isinstance(H, ChannelMatrix):
        return H.entries
    return np.atleast_2d(np.asarray(H, dtype=complex))


def wrap_distance(i: int, j: int, n: int) -> int:
    """Hop count between positions ``i`` and ``j`` (1-based) on a ring of ``n``."""
    if n < 1:
        raise ValueError(f"ring size must be positive, got {n}")
    if not (1 <= i <= n and 1 <= j <= n):
        raise ValueError(f"indices ({i}, {j}) outside 1..{n}")
    k = i - j
    return min(abs(k), abs(k + n), abs(k - n))


def pair_distance(i: int, j: int, geo: NetworkGeometry) -> float:
    """Distance between User ``i`` and Base ``j``."""
    d = wrap_distance(i, j, geo.n_bases)
    return float(np.hypot(geo.dy, geo.dx * d))


def distance_matrix(geo: NetworkGeometry) -> np.ndarray:
    n = geo.n_bases
    k = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    hops = np.minimum(k, n - k)
    return np.hypot(geo.dy, geo.dx * hops)


def path_gain(geo: NetworkGeometry) -> np.ndarray:
    """Mean channel power ``d_ij^(-eta)`` for every user/base pair."""
    return distance_matrix(geo) ** (-geo.eta)


def derive_seed(master_seed: int, *keys: int) -> int:
    """64-bit seed for the stream labelled ``keys`` under ``master_seed``."""
    ss = np.random.SeedSequence([int(master_seed) % 2**64, *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_channel(geo: NetworkGeometry, seed: int) -> ChannelMatrix:
    """Independent CN(0, d_ij^-eta) entries from a counter-based (Philox) stream."""
    rng = np.random.Generator(np.random.Philox(int(seed)))
    n = geo.n_bases
    std = np.sqrt(path_gain(geo) / 2.0)
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return ChannelMatrix(std * z, int(seed))


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

def sinr_no_coop(H, P: float) -> np.ndarray:
    """Per-user SINR when every base serves its own user at full power."""
    g = np.abs(_entries(H)) ** 2
    sig = np.diag(g) * P
    interf = (g.sum(axis=1) - np.diag(g)) * P
    return sig / (1.0 + interf)


def rate_no_coop(H, P: float, unit: str = "bits") -> np.ndarray:
    if P <= 0:
        raise ValueError("power must be positive")
    return convert(np.log1p(sinr_no_coop(H, P)), unit)


def rate_no_interference(H, P: float, unit: str = "bits") -> np.ndarray:
    if P <= 0:
        raise ValueError("power must be positive")
    g = np.abs(np.diag(_entries(H))) ** 2
    return convert(np.log1p(g * P), unit)


def received_powers(H, Q) -> np.ndarray:
    """``out[i, k]`` = power of user k's signal at user i, ``h_i Q_k h_i^H``."""
    Hm = _entries(H)
    full = Q.full_all() if isinstance(Q, CovarianceSet) else np.asarray(Q, dtype=complex)
    return np.einsum("ia,kab,ib->ik", Hm, full, Hm.conj()).real


def exact_rates(H, Q, unit: str = "bits") -> np.ndarray:
    """Rates with interference treated as noise for covariances ``Q``.

    ``Q`` is a :class:`CovarianceSet` (any clusters) or a stack of full-size
    N x N covariances.
    """
    if isinstance(Q, CovarianceSet):
        Q.validate()
    else:
        Q = np.asarray(Q, dtype=complex)
        for k, Qk in enumerate(Q):
            check_psd(Qk, f"covariance of user {k + 1}")
    Pw = received_powers(H, Q)
    if Pw.shape[0] != Pw.shape[1]:
        raise ValidationError("one covariance per user is required")
    Pw = np.maximum(Pw, 0.0)
    own = np.diag(Pw)
    interf = Pw.sum(axis=1) - own
    return convert(np.log1p(own / (1.0 + interf)), unit)
