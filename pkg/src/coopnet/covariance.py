"""Coordination clusters and per-user transmit covariances.

Users and bases carry 1-based labels, as in the line-network model (User 1 is
served by Base 1).  Array positions are 0-based as usual.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PSD_TOL = 1e-9


class ValidationError(ValueError):
    """Malformed clusters or covariance matrices."""


@dataclass(frozen=True)
class Cluster:
    """Ordered set of bases ``bases`` allowed to carry the message of ``user``."""

    user: int
    bases: tuple[int, ...]

    def __post_init__(self):
        b = tuple(int(j) for j in self.bases)
        object.__setattr__(self, "bases", b)
        if not b:
            raise ValidationError(f"cluster of user {self.user} is empty")
        if any(j2 <= j1 for j1, j2 in zip(b, b[1:])):
            raise ValidationError(f"cluster of user {self.user} is not strictly increasing: {b}")

    @property
    def size(self) -> int:
        return len(self.bases)

    def positions(self) -> np.ndarray:
        return np.array(self.bases, dtype=np.intp) - 1

    def association(self, n_bases: int) -> np.ndarray:
        """0/1 matrix ``C`` of shape (n_bases, size) with ``C[j_l, l] = 1``."""
        if self.bases[-1] > n_bases or self.bases[0] < 1:
            raise ValidationError(f"cluster {self.bases} has bases outside 1..{n_bases}")
        C = np.zeros((n_bases, self.size))
        C[self.positions(), np.arange(self.size)] = 1.0
        return C


def full_clusters(n_bases: int) -> list[Cluster]:
    everyone = tuple(range(1, n_bases + 1))
    return [Cluster(i, everyone) for i in range(1, n_bases + 1)]


def check_clusters(clusters, n_bases: int) -> list[Cluster]:
    """Sort clusters by user and check that every user appears exactly once."""
    clusters = sorted(clusters, key=lambda c: c.user)
    users = [c.user for c in clusters]
    if users != list(range(1, n_bases + 1)):
        raise ValidationError(f"clusters must cover users 1..{n_bases} exactly once, got {users}")
    for c in clusters:
        c.association(n_bases)
    return clusters


def check_psd(Q: np.ndarray, what: str = "covariance") -> np.ndarray:
    Q = np.atleast_2d(np.asarray(Q, dtype=complex))
    if Q.shape[0] != Q.shape[1]:
        raise ValidationError(f"{what} is not square")
    if np.abs(Q - Q.conj().T).max(initial=0.0) > PSD_TOL * (1.0 + np.abs(Q).max(initial=0.0)):
        raise ValidationError(f"{what} is not Hermitian")
    if Q.size:
        tr = abs(np.trace(Q).real)
        lam = np.linalg.eigvalsh((Q + Q.conj().T) / 2).min()
        if lam < -PSD_TOL * max(tr, 1e-300):
            raise ValidationError(f"{what} is not positive semidefinite (min eigenvalue {lam:.3e})")
    return Q


@dataclass
class CovarianceSet:
    """Per-user covariances ``blocks[i]`` (size N_i x N_i) over the bases of ``clusters[i]``."""

    n_bases: int
    clusters: list[Cluster]
    blocks: list[np.ndarray]

    def __post_init__(self):
        if len(self.clusters) != len(self.blocks):
            raise ValidationError("one covariance block per cluster is required")
        for c, Q in zip(self.clusters, self.blocks):
            if Q.shape != (c.size, c.size):
                raise ValidationError(f"user {c.user}: block shape {Q.shape} does not match cluster size")

    @classmethod
    def full_coordination(cls, matrices) -> "CovarianceSet":
        matrices = [np.asarray(Q, dtype=complex) for Q in matrices]
        n = len(matrices)
        return cls(n, full_clusters(n), matrices)

    def validate(self) -> "CovarianceSet":
        for c, Q in zip(self.clusters, self.blocks):
            check_psd(Q, f"covariance of user {c.user}")
        return self

    def full(self, k: int) -> np.ndarray:
        """Embedded ``C Q C^T`` (n_bases x n_bases) of the k-th user (0-based)."""
        c = self.clusters[k]
        out = np.zeros((self.n_bases, self.n_bases), dtype=complex)
        p = c.positions()
        out[np.ix_(p, p)] = self.blocks[k]
        return out

    def full_all(self) -> np.ndarray:
        return np.array([self.full(k) for k in range(len(self.blocks))])

    def base_powers(self) -> np.ndarray:
        """Transmit power of every base, ``diag(sum_k C_k Q_k C_k^T)``."""
        out = np.zeros(self.n_bases)
        for c, Q in zip(self.clusters, self.blocks):
            np.add.at(out, c.positions(), np.diag(Q).real)
        return out
