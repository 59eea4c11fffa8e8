"""Modeling layer for determinant-maximization programs.

A program lives on a flat real vector ``x``.  Hermitian matrix variables are
stored through real coordinates (diagonal entries, then the real and the
imaginary parts of the strict upper triangle) and enter objectives and
constraints only through affine maps:

* ``LinExpr``  -- a real affine functional of ``x``;
* ``MatExpr``  -- a Hermitian-matrix-valued affine map of ``x``.

The program form is::

    maximize    c(x) + sum_k w_k * logdet(M_k(x))
    subject to  a_m(x) <= b_m                      (linear)
                logdet(N_l(x)) + e_l(x) >= 0       (concave, epigraph form)
                Y_b >= 0                           (one per PSD variable)
                s >= 0                             (nonnegative scalars)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

HERMITIAN_TOL = 1e-12


# ---------------------------------------------------------------------------
# real coordinates of Hermitian / real-symmetric matrices
# ---------------------------------------------------------------------------

def n_params(r: int, real: bool = False) -> int:
    """Number of real coordinates of an r x r Hermitian (or symmetric) matrix."""
    return r * (r + 1) // 2 if real else r * r


@lru_cache(maxsize=64)
def _layout(r: int, real: bool):
    iu, ju = np.triu_indices(r, 1)
    gram = np.concatenate([np.ones(r), 2.0 * np.ones(len(iu))])
    if not real:
        gram = np.concatenate([gram, 2.0 * np.ones(len(iu))])
    return iu, ju, gram


def params_to_matrix(p: np.ndarray, r: int, real: bool = False) -> np.ndarray:
    """Rebuild the matrix ``sum_l p[l] E_l``.  Leading axes of ``p`` are batch axes."""
    p = np.asarray(p, dtype=float)
    iu, ju, _ = _layout(r, real)
    m = len(iu)
    batch = p.shape[:-1]
    Y = np.zeros(batch + (r, r), dtype=float if real else complex)
    d = np.arange(r)
    Y[..., d, d] = p[..., :r]
    if real:
        Y[..., iu, ju] = p[..., r:r + m]
    else:
        Y[..., iu, ju] = p[..., r:r + m] + 1j * p[..., r + m:]
    Y[..., ju, iu] = np.conj(Y[..., iu, ju])
    return Y


def params_inner(X: np.ndarray, real: bool = False) -> np.ndarray:
    """Inner products ``Re tr(X E_l)`` of a Hermitian ``X`` with every basis matrix."""
    r = X.shape[-1]
    iu, ju, _ = _layout(r, real)
    d = np.arange(r)
    parts = [X[..., d, d].real, 2.0 * X[..., iu, ju].real]
    if not real:
        parts.append(2.0 * X[..., iu, ju].imag)
    return np.concatenate(parts, axis=-1)


def params_gram(r: int, real: bool = False) -> np.ndarray:
    """Diagonal of the Gram matrix ``<E_l, E_l>`` (the basis is orthogonal)."""
    return _layout(r, real)[2]


@lru_cache(maxsize=64)
def hermitian_basis(r: int, real: bool = False) -> np.ndarray:
    """All basis matrices ``E_l`` stacked as an array of shape (k, r, r)."""
    k = n_params(r, real)
    basis = params_to_matrix(np.eye(k), r, real)
    basis.setflags(write=False)
    return basis


def matrix_to_params(Y: np.ndarray, real: bool = False) -> np.ndarray:
    """Coordinates of a Hermitian matrix (inverse of :func:`params_to_matrix`)."""
    r = Y.shape[-1]
    return params_inner(Y, real) / params_gram(r, real)


# ---------------------------------------------------------------------------
# expressions
# ---------------------------------------------------------------------------

class LinExpr:
    """Real affine functional ``sum coef * x[idx] + const``; duplicate indices add up."""

    __slots__ = ("idx", "coef", "const")

    def __init__(self, idx=(), coef=(), const: float = 0.0):
        self.idx = np.asarray(idx, dtype=np.intp).ravel()
        self.coef = np.asarray(coef, dtype=float).ravel()
        self.const = float(const)
        if self.idx.shape != self.coef.shape:
            raise ValueError("index and coefficient arrays differ in length")

    def __add__(self, other):
        if isinstance(other, LinExpr):
            return LinExpr(np.concatenate([self.idx, other.idx]),
                           np.concatenate([self.coef, other.coef]),
                           self.const + other.const)
        return LinExpr(self.idx, self.coef, self.const + float(other))

    __radd__ = __add__

    def __neg__(self):
        return LinExpr(self.idx, -self.coef, -self.const)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, a):
        a = float(a)
        return LinExpr(self.idx, a * self.coef, a * self.const)

    __rmul__ = __mul__

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        np.add.at(out, self.idx, self.coef)
        return out

    def value(self, x: np.ndarray) -> float:
        return float(self.coef @ x[self.idx] + self.const)


class MatExpr:
    """Hermitian-valued affine map ``const + sum_l x[idx[l]] * coef[l]``."""

    __slots__ = ("idx", "coef", "const")

    def __init__(self, idx, coef, const):
        self.const = np.atleast_2d(np.asarray(const, dtype=complex))
        m = self.const.shape[0]
        self.idx = np.asarray(idx, dtype=np.intp).ravel()
        self.coef = np.asarray(coef, dtype=complex).reshape(len(self.idx), m, m)

    @property
    def size(self) -> int:
        return self.const.shape[0]

    @classmethod
    def from_lin(cls, lin: LinExpr) -> "MatExpr":
        """1 x 1 map carrying a scalar affine functional."""
        return cls(lin.idx, lin.coef.reshape(-1, 1, 1), [[lin.const]])

    def __add__(self, other):
        if isinstance(other, MatExpr):
            if other.size != self.size:
                raise ValueError("matrix sizes differ")
            return MatExpr(np.concatenate([self.idx, other.idx]),
                           np.concatenate([self.coef, other.coef]),
                           self.const + other.const)
        other = np.asarray(other)
        if other.ndim == 0:
            other = other * np.eye(self.size)
        return MatExpr(self.idx, self.coef, self.const + other)

    __radd__ = __add__

    def __mul__(self, a):
        a = float(a)
        return MatExpr(self.idx, a * self.coef, a * self.const)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.const + np.tensordot(x[self.idx], self.coef, axes=1)

    def merged(self) -> "MatExpr":
        """Same map with duplicate indices combined."""
        uniq, inv = np.unique(self.idx, return_inverse=True)
        coef = np.zeros((len(uniq),) + self.const.shape, dtype=complex)
        np.add.at(coef, inv, self.coef)
        return MatExpr(uniq, coef, self.const)


# ---------------------------------------------------------------------------
# variables
# ---------------------------------------------------------------------------

@dataclass
class ScalarVar:
    """A vector of real scalar variables occupying ``x[idx]``."""

    idx: np.ndarray
    nonneg: bool = True
    name: str = ""

    def __len__(self):
        return len(self.idx)

    def __getitem__(self, i) -> LinExpr:
        return LinExpr([self.idx[i]], [1.0])

    def sum(self) -> LinExpr:
        return LinExpr(self.idx, np.ones(len(self.idx)))

    def dot(self, w) -> LinExpr:
        return LinExpr(self.idx, np.asarray(w, dtype=float))

    def value(self, x: np.ndarray) -> np.ndarray:
        return x[self.idx].copy()


@dataclass
class PsdVar:
    """Hermitian PSD variable ``Q = B Y B^H`` with ``Y`` (r x r) the free PSD block.

    ``basis`` defaults to the identity, so that ``Q = Y``.  A tall basis
    restricts ``Q`` to a subspace (used to hard-null directions).
    """

    offset: int
    dim: int
    r: int
    basis: np.ndarray | None = None
    real: bool = False
    name: str = ""

    @property
    def k(self) -> int:
        return n_params(self.r, self.real)

    @property
    def idx(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.k)

    def _reduce(self, A: np.ndarray) -> np.ndarray:
        if self.basis is None:
            return A
        return self.basis.conj().T @ A @ self.basis

    def lin(self, A) -> LinExpr:
        """``Re tr(A Q)`` for a Hermitian ``A``."""
        A = np.asarray(A, dtype=complex)
        return LinExpr(self.idx, params_inner(self._reduce(A), self.real))

    def quad(self, v) -> LinExpr:
        """``v^H Q v``."""
        v = np.asarray(v, dtype=complex).ravel()
        return self.lin(np.outer(v, v.conj()))

    def diag_entry(self, i: int) -> LinExpr:
        e = np.zeros(self.dim)
        e[i] = 1.0
        return self.quad(e)

    def trace(self) -> LinExpr:
        return self.lin(np.eye(self.dim))

    def congruence(self, F) -> MatExpr:
        """Matrix map ``F Q F^H``."""
        F = np.atleast_2d(np.asarray(F, dtype=complex))
        if self.basis is not None:
            F = F @ self.basis
        E = hermitian_basis(self.r, self.real)
        coef = F @ E @ F.conj().T
        m = F.shape[0]
        return MatExpr(self.idx, coef, np.zeros((m, m)))

    def inner(self, x: np.ndarray) -> np.ndarray:
        return params_to_matrix(x[self.idx], self.r, self.real)

    def matrix(self, x: np.ndarray) -> np.ndarray:
        Y = self.inner(x)
        if self.basis is None:
            return Y
        return self.basis @ Y @ self.basis.conj().T


# ---------------------------------------------------------------------------
# program
# ---------------------------------------------------------------------------

def _check_hermitian(M: MatExpr, what: str):
    scale = 1.0 + max(np.abs(M.coef).max(initial=0.0), np.abs(M.const).max())
    err = max(np.abs(M.coef - np.conj(np.swapaxes(M.coef, 1, 2))).max(initial=0.0),
              np.abs(M.const - M.const.conj().T).max())
    if err > HERMITIAN_TOL * scale:
        raise ValueError(f"{what}: affine map is not Hermitian (error {err:.2e})")


class MaxDetProgram:
    """Incrementally built determinant-maximization program."""

    def __init__(self):
        self.n_vars = 0
        self.scalars: list[ScalarVar] = []
        self.psd_vars: list[PsdVar] = []
        self.linear_objective = LinExpr()
        self.logdet_objective: list[tuple[float, MatExpr]] = []
        self.le_constraints: list[tuple[LinExpr, float]] = []
        self.concave_constraints: list[tuple[MatExpr, LinExpr]] = []
        self.start: np.ndarray | None = None

    # variables -------------------------------------------------------------
    def scalar_var(self, size: int = 1, nonneg: bool = True, name: str = "") -> ScalarVar:
        v = ScalarVar(np.arange(self.n_vars, self.n_vars + size), nonneg, name)
        self.n_vars += size
        self.scalars.append(v)
        return v

    def psd_var(self, dim: int, basis=None, real: bool = False, name: str = "") -> PsdVar:
        if basis is not None:
            basis = np.asarray(basis, dtype=float if real else complex)
            if basis.shape[0] != dim:
                raise ValueError("basis must have `dim` rows")
            r = basis.shape[1]
        else:
            r = dim
        v = PsdVar(self.n_vars, dim, r, basis, real, name)
        self.n_vars += v.k
        self.psd_vars.append(v)
        return v

    # objective and constraints --------------------------------------------
    def maximize(self, linear: LinExpr | None = None, logdets=()):
        self.linear_objective = linear if linear is not None else LinExpr()
        terms = []
        for w, M in logdets:
            if w < 0:
                raise ValueError("logdet weights must be nonnegative")
            _check_hermitian(M, "objective logdet term")
            terms.append((float(w), M))
        self.logdet_objective = terms

    def add_le(self, expr: LinExpr, rhs: float = 0.0):
        self.le_constraints.append((expr, float(rhs)))

    def add_logdet_ge(self, M: MatExpr, lin: LinExpr | None = None):
        """Constraint ``logdet(M(x)) + lin(x) >= 0``."""
        _check_hermitian(M, "concave constraint")
        self.concave_constraints.append((M, lin if lin is not None else LinExpr()))

    def compile(self) -> "Compiled":
        return Compiled.build(self)


@dataclass
class Compiled:
    """Dense numeric form of a :class:`MaxDetProgram` consumed by the solver."""

    n: int
    c: np.ndarray
    c0: float
    G: np.ndarray
    h: np.ndarray
    obj_terms: list                  # (w, MatExpr)
    concave: list                    # (MatExpr, dense e (n,), e0)
    blocks: list                     # (idx, r, real)
    scalar_idx: np.ndarray
    extra_lmis: list = field(default_factory=list)   # general MatExpr >= 0 terms
    source: MaxDetProgram | None = None

    @classmethod
    def build(cls, prog: MaxDetProgram) -> "Compiled":
        n = prog.n_vars
        rows, rhs = [], []
        for v in prog.scalars:
            if v.nonneg:
                for j in v.idx:
                    row = np.zeros(n)
                    row[j] = -1.0
                    rows.append(row)
                    rhs.append(0.0)
        for expr, b in prog.le_constraints:
            rows.append(expr.dense(n))
            rhs.append(b - expr.const)
        G = np.array(rows).reshape(len(rows), n)
        concave = [(M.merged(), lin.dense(n), lin.const)
                   for M, lin in prog.concave_constraints]
        scalar_idx = (np.concatenate([v.idx for v in prog.scalars])
                      if prog.scalars else np.zeros(0, dtype=np.intp))
        return cls(
            n=n,
            c=prog.linear_objective.dense(n),
            c0=prog.linear_objective.const,
            G=G,
            h=np.array(rhs, dtype=float),
            obj_terms=[(w, M.merged()) for w, M in prog.logdet_objective],
            concave=concave,
            blocks=[(v.idx, v.r, v.real) for v in prog.psd_vars],
            scalar_idx=scalar_idx,
            source=prog,
        )

    @property
    def barrier_degree(self) -> float:
        """Sum of barrier parameters; the duality gap at a central point is this over t."""
        return float(len(self.h) + len(self.concave) + sum(r for _, r, _ in self.blocks)
                     + sum(M.size for M in self.extra_lmis))

    def objective(self, x: np.ndarray) -> float:
        val = self.c @ x + self.c0
        for w, M in self.obj_terms:
            sign, ld = np.linalg.slogdet(M.value(x))
            if sign.real <= 0:
                return -np.inf
            val += w * ld
        return float(val)
