"""Built-in oracle checks run by ``coopnet validate``.

Each check compares the solvers against an independent computation and
returns a :class:`Check`.  ``tol`` is the tolerance handed to the solvers;
pass/fail thresholds stay at their nominal values so that a loosened solver
shows up as failures.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cvxcore import MatExpr, MaxDetProgram, SolverError, check_kkt, solve_maxdet
from .netmodel import NetworkGeometry, db_to_linear, derive_seed, sample_channel
from .precoders import dpc_sum_rate, sin_precode, zf_rates

NOMINAL_TOL = 1e-6
SEED = 20240601


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def water_filling(gains, P: float):
    """Closed-form water-filling: powers and capacity (nats) over parallel gains."""
    g = np.sort(np.asarray(gains, dtype=float))[::-1]
    for k in range(len(g), 0, -1):
        level = (P + np.sum(1.0 / g[:k])) / k
        if level > 1.0 / g[k - 1]:
            p = np.maximum(level - 1.0 / g, 0.0)
            return p, float(np.sum(np.log1p(g * p)))
    return np.zeros_like(g), 0.0


def _rng():
    return np.random.default_rng(SEED)


def check_water_filling(tol: float) -> Check:
    rng = _rng()
    worst = 0.0
    for m in (2, 3, 4):
        H = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
        P = 5.0
        prog = MaxDetProgram()
        Q = prog.psd_var(m)
        prog.add_le(Q.trace(), P)
        prog.maximize(logdets=[(1.0, Q.congruence(H) + np.eye(m))])
        sol = solve_maxdet(prog, tol)
        _, cap = water_filling(np.linalg.svd(H, compute_uv=False) ** 2, P)
        worst = max(worst, abs(sol.objective - cap) / cap)
    return Check("water-filling", worst <= 1e-6, f"max relative error {worst:.2e}")


def zf_grid_oracle(H, P: float, levels: int = 8, points: int = 201) -> np.ndarray:
    """Brute-force ZF power allocation for N=3 by nested grid refinement.

    The third gain is set to its largest feasible value, which is optimal for
    an increasing objective; the first two are searched on a zooming grid.
    """
    W2 = np.abs(np.linalg.inv(H)) ** 2
    hi = P / W2[:, :2].max(axis=0)
    lo1, hi1, lo2, hi2 = 0.0, hi[0], 0.0, hi[1]
    best = None
    for _ in range(levels):
        g1, g2 = np.meshgrid(np.linspace(lo1, hi1, points), np.linspace(lo2, hi2, points))
        slack = P - W2[:, 0, None, None] * g1 - W2[:, 1, None, None] * g2
        g3 = (slack / W2[:, 2, None, None]).min(axis=0)
        val = np.where(g3 >= 0, np.log1p(g1) + np.log1p(g2) + np.log1p(np.maximum(g3, 0)), -np.inf)
        k = np.unravel_index(np.argmax(val), val.shape)
        best = np.array([g1[k], g2[k], g3[k]])
        s1, s2 = 10 * (hi1 - lo1) / (points - 1), 10 * (hi2 - lo2) / (points - 1)
        lo1, hi1 = max(0.0, best[0] - s1), best[0] + s1
        lo2, hi2 = max(0.0, best[1] - s2), best[1] + s2
    return best


def check_zf_grid(tol: float) -> Check:
    geo = NetworkGeometry(n_bases=3)
    P = 4.0
    worst = 0.0
    for t in range(3):
        H = sample_channel(geo, derive_seed(SEED, t)).entries
        g = zf_rates(H, P, tol).gamma
        worst = max(worst, np.abs(g - zf_grid_oracle(H, P)).max() / P)
    return Check("ZF grid search", worst <= 1e-3, f"max |gamma - grid| / P = {worst:.2e}")


def check_ordering(tol: float) -> Check:
    """DPC >= SIN (exact) >= ZF >= 0 on N=3 channels, with nominal slack."""
    geo = NetworkGeometry(n_bases=3)
    slack = 2 * NOMINAL_TOL
    bad = []
    count = 0
    for t in range(4):
        H = sample_channel(geo, derive_seed(SEED, 100 + t)).entries
        for snr in (0.0, 10.0, 20.0, 30.0):
            P = float(db_to_linear(snr))
            try:
                dpc = dpc_sum_rate(H, P, max(tol, 1e-6), "nats")
                sin = sin_precode(H, P, tol=tol, unit="nats")
                zf = zf_rates(H, P, tol, "nats").rates.sum()
            except SolverError as exc:
                bad.append(f"trial {t} {snr} dB: {exc}")
                continue
            count += 1
            s_exact = sin.exact_rates.sum()
            s_tilde = sin.tilde_rates.sum()
            scale = 1.0 + dpc
            if not (dpc >= s_exact - slack * scale and s_tilde >= zf - slack * scale and zf >= 0):
                bad.append(f"trial {t} {snr:g} dB: dpc {dpc:.6f} sin {s_exact:.6f}/{s_tilde:.6f} zf {zf:.6f}")
    detail = f"{count - len(bad)}/{count} instances ordered" + (f"; first: {bad[0]}" if bad else "")
    return Check("ordering N=3", not bad, detail)


def check_kkt_residuals(tol: float) -> Check:
    # complementary slackness at a barrier solution is 1/t, so solve a decade tighter
    tol = tol / 10
    geo = NetworkGeometry(n_bases=3)
    H = sample_channel(geo, derive_seed(SEED, 200)).entries
    worst = 0.0
    z = zf_rates(H, 10.0, tol)
    worst = max(worst, check_kkt(z.solution.compiled, z.solution).max_residual())
    prog = MaxDetProgram()
    q = prog.scalar_var(1)
    prog.add_le(q[0], 3.0)
    prog.maximize(logdets=[(1.0, MatExpr.from_lin(q[0] + 1.0))])
    sol = solve_maxdet(prog, tol)
    worst = max(worst, check_kkt(prog, sol).max_residual())
    return Check("KKT residuals", worst <= 1e-6, f"max residual {worst:.2e}")


CHECKS = (check_water_filling, check_zf_grid, check_ordering, check_kkt_residuals)


def run_all(tol: float = NOMINAL_TOL) -> list[Check]:
    out = []
    for fn in CHECKS:
        try:
            out.append(fn(tol))
        except Exception as exc:  # a crashing check is a failed check
            out.append(Check(fn.__name__.removeprefix("check_"), False, f"error: {exc}"))
    return out
