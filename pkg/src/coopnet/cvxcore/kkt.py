"""KKT residuals of a solved program.  Test-side diagnostics only."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barrier import Solution, _logdet_parts
from .program import Compiled, MaxDetProgram, params_inner, params_to_matrix


@dataclass
class KKTReport:
    stationarity: float
    primal_feasibility: float
    complementary_slackness: float
    dual_bound: float

    def max_residual(self) -> float:
        return max(self.stationarity, self.primal_feasibility, self.complementary_slackness)


def _objective_gradient(cp: Compiled, x):
    g = cp.c.copy()
    for w, M in cp.obj_terms:
        _, gm, _ = _logdet_parts(M, x, False)
        np.add.at(g, M.idx, w * gm)
    return g


def check_kkt(prog, sol: Solution) -> KKTReport:
    """Residuals of the KKT conditions at ``sol.x`` with the multipliers in ``sol``.

    The Lagrangian is ``F(x) + sum lam_i s_i(x) + sum <Z_b, Y_b(x)>`` where the
    ``s_i`` are the constraint slacks.  All residuals are max-norms; the dual
    bound ``L(x, lam, Z)`` is a valid upper bound on the optimum whenever the
    stationarity residual vanishes.
    """
    cp = prog.compile() if isinstance(prog, MaxDetProgram) else prog
    x = sol.x
    mult = sol.multipliers
    lam = np.asarray(mult.get("linear", np.zeros(len(cp.h))), dtype=float)
    lam_c = np.asarray(mult.get("concave", np.zeros(len(cp.concave))), dtype=float)
    Zs = mult.get("lmi", [np.zeros((r, r)) for _, r, _ in cp.blocks])

    grad = _objective_gradient(cp, x)
    s_lin = cp.h - cp.G @ x
    grad -= cp.G.T @ lam
    viol = [0.0, float(np.max(-s_lin, initial=0.0))]
    cs = [float(np.max(np.abs(lam * s_lin), initial=0.0))]
    bound = cp.objective(x) + float(lam @ s_lin)

    for (M, e, e0), lc in zip(cp.concave, lam_c):
        v, g, _ = _logdet_parts(M, x, False)
        sc = v + e @ x + e0
        gs = e.copy()
        np.add.at(gs, M.idx, g)
        grad += lc * gs
        viol.append(max(0.0, -sc))
        cs.append(abs(lc * sc))
        bound += lc * sc

    for (idx, r, real), Z in zip(cp.blocks, Zs):
        Y = params_to_matrix(x[idx], r, real)
        grad[idx] += params_inner(Z, real)
        viol.append(max(0.0, -np.linalg.eigvalsh(Y).min()))
        zy = float(np.trace(Z @ Y).real)
        cs.append(abs(zy))
        bound += zy

    return KKTReport(
        stationarity=float(np.max(np.abs(grad), initial=0.0)),
        primal_feasibility=max(viol),
        complementary_slackness=max(cs),
        dual_bound=float(bound),
    )
