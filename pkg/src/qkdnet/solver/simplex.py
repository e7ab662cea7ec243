"""Two-phase bounded-variable primal simplex on a dense tableau."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qkdnet.solver.lp import (
    EQ, GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED,
    LinearProgram, MilpSolution, NumericalBreakdown,
)


@dataclass(frozen=True)
class SimplexOptions:
    pivot_tol: float = 1e-9
    feas_tol: float = 1e-7
    opt_tol: float = 1e-9
    # consecutive degenerate pivots before switching to Bland's rule
    degenerate_streak: int = 30
    max_iter: int | None = None


class _Tableau:
    def __init__(self, T, beta, basis, upper, opts):
        self.T = T
        self.beta = beta
        self.basis = basis
        self.upper = upper
        self.at_upper = np.zeros(T.shape[1], dtype=bool)
        self.opts = opts
        self.iterations = 0
        self.rows = np.arange(T.shape[0])

    def nonbasic_values(self):
        v = np.where(self.at_upper, self.upper, 0.0)
        v[self.basis] = 0.0
        return v

    def values(self):
        v = np.where(self.at_upper, self.upper, 0.0)
        v[self.basis] = self.beta
        return v

    def pivot(self, r, q):
        T = self.T
        T[r] /= T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, q] = 0.0
        T[r, q] = 1.0

    def optimize(self, cost, enterable, max_iter):
        """Maximize ``cost`` over the current basis; returns OPTIMAL or UNBOUNDED."""
        o = self.opts
        T, upper = self.T, self.upper
        d = cost - cost[self.basis] @ T
        is_basic = np.zeros(T.shape[1], dtype=bool)
        is_basic[self.basis] = True
        bland = False
        streak = 0
        while True:
            if self.iterations >= max_iter:
                raise NumericalBreakdown(f"simplex did not converge in {max_iter} iterations")
            eligible = enterable & ~is_basic & np.where(self.at_upper, d < -o.opt_tol,
                                                        d > o.opt_tol)
            candidates = np.flatnonzero(eligible)
            if candidates.size == 0:
                return OPTIMAL
            if bland:
                q = candidates[0]
            else:
                q = candidates[np.argmax(np.abs(d[candidates]))]
            direction = -1.0 if self.at_upper[q] else 1.0
            alpha = direction * T[:, q]

            ratios = np.full(alpha.shape, np.inf)
            hits_upper = np.zeros(alpha.shape, dtype=bool)
            dec = alpha > o.pivot_tol
            ratios[dec] = np.maximum(self.beta[dec], 0.0) / alpha[dec]
            ub = upper[self.basis]
            inc = (alpha < -o.pivot_tol) & np.isfinite(ub)
            ratios[inc] = np.maximum(ub[inc] - self.beta[inc], 0.0) / -alpha[inc]
            hits_upper[inc] = True

            t = ratios.min() if ratios.size else np.inf
            if upper[q] <= t:
                # bound flip, no basis change
                if not np.isfinite(upper[q]):
                    return UNBOUNDED
                t = upper[q]
                self.beta -= t * alpha
                self.at_upper[q] = not self.at_upper[q]
                r = None
            else:
                if not np.isfinite(t):
                    return UNBOUNDED
                ties = np.flatnonzero(ratios <= t + 1e-12 * (1.0 + t))
                if bland:
                    r = ties[np.argmin(self.basis[ties])]
                else:
                    r = ties[np.argmax(np.abs(alpha[ties]))]
                leaving = self.basis[r]
                entering_value = (upper[q] if self.at_upper[q] else 0.0) + direction * t
                self.beta -= t * alpha
                self.beta[r] = entering_value
                self.pivot(r, q)
                d -= d[q] * T[r]
                d[q] = 0.0
                self.at_upper[leaving] = bool(hits_upper[r])
                self.at_upper[q] = False
                is_basic[leaving] = False
                is_basic[q] = True
                self.basis[r] = q
            self.iterations += 1
            if t <= 1e-12:
                streak += 1
                if streak >= o.degenerate_streak:
                    bland = True
            else:
                streak = 0
                bland = False

    def drop_row(self, r):
        keep = np.arange(self.T.shape[0]) != r
        self.T = self.T[keep]
        self.beta = self.beta[keep]
        self.basis = self.basis[keep]
        self.rows = self.rows[keep]


def _standardize(lp: LinearProgram):
    """Map x to non-negative columns y with finite or infinite upper bounds.

    Returns the dense matrix over y, costs, upper bounds, shift vector and
    ``(original index, sign, column)`` recovery triples.
    """
    A = lp.A.toarray()
    cols, costs, uppers, recover = [], [], [], []
    shift = np.zeros(lp.num_vars)
    for j in range(lp.num_vars):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            shift[j] = lo
            recover.append((j, 1.0, len(cols)))
            cols.append(A[:, j]); costs.append(lp.c[j]); uppers.append(hi - lo)
        elif np.isfinite(hi):
            shift[j] = hi
            recover.append((j, -1.0, len(cols)))
            cols.append(-A[:, j]); costs.append(-lp.c[j]); uppers.append(np.inf)
        else:
            recover.append((j, 1.0, len(cols)))
            cols.append(A[:, j]); costs.append(lp.c[j]); uppers.append(np.inf)
            recover.append((j, -1.0, len(cols)))
            cols.append(-A[:, j]); costs.append(-lp.c[j]); uppers.append(np.inf)
    M = np.column_stack(cols) if cols else np.zeros((lp.num_rows, 0))
    return M, np.array(costs, dtype=float), np.array(uppers, dtype=float), shift, recover


def solve_lp_simplex(lp: LinearProgram, options: SimplexOptions | None = None) -> MilpSolution:
    o = options or SimplexOptions()
    if np.any(lp.lower > lp.upper + o.feas_tol):
        return MilpSolution(INFEASIBLE)

    M, cost, upper, shift, recover = _standardize(lp)
    rhs = lp.b - lp.A @ shift
    senses = np.asarray(lp.senses)
    upper = np.where(upper < 0, 0.0, upper)

    # presolve: empty rows only
    empty = ~np.any(M != 0.0, axis=1)
    for i in np.flatnonzero(empty):
        bad = ((senses[i] == LE and rhs[i] < -o.feas_tol) or (senses[i] == GE and rhs[i] > o.feas_tol)
               or (senses[i] == EQ and abs(rhs[i]) > o.feas_tol))
        if bad:
            return MilpSolution(INFEASIBLE)
    M, rhs, senses = M[~empty], rhs[~empty], senses[~empty]
    m, ny = M.shape

    ineq = np.flatnonzero(senses != EQ)
    S = np.zeros((m, ineq.size))
    S[ineq, np.arange(ineq.size)] = np.where(senses[ineq] == LE, 1.0, -1.0)
    sign = np.where(rhs < 0, -1.0, 1.0)
    full = np.hstack([M, S]) * sign[:, None]
    rhs = rhs * sign

    basis = np.empty(m, dtype=int)
    need_art = []
    slack_of_row = {row: ny + k for k, row in enumerate(ineq)}
    for i in range(m):
        s = slack_of_row.get(i)
        if s is not None and full[i, s] > 0:
            basis[i] = s
        else:
            need_art.append(i)
    n_real = full.shape[1]
    art = np.zeros((m, len(need_art)))
    for k, i in enumerate(need_art):
        art[i, k] = 1.0
        basis[i] = n_real + k
    T = np.hstack([full, art])
    col_upper = np.concatenate([upper, np.full(ineq.size, np.inf), np.full(len(need_art), np.inf)])

    tab = _Tableau(T, rhs.copy(), basis, col_upper, o)
    max_iter = o.max_iter or 50 * (m + T.shape[1]) + 1000

    if need_art:
        phase1 = np.zeros(T.shape[1])
        phase1[n_real:] = -1.0
        enterable = np.ones(T.shape[1], dtype=bool)
        tab.optimize(phase1, enterable, max_iter)
        infeas = tab.values()[n_real:].sum()
        if infeas > o.feas_tol * (1.0 + np.abs(rhs).max(initial=0.0)):
            return MilpSolution(INFEASIBLE, iterations=tab.iterations)
        r = 0
        while r < tab.T.shape[0]:
            if tab.basis[r] >= n_real:
                row = np.abs(tab.T[r, :n_real])
                is_basic = np.zeros(n_real, dtype=bool)
                is_basic[tab.basis[tab.basis < n_real]] = True
                row[is_basic] = 0.0
                q = int(np.argmax(row)) if row.size else 0
                if row.size and row[q] > o.pivot_tol:
                    value = col_upper[q] if tab.at_upper[q] else 0.0
                    tab.pivot(r, q)
                    tab.beta[r] = value
                    tab.at_upper[q] = False
                    tab.basis[r] = q
                else:
                    tab.drop_row(r)
                    continue
            r += 1
        tab.T = tab.T[:, :n_real]
        tab.upper = col_upper[:n_real]
        tab.at_upper = tab.at_upper[:n_real]
        # refresh basic values after dropping the artificial columns
        tab.beta = _basic_values(full, rhs, tab)

    phase2 = np.concatenate([cost, np.zeros(n_real - ny)])
    status = tab.optimize(phase2, np.ones(n_real, dtype=bool), max_iter)
    if status == UNBOUNDED:
        return MilpSolution(UNBOUNDED, iterations=tab.iterations)

    tab.beta = _basic_values(full, rhs, tab)
    z = tab.values()[:ny]
    x = np.empty(lp.num_vars)
    x[:] = shift
    for j, sgn, col in recover:
        x[j] += sgn * z[col]
    # snap onto bounds that were hit within tolerance
    x = np.where(np.abs(x - lp.lower) <= o.feas_tol, lp.lower, x)
    x = np.where(np.abs(x - lp.upper) <= o.feas_tol, lp.upper, x)
    if not lp.is_feasible(x, 10 * o.feas_tol):
        raise NumericalBreakdown("simplex optimum fails the feasibility recheck")

    rc = _reduced_costs(full, phase2, tab)
    rc_x = np.zeros(lp.num_vars)
    for j, sgn, col in recover:
        if sgn > 0:
            rc_x[j] = rc[col]
        elif np.isfinite(lp.upper[j]) and not np.isfinite(lp.lower[j]):
            rc_x[j] = -rc[col]
    return MilpSolution(OPTIMAL, float(lp.c @ x), x, nodes=0,
                        iterations=tab.iterations, reduced_costs=rc_x)


def _basic_values(full, rhs, tab):
    """Solve B x_B = rhs - N x_N on the original rows for an accurate basic solution."""
    n = tab.T.shape[1]
    rows = tab.rows
    B = full[rows][:, tab.basis]
    xn = tab.nonbasic_values()[:n]
    resid = rhs[rows] - full[rows][:, :n] @ xn
    try:
        return np.linalg.solve(B, resid)
    except np.linalg.LinAlgError:
        return tab.beta


def _reduced_costs(full, cost, tab):
    rows = tab.rows
    B = full[rows][:, tab.basis]
    try:
        y = np.linalg.solve(B.T, cost[tab.basis])
    except np.linalg.LinAlgError:
        return cost - cost[tab.basis] @ tab.T
    return cost - y @ full[rows][:, : tab.T.shape[1]]
