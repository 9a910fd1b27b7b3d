"""Dense two-phase tableau simplex.

Solves ``maximize c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0`` and
returns primal values together with constraint multipliers read off the
final tableau.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """Maximization LP in inequality/equality form with non-negative variables."""

    n_vars: int
    objective: np.ndarray
    A_ub: np.ndarray = None
    b_ub: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    var_names: list = None

    def __post_init__(self):
        n = int(self.n_vars)
        self.n_vars = n
        self.objective = np.asarray(self.objective, dtype=float).reshape(-1)
        if self.objective.shape != (n,):
            raise ValidationError(f"objective has length {self.objective.size}, expected {n}")
        self.A_ub, self.b_ub = _block(self.A_ub, self.b_ub, n, "inequality")
        self.A_eq, self.b_eq = _block(self.A_eq, self.b_eq, n, "equality")
        for arr in (self.objective, self.A_ub, self.b_ub, self.A_eq, self.b_eq):
            if not np.all(np.isfinite(arr)):
                raise ValidationError("LP coefficients must be finite")
        if self.var_names is not None and len(self.var_names) != n:
            raise ValidationError("var_names must have one entry per variable")

    @classmethod
    def from_rows(cls, objective, ineq=(), eq=(), var_names=None):
        """Build from lists of ``(row, rhs)`` pairs."""
        n = len(objective)
        A_ub = np.array([r for r, _ in ineq], dtype=float).reshape(len(ineq), n)
        A_eq = np.array([r for r, _ in eq], dtype=float).reshape(len(eq), n)
        return cls(n, objective, A_ub, [b for _, b in ineq], A_eq, [d for _, d in eq], var_names)

    @property
    def n_ineq(self):
        return self.A_ub.shape[0]

    @property
    def n_eq(self):
        return self.A_eq.shape[0]

    def dump(self) -> str:
        """Plain-text tabular listing, for debugging."""
        names = self.var_names or [f"x{j}" for j in range(self.n_vars)]
        out = io.StringIO()
        out.write(f"maximize  {_fmt_row(self.objective, names)}\n")
        out.write("subject to\n")
        for i, (row, rhs) in enumerate(zip(self.A_ub, self.b_ub)):
            out.write(f"  u{i}: {_fmt_row(row, names)} <= {rhs:.17g}\n")
        for i, (row, rhs) in enumerate(zip(self.A_eq, self.b_eq)):
            out.write(f"  e{i}: {_fmt_row(row, names)} = {rhs:.17g}\n")
        out.write(f"  all {self.n_vars} variables >= 0\n")
        return out.getvalue()


@dataclass
class LpSolution:
    status: str
    x: np.ndarray
    objective_value: float
    duals_ineq: np.ndarray
    duals_eq: np.ndarray
    iterations: int = 0
    info: dict = field(default_factory=dict)


def _block(A, b, n, what):
    if A is None or (np.size(A) == 0 and (b is None or np.size(b) == 0)):
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape[1] != n:
        raise ValidationError(f"{what} rows have {A.shape[1]} columns, expected {n}")
    if A.shape[0] != b.size:
        raise ValidationError(f"{what} block has {A.shape[0]} rows but {b.size} right-hand sides")
    return A, b


def _fmt_row(row, names):
    terms = [f"{v:+.17g}*{names[j]}" for j, v in enumerate(row) if v != 0.0]
    return " ".join(terms) if terms else "0"


class _Tableau:
    # Rows 0..m-1 are constraints, row m holds reduced costs c_j - c_B B^-1 A_j;
    # the last column is the rhs (for row m it stores minus the objective).

    def __init__(self, T, basis, tol):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.m = T.shape[0] - 1
        self.iterations = 0

    def pivot(self, p, q):
        T = self.T
        T[p] /= T[p, q]
        col = T[:, q].copy()
        col[p] = 0.0
        T -= np.outer(col, T[p])
        self.basis[p] = q
        self.iterations += 1

    def set_objective(self, cost):
        T, m = self.T, self.m
        cB = cost[self.basis]
        T[m, :-1] = cost - cB @ T[:m, :-1]
        T[m, -1] = -(cB @ T[:m, -1])

    def run(self, blocked, max_iter):
        """Maximize the objective currently loaded in row m."""
        T, m, tol = self.T, self.m, self.tol
        n_cols = T.shape[1] - 1
        stall_limit = 5 * (m + n_cols)
        stalled = 0
        allowed = ~blocked
        for _ in range(max_iter):
            d = T[m, :-1]
            eligible = np.flatnonzero((d > tol) & allowed)
            if eligible.size == 0:
                return OPTIMAL
            if stalled > stall_limit:
                q = int(eligible[0])  # Bland
            else:
                q = int(eligible[np.argmax(d[eligible])])
            colq = T[:m, q]
            rows = np.flatnonzero(colq > tol)
            if rows.size == 0:
                return UNBOUNDED
            ratios = T[rows, -1] / colq[rows]
            best = ratios.min()
            ties = rows[ratios <= best + tol * max(1.0, abs(best))]
            p = int(ties[np.argmin(self.basis[ties])])
            stalled = stalled + 1 if best <= tol else 0
            self.pivot(p, q)
        raise RuntimeError(f"simplex did not terminate within {max_iter} pivots")


def solve(lp: LinearProgram, *, tol=PIVOT_TOL, max_iter=None) -> LpSolution:
    """Two-phase primal simplex on a dense tableau.

    Infeasibility and unboundedness are reported through ``status``.
    Dual values follow the usual sign convention for a maximization
    problem: ``duals_ineq >= 0`` and ``A_ub.T y + A_eq.T z >= c``.
    """
    n, m1, m2 = lp.n_vars, lp.n_ineq, lp.n_eq
    m = m1 + m2
    A = np.vstack([lp.A_ub, lp.A_eq])
    b = np.concatenate([lp.b_ub, lp.b_eq])
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign

    # One identity column per row: the slack if it is usable, else an artificial.
    art_rows = [i for i in range(m) if i >= m1 or sign[i] < 0]
    n_art = len(art_rows)
    n_cols = n + m1 + n_art
    T = np.zeros((m + 1, n_cols + 1))
    T[:m, :n] = A
    T[np.arange(m1), n + np.arange(m1)] = sign[:m1]
    T[:m, -1] = b
    ident = np.empty(m, dtype=int)
    ident[:m1] = n + np.arange(m1)
    for k, i in enumerate(art_rows):
        T[i, n + m1 + k] = 1.0
        ident[i] = n + m1 + k
    basis = ident.copy()
    art_cols = np.zeros(n_cols, dtype=bool)
    art_cols[n + m1:] = True

    tab = _Tableau(T, basis, tol)
    if max_iter is None:
        max_iter = 50 * (m + n_cols) + 1000

    if n_art:
        phase1 = np.where(art_cols, -1.0, 0.0)
        tab.set_objective(phase1)
        tab.run(np.zeros(n_cols, dtype=bool), max_iter)
        infeas = T[m, -1]  # = sum of artificial values at the phase-1 optimum
        if infeas > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return LpSolution(INFEASIBLE, np.full(n, np.nan), np.nan,
                              np.full(m1, np.nan), np.full(m2, np.nan),
                              tab.iterations, {"phase1_residual": float(infeas)})
        _drive_out_artificials(tab, art_cols)

    cost = np.zeros(n_cols)
    cost[:n] = lp.objective
    tab.set_objective(cost)
    status = tab.run(art_cols, max_iter)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, np.full(n, np.nan), np.inf,
                          np.full(m1, np.nan), np.full(m2, np.nan), tab.iterations)

    values = np.zeros(n_cols)
    values[tab.basis] = T[:m, -1]
    x = np.clip(values[:n], 0.0, None)
    y = -T[m, ident] * sign
    return LpSolution(OPTIMAL, x, float(lp.objective @ x), y[:m1].copy(), y[m1:].copy(),
                      tab.iterations)


def _drive_out_artificials(tab, art_cols):
    T, m, tol = tab.T, tab.m, tab.tol
    for p in range(m):
        if not art_cols[tab.basis[p]]:
            continue
        row = T[p, :-1]
        candidates = np.flatnonzero((np.abs(row) > tol) & ~art_cols)
        if candidates.size:
            tab.pivot(p, int(candidates[np.argmax(np.abs(row[candidates]))]))
        else:
            # Redundant row: pin it so later pivots leave it untouched.
            T[p, :-1][~art_cols] = 0.0
            T[p, -1] = 0.0


def verify(lp: LinearProgram, sol: LpSolution) -> dict:
    """Recompute primal/dual feasibility, duality gap and complementary slackness."""
    if sol.status != OPTIMAL:
        raise ValueError(f"cannot verify a solution with status {sol.status!r}")
    x, y, z = sol.x, sol.duals_ineq, sol.duals_eq
    slack = lp.b_ub - lp.A_ub @ x
    primal = max(
        float(np.max(-slack, initial=0.0)),
        float(np.max(np.abs(lp.A_eq @ x - lp.b_eq), initial=0.0)),
        float(np.max(-x, initial=0.0)),
    )
    reduced = lp.A_ub.T @ y + lp.A_eq.T @ z - lp.objective
    dual = max(float(np.max(-reduced, initial=0.0)), float(np.max(-y, initial=0.0)))
    primal_obj = float(lp.objective @ x)
    dual_obj = float(lp.b_ub @ y + lp.b_eq @ z)
    gap = abs(primal_obj - dual_obj)
    cs = max(float(np.max(np.abs(y * slack), initial=0.0)),
             float(np.max(np.abs(x * reduced), initial=0.0)))
    return {
        "primal_residual": primal,
        "dual_residual": dual,
        "duality_gap": gap,
        "complementary_slackness": cs,
        "primal_objective": primal_obj,
        "dual_objective": dual_obj,
        "max_residual": max(primal, dual, gap, cs),
    }
