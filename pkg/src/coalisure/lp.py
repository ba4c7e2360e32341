"""Dense two-phase simplex for small equality/inequality systems.

The solver is deliberately self-contained: the polyhedra in this package
are desk-scale (tens to a few hundred rows), and a deterministic in-process
method beats an external dependency for reproducibility.  Pricing uses the
most-negative reduced cost with lowest-index tie-breaks; after a run of
degenerate pivots the solver switches to Bland's rule, which guarantees
termination.  Feasibility and optimality are resolved to an absolute
tolerance of ``TOL = 1e-9``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LpError, LpNumericalError

TOL = 1e-9
_PIVOT_TOL = 1e-9
_DEGENERATE_RUN = 30
_MAX_ITER = 100_000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


def _as_matrix(a, n_cols: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((0, n_cols))
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or (a.size and a.shape[1] != n_cols):
        raise LpError(f"{name} must be a matrix with {n_cols} columns, got shape {a.shape}")
    return a.reshape(a.shape[0], n_cols)


@dataclass(frozen=True)
class LinearProgram:
    """min c.x  s.t.  A_eq x = b_eq,  A_ge x >= b_ge,  x >= lower_bounds.

    ``lower_bounds`` may be None (all variables free) or a vector mixing
    finite bounds with ``-inf`` for free variables.
    """

    objective: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ge: np.ndarray
    b_ge: np.ndarray
    lower_bounds: np.ndarray | None = None

    @classmethod
    def build(
        cls,
        objective: Sequence[float],
        a_eq=None,
        b_eq=None,
        a_ge=None,
        b_ge=None,
        lower_bounds=None,
    ) -> "LinearProgram":
        c = np.asarray(objective, dtype=float)
        if c.ndim != 1:
            raise LpError("objective must be a vector")
        n = c.size
        a_eq = _as_matrix(a_eq, n, "a_eq")
        a_ge = _as_matrix(a_ge, n, "a_ge")
        b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
        b_ge = np.zeros(0) if b_ge is None else np.asarray(b_ge, dtype=float).ravel()
        if a_eq.shape[0] != b_eq.size or a_ge.shape[0] != b_ge.size:
            raise LpError("constraint matrix/vector row counts disagree")
        if lower_bounds is not None:
            lower_bounds = np.asarray(lower_bounds, dtype=float).ravel()
            if lower_bounds.size != n:
                raise LpError("lower_bounds length must match the variable count")
            if np.isposinf(lower_bounds).any() or np.isnan(lower_bounds).any():
                raise LpError("lower bounds must be finite or -inf")
        for arr, name in ((c, "objective"), (a_eq, "a_eq"), (a_ge, "a_ge"), (b_eq, "b_eq"), (b_ge, "b_ge")):
            if arr.size and not np.isfinite(arr).all():
                raise LpError(f"non-finite entries in {name}")
        return cls(c, a_eq, b_eq, a_ge, b_ge, lower_bounds)

    @property
    def n_vars(self) -> int:
        return self.objective.size


@dataclass(frozen=True)
class LpOutcome:
    """Solver verdict plus the activity report for the original constraints."""

    status: str
    x: np.ndarray | None
    objective: float | None
    slack_eq: np.ndarray | None
    slack_ge: np.ndarray | None

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Canonical-form simplex tableau with an attached reduced-cost row."""

    def __init__(self, a: np.ndarray, b: np.ndarray, basis: list[int]):
        self.a = a              # (m, n_total) in canonical form wrt basis
        self.b = b              # (m,) nonnegative
        self.basis = basis      # basis[r] = column basic in row r
        self.allowed = np.ones(a.shape[1], dtype=bool)  # columns eligible to enter

    def run(self, cost: np.ndarray) -> tuple[str, float]:
        """Minimize cost.x from the current basis; returns (status, objective)."""
        a, b, basis = self.a, self.b, self.basis
        red = cost - cost[basis] @ a  # reduced costs (basis entries come out 0)
        obj = float(cost[basis] @ b)
        bland = False
        stall = 0
        for _ in range(_MAX_ITER):
            red[basis] = 0.0
            candidates = np.flatnonzero(self.allowed & (red < -TOL))
            if candidates.size == 0:
                return OPTIMAL, obj
            if bland:
                enter = int(candidates[0])
            else:
                enter = int(candidates[np.argmin(red[candidates])])
            col = a[:, enter]
            rows = np.flatnonzero(col > _PIVOT_TOL)
            if rows.size == 0:
                return UNBOUNDED, -np.inf
            ratios = b[rows] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12]
            if bland:
                leave = int(ties[np.argmin(np.asarray(basis)[ties])])
            else:
                leave = int(ties[0])
            # pivot
            piv = a[leave, enter]
            a[leave] /= piv
            b[leave] /= piv
            factors = a[:, enter].copy()
            factors[leave] = 0.0
            a -= np.outer(factors, a[leave])
            b -= factors * b[leave]
            np.maximum(b, 0.0, out=b)
            red = red - red[enter] * a[leave]  # keep the cost row canonical
            basis[leave] = enter
            new_obj = float(cost[np.asarray(basis)] @ b)
            if obj - new_obj < 1e-12:
                stall += 1
                if stall >= _DEGENERATE_RUN:
                    bland = True
            else:
                stall = 0
            obj = new_obj
        raise LpNumericalError("simplex iteration limit reached")


def _standardize(lp: LinearProgram):
    """Rewrite into equality form over nonnegative variables.

    Returns (columns, a_std, b_std, c_std, n_struct) where ``columns`` maps
    each original variable to its standard-form column(s) and shift.
    """
    n = lp.n_vars
    lb = lp.lower_bounds
    col_plus = np.zeros(n, dtype=int)
    col_minus = np.full(n, -1, dtype=int)
    shift = np.zeros(n)
    next_col = 0
    for j in range(n):
        col_plus[j] = next_col
        next_col += 1
        if lb is None or np.isneginf(lb[j]):
            col_minus[j] = next_col
            next_col += 1
        else:
            shift[j] = lb[j]
    m_eq, m_ge = lp.a_eq.shape[0], lp.a_ge.shape[0]
    m = m_eq + m_ge
    n_struct = next_col + m_ge  # structural + surplus
    a = np.zeros((m, n_struct))
    b = np.empty(m)
    orig = np.vstack([lp.a_eq, lp.a_ge]) if m else np.zeros((0, n))
    rhs = np.concatenate([lp.b_eq, lp.b_ge]) if m else np.zeros(0)
    rhs = rhs - orig @ shift
    for j in range(n):
        a[:, col_plus[j]] = orig[:, j]
        if col_minus[j] >= 0:
            a[:, col_minus[j]] = -orig[:, j]
    for r in range(m_ge):
        a[m_eq + r, next_col + r] = -1.0  # surplus: A x - s = b
    b[:] = rhs
    c = np.zeros(n_struct)
    for j in range(n):
        c[col_plus[j]] += lp.objective[j]
        if col_minus[j] >= 0:
            c[col_minus[j]] -= lp.objective[j]
    return (col_plus, col_minus, shift), a, b, c, n_struct


def solve(lp: LinearProgram) -> LpOutcome:
    """Two-phase simplex; deterministic for identical inputs."""
    (col_plus, col_minus, shift), a, b, c, n_struct = _standardize(lp)
    m = a.shape[0]

    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0

    # initial basis: reuse +1 surplus columns where a row flip produced one
    basis: list[int] = []
    art_cols: list[int] = []
    art_blocks = []
    for r in range(m):
        col = -1
        if r >= lp.a_eq.shape[0]:
            s_col = n_struct - (m - lp.a_eq.shape[0]) + (r - lp.a_eq.shape[0])
            if a[r, s_col] > 0.5:
                col = s_col
        if col < 0:
            art_blocks.append(r)
            col = n_struct + len(art_cols)
            art_cols.append(col)
        basis.append(col)
    if art_cols:
        art = np.zeros((m, len(art_cols)))
        for k, r in enumerate(art_blocks):
            art[r, k] = 1.0
        a = np.hstack([a, art])
    tab = _Tableau(a, b, basis)

    if art_cols:
        phase1_cost = np.zeros(a.shape[1])
        phase1_cost[n_struct:] = 1.0
        status, p1 = tab.run(phase1_cost)
        if status != OPTIMAL:  # phase 1 is always bounded below by 0
            raise LpNumericalError("phase-1 anomaly: unbounded artificial objective")
        if p1 > TOL:
            return LpOutcome(INFEASIBLE, None, None, None, None)
        _evict_artificials(tab, n_struct)

    tab.allowed[n_struct:] = False
    full_cost = np.concatenate([c, np.zeros(tab.a.shape[1] - n_struct)])
    status, _ = tab.run(full_cost)
    if status == UNBOUNDED:
        return LpOutcome(UNBOUNDED, None, None, None, None)

    x = _extract(lp, tab, (col_plus, col_minus, shift), n_struct)
    slack_eq = lp.a_eq @ x - lp.b_eq if lp.a_eq.size else np.zeros(0)
    slack_ge = lp.a_ge @ x - lp.b_ge if lp.a_ge.size else np.zeros(0)
    worst = 0.0
    if slack_eq.size:
        worst = max(worst, float(np.abs(slack_eq).max()))
    if slack_ge.size:
        worst = max(worst, float(max(0.0, -slack_ge.min())))
    if lp.lower_bounds is not None:
        lbv = lp.lower_bounds
        finite = np.isfinite(lbv)
        if finite.any():
            worst = max(worst, float(max(0.0, (lbv[finite] - x[finite]).max())))
    if worst > 1e2 * TOL:
        raise LpNumericalError(f"residual {worst:.3e} exceeds tolerance after solve")
    return LpOutcome(OPTIMAL, x, float(lp.objective @ x), slack_eq, slack_ge)


def feasible(lp: LinearProgram) -> LpOutcome:
    """Feasibility check: solve with a zero objective, return any feasible point."""
    zero = LinearProgram(
        np.zeros(lp.n_vars), lp.a_eq, lp.b_eq, lp.a_ge, lp.b_ge, lp.lower_bounds
    )
    return solve(zero)


def _evict_artificials(tab: _Tableau, n_struct: int) -> None:
    """Pivot zero-valued artificials out of the basis; drop redundant rows."""
    drop = []
    for r in range(len(tab.basis)):
        if tab.basis[r] < n_struct:
            continue
        row = tab.a[r, :n_struct]
        pivots = np.flatnonzero(np.abs(row) > _PIVOT_TOL)
        if pivots.size == 0:
            drop.append(r)  # row is redundant within tolerance
            continue
        enter = int(pivots[0])
        piv = tab.a[r, enter]
        tab.a[r] /= piv
        tab.b[r] /= piv
        factors = tab.a[:, enter].copy()
        factors[r] = 0.0
        tab.a -= np.outer(factors, tab.a[r])
        tab.b -= factors * tab.b[r]
        np.maximum(tab.b, 0.0, out=tab.b)
        tab.basis[r] = enter
    if drop:
        keep = [r for r in range(len(tab.basis)) if r not in set(drop)]
        tab.a = tab.a[keep]
        tab.b = tab.b[keep]
        tab.basis = [tab.basis[r] for r in keep]


def _extract(lp, tab: _Tableau, columns, n_struct: int) -> np.ndarray:
    """Read the basic solution, then refine it against the original system.

    A fresh linear solve on the final basis wipes out the round-off the
    tableau accumulated over its pivots.
    """
    col_plus, col_minus, shift = columns
    y = np.zeros(tab.a.shape[1])
    y[np.asarray(tab.basis, dtype=int)] = tab.b

    refined = _resolve_basis(lp, tab, n_struct)
    if refined is not None:
        y[: n_struct] = refined

    x = np.empty(lp.n_vars)
    for j in range(lp.n_vars):
        v = y[col_plus[j]]
        if col_minus[j] >= 0:
            v -= y[col_minus[j]]
        x[j] = v + shift[j]
    return x


def _resolve_basis(lp, tab: _Tableau, n_struct: int) -> np.ndarray | None:
    basis = [c for c in tab.basis if c < n_struct]
    if len(basis) != len(tab.basis):
        return None  # an artificial survived at zero level; keep tableau values
    (col_plus, col_minus, shift), a_std, b_std, _, _ = _standardize(lp)
    neg = b_std < 0
    a_std[neg] *= -1.0
    b_std[neg] *= -1.0
    # identify the surviving rows by matching count; if rows were dropped we
    # cannot reconstruct the square basis, keep tableau values instead
    if a_std.shape[0] != len(tab.basis):
        return None
    if not basis:
        return np.zeros(n_struct)
    try:
        sol = np.linalg.solve(a_std[:, basis], b_std)
    except np.linalg.LinAlgError:
        return None
    if not np.isfinite(sol).all() or sol.min() < -1e-7:
        return None
    y = np.zeros(n_struct)
    y[basis] = np.maximum(sol, 0.0)
    return y
