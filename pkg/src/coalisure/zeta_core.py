"""The relaxed (zeta) core: slack-minimizing allocation and its certificate.

When the scenario core is empty, per-sample nonnegative slacks make the
constraint system feasible again.  The program

    min  sum_{i,k} zeta_i^(k)
    s.t. sum_i x_i = grand value
         x(S) >= u_S(xi_i^(k)) - zeta_i^(k)   for every agent i, sample k,
                                              and coalition S the agent may join

always has a solution; its optimal slacks say how much each agent's data
pushes against stability, and the count of strictly positive slacks per
agent feeds the polynomial certificate.  One slack per (agent, sample) is
shared across that sample's coalition constraints.

The LP is solved by row generation: starting from each coalition's
currently-binding sample rows, violated (agent, sample, coalition) rows
are added until none remain, which yields the exact optimum of the full
program.  Uniqueness comes from a lexicographic tie-break over x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp
from .errors import LpError
from .game import Coalition, GameSpec, enumerate_subcoalitions
from .risk import (
    METHOD_RELAXED_ALLOCATION,
    BetaSplit,
    RiskCertificate,
    solve_campi_polynomial,
)
from .sampling import PrivateSamples
from .scenario_core import TightenedBounds

POSITIVE_SLACK_TOL = 1e-7
_TIE_TOL = 1e-9
_VIOLATION_TOL = 1e-9


@dataclass(frozen=True)
class ZetaSolution:
    """Optimal allocation, per-sample slacks, and derived complexity counts."""

    x_star: np.ndarray
    zeta_star: tuple[np.ndarray, ...]       # per agent, length K_i
    objective: float
    s_star: tuple[int, ...]                  # strictly positive slacks per agent
    s_star_sensitivity: tuple[int, ...]      # recount at a 10x smaller threshold
    zeta_bar: tuple[float, ...]              # per-agent max slack
    positive_tol: float

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "x_star": [float(v) for v in self.x_star],
            "objective": self.objective,
            "zeta": [[float(z) for z in zs] for zs in self.zeta_star],
            "s_star": list(self.s_star),
            "s_star_sensitivity": list(self.s_star_sensitivity),
            "zeta_bar": [float(z) for z in self.zeta_bar],
            "positive_tol": self.positive_tol,
        }


def _sample_values(spec: GameSpec, samples: PrivateSamples):
    """values[i] is a (K_i, |allowed(i)|) matrix of u_S(xi_i^(k))."""
    values = []
    allowed = []
    for agent in range(spec.n_agents):
        cs = spec.allowed(agent)
        allowed.append(cs)
        cols = [
            spec.value_model.value_batch(c, samples.per_agent[agent]) for c in cs
        ]
        values.append(np.column_stack(cols) if cols else np.zeros((samples.counts[agent], 0)))
    return values, allowed


def _pointwise_slacks(spec, samples, values, allowed, x):
    """Minimal feasible slacks for a fixed allocation: max(0, u - x(S))."""
    out = []
    for agent in range(spec.n_agents):
        if values[agent].shape[1] == 0:
            out.append(np.zeros(samples.counts[agent]))
            continue
        pays = np.array([x[list(c.members)].sum() for c in allowed[agent]])
        out.append(np.maximum(0.0, (values[agent] - pays).max(axis=1)))
    return out


def solve_zeta_program(spec: GameSpec, samples: PrivateSamples) -> ZetaSolution:
    """Minimize total slack, then pick the lexicographically smallest x.

    Returns the unique optimal pair: among total-slack minimizers, x
    minimizes x_1, then x_2, and so on; the slacks for that x are the
    pointwise minima, which any optimal solution must equal.
    """
    n = spec.n_agents
    values, allowed = _sample_values(spec, samples)
    counts = samples.counts
    total_k = sum(counts)
    zeta_offset = np.concatenate([[0], np.cumsum(counts)])[:-1]
    n_vars = n + total_k

    # active rows (agent, sample, coalition position) seeded with each
    # coalition's currently-binding sample per member agent
    active: list[tuple[int, int, int]] = []
    seen = set()
    for coalition in enumerate_subcoalitions(spec):
        for agent in coalition.members:
            try:
                pos = allowed[agent].index(coalition)
            except ValueError:
                continue
            k = int(np.argmax(values[agent][:, pos]))
            key = (agent, k, pos)
            if key not in seen:
                seen.add(key)
                active.append(key)

    lower = np.concatenate([np.full(n, -np.inf), np.zeros(total_k)])
    objective = np.concatenate([np.zeros(n), np.ones(total_k)])

    def build_rows(rows):
        a = np.zeros((len(rows), n_vars))
        b = np.empty(len(rows))
        for r, (agent, k, pos) in enumerate(rows):
            for member in allowed[agent][pos].members:
                a[r, member] = 1.0
            a[r, n + zeta_offset[agent] + k] = 1.0
            b[r] = values[agent][k, pos]
        return a, b

    eff_row = np.zeros(n_vars)
    eff_row[:n] = 1.0

    def run(cost, extra_a, extra_b):
        """Solve with row generation until no (agent, sample, coalition)
        constraint is violated; returns the LP outcome."""
        while True:
            a_act, b_act = build_rows(active)
            a_ge = np.vstack([a_act] + extra_a) if extra_a else a_act
            b_ge = np.concatenate([b_act] + extra_b) if extra_b else b_act
            out = lp.solve(
                lp.LinearProgram.build(
                    cost, a_eq=[eff_row], b_eq=[spec.grand_value],
                    a_ge=a_ge, b_ge=b_ge, lower_bounds=lower,
                )
            )
            if out.status != lp.OPTIMAL:
                raise LpError(f"slack program came back {out.status}")
            x = out.x[:n]
            added = False
            for agent in range(spec.n_agents):
                if values[agent].shape[1] == 0:
                    continue
                pays = np.array([x[list(c.members)].sum() for c in allowed[agent]])
                gaps = values[agent] - pays  # (K_i, n_allowed)
                zv = out.x[n + zeta_offset[agent] : n + zeta_offset[agent] + counts[agent]]
                worst = gaps.max(axis=1) - zv
                for k in np.flatnonzero(worst > _VIOLATION_TOL):
                    pos = int(np.argmax(gaps[int(k)]))
                    key = (agent, int(k), pos)
                    if key not in seen:
                        seen.add(key)
                        active.append(key)
                        added = True
            if not added:
                return out

    out = run(objective, [], [])
    best = out.objective

    # lexicographic tie-break over x on the optimal face
    extra_a = [-objective.reshape(1, -1)]
    extra_b = [np.array([-(best + _TIE_TOL)])]
    x = out.x[:n]
    for j in range(n):
        cost = np.zeros(n_vars)
        cost[j] = 1.0
        out = run(cost, extra_a, extra_b)
        x = out.x[:n]
        cap = np.zeros(n_vars)
        cap[j] = -1.0
        extra_a.append(cap.reshape(1, -1))
        extra_b.append(np.array([-(out.objective + _TIE_TOL)]))

    zeta = _pointwise_slacks(spec, samples, values, allowed, x)
    zeta = tuple(np.maximum(z, 0.0) for z in zeta)
    s_star, s_sens = complexity_counts_from_slacks(zeta)
    return ZetaSolution(
        x_star=x.copy(),
        zeta_star=zeta,
        objective=float(sum(z.sum() for z in zeta)),
        s_star=s_star,
        s_star_sensitivity=s_sens,
        zeta_bar=tuple(float(z.max()) if z.size else 0.0 for z in zeta),
        positive_tol=POSITIVE_SLACK_TOL,
    )


def complexity_counts_from_slacks(
    zeta: tuple[np.ndarray, ...], tol: float = POSITIVE_SLACK_TOL
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Counts of strictly positive slacks at ``tol`` and at ``tol/10``."""
    primary = tuple(int((z > tol).sum()) for z in zeta)
    finer = tuple(int((z > tol / 10.0).sum()) for z in zeta)
    return primary, finer


def complexity_counts(sol: ZetaSolution, tol: float = POSITIVE_SLACK_TOL) -> dict:
    """Per-agent positive-slack counts with the thresholds used."""
    primary, finer = complexity_counts_from_slacks(sol.zeta_star, tol)
    return {
        "s_star": primary,
        "s_star_sensitivity": finer,
        "tol": tol,
        "tol_sensitivity": tol / 10.0,
    }


def zeta_certificate(
    split: BetaSplit,
    s_star: tuple[int, ...] | list[int],
    counts: tuple[int, ...] | list[int],
    n_agents: int,
    assumption_continuous: bool = True,
    provenance: dict | None = None,
) -> RiskCertificate:
    """Stability level for the slack-minimizing allocation.

    With confidence 1 - beta, a fresh realization makes some coalition
    strictly prefer defecting from x* with probability at most the sum of
    per-agent levels 1 - t_i(s_i*).  Emitted with a warning when the
    sampling distribution may be degenerate (value ties would void the
    non-accumulation requirement behind the statement).
    """
    if not len(split.per_agent) == len(s_star) == len(counts):
        raise ValueError("split, complexity counts, and sample counts must align")
    rows = []
    total = 0.0
    for agent, (beta_i, s_i, k_i) in enumerate(zip(split.per_agent, s_star, counts)):
        t_i, eps_bar = solve_campi_polynomial(k_i, beta_i, n_agents, s_i)
        total += eps_bar
        rows.append(
            {
                "agent": agent + 1,
                "samples": int(k_i),
                "beta": beta_i,
                "s_star": int(s_i),
                "t": t_i,
                "term": eps_bar,
            }
        )
    warning = None if assumption_continuous else (
        "distribution may be degenerate: the non-accumulation assumption "
        "behind this certificate is not guaranteed"
    )
    return RiskCertificate(
        method=METHOD_RELAXED_ALLOCATION,
        epsilon=min(1.0, total),
        beta=split.total,
        per_agent=tuple(rows),
        provenance={"split": split.strategy, **(provenance or {})},
        warning=warning,
    )


def zeta_membership(
    spec: GameSpec,
    bounds: TightenedBounds,
    zeta_bar: tuple[float, ...] | list[float],
    x,
    tol: float = 1e-9,
) -> bool:
    """Membership in the relaxed core with per-agent relaxations.

    Each member agent's tightened contribution is relaxed by that agent's
    own allowance before the outer maximum is taken:
    ``x(S) >= max over i in S of (agent-i bound for S) - zeta_bar_i``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.n_agents,):
        raise ValueError("allocation length does not match the agent count")
    if any(z < 0 for z in zeta_bar):
        raise ValueError("relaxations must be nonnegative")
    if abs(x.sum() - spec.grand_value) > tol:
        return False
    for coalition in enumerate_subcoalitions(spec):
        entry = bounds.entries[coalition.mask]
        relaxed = max(
            entry.per_agent[a] - zeta_bar[a] for a in entry.per_agent
        )
        if x[list(coalition.members)].sum() < relaxed - tol:
            return False
    return True
