"""Certificate numerics: violation levels, confidence splits, and budgets.

Every statement this package certifies has the shape "with confidence at
least 1 - beta over the private sampling, the violation probability is at
most epsilon".  This module holds the scalar machinery behind those
statements:

* the per-agent violation level as a function of an observed compression
  cardinality, either as the equal-split solution of the binomial-sum
  equation (``epsilon_implicit``) or in closed form (``epsilon_closed_form``);
* the binomial tail that converts a per-agent violation level and a
  support rank into a confidence level (``beta_from_support_rank``);
* worst-case budget maximization for sample-independent bounds
  (dynamic programming over per-agent complexity budgets);
* the polynomial whose smallest root yields the relaxed-core violation
  level (``solve_campi_polynomial``).

Binomial coefficients are evaluated through log-gamma so the formulas stay
usable at sample counts in the thousands.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log
from typing import Sequence

import numpy as np
from scipy.special import betainc, gammaln

from .errors import CoalisureError, GameSpecError, NoRootError
from .game import GameSpec, subcoalition_budget

METHOD_CORE_APOSTERIORI = "core-aposteriori"
METHOD_CORE_APRIORI = "core-apriori"
METHOD_ALLOCATION_APRIORI = "allocation-apriori"
METHOD_ALLOCATION_APOSTERIORI = "allocation-aposteriori"
METHOD_ALLOCATION_APRIORI_BUDGET = "allocation-apriori-budget"
METHOD_RELAXED_ALLOCATION = "relaxed-allocation"

ALL_METHODS = (
    METHOD_CORE_APOSTERIORI,
    METHOD_CORE_APRIORI,
    METHOD_ALLOCATION_APRIORI,
    METHOD_ALLOCATION_APOSTERIORI,
    METHOD_ALLOCATION_APRIORI_BUDGET,
    METHOD_RELAXED_ALLOCATION,
)

_RANK_PIVOT_TOL = 1e-10
# target comfortably inside the 1e-10 contract so the residual holds under
# independent re-evaluation too
_ROOT_RESIDUAL_TOL = 5e-11
_ROOT_WIDTH_TOL = 1e-12


def log_binom(n: int | np.ndarray, k: int | np.ndarray) -> np.ndarray | float:
    """log C(n, k) via log-gamma; -inf outside the support."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    out = np.where(
        (k < 0) | (k > n),
        -np.inf,
        gammaln(n + 1) - gammaln(np.maximum(k, 0) + 1) - gammaln(np.maximum(n - k, 0) + 1),
    )
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BetaSplit:
    """A confidence budget beta divided among agents."""

    total: float
    per_agent: tuple[float, ...]
    strategy: str

    def __post_init__(self):
        if not 0.0 < self.total < 1.0:
            raise CoalisureError(f"beta must lie in (0,1), got {self.total}")
        if any(not 0.0 < b < 1.0 for b in self.per_agent):
            raise CoalisureError("every per-agent beta must lie in (0,1)")
        if abs(sum(self.per_agent) - self.total) > 1e-12:
            raise CoalisureError("per-agent betas must sum to the total")

    @classmethod
    def equal(cls, beta: float, n_agents: int) -> "BetaSplit":
        share = beta / n_agents
        parts = [share] * (n_agents - 1)
        parts.append(beta - sum(parts))  # make the sum exact
        return cls(beta, tuple(parts), "equal")

    @classmethod
    def proportional(cls, beta: float, counts: Sequence[int]) -> "BetaSplit":
        total_k = sum(counts)
        parts = [beta * k / total_k for k in counts[:-1]]
        parts.append(beta - sum(parts))
        return cls(beta, tuple(parts), "proportional-to-counts")

    @classmethod
    def explicit(cls, betas: Sequence[float]) -> "BetaSplit":
        betas = tuple(float(b) for b in betas)
        return cls(sum(betas), betas, "explicit")

    @classmethod
    def make(cls, beta: float, n_agents: int, strategy, counts=None) -> "BetaSplit":
        if isinstance(strategy, (list, tuple)):
            return cls.explicit(strategy)
        if strategy == "equal":
            return cls.equal(beta, n_agents)
        if strategy == "proportional":
            if counts is None:
                raise CoalisureError("proportional split needs sample counts")
            return cls.proportional(beta, counts)
        raise CoalisureError(f"unknown beta split strategy {strategy!r}")


@dataclass(frozen=True)
class RiskCertificate:
    """One probabilistic stability statement with its full provenance."""

    method: str
    epsilon: float
    beta: float
    per_agent: tuple[dict, ...]
    provenance: dict = field(default_factory=dict)
    warning: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise CoalisureError(f"certificate epsilon {self.epsilon} outside [0,1]")

    def to_json_dict(self) -> dict:
        doc = {
            "schema_version": 1,
            "method": self.method,
            "epsilon": self.epsilon,
            "beta": self.beta,
            "per_agent": [dict(row) for row in self.per_agent],
            "provenance": dict(self.provenance),
        }
        if self.warning:
            doc["warning"] = self.warning
        return doc


def epsilon_implicit(k_total: int, beta_i: float) -> np.ndarray:
    """Violation-level table eps(k), k = 0..K, from the binomial-sum equation.

    The defining condition spreads the confidence mass equally over the
    K - 1 interior binomial terms, so each satisfies
    ``C(K,k) (1-eps(k))^(K-k) = beta / (K-1)`` exactly, and the table plugs
    back into the sum with zero residual.  ``eps(K) = 1`` by convention;
    ``eps(0)`` extends the same formula with the k = 0 coefficient.

    For K = 1 the interior sum is empty and the usual one-sample bound
    ``eps(0) = 1 - beta`` is used instead.
    """
    k_total = int(k_total)
    if k_total < 1:
        raise CoalisureError("sample count must be >= 1")
    if not 0.0 < beta_i < 1.0:
        raise CoalisureError(f"beta_i must lie in (0,1), got {beta_i}")
    if k_total == 1:
        return np.array([1.0 - beta_i, 1.0])
    ks = np.arange(0, k_total)
    log_base = log(beta_i) - log(k_total - 1) - log_binom(k_total, ks)
    eps = 1.0 - np.exp(log_base / (k_total - ks))
    table = np.empty(k_total + 1)
    table[:k_total] = np.clip(eps, 0.0, 1.0)
    table[k_total] = 1.0
    return table


def epsilon_closed_form(k_total: int, beta_i: float, n_agents: int, s: int) -> float:
    """eps(s) = 1 - (beta / ((N+1) C(K,s)))^(1/(K-s)); eps(K) = 1."""
    k_total, s = int(k_total), int(s)
    if k_total < 1 or n_agents < 1:
        raise CoalisureError("sample and agent counts must be >= 1")
    if not 0.0 < beta_i < 1.0:
        raise CoalisureError(f"beta_i must lie in (0,1), got {beta_i}")
    if not 0 <= s <= k_total:
        raise CoalisureError(f"complexity s={s} outside 0..{k_total}")
    if s == k_total:
        return 1.0
    log_base = log(beta_i) - log(n_agents + 1) - log_binom(k_total, s)
    return float(np.clip(1.0 - np.exp(log_base / (k_total - s)), 0.0, 1.0))


def _clip_unit(x: float) -> float:
    return float(min(1.0, max(0.0, x)))


def a_posteriori_core_bound(
    split: BetaSplit, s_counts: Sequence[int], counts: Sequence[int], provenance: dict | None = None
) -> RiskCertificate:
    """Core-instability level from observed per-agent compression sizes."""
    if not len(split.per_agent) == len(s_counts) == len(counts):
        raise CoalisureError("split, compression sizes, and counts must align")
    rows = []
    total = 0.0
    for agent, (beta_i, s_i, k_i) in enumerate(zip(split.per_agent, s_counts, counts)):
        if not 0 <= s_i <= k_i:
            raise CoalisureError(f"agent {agent + 1}: s={s_i} outside 0..{k_i}")
        term = float(epsilon_implicit(k_i, beta_i)[s_i])
        total += term
        rows.append({"agent": agent + 1, "samples": k_i, "beta": beta_i, "s": int(s_i), "term": term})
    return RiskCertificate(
        method=METHOD_CORE_APOSTERIORI,
        epsilon=_clip_unit(total),
        beta=split.total,
        per_agent=tuple(rows),
        provenance={"split": split.strategy, **(provenance or {})},
    )


def _budget_maximize(tables: Sequence[np.ndarray], budget: int) -> tuple[float, list[int]]:
    """max sum_i f_i(s_i) s.t. sum s_i <= budget, 0 <= s_i <= K_i.

    Dynamic programming over (agent, remaining budget); ties resolve to the
    smallest s for the earliest agents, so the assignment is deterministic.
    """
    budget = int(min(budget, sum(len(t) - 1 for t in tables)))
    if budget < 0:
        raise CoalisureError("budget must be >= 0")
    value = np.zeros(budget + 1)
    choices = []
    for table in tables:
        new_value = np.empty(budget + 1)
        choice = np.zeros(budget + 1, dtype=int)
        for b in range(budget + 1):
            s_hi = min(len(table) - 1, b)
            cand = table[: s_hi + 1] + value[b - s_hi : b + 1][::-1]
            s_best = int(np.argmax(cand))
            new_value[b] = cand[s_best]
            choice[b] = s_best
        value = new_value
        choices.append(choice)
    assignment = [0] * len(tables)
    b = budget
    for i in range(len(tables) - 1, -1, -1):
        assignment[i] = int(choices[i][b])
        b -= assignment[i]
    return float(value[budget]), assignment


def a_priori_core_bound(
    split: BetaSplit, counts: Sequence[int], budget: int | None = None, provenance: dict | None = None
) -> RiskCertificate:
    """Sample-independent core bound: worst case over complexity budgets.

    The budget defaults to the conventional subcoalition count 2^N - 1.
    """
    n = len(counts)
    if len(split.per_agent) != n:
        raise CoalisureError("split and counts must align")
    if budget is None:
        budget = subcoalition_budget(n)
    tables = [epsilon_implicit(k, b) for k, b in zip(counts, split.per_agent)]
    best, assignment = _budget_maximize(tables, budget)
    rows = tuple(
        {
            "agent": i + 1,
            "samples": counts[i],
            "beta": split.per_agent[i],
            "s": assignment[i],
            "term": float(tables[i][assignment[i]]),
        }
        for i in range(n)
    )
    return RiskCertificate(
        method=METHOD_CORE_APRIORI,
        epsilon=_clip_unit(best),
        beta=split.total,
        per_agent=rows,
        provenance={"split": split.strategy, "budget": int(budget), **(provenance or {})},
    )


def support_rank(spec: GameSpec, agent: int) -> int:
    """Row rank of the agent's coalition incidence matrix.

    For affine constraints the maximal unconstrained subspace is the common
    null space of the incidence rows, so the rank equals the problem
    dimension minus that subspace's dimension.
    """
    allowed = spec.allowed(agent)
    if not allowed:
        raise GameSpecError(f"agent {agent + 1} has no allowed coalitions")
    m = np.array([c.indicator(spec.n_agents) for c in allowed])
    rows, cols = m.shape
    rank = 0
    for col in range(cols):
        pivot = rank + int(np.argmax(np.abs(m[rank:, col])))
        if abs(m[pivot, col]) <= _RANK_PIVOT_TOL:
            continue
        m[[rank, pivot]] = m[[pivot, rank]]
        m[rank] /= m[rank, col]
        for r in range(rows):
            if r != rank and abs(m[r, col]) > _RANK_PIVOT_TOL:
                m[r] -= m[r, col] * m[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def beta_from_support_rank(k_total: int, eps_i: float, rho_i: int) -> float:
    """Confidence mass beta_i = sum_{j=1}^{rho} C(K,j) eps^j (1-eps)^(K-j)."""
    k_total, rho_i = int(k_total), int(rho_i)
    if not 0.0 < eps_i < 1.0:
        raise CoalisureError(f"eps_i must lie in (0,1), got {eps_i}")
    if not 1 <= rho_i <= k_total:
        raise CoalisureError(f"support rank {rho_i} outside 1..{k_total}")
    js = np.arange(1, rho_i + 1)
    terms = log_binom(k_total, js) + js * log(eps_i) + (k_total - js) * np.log1p(-eps_i)
    return float(np.exp(terms).sum())


def beta_from_support_rank_conventional(k_total: int, eps_i: float, rho_i: int) -> float:
    """The j = 0..rho-1 binomial tail, reported alongside the primary form."""
    k_total, rho_i = int(k_total), int(rho_i)
    if not 0.0 < eps_i < 1.0:
        raise CoalisureError(f"eps_i must lie in (0,1), got {eps_i}")
    if not 1 <= rho_i <= k_total:
        raise CoalisureError(f"support rank {rho_i} outside 1..{k_total}")
    js = np.arange(0, rho_i)
    terms = log_binom(k_total, js) + js * log(eps_i) + (k_total - js) * np.log1p(-eps_i)
    return float(np.exp(terms).sum())


def a_priori_allocation_bound(
    eps_split: Sequence[float],
    counts: Sequence[int],
    ranks: Sequence[int],
    provenance: dict | None = None,
) -> RiskCertificate:
    """Support-rank allocation bound: given a violation split, derive beta."""
    if not len(eps_split) == len(counts) == len(ranks):
        raise CoalisureError("eps split, counts, and ranks must align")
    rows = []
    beta_total = 0.0
    for agent, (eps_i, k_i, rho_i) in enumerate(zip(eps_split, counts, ranks)):
        b = beta_from_support_rank(k_i, eps_i, rho_i)
        rows.append(
            {
                "agent": agent + 1,
                "samples": k_i,
                "eps": float(eps_i),
                "support_rank": int(rho_i),
                "term": b,
                "term_conventional": beta_from_support_rank_conventional(k_i, eps_i, rho_i),
            }
        )
        beta_total += b
    return RiskCertificate(
        method=METHOD_ALLOCATION_APRIORI,
        epsilon=_clip_unit(sum(eps_split)),
        beta=_clip_unit(beta_total),
        per_agent=tuple(rows),
        provenance=dict(provenance or {}),
    )


def a_posteriori_allocation_bound(
    split: BetaSplit, s_counts: Sequence[int], counts: Sequence[int], provenance: dict | None = None
) -> RiskCertificate:
    """Allocation bound from observed compression sizes, closed-form levels."""
    n = len(counts)
    if not len(split.per_agent) == len(s_counts) == n:
        raise CoalisureError("split, compression sizes, and counts must align")
    rows = []
    total = 0.0
    for agent, (beta_i, s_i, k_i) in enumerate(zip(split.per_agent, s_counts, counts)):
        term = epsilon_closed_form(k_i, beta_i, n, s_i)
        total += term
        rows.append({"agent": agent + 1, "samples": k_i, "beta": beta_i, "s": int(s_i), "term": term})
    return RiskCertificate(
        method=METHOD_ALLOCATION_APOSTERIORI,
        epsilon=_clip_unit(total),
        beta=split.total,
        per_agent=tuple(rows),
        provenance={"split": split.strategy, **(provenance or {})},
    )


def a_priori_allocation_bound_budget(
    split: BetaSplit, counts: Sequence[int], budget: int | None = None, provenance: dict | None = None
) -> RiskCertificate:
    """Sample-independent allocation bound over a complexity budget.

    Per-agent compression sizes for a single allocation sum to at most the
    number of agents, so the default budget is N.
    """
    n = len(counts)
    if len(split.per_agent) != n:
        raise CoalisureError("split and counts must align")
    if budget is None:
        budget = n
    tables = [
        np.array([epsilon_closed_form(k, b, n, s) for s in range(k + 1)])
        for k, b in zip(counts, split.per_agent)
    ]
    best, assignment = _budget_maximize(tables, budget)
    rows = tuple(
        {
            "agent": i + 1,
            "samples": counts[i],
            "beta": split.per_agent[i],
            "s": assignment[i],
            "term": float(tables[i][assignment[i]]),
        }
        for i in range(n)
    )
    return RiskCertificate(
        method=METHOD_ALLOCATION_APRIORI_BUDGET,
        epsilon=_clip_unit(best),
        beta=split.total,
        per_agent=rows,
        provenance={"split": split.strategy, "budget": int(budget), **(provenance or {})},
    )


# --- the relaxed-core polynomial -------------------------------------------

class _PolyTerms:
    """Precomputed log-domain coefficients of the certificate polynomial

        h(t) = C(K,s) t^(K-s)
             - beta/(2N)  sum_{j=s}^{K-1}   C(j,s) t^(j-s)
             - beta/(6K)  sum_{j=K+1}^{4K}  C(j,s) t^(j-s).
    """

    def __init__(self, k_total: int, s: int, beta_i: float, n_agents: int):
        self.k_total, self.s, self.beta_i, self.n_agents = k_total, s, beta_i, n_agents
        self.log_lead = float(log_binom(k_total, s))
        js_mid = np.arange(s, k_total)
        self.lc_mid = log_binom(js_mid, s) if js_mid.size else np.zeros(0)
        self.pw_mid = (js_mid - s).astype(float)
        js_tail = np.arange(k_total + 1, 4 * k_total + 1)
        self.lc_tail = log_binom(js_tail, s)
        self.pw_tail = (js_tail - s).astype(float)
        self.log_w_mid = log(beta_i / (2.0 * n_agents))
        self.log_w_tail = log(beta_i / (6.0 * k_total))

    def log_parts(self, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(log positive part, log negative part) via log-sum-exp."""
        logt = np.log(ts)
        log_pos = self.log_lead + (self.k_total - self.s) * logt

        def lse(lc, pw):
            m = lc[None, :] + pw[None, :] * logt[:, None]
            peak = m.max(axis=1)
            return peak + np.log(np.exp(m - peak[:, None]).sum(axis=1))

        mid = self.log_w_mid + lse(self.lc_mid, self.pw_mid)
        tail = self.log_w_tail + lse(self.lc_tail, self.pw_tail)
        return log_pos, np.logaddexp(mid, tail)

    def normalized(self, ts) -> np.ndarray:
        """h(t) divided by its leading term; same sign and roots on t > 0."""
        log_pos, log_neg = self.log_parts(np.atleast_1d(np.asarray(ts, dtype=float)))
        with np.errstate(over="ignore"):
            return 1.0 - np.exp(log_neg - log_pos)


def _poly_normalized(ts, k_total, s, beta_i, n_agents) -> np.ndarray:
    return _PolyTerms(k_total, s, beta_i, n_agents).normalized(ts)


def _poly_signs_fast(ts: np.ndarray, k_total: int, s: int, beta_i: float, n_agents: int) -> np.ndarray:
    """Signs of h on a grid via the negative-binomial closed form of the sums.

    ``sum_{j=s}^{M} C(j,s) t^(j-s) = I_{1-t}(s+1, M-s+1) / (1-t)^(s+1)``
    collapses each sum to one incomplete-beta call.  Points where the
    factor ``(1-t)^(s+1)`` underflows fall back to the log-sum-exp route.
    """
    signs = np.empty(ts.size)
    one_m = 1.0 - ts
    safe = (s + 1) * np.log(np.maximum(one_m, 1e-300)) > -600.0  # overflow guard
    if safe.any():
        t_s = ts[safe]
        log_pos = log_binom(k_total, s) + (k_total - s) * np.log(t_s)
        om = 1.0 - t_s
        scale = (s + 1) * np.log(om)
        a = s + 1
        b_lo, b_hi = k_total - s + 1, 4 * k_total - s + 1
        cdf_lo = betainc(a, b_lo, om)
        # difference of two saturating CDFs: switch to the survival side
        # where it cancels, I_x(a,b) = 1 - I_{1-x}(b,a)
        diff_cdf = betainc(a, b_hi, om) - cdf_lo
        diff_sf = betainc(b_lo, a, t_s) - betainc(b_hi, a, t_s)
        tail_diff = np.where(cdf_lo > 0.5, diff_sf, diff_cdf)
        with np.errstate(divide="ignore"):
            mid = np.log(betainc(a, k_total - s, om)) - scale
            tail = np.log(np.maximum(tail_diff, 0.0)) - scale
        neg = np.logaddexp(log(beta_i / (2.0 * n_agents)) + mid, log(beta_i / (6.0 * k_total)) + tail)
        signs[safe] = np.sign(log_pos - neg)
    rest = ~safe
    if rest.any():
        log_pos, log_neg = _PolyTerms(k_total, s, beta_i, n_agents).log_parts(ts[rest])
        signs[rest] = np.sign(log_pos - log_neg)
    return signs


def solve_campi_polynomial(
    k_total: int, beta_i: float, n_agents: int, s: int
) -> tuple[float, float]:
    """Smallest nonnegative root t of the certificate polynomial, and 1 - t.

    The root is bracketed by a sign scan over (0, 1] at resolution
    1/(64 K), then bisected until the bracket is narrower than 1e-12 and
    the leading-term-normalized polynomial value at the root is below
    1e-10 in magnitude.  (The raw polynomial spans hundreds of orders of
    magnitude, so the residual is measured on the normalized form, which
    has the same roots.)  For s = K the root is 0 by convention.

    Raises :class:`NoRootError`, with the scan trace attached, when the
    polynomial never turns positive on the grid.
    """
    k_total, s, n_agents = int(k_total), int(s), int(n_agents)
    if k_total < 1 or n_agents < 1:
        raise CoalisureError("sample and agent counts must be >= 1")
    if not 0.0 < beta_i < 1.0:
        raise CoalisureError(f"beta_i must lie in (0,1), got {beta_i}")
    if not 0 <= s <= k_total:
        raise CoalisureError(f"complexity s={s} outside 0..{k_total}")
    if s == k_total:
        return 0.0, 1.0

    n_pts = 64 * k_total
    ts = np.arange(1, n_pts + 1) / n_pts
    signs = _poly_signs_fast(ts, k_total, s, beta_i, n_agents)
    terms = _PolyTerms(k_total, s, beta_i, n_agents)

    def exact_sign(t: float) -> float:
        return np.sign(float(terms.normalized(t)[0]))

    # the fast evaluator can misjudge points a hair from a root: confirm the
    # bracket with the log-sum-exp evaluation, which is authoritative
    first = -1
    for idx in np.flatnonzero(signs > 0):
        if exact_sign(float(ts[idx])) > 0:
            first = int(idx)
            break
    if first < 0:
        log_pos, log_neg = terms.log_parts(ts)
        exact = np.sign(log_pos - log_neg)
        positive = np.flatnonzero(exact > 0)
        if positive.size == 0:
            raise NoRootError(
                f"no sign change on (0,1] for K={k_total}, s={s}, beta={beta_i}, N={n_agents}",
                scan_points=ts,
                scan_signs=exact,
            )
        first = int(positive[0])
    while first > 0 and exact_sign(float(ts[first - 1])) > 0:
        first -= 1
    lo = 0.0 if first == 0 else float(ts[first - 1])
    hi = float(ts[first])

    # the polynomial is strictly negative at 0+, so (lo, hi] brackets a root;
    # the returned point is always one at which the residual was measured
    root = None
    residual = np.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        val = float(terms.normalized(mid)[0])
        if abs(val) < residual:
            root, residual = mid, abs(val)
        if val > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= _ROOT_WIDTH_TOL and residual <= _ROOT_RESIDUAL_TOL:
            break
    if root is None or residual > _ROOT_RESIDUAL_TOL:
        for cand in (hi,) if lo == 0.0 else (lo, hi):
            val = abs(float(terms.normalized(cand)[0]))
            if val < residual:
                root, residual = cand, val
    if residual > _ROOT_RESIDUAL_TOL:
        raise CoalisureError(
            f"bisection stalled at residual {residual:.3e} for K={k_total}, s={s}"
        )
    return float(root), float(1.0 - root)
