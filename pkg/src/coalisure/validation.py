"""Monte Carlo estimation of instability probabilities and coverage runs.

Two estimators and one harness:

* allocation instability: the chance a fresh realization makes some
  coalition's sampled value exceed what the allocation pays it;
* core instability: the chance a fresh realization cuts into the core,
  decided through precomputed per-coalition minima (a realization removes
  some core point iff a coalition's value exceeds that coalition's
  minimum payoff over the core);
* coverage experiments that rebuild the whole pipeline trial after trial
  and compare certified levels against estimated truth.

All estimators are exact binomial experiments, reported with two-sided
99% Clopper-Pearson intervals.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import beta as beta_dist

from . import compression, risk, scenario_core, zeta_core
from .errors import CoalisureError, ConfigError, EmptyCoreError
from .game import GameSpec, enumerate_subcoalitions
from .sampling import DistributionSpec, draw_fresh, draw_private

_TRIAL_TAG = 0x7B1A15
_FRESH_TAG = 0x3D11

CP_CONFIDENCE = 0.99


def clopper_pearson(hits: int, n: int, confidence: float = CP_CONFIDENCE) -> tuple[float, float]:
    """Two-sided exact binomial interval for hits/n."""
    if not 0 <= hits <= n or n < 1:
        raise CoalisureError("need 0 <= hits <= n with n >= 1")
    alpha = 1.0 - confidence
    lo = 0.0 if hits == 0 else float(beta_dist.ppf(alpha / 2.0, hits, n - hits + 1))
    hi = 1.0 if hits == n else float(beta_dist.ppf(1.0 - alpha / 2.0, hits + 1, n - hits))
    return lo, hi


@dataclass(frozen=True)
class ViolationEstimate:
    """Empirical violation frequency with its exact confidence interval."""

    p_hat: float
    n_samples: int
    hits: int
    lower: float
    upper: float
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "p_hat": self.p_hat,
            "n_samples": self.n_samples,
            "hits": self.hits,
            "cp_lower": self.lower,
            "cp_upper": self.upper,
            "confidence": CP_CONFIDENCE,
            "seed": self.seed,
        }


def _violation_flags(spec: GameSpec, thresholds: dict[int, float], fresh: np.ndarray) -> np.ndarray:
    """For each fresh row: does any coalition's value strictly exceed its threshold?"""
    flags = np.zeros(fresh.shape[0], dtype=bool)
    for coalition in enumerate_subcoalitions(spec):
        lim = thresholds[coalition.mask]
        if np.isneginf(lim):
            flags[:] = True
            break
        vals = spec.value_model.value_batch(coalition, fresh)
        flags |= vals > lim
    return flags


def estimate_allocation_instability(
    spec: GameSpec, x: Sequence[float], dist: DistributionSpec, n: int, seed: int
) -> ViolationEstimate:
    """Fraction of fresh draws under which some coalition strictly prefers
    defecting from the allocation; ties count as stable."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.n_agents,):
        raise CoalisureError("allocation length does not match the agent count")
    thresholds = {
        c.mask: float(x[list(c.members)].sum()) for c in enumerate_subcoalitions(spec)
    }
    fresh = draw_fresh(dist, n, seed)
    hits = int(_violation_flags(spec, thresholds, fresh).sum())
    lo, hi = clopper_pearson(hits, n)
    return ViolationEstimate(hits / n, int(n), hits, lo, hi, int(seed))


def estimate_core_instability(
    spec: GameSpec,
    core: scenario_core.ScenarioCoreDesc,
    dist: DistributionSpec,
    n: int,
    seed: int,
) -> ViolationEstimate:
    """Fraction of fresh draws that would cut some allocation out of the core.

    A draw removes a point iff some coalition's value strictly exceeds the
    coalition's minimum payoff over the core, so the per-sample cost after
    the LP precomputation is one affine evaluation per coalition.
    """
    if scenario_core.is_empty(core):
        raise EmptyCoreError("core instability is undefined for an empty core")
    minima = {
        c.mask: scenario_core.coalition_min(core, c) for c in core.coalitions()
    }
    fresh = draw_fresh(dist, n, seed)
    hits = int(_violation_flags(spec, minima, fresh).sum())
    lo, hi = clopper_pearson(hits, n)
    return ViolationEstimate(hits / n, int(n), hits, lo, hi, int(seed))


@dataclass(frozen=True)
class TrialResult:
    trial: int
    master_seed: int
    fresh_seed: int
    epsilon: float | None
    p_hat: float | None
    cp_lower: float | None
    cp_upper: float | None
    exceeded: bool | None
    s_values: tuple[int, ...] | None = None
    error: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "trial": self.trial,
            "master_seed": self.master_seed,
            "fresh_seed": self.fresh_seed,
            "epsilon": self.epsilon,
            "p_hat": self.p_hat,
            "cp_lower": self.cp_lower,
            "cp_upper": self.cp_upper,
            "exceeded": self.exceeded,
            "s_values": list(self.s_values) if self.s_values is not None else None,
            "error": self.error,
        }


@dataclass(frozen=True)
class CoverageReport:
    """Per-trial certified levels vs. estimated truth for one method."""

    method: str
    beta: float
    n_trials: int
    n_fresh: int
    seed: int
    trials: tuple[TrialResult, ...]

    @property
    def n_failed(self) -> int:
        return sum(1 for t in self.trials if t.error is not None)

    @property
    def exceedance_frequency(self) -> float:
        done = [t for t in self.trials if t.error is None]
        if not done:
            return 0.0
        return sum(1 for t in done if t.exceeded) / len(done)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "method": self.method,
            "beta": self.beta,
            "n_trials": self.n_trials,
            "n_fresh": self.n_fresh,
            "seed": self.seed,
            "exceedance_frequency": self.exceedance_frequency,
            "n_failed": self.n_failed,
            "trials": [t.to_json_dict() for t in self.trials],
        }

    def to_csv(self) -> str:
        lines = ["trial,master_seed,fresh_seed,epsilon,p_hat,cp_lower,cp_upper,exceeded,error"]
        for t in self.trials:
            fields = [
                str(t.trial),
                str(t.master_seed),
                str(t.fresh_seed),
                "" if t.epsilon is None else repr(t.epsilon),
                "" if t.p_hat is None else repr(t.p_hat),
                "" if t.cp_lower is None else repr(t.cp_lower),
                "" if t.cp_upper is None else repr(t.cp_upper),
                "" if t.exceeded is None else str(t.exceeded).lower(),
                t.error or "",
            ]
            lines.append(",".join(fields))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CoverageConfig:
    """One coverage experiment: a fixed game, resampled trial after trial."""

    spec: GameSpec
    dist: DistributionSpec
    counts: tuple[int, ...]
    method: str
    beta: float
    n_trials: int
    n_fresh: int
    seed: int
    beta_split: str | tuple[float, ...] = "equal"
    epsilon: float | None = None  # only the support-rank method needs it
    compression_mode: compression.CompressionMode = field(
        default_factory=compression.CompressionMode.default
    )

    def __post_init__(self):
        if self.method not in risk.ALL_METHODS:
            raise ConfigError(f"unknown certificate method {self.method!r}")
        if len(self.counts) != self.spec.n_agents:
            raise ConfigError("counts must cover every agent")
        if self.method == risk.METHOD_ALLOCATION_APRIORI and self.epsilon is None:
            raise ConfigError("the support-rank method needs a total epsilon")


def trial_seeds(seed: int, trial: int) -> tuple[int, int]:
    """Deterministic (private, fresh) seeds for one trial."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_TRIAL_TAG, int(trial)))
    a, b = ss.generate_state(2, dtype=np.uint64)
    return int(a), int(b)


def _split(config: CoverageConfig) -> risk.BetaSplit:
    return risk.BetaSplit.make(
        config.beta, config.spec.n_agents, config.beta_split, config.counts
    )


def run_trial(config: CoverageConfig, trial: int) -> TrialResult:
    master_seed, fresh_seed = trial_seeds(config.seed, trial)
    spec = config.spec
    try:
        samples = draw_private(config.dist, config.counts, master_seed)
        method = config.method
        s_values: tuple[int, ...] | None = None

        if method in (risk.METHOD_CORE_APOSTERIORI, risk.METHOD_CORE_APRIORI):
            core = scenario_core.build(spec, scenario_core.tighten(spec, samples))
            if method == risk.METHOD_CORE_APOSTERIORI:
                cset = compression.compress_all(spec, samples, config.compression_mode)
                s_values = cset.cardinalities
                cert = risk.a_posteriori_core_bound(_split(config), s_values, config.counts)
            else:
                cert = risk.a_priori_core_bound(_split(config), config.counts)
            est = estimate_core_instability(spec, core, config.dist, config.n_fresh, fresh_seed)

        elif method in (
            risk.METHOD_ALLOCATION_APOSTERIORI,
            risk.METHOD_ALLOCATION_APRIORI,
            risk.METHOD_ALLOCATION_APRIORI_BUDGET,
        ):
            core = scenario_core.build(spec, scenario_core.tighten(spec, samples))
            x_star = scenario_core.lexicographic_allocation(core)
            if method == risk.METHOD_ALLOCATION_APOSTERIORI:
                cset = compression.compress_all(spec, samples, config.compression_mode)
                s_values = cset.cardinalities
                cert = risk.a_posteriori_allocation_bound(_split(config), s_values, config.counts)
            elif method == risk.METHOD_ALLOCATION_APRIORI:
                n = spec.n_agents
                eps_split = [config.epsilon / n] * n
                ranks = [risk.support_rank(spec, i) for i in range(n)]
                cert = risk.a_priori_allocation_bound(eps_split, config.counts, ranks)
            else:
                cert = risk.a_priori_allocation_bound_budget(_split(config), config.counts)
            est = estimate_allocation_instability(spec, x_star, config.dist, config.n_fresh, fresh_seed)

        else:  # relaxed-allocation
            sol = zeta_core.solve_zeta_program(spec, samples)
            s_values = sol.s_star
            cert = zeta_core.zeta_certificate(
                _split(config),
                sol.s_star,
                config.counts,
                spec.n_agents,
                assumption_continuous=not config.dist.possibly_degenerate,
            )
            est = estimate_allocation_instability(spec, sol.x_star, config.dist, config.n_fresh, fresh_seed)

        return TrialResult(
            trial=trial,
            master_seed=master_seed,
            fresh_seed=fresh_seed,
            epsilon=cert.epsilon,
            p_hat=est.p_hat,
            cp_lower=est.lower,
            cp_upper=est.upper,
            exceeded=bool(est.lower > cert.epsilon),
            s_values=s_values,
        )
    except CoalisureError as exc:
        return TrialResult(
            trial=trial,
            master_seed=master_seed,
            fresh_seed=fresh_seed,
            epsilon=None,
            p_hat=None,
            cp_lower=None,
            cp_upper=None,
            exceeded=None,
            error=f"{type(exc).__name__}: {exc}",
        )


def worker_count() -> int:
    raw = os.environ.get("COALISURE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def coverage_experiment(config: CoverageConfig) -> CoverageReport:
    """Run every trial (optionally in a thread pool) and collect the report.

    Per-trial seeds derive from (experiment seed, trial index) alone, so
    the report is identical whatever the worker count.
    """
    workers = worker_count()
    indices = range(config.n_trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda t: run_trial(config, t), indices))
    else:
        results = [run_trial(config, t) for t in indices]
    results.sort(key=lambda r: r.trial)
    beta = config.beta
    if config.method == risk.METHOD_ALLOCATION_APRIORI:
        # the support-rank method derives its confidence from (K, eps, rank),
        # which does not depend on the drawn samples
        n = config.spec.n_agents
        cert = risk.a_priori_allocation_bound(
            [config.epsilon / n] * n,
            config.counts,
            [risk.support_rank(config.spec, i) for i in range(n)],
        )
        beta = cert.beta
    return CoverageReport(
        method=config.method,
        beta=beta,
        n_trials=config.n_trials,
        n_fresh=config.n_fresh,
        seed=config.seed,
        trials=tuple(results),
    )
