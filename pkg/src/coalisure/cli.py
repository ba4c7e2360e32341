"""Command-line pipeline: experiment configs in, JSON/CSV artifacts out.

Subcommands::

    generate   draw the private multi-sample          -> samples.csv
    core       tightened bounds + emptiness (+vertices) -> core.json
    compress   per-agent compression sets             -> compression.json
    certify    requested stability certificates       -> certificates.json
    zeta       slack-minimizing allocation + certificate -> zeta.json
    validate   Monte Carlo coverage per method        -> coverage_<method>.{json,csv}
    run-all    all of the above in order

Every run is a pure function of the config file plus explicit flag
overrides: artifacts carry no timestamps and identical inputs produce
bit-identical outputs.  Exit codes: 0 success, 1 runtime failure,
2 config/schema error.

Config schema (JSON object)::

    {
      "schema_version": 1,
      "game": {
        "n_agents": 3,                      // >= 2
        "grand_value": 6.0,
        "uncertainty_dim": 2,
        "coalitions": ["1", "2", "1,2"],   // optional; 1-based member lists;
                                            // default: all proper nonempty subsets
        "values": {                         // one entry per coalition
          "1": [{"a": 0.0, "b": [1.0, 0.4]}],   // u_S = max over pieces of a + b.xi
          ...
        }
      },
      "distribution": {"kind": "uniform", "lo": [0,0], "hi": [1,1]}
                    | {"kind": "gaussian", "mean": [..], "cov": [[..]]}
                    | {"kind": "mixture", "weights": [..], "components": [..]},
      "counts": [50, 50, 50],               // per-agent sample counts K_i
      "master_seed": 20240901,
      "beta": 0.2,                          // total confidence budget, in (0,1)
      "beta_split": "equal" | "proportional" | [b_1, ..., b_N],
      "epsilon": 0.1,                       // required by allocation-apriori only
      "methods": ["core-aposteriori", ...], // any of the six certificate methods
      "validation": {"trials": 200, "n_fresh": 100000, "seed": 7},
      "compression": {"efficiency": true, "nonnegative": false}   // optional
    }

Sample CSV columns: ``agent_id, sample_index`` (both 1-based) followed by
the uncertainty components.  The environment variable ``COALISURE_THREADS``
caps the validation worker count (default 1).
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from . import compression, risk, scenario_core, validation, zeta_core
from .errors import CoalisureError, ConfigError
from .game import GameSpec
from .sampling import DistributionSpec, PrivateSamples, draw_private, samples_from_csv, samples_to_csv

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    spec: GameSpec
    dist: DistributionSpec
    counts: tuple[int, ...]
    master_seed: int
    beta: float
    beta_split: str | tuple[float, ...]
    methods: tuple[str, ...]
    trials: int
    n_fresh: int
    validation_seed: int
    epsilon: float | None
    compression_mode: compression.CompressionMode

    def split(self) -> risk.BetaSplit:
        return risk.BetaSplit.make(self.beta, self.spec.n_agents, self.beta_split, self.counts)


def _require(doc: dict, key: str, kind, where: str = "config"):
    if key not in doc:
        raise ConfigError(f"{where}: missing required field {key!r}")
    value = doc[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"{where}: field {key!r} must be {kind.__name__}")
    return value


def load_config(path: Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")

    try:
        spec = GameSpec.from_json_dict(_require(doc, "game", dict))
        dist = DistributionSpec.from_json_dict(_require(doc, "distribution", dict))
    except CoalisureError as exc:
        raise ConfigError(str(exc)) from exc
    counts = _require(doc, "counts", list)
    if len(counts) != spec.n_agents or any(not isinstance(k, int) or k < 1 for k in counts):
        raise ConfigError("counts must list one positive integer per agent")
    if dist.dim != spec.uncertainty_dim:
        raise ConfigError("distribution dimension does not match the game")
    master_seed = _require(doc, "master_seed", int)
    beta = _require(doc, "beta", float)
    if not 0.0 < beta < 1.0:
        raise ConfigError("beta must lie in (0,1)")
    beta_split = doc.get("beta_split", "equal")
    if isinstance(beta_split, list):
        beta_split = tuple(float(b) for b in beta_split)
    elif beta_split not in ("equal", "proportional"):
        raise ConfigError("beta_split must be 'equal', 'proportional', or a list")
    methods = tuple(doc.get("methods", list(risk.ALL_METHODS)))
    for m in methods:
        if m not in risk.ALL_METHODS:
            raise ConfigError(
                f"unknown certificate method {m!r}; valid: {', '.join(risk.ALL_METHODS)}"
            )
    val = doc.get("validation", {})
    if not isinstance(val, dict):
        raise ConfigError("validation must be an object")
    trials = val.get("trials", 50)
    n_fresh = val.get("n_fresh", 10000)
    validation_seed = val.get("seed", master_seed)
    for name, v in (("trials", trials), ("n_fresh", n_fresh), ("seed", validation_seed)):
        if not isinstance(v, int) or v < 1:
            raise ConfigError(f"validation.{name} must be a positive integer")
    epsilon = doc.get("epsilon")
    if epsilon is not None:
        epsilon = float(epsilon)
        if not 0.0 < epsilon < 1.0:
            raise ConfigError("epsilon must lie in (0,1)")
    comp = doc.get("compression", {})
    if not isinstance(comp, dict):
        raise ConfigError("compression must be an object")
    mode = compression.CompressionMode(
        efficiency=bool(comp.get("efficiency", True)),
        nonnegative=bool(comp.get("nonnegative", False)),
    )
    return ExperimentConfig(
        spec=spec,
        dist=dist,
        counts=tuple(counts),
        master_seed=master_seed,
        beta=beta,
        beta_split=beta_split,
        methods=methods,
        trials=trials,
        n_fresh=n_fresh,
        validation_seed=validation_seed,
        epsilon=epsilon,
        compression_mode=mode,
    )


def write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_samples(out: Path, samples_path: Path | None) -> PrivateSamples:
    path = samples_path or out / "samples.csv"
    if not path.exists():
        raise CoalisureError(f"samples file not found: {path} (run 'generate' first)")
    return samples_from_csv(path.read_text())


def _certify(config: ExperimentConfig, samples: PrivateSamples | None, methods) -> dict:
    docs = {}
    split = config.split()
    cset = None
    for method in methods:
        try:
            if method == risk.METHOD_CORE_APRIORI:
                cert = risk.a_priori_core_bound(split, config.counts)
            elif method == risk.METHOD_ALLOCATION_APRIORI_BUDGET:
                cert = risk.a_priori_allocation_bound_budget(split, config.counts)
            elif method == risk.METHOD_ALLOCATION_APRIORI:
                if config.epsilon is None:
                    raise ConfigError("allocation-apriori needs 'epsilon' in the config")
                n = config.spec.n_agents
                ranks = [risk.support_rank(config.spec, i) for i in range(n)]
                cert = risk.a_priori_allocation_bound(
                    [config.epsilon / n] * n, config.counts, ranks
                )
            else:
                if samples is None:
                    raise CoalisureError(f"method {method} needs a samples file")
                if method == risk.METHOD_RELAXED_ALLOCATION:
                    sol = zeta_core.solve_zeta_program(config.spec, samples)
                    cert = zeta_core.zeta_certificate(
                        split,
                        sol.s_star,
                        config.counts,
                        config.spec.n_agents,
                        assumption_continuous=not config.dist.possibly_degenerate,
                        provenance={"seed": config.master_seed},
                    )
                else:
                    if cset is None:
                        cset = compression.compress_all(config.spec, samples, config.compression_mode)
                    if method == risk.METHOD_CORE_APOSTERIORI:
                        cert = risk.a_posteriori_core_bound(
                            split, cset.cardinalities, config.counts,
                            provenance={"seed": config.master_seed, "compression": cset.mode_tag},
                        )
                    else:
                        cert = risk.a_posteriori_allocation_bound(
                            split, cset.cardinalities, config.counts,
                            provenance={"seed": config.master_seed, "compression": cset.mode_tag},
                        )
            docs[method] = cert.to_json_dict()
        except ConfigError:
            raise
        except CoalisureError as exc:
            docs[method] = {"error": f"{type(exc).__name__}: {exc}"}
    return {"schema_version": SCHEMA_VERSION, "certificates": docs}


def _coverage_config(config: ExperimentConfig, method: str, trials, n_fresh) -> validation.CoverageConfig:
    return validation.CoverageConfig(
        spec=config.spec,
        dist=config.dist,
        counts=config.counts,
        method=method,
        beta=config.beta,
        n_trials=trials,
        n_fresh=n_fresh,
        seed=config.validation_seed,
        beta_split=config.beta_split,
        epsilon=config.epsilon,
        compression_mode=config.compression_mode,
    )


_config_option = click.option(
    "--config", "config_path", type=click.Path(path_type=Path), required=True,
    help="Experiment config JSON.",
)
_out_option = click.option(
    "--out", "out", type=click.Path(path_type=Path), required=True,
    help="Output directory (created if missing).",
)
_seed_option = click.option("--seed", type=int, default=None, help="Override master_seed.")
_samples_option = click.option(
    "--samples", "samples_path", type=click.Path(path_type=Path), default=None,
    help="Samples CSV (default: OUT/samples.csv).",
)


@click.group()
def main():
    """Scenario cores and stability certificates for uncertain coalitional games."""


def _run(fn):
    try:
        fn()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except CoalisureError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


def _prepare(config_path: Path, out: Path, seed: int | None) -> ExperimentConfig:
    config = load_config(config_path)
    if seed is not None:
        config = dataclasses.replace(config, master_seed=seed)
    out.mkdir(parents=True, exist_ok=True)
    return config


@main.command()
@_config_option
@_out_option
@_seed_option
def generate(config_path, out, seed):
    """Draw the private multi-sample and write samples.csv."""

    def go():
        config = _prepare(config_path, out, seed)
        samples = draw_private(config.dist, config.counts, config.master_seed)
        (out / "samples.csv").write_text(samples_to_csv(samples))
        click.echo(f"wrote {out / 'samples.csv'} ({samples.total} samples)")

    _run(go)


@main.command()
@_config_option
@_out_option
@_seed_option
@_samples_option
def core(config_path, out, seed, samples_path):
    """Tightened bounds, emptiness flag, and (for small games) vertices."""

    def go():
        config = _prepare(config_path, out, seed)
        samples = _load_samples(out, samples_path)
        bounds = scenario_core.tighten(config.spec, samples)
        desc = scenario_core.build(config.spec, bounds)
        doc = desc.to_json_dict()
        doc["empty"] = scenario_core.is_empty(desc)
        if config.spec.n_agents <= scenario_core.VERTEX_GUARD_AGENTS:
            doc["vertices"] = [
                [float(v) for v in vertex] for vertex in scenario_core.vertices(desc)
            ]
        write_json(out / "core.json", doc)
        click.echo(f"wrote {out / 'core.json'} (empty={doc['empty']})")

    _run(go)


@main.command()
@_config_option
@_out_option
@_seed_option
@_samples_option
def compress(config_path, out, seed, samples_path):
    """Per-agent compression sets via the pinned-constraint feasibility runs."""

    def go():
        config = _prepare(config_path, out, seed)
        samples = _load_samples(out, samples_path)
        cset = compression.compress_all(config.spec, samples, config.compression_mode)
        write_json(out / "compression.json", cset.to_json_dict())
        click.echo(f"wrote {out / 'compression.json'} (sizes={list(cset.cardinalities)})")

    _run(go)


@main.command()
@_config_option
@_out_option
@_seed_option
@_samples_option
@click.option("--method", "methods", multiple=True, help="Certificate method (repeatable).")
def certify(config_path, out, seed, samples_path, methods):
    """Write one certificate per requested method to certificates.json."""

    def go():
        config = _prepare(config_path, out, seed)
        requested = methods or config.methods
        for m in requested:
            if m not in risk.ALL_METHODS:
                raise ConfigError(
                    f"unknown certificate method {m!r}; valid: {', '.join(risk.ALL_METHODS)}"
                )
        needs_samples = any(
            m in (
                risk.METHOD_CORE_APOSTERIORI,
                risk.METHOD_ALLOCATION_APOSTERIORI,
                risk.METHOD_RELAXED_ALLOCATION,
            )
            for m in requested
        )
        samples = _load_samples(out, samples_path) if needs_samples else None
        write_json(out / "certificates.json", _certify(config, samples, requested))
        click.echo(f"wrote {out / 'certificates.json'} ({len(requested)} methods)")

    _run(go)


@main.command()
@_config_option
@_out_option
@_seed_option
@_samples_option
def zeta(config_path, out, seed, samples_path):
    """Slack-minimizing allocation, complexity counts, and its certificate."""

    def go():
        config = _prepare(config_path, out, seed)
        samples = _load_samples(out, samples_path)
        sol = zeta_core.solve_zeta_program(config.spec, samples)
        doc = sol.to_json_dict()
        try:
            cert = zeta_core.zeta_certificate(
                config.split(),
                sol.s_star,
                config.counts,
                config.spec.n_agents,
                assumption_continuous=not config.dist.possibly_degenerate,
                provenance={"seed": config.master_seed},
            )
            doc["certificate"] = cert.to_json_dict()
        except CoalisureError as exc:
            doc["certificate"] = {"error": f"{type(exc).__name__}: {exc}"}
        write_json(out / "zeta.json", doc)
        click.echo(f"wrote {out / 'zeta.json'} (objective={sol.objective:.6g})")

    _run(go)


@main.command()
@_config_option
@_out_option
@click.option("--method", "methods", multiple=True, help="Method to validate (repeatable).")
@click.option("--trials", type=int, default=None, help="Override validation.trials.")
@click.option("--fresh", type=int, default=None, help="Override validation.n_fresh.")
def validate(config_path, out, methods, trials, fresh):
    """Coverage experiments: certified levels vs Monte Carlo estimates."""

    def go():
        config = _prepare(config_path, out, None)
        requested = methods or config.methods
        for m in requested:
            if m not in risk.ALL_METHODS:
                raise ConfigError(
                    f"unknown certificate method {m!r}; valid: {', '.join(risk.ALL_METHODS)}"
                )
        for m in requested:
            cfg = _coverage_config(
                config, m, trials or config.trials, fresh or config.n_fresh
            )
            report = validation.coverage_experiment(cfg)
            write_json(out / f"coverage_{m}.json", report.to_json_dict())
            (out / f"coverage_{m}.csv").write_text(report.to_csv())
            click.echo(
                f"{m}: exceedance {report.exceedance_frequency:.4f} over "
                f"{report.n_trials} trials ({report.n_failed} failed)"
            )

    _run(go)


@main.command(name="run-all")
@_config_option
@_out_option
@_seed_option
@click.option("--method", "methods", multiple=True, help="Restrict certificate methods.")
@click.option("--trials", type=int, default=None, help="Override validation.trials.")
@click.option("--fresh", type=int, default=None, help="Override validation.n_fresh.")
def run_all(config_path, out, seed, methods, trials, fresh):
    """generate -> core -> compress -> zeta -> certify -> validate."""

    def go():
        config = _prepare(config_path, out, seed)
        requested = methods or config.methods
        for m in requested:
            if m not in risk.ALL_METHODS:
                raise ConfigError(
                    f"unknown certificate method {m!r}; valid: {', '.join(risk.ALL_METHODS)}"
                )
        samples = draw_private(config.dist, config.counts, config.master_seed)
        (out / "samples.csv").write_text(samples_to_csv(samples))

        bounds = scenario_core.tighten(config.spec, samples)
        desc = scenario_core.build(config.spec, bounds)
        core_doc = desc.to_json_dict()
        core_doc["empty"] = scenario_core.is_empty(desc)
        if config.spec.n_agents <= scenario_core.VERTEX_GUARD_AGENTS:
            core_doc["vertices"] = [
                [float(v) for v in vertex] for vertex in scenario_core.vertices(desc)
            ]
        write_json(out / "core.json", core_doc)

        cset = compression.compress_all(config.spec, samples, config.compression_mode)
        write_json(out / "compression.json", cset.to_json_dict())

        sol = zeta_core.solve_zeta_program(config.spec, samples)
        zeta_doc = sol.to_json_dict()
        try:
            cert = zeta_core.zeta_certificate(
                config.split(), sol.s_star, config.counts, config.spec.n_agents,
                assumption_continuous=not config.dist.possibly_degenerate,
                provenance={"seed": config.master_seed},
            )
            zeta_doc["certificate"] = cert.to_json_dict()
        except CoalisureError as exc:
            zeta_doc["certificate"] = {"error": f"{type(exc).__name__}: {exc}"}
        write_json(out / "zeta.json", zeta_doc)

        write_json(out / "certificates.json", _certify(config, samples, requested))

        for m in requested:
            cfg = _coverage_config(config, m, trials or config.trials, fresh or config.n_fresh)
            report = validation.coverage_experiment(cfg)
            write_json(out / f"coverage_{m}.json", report.to_json_dict())
            (out / f"coverage_{m}.csv").write_text(report.to_csv())
        click.echo(f"wrote pipeline artifacts to {out}")

    _run(go)


if __name__ == "__main__":
    main()
