"""Seeded generation of private per-agent multi-samples and fresh validation draws.

Every sample vector is generated from its own RNG stream derived from
``(master_seed, purpose_tag, agent, index)`` via ``numpy.random.SeedSequence``
spawn keys.  Streams are therefore independent across agents and across
indices, and agent ``i``'s samples never change when another agent's count
does.  Fresh validation draws use a distinct purpose tag and a single
vectorized stream.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DistributionError

_PRIVATE_TAG = 0x1C0A11
_FRESH_TAG = 0x2FE54

_KINDS = ("uniform", "gaussian", "mixture")


@dataclass(frozen=True)
class DistributionSpec:
    """Uncertainty distribution: uniform box, gaussian, or a finite mixture.

    uniform: params = {"lo": [d], "hi": [d]}
    gaussian: params = {"mean": [d], "cov": [d, d]}
    mixture: params = {"weights": [m], "components": [m DistributionSpec dicts]}
    """

    kind: str
    dim: int
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    mean: np.ndarray | None = None
    cov: np.ndarray | None = None
    weights: np.ndarray | None = None
    components: tuple["DistributionSpec", ...] = ()
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def uniform(cls, lo: Sequence[float], hi: Sequence[float]) -> "DistributionSpec":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise DistributionError("box bounds must be equal-length vectors")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise DistributionError("box bounds must be finite")
        if (lo > hi).any():
            raise DistributionError("box bounds need lo <= hi componentwise")
        lo.flags.writeable = False
        hi.flags.writeable = False
        return cls(kind="uniform", dim=lo.size, lo=lo, hi=hi)

    @classmethod
    def gaussian(cls, mean: Sequence[float], cov: Sequence[Sequence[float]]) -> "DistributionSpec":
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DistributionError("mean/covariance shapes disagree")
        if not (np.isfinite(mean).all() and np.isfinite(cov).all()):
            raise DistributionError("gaussian parameters must be finite")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise DistributionError("covariance must be symmetric")
        w, v = np.linalg.eigh(cov)
        if w.min() < -1e-10 * max(1.0, abs(w).max()):
            raise DistributionError("covariance must be positive semidefinite")
        chol = v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
        for arr in (mean, cov, chol):
            arr.flags.writeable = False
        return cls(kind="gaussian", dim=mean.size, mean=mean, cov=cov, _chol=chol)

    @classmethod
    def mixture(cls, weights: Sequence[float], components: Sequence["DistributionSpec"]) -> "DistributionSpec":
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or len(components) != weights.size or weights.size == 0:
            raise DistributionError("mixture needs one weight per component")
        if (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-9:
            raise DistributionError("mixture weights must be nonnegative and sum to 1")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise DistributionError("mixture components must share a dimension")
        weights.flags.writeable = False
        return cls(kind="mixture", dim=dims.pop(), weights=weights, components=tuple(components))

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DistributionError(f"unknown distribution kind {self.kind!r}")

    @property
    def possibly_degenerate(self) -> bool:
        """True when some direction of the support carries no spread.

        Degenerate components make value ties possible with positive
        probability, which the non-degeneracy assumption behind the relaxed
        certificates rules out; reports carry this flag as a warning.
        """
        if self.kind == "uniform":
            return bool((self.lo == self.hi).any())
        if self.kind == "gaussian":
            return bool(np.linalg.eigvalsh(self.cov).min() <= 1e-15)
        return any(c.possibly_degenerate for c in self.components)

    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))
        if self.kind == "gaussian":
            z = rng.standard_normal((n, self.dim))
            return self.mean + z @ self._chol.T
        # mixture: pick components first, then draw each row from its component
        picks = rng.choice(self.weights.size, size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for ci, comp in enumerate(self.components):
            rows = np.flatnonzero(picks == ci)
            if rows.size:
                out[rows] = comp._draw(rng, rows.size)
        return out

    def to_json_dict(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": self.lo.tolist(), "hi": self.hi.tolist()}
        if self.kind == "gaussian":
            return {"kind": "gaussian", "mean": self.mean.tolist(), "cov": self.cov.tolist()}
        return {
            "kind": "mixture",
            "weights": self.weights.tolist(),
            "components": [c.to_json_dict() for c in self.components],
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "DistributionSpec":
        try:
            kind = doc["kind"]
            if kind == "uniform":
                return cls.uniform(doc["lo"], doc["hi"])
            if kind == "gaussian":
                return cls.gaussian(doc["mean"], doc["cov"])
            if kind == "mixture":
                return cls.mixture(
                    doc["weights"], [cls.from_json_dict(c) for c in doc["components"]]
                )
        except (KeyError, TypeError) as exc:
            raise DistributionError(f"malformed distribution document: {exc}") from exc
        raise DistributionError(f"unknown distribution kind {kind!r}")


@dataclass(frozen=True)
class PrivateSamples:
    """Per-agent uncertainty draws with full seed provenance.

    ``per_agent[i]`` is agent i's (K_i, d) sample matrix.  Regeneration from
    ``(master_seed, distribution, counts)`` is bit-identical.
    """

    per_agent: tuple[np.ndarray, ...]
    master_seed: int
    stream_ids: tuple[tuple[int, ...], ...]

    @property
    def n_agents(self) -> int:
        return len(self.per_agent)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(a.shape[0] for a in self.per_agent)

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def dim(self) -> int:
        return self.per_agent[0].shape[1]

    def sample(self, agent: int, index: int) -> np.ndarray:
        return self.per_agent[agent][index]


def _sample_rng(master_seed: int, agent: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(_PRIVATE_TAG, agent, index))
    return np.random.default_rng(ss)


def draw_private(
    spec: DistributionSpec, counts: Sequence[int], master_seed: int
) -> PrivateSamples:
    """Draw K_i i.i.d. vectors for each agent from independent streams.

    Each vector comes from its own counter-derived stream, so the draws are
    order-independent: agent i's k-th sample is a function of
    ``(master_seed, i, k)`` alone.
    """
    counts = [int(k) for k in counts]
    if not counts or any(k < 1 for k in counts):
        raise DistributionError("every agent needs at least one sample")
    matrices = []
    for agent, k_i in enumerate(counts):
        rows = [spec._draw(_sample_rng(master_seed, agent, k), 1)[0] for k in range(k_i)]
        m = np.array(rows)
        m.flags.writeable = False
        matrices.append(m)
    stream_ids = tuple((_PRIVATE_TAG, agent) for agent in range(len(counts)))
    return PrivateSamples(per_agent=tuple(matrices), master_seed=int(master_seed), stream_ids=stream_ids)


def draw_fresh(spec: DistributionSpec, n: int, seed: int) -> np.ndarray:
    """n i.i.d. validation draws, on a stream disjoint from all private ones."""
    if n < 1:
        raise DistributionError("need at least one fresh sample")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_FRESH_TAG,))
    return spec._draw(np.random.default_rng(ss), int(n))


_CSV_HEADER = ("agent_id", "sample_index")


def samples_to_csv(samples: PrivateSamples) -> str:
    """One row per sample: 1-based agent id, 1-based index, components."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    dim = samples.dim
    writer.writerow(list(_CSV_HEADER) + [f"xi{j + 1}" for j in range(dim)])
    for agent, matrix in enumerate(samples.per_agent):
        for index, row in enumerate(matrix):
            writer.writerow([agent + 1, index + 1] + [repr(float(v)) for v in row])
    return buf.getvalue()


def samples_from_csv(text: str, master_seed: int = 0) -> PrivateSamples:
    """Inverse of :func:`samples_to_csv`; floats round-trip exactly."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header[:2]) != _CSV_HEADER:
        raise DistributionError("unrecognized samples CSV header")
    rows: dict[int, dict[int, list[float]]] = {}
    for rec in reader:
        if not rec:
            continue
        agent, index = int(rec[0]) - 1, int(rec[1]) - 1
        rows.setdefault(agent, {})[index] = [float(v) for v in rec[2:]]
    if not rows or sorted(rows) != list(range(len(rows))):
        raise DistributionError("samples CSV must cover agents 1..N contiguously")
    matrices = []
    for agent in range(len(rows)):
        per = rows[agent]
        if sorted(per) != list(range(len(per))):
            raise DistributionError(f"agent {agent + 1} has non-contiguous sample indices")
        m = np.array([per[k] for k in range(len(per))])
        m.flags.writeable = False
        matrices.append(m)
    stream_ids = tuple((_PRIVATE_TAG, agent) for agent in range(len(rows)))
    return PrivateSamples(per_agent=tuple(matrices), master_seed=int(master_seed), stream_ids=stream_ids)
