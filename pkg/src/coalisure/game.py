"""Coalition algebra, game specification, and uncertain value functions.

A game couples a set of agents with a deterministic grand-coalition value
and per-subcoalition value functions that depend on an exogenous
uncertainty vector.  Value functions are affine (or max-of-affine) in the
uncertainty, which keeps every downstream construction a linear program.

Agent indices are 0-based throughout the in-memory API; serialized
artifacts (JSON/CSV) use 1-based ids.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import GameSpecError, UnknownCoalitionError


@dataclass(frozen=True, order=True)
class Coalition:
    """A nonempty set of agents, encoded as a bit mask over agent indices."""

    mask: int

    def __post_init__(self):
        if self.mask <= 0:
            raise GameSpecError("a coalition must contain at least one agent")

    @classmethod
    def of(cls, *agents: int) -> "Coalition":
        return cls.from_members(agents)

    @classmethod
    def from_members(cls, agents: Iterable[int]) -> "Coalition":
        mask = 0
        for a in agents:
            if a < 0:
                raise GameSpecError(f"negative agent index {a}")
            mask |= 1 << a
        return cls(mask)

    @property
    def members(self) -> tuple[int, ...]:
        """Member agents in ascending index order."""
        out = []
        m, i = self.mask, 0
        while m:
            if m & 1:
                out.append(i)
            m >>= 1
            i += 1
        return tuple(out)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    def contains(self, agent: int) -> bool:
        return bool(self.mask >> agent & 1)

    def __contains__(self, agent: int) -> bool:
        return self.contains(agent)

    def __iter__(self):
        return iter(self.members)

    def indicator(self, n_agents: int) -> np.ndarray:
        """0/1 membership vector of length ``n_agents``."""
        v = np.zeros(n_agents)
        for a in self.members:
            v[a] = 1.0
        return v

    def label(self) -> str:
        """Human-readable 1-based member list, e.g. ``"1,3"``."""
        return ",".join(str(a + 1) for a in self.members)

    @classmethod
    def from_label(cls, label: str) -> "Coalition":
        return cls.from_members(int(part) - 1 for part in label.split(","))

    def __repr__(self):
        return f"Coalition({{{self.label()}}})"


class ValueModel:
    """Per-coalition value functions, affine or max-affine in the uncertainty.

    Each coalition ``S`` maps to one or more pieces ``(a, b)`` and evaluates
    to ``max_r (a_r + b_r . xi)``; a single piece is plain affine.
    Evaluation is total and deterministic on R^d.
    """

    def __init__(self, dim: int, pieces: Mapping[Coalition, Sequence[tuple[float, Sequence[float]]]]):
        if dim < 1:
            raise GameSpecError("uncertainty dimension must be >= 1")
        self.dim = int(dim)
        table: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for coalition, forms in pieces.items():
            if not forms:
                raise GameSpecError(f"coalition {coalition.label()} has no value form")
            offsets = np.array([float(a) for a, _ in forms])
            slopes = np.array([np.asarray(b, dtype=float) for _, b in forms])
            if slopes.shape != (len(forms), self.dim):
                raise GameSpecError(
                    f"coalition {coalition.label()}: slope length does not match dim {self.dim}"
                )
            if not (np.isfinite(offsets).all() and np.isfinite(slopes).all()):
                raise GameSpecError(f"coalition {coalition.label()}: non-finite coefficients")
            offsets.flags.writeable = False
            slopes.flags.writeable = False
            table[coalition.mask] = (offsets, slopes)
        self._table = table

    @classmethod
    def affine(cls, dim: int, forms: Mapping[Coalition, tuple[float, Sequence[float]]]) -> "ValueModel":
        return cls(dim, {S: [ab] for S, ab in forms.items()})

    def defines(self, coalition: Coalition) -> bool:
        return coalition.mask in self._table

    def coalitions(self) -> list[Coalition]:
        return [Coalition(m) for m in sorted(self._table)]

    def pieces(self, coalition: Coalition) -> tuple[np.ndarray, np.ndarray]:
        try:
            return self._table[coalition.mask]
        except KeyError:
            raise UnknownCoalitionError(
                f"no value form for coalition {{{coalition.label()}}}"
            ) from None

    def value(self, coalition: Coalition, xi: Sequence[float]) -> float:
        """u_S(xi) = max over pieces of a + b . xi."""
        offsets, slopes = self.pieces(coalition)
        xi = np.asarray(xi, dtype=float)
        return float(np.max(offsets + slopes @ xi))

    def value_batch(self, coalition: Coalition, xis: np.ndarray) -> np.ndarray:
        """Vectorized ``value`` over rows of an (n, dim) sample matrix."""
        offsets, slopes = self.pieces(coalition)
        vals = xis @ slopes.T + offsets
        return vals.max(axis=1)


def _default_coalitions(n_agents: int) -> tuple[Coalition, ...]:
    full = (1 << n_agents) - 1
    out = []
    for size in range(1, n_agents):
        for members in combinations(range(n_agents), size):
            out.append(Coalition.from_members(members))
    assert all(c.mask != full for c in out)
    return tuple(sorted(out))


@dataclass(frozen=True)
class GameSpec:
    """An uncertain transferable-utility game.

    ``coalitions`` is the enforced subcoalition structure: the proper,
    nonempty subsets whose rationality constraints the game carries.  Agent
    ``i``'s view of it, ``allowed(i)``, is the subset of coalitions
    containing ``i``; deriving the views from one global set makes the
    structure symmetric by construction.  ``None`` means all proper
    nonempty subsets.
    """

    n_agents: int
    grand_value: float
    value_model: ValueModel
    coalitions: tuple[Coalition, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.n_agents < 2:
            raise GameSpecError("a game needs at least 2 agents")
        if not np.isfinite(self.grand_value):
            raise GameSpecError("grand-coalition value must be finite")
        if self.coalitions is None:
            object.__setattr__(self, "coalitions", _default_coalitions(self.n_agents))
        else:
            full = (1 << self.n_agents) - 1
            seen = set()
            for c in self.coalitions:
                if c.mask & ~full:
                    raise GameSpecError(f"coalition {{{c.label()}}} has out-of-range agents")
                if c.mask == full:
                    raise GameSpecError("the grand coalition is not a subcoalition")
                if c.mask in seen:
                    raise GameSpecError(f"duplicate coalition {{{c.label()}}}")
                seen.add(c.mask)
            object.__setattr__(self, "coalitions", tuple(sorted(self.coalitions)))
        for c in self.coalitions:
            if not self.value_model.defines(c):
                raise UnknownCoalitionError(f"no value form for coalition {{{c.label()}}}")

    @property
    def uncertainty_dim(self) -> int:
        return self.value_model.dim

    def allowed(self, agent: int) -> tuple[Coalition, ...]:
        """Coalitions containing ``agent``, in ascending mask order."""
        if not 0 <= agent < self.n_agents:
            raise GameSpecError(f"agent index {agent} out of range")
        return tuple(c for c in self.coalitions if c.contains(agent))

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "n_agents": self.n_agents,
            "grand_value": self.grand_value,
            "uncertainty_dim": self.uncertainty_dim,
            "coalitions": [c.label() for c in self.coalitions],
            "values": {
                c.label(): [
                    {"a": float(a), "b": [float(x) for x in b]}
                    for a, b in zip(*self.value_model.pieces(c))
                ]
                for c in self.coalitions
            },
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "GameSpec":
        try:
            n_agents = int(doc["n_agents"])
            grand_value = float(doc["grand_value"])
            dim = int(doc["uncertainty_dim"])
            values = doc["values"]
        except (KeyError, TypeError, ValueError) as exc:
            raise GameSpecError(f"malformed game document: {exc}") from exc
        pieces = {
            Coalition.from_label(label): [(form["a"], form["b"]) for form in forms]
            for label, forms in values.items()
        }
        model = ValueModel(dim, pieces)
        coalitions = None
        if "coalitions" in doc:
            coalitions = tuple(Coalition.from_label(lbl) for lbl in doc["coalitions"])
        return cls(n_agents=n_agents, grand_value=grand_value, value_model=model, coalitions=coalitions)


def enumerate_subcoalitions(spec: GameSpec) -> list[Coalition]:
    """All enforced subcoalitions, deduplicated, in ascending mask order."""
    return list(spec.coalitions)


def subcoalition_budget(n_agents: int) -> int:
    """Conventional subcoalition count 2^N - 1 used as a complexity budget.

    Counts every subset other than the grand coalition (the empty set
    included), so it exceeds ``len(enumerate_subcoalitions(spec))`` for the
    default structure by one.  Complexity budgets use this count; geometry
    uses the enforced-constraint count.
    """
    if n_agents < 1:
        raise GameSpecError("need at least one agent")
    return 2**n_agents - 1


def coalition_value(model: ValueModel, coalition: Coalition, xi: Sequence[float]) -> float:
    """Value u_S(xi) of a coalition at one uncertainty realization."""
    return model.value(coalition, xi)


def excess(spec: GameSpec, coalition: Coalition, x: Sequence[float], xi: Sequence[float]) -> float:
    """sum_{i in S} x_i - u_S(xi); positive means strictly rational."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.n_agents,):
        raise GameSpecError(f"allocation length {x.shape} != n_agents {spec.n_agents}")
    return float(sum(x[a] for a in coalition.members) - spec.value_model.value(coalition, xi))
