"""Finite scenario space, endowments and probability measures on it.

Every random variable lives in ``R^S``: with finitely many scenarios of
strictly positive probability all integrability classes coincide, so a
measure is just a density vector against the reference probabilities.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionError, NormalizationError, SchemaError, ValidationError

PROB_TOL = 1e-12


def _readonly(a: ArrayLike) -> NDArray[np.float64]:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MarketModel:
    """Scenario labels, reference probabilities and the ``N x S`` endowment matrix."""

    scenario_ids: tuple[str, ...]
    probs: NDArray[np.float64]
    endowments: NDArray[np.float64]
    agent_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        probs = _readonly(self.probs)
        X = np.array(self.endowments, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        X.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "endowments", X)
        object.__setattr__(self, "scenario_ids", tuple(str(s) for s in self.scenario_ids))
        object.__setattr__(self, "agent_ids", tuple(str(a) for a in self.agent_ids))

        if probs.ndim != 1 or probs.size < 1:
            raise ValidationError("probs must be a non-empty vector")
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValidationError("endowments must be a non-empty N x S matrix")
        if X.shape[1] != probs.size:
            raise ValidationError(
                f"endowments have {X.shape[1]} columns but there are {probs.size} scenarios"
            )
        if len(self.scenario_ids) != probs.size:
            raise ValidationError("one label per scenario is required")
        if len(self.agent_ids) != X.shape[0]:
            raise ValidationError("one label per agent is required")
        if not np.all(np.isfinite(probs)) or not np.all(np.isfinite(X)):
            raise ValidationError("probabilities and endowments must be finite")
        if np.any(probs <= 0.0):
            bad = [self.scenario_ids[i] for i in np.flatnonzero(probs <= 0.0)]
            raise ValidationError(f"scenarios with nonpositive probability: {bad}")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValidationError(f"probabilities sum to {probs.sum()!r}, not 1")

    @classmethod
    def from_arrays(
        cls,
        probs: ArrayLike,
        endowments: ArrayLike,
        scenario_ids: Sequence[str] | None = None,
        agent_ids: Sequence[str] | None = None,
    ) -> "MarketModel":
        p = np.asarray(probs, dtype=float)
        X = np.atleast_2d(np.asarray(endowments, dtype=float))
        if scenario_ids is None:
            scenario_ids = [f"w{i + 1}" for i in range(p.size)]
        if agent_ids is None:
            agent_ids = [f"agent{n + 1}" for n in range(X.shape[0])]
        return cls(tuple(scenario_ids), p, X, tuple(agent_ids))

    @property
    def n_agents(self) -> int:
        return self.endowments.shape[0]

    @property
    def n_scenarios(self) -> int:
        return self.probs.size

    @property
    def aggregate(self) -> NDArray[np.float64]:
        return self.endowments.sum(axis=0)

    def with_endowments(self, endowments: ArrayLike) -> "MarketModel":
        return MarketModel(self.scenario_ids, self.probs, np.asarray(endowments, float), self.agent_ids)


@dataclass(frozen=True)
class ProbMeasure:
    """A probability measure given by its density ``dQ/dP``."""

    density: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "density", _readonly(self.density))

    def total_mass(self, model: MarketModel) -> float:
        return float(model.probs @ self.density)

    def is_valid(self, model: MarketModel, tol: float = 1e-10) -> bool:
        d = self.density
        return (
            d.shape == (model.n_scenarios,)
            and bool(np.all(d >= 0.0))
            and abs(self.total_mass(model) - 1.0) <= tol
        )

    @property
    def is_equivalent(self) -> bool:
        """True when the measure charges every scenario (equivalent to ``P``)."""
        return bool(np.all(self.density > 0.0))

    def validate(self, model: MarketModel, tol: float = 1e-10) -> None:
        if self.density.shape != (model.n_scenarios,):
            raise DimensionError(f"density has shape {self.density.shape}, expected ({model.n_scenarios},)")
        if np.any(self.density < 0.0):
            raise NormalizationError("density has negative entries")
        mass = self.total_mass(model)
        if abs(mass - 1.0) > tol:
            raise NormalizationError(f"density integrates to {mass!r}, not 1")


@dataclass(frozen=True)
class PricingVector:
    """One pricing measure per agent, stored as an ``N x S`` density matrix."""

    densities: NDArray[np.float64]

    def __post_init__(self) -> None:
        d = np.array(self.densities, dtype=float)
        if d.ndim != 2:
            raise DimensionError("densities must be an N x S matrix")
        d.setflags(write=False)
        object.__setattr__(self, "densities", d)

    @classmethod
    def from_measures(cls, measures: Iterable[ProbMeasure]) -> "PricingVector":
        return cls(np.vstack([m.density for m in measures]))

    @classmethod
    def reference(cls, model: MarketModel) -> "PricingVector":
        """The vector ``(P, ..., P)``."""
        return cls(np.ones((model.n_agents, model.n_scenarios)))

    @property
    def measures(self) -> list[ProbMeasure]:
        return [ProbMeasure(row) for row in self.densities]

    def __len__(self) -> int:
        return self.densities.shape[0]

    def validate(self, model: MarketModel, tol: float = 1e-10) -> None:
        if self.densities.shape != model.endowments.shape:
            raise DimensionError(
                f"pricing vector has shape {self.densities.shape}, expected {model.endowments.shape}"
            )
        for m in self.measures:
            m.validate(model, tol)

    def expectations(self, model: MarketModel, Y: ArrayLike) -> NDArray[np.float64]:
        """Per-agent prices ``E_{Q^n}[Y^n]``."""
        Y = np.asarray(Y, dtype=float)
        if Y.shape != self.densities.shape:
            raise DimensionError(f"Y has shape {Y.shape}, expected {self.densities.shape}")
        return (self.densities * Y) @ model.probs


def _density_of(measure: ProbMeasure | ArrayLike) -> NDArray[np.float64]:
    if isinstance(measure, ProbMeasure):
        return measure.density
    return np.asarray(measure, dtype=float)


def expectation(model: MarketModel, measure: ProbMeasure | ArrayLike | None, rv: ArrayLike) -> float:
    """Expectation of ``rv`` under ``measure`` (``None`` means ``P``)."""
    x = np.asarray(rv, dtype=float)
    if x.shape != (model.n_scenarios,):
        raise DimensionError(f"random variable has shape {x.shape}, expected ({model.n_scenarios},)")
    if measure is None:
        return float(model.probs @ x)
    d = _density_of(measure)
    if d.shape != x.shape:
        raise DimensionError(f"density has shape {d.shape}, expected {x.shape}")
    return float(np.sum(model.probs * d * x))


def relative_entropy(model: MarketModel, measure: ProbMeasure | ArrayLike) -> float:
    """``H(Q, P) = E[d ln d]`` with the convention ``0 ln 0 = 0``."""
    d = _density_of(measure)
    if d.shape != (model.n_scenarios,):
        raise DimensionError(f"density has shape {d.shape}, expected ({model.n_scenarios},)")
    pos = d > 0.0
    terms = np.zeros_like(d)
    terms[pos] = d[pos] * np.log(d[pos])
    return float(max(model.probs @ terms, 0.0))


def group_aggregate(model: MarketModel, group: Iterable[int]) -> NDArray[np.float64]:
    """Scenario-wise sum of the endowments of the agents in ``group`` (0-based)."""
    idx = list(group)
    if not idx:
        raise IndexError("group must be non-empty")
    for n in idx:
        if not 0 <= n < model.n_agents:
            raise IndexError(f"agent index {n} out of range for N={model.n_agents}")
    return model.endowments[idx].sum(axis=0)


MARKET_SCHEMA = {
    "type": "object",
    "required": ["agents", "scenarios", "probs", "endowments"],
    "properties": {
        "agents": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "scenarios": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "probs": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "endowments": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        },
    },
}


def check_schema(document: object, schema: dict) -> None:
    import jsonschema

    try:
        jsonschema.validate(document, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {exc.message}") from None


def load_market(document: dict) -> MarketModel:
    """Build a validated :class:`MarketModel` from a parsed scenario document."""
    check_schema(document, MARKET_SCHEMA)
    rows = document["endowments"]
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise ValidationError("endowment matrix is ragged")
    if len(rows) != len(document["agents"]):
        raise ValidationError(
            f"{len(rows)} endowment rows for {len(document['agents'])} agents"
        )
    return MarketModel(
        tuple(document["scenarios"]),
        np.asarray(document["probs"], dtype=float),
        np.asarray(rows, dtype=float),
        tuple(document["agents"]),
    )


def to_csv(
    data: ArrayLike,
    scenario_ids: Sequence[str],
    row_labels: Sequence[str] | None = None,
    float_format: str = "{:.12g}",
) -> str:
    """Render an S-vector or an ``N x S`` matrix as CSV with a scenario header."""
    arr = np.atleast_2d(np.asarray(data, dtype=float))
    if arr.shape[1] != len(scenario_ids):
        raise DimensionError("column count does not match scenario labels")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if row_labels is None:
        writer.writerow(list(scenario_ids))
        for row in arr:
            writer.writerow([float_format.format(v) for v in row])
    else:
        writer.writerow(["", *scenario_ids])
        for label, row in zip(row_labels, arr):
            writer.writerow([label, *(float_format.format(v) for v in row)])
    return buf.getvalue()
