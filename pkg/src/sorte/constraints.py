"""Admissible allocation families and the pricing-measure structure they induce.

Four families are supported: full sharing (only the system-wide sum must be
deterministic), clusters of agents that share risk only among themselves,
scenario-dependent clusterings, and no sharing at all.  Full sharing and no
sharing are stored as clusters (one group / singletons) so that equivalent
inputs produce identical objects.

Agent and scenario indices are 0-based throughout the Python API.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import null_space

from .errors import DimensionError, NormalizationError, SpecError, ValidationError
from .market import MarketModel, PricingVector

Partition = tuple[tuple[int, ...], ...]

MEMBERSHIP_TOL = 1e-9


def _canonical_partition(groups: Sequence[Sequence[int]], size: int, what: str) -> Partition:
    parts = [tuple(sorted(int(i) for i in g)) for g in groups]
    if any(len(g) == 0 for g in parts):
        raise ValidationError(f"{what}: empty block")
    flat = [i for g in parts for i in g]
    if sorted(flat) != list(range(size)):
        raise ValidationError(f"{what}: blocks must be disjoint and cover 0..{size - 1}")
    return tuple(sorted(parts, key=lambda g: g[0]))


@dataclass(frozen=True)
class ConstraintSpec:
    """An admissible family ``B``.

    ``events`` is ``None`` for the agent-cluster families; otherwise it holds
    a partition of the scenarios and ``event_groups[i]`` the agent partition
    in force on ``events[i]``.
    """

    n_agents: int
    groups: Partition | None = None
    events: Partition | None = None
    event_groups: tuple[Partition, ...] | None = None
    label: str = "cluster"

    @classmethod
    def full(cls, n_agents: int) -> "ConstraintSpec":
        return cls.cluster([range(n_agents)], n_agents, label="full")

    @classmethod
    def none(cls, n_agents: int) -> "ConstraintSpec":
        return cls.cluster([[n] for n in range(n_agents)], n_agents, label="none")

    @classmethod
    def cluster(cls, groups: Sequence[Sequence[int]], n_agents: int, label: str = "cluster") -> "ConstraintSpec":
        return cls(n_agents, _canonical_partition(groups, n_agents, "groups"), label=label)

    @classmethod
    def scenario_cluster(
        cls,
        events: Sequence[Sequence[int]],
        event_groups: Sequence[Sequence[Sequence[int]]],
        n_agents: int,
        n_scenarios: int,
    ) -> "ConstraintSpec":
        if len(events) != len(event_groups):
            raise ValidationError("one agent partition per event is required")
        ev = [tuple(sorted(int(w) for w in e)) for e in events]
        canon_ev = _canonical_partition(ev, n_scenarios, "events")
        parts = {e: _canonical_partition(g, n_agents, f"event {e}") for e, g in zip(ev, event_groups)}
        if len(canon_ev) == 1:
            return cls(n_agents, parts[canon_ev[0]], label="cluster")
        return cls(
            n_agents,
            None,
            canon_ev,
            tuple(parts[e] for e in canon_ev),
            label="scenario_cluster",
        )

    @property
    def is_cluster(self) -> bool:
        return self.events is None

    @property
    def is_full(self) -> bool:
        return self.is_cluster and len(self.groups) == 1

    @property
    def is_none(self) -> bool:
        return self.is_cluster and len(self.groups) == self.n_agents

    def event_partition(self, n_scenarios: int) -> Partition:
        if self.events is None:
            return (tuple(range(n_scenarios)),)
        if sum(len(e) for e in self.events) != n_scenarios:
            raise DimensionError("spec events do not match the number of scenarios")
        return self.events

    def agent_partitions(self) -> tuple[Partition, ...]:
        return (self.groups,) if self.events is None else self.event_groups

    def describe(self) -> dict:
        out: dict = {"variant": self.label}
        if self.is_cluster:
            out["groups"] = [list(g) for g in self.groups]
        else:
            out["events"] = [list(e) for e in self.events]
            out["event_groups"] = [[list(g) for g in p] for p in self.event_groups]
        return out


@dataclass(frozen=True)
class Cell:
    """Agents of ``group`` share one density on the scenarios of ``event``."""

    event_index: int
    event: tuple[int, ...]
    group: tuple[int, ...]


@dataclass(frozen=True)
class MeasureStructure:
    cells: tuple[Cell, ...]
    events: Partition
    n_agents: int
    n_scenarios: int

    def cells_on_event(self, i: int) -> list[Cell]:
        return [c for c in self.cells if c.event_index == i]

    def cell_index(self, agent: int, event_index: int) -> int:
        for k, c in enumerate(self.cells):
            if c.event_index == event_index and agent in c.group:
                return k
        raise IndexError(f"agent {agent} has no cell on event {event_index}")


def measure_structure(spec: ConstraintSpec, n_scenarios: int) -> MeasureStructure:
    """One cell per (event, group) pair of the family."""
    events = spec.event_partition(n_scenarios)
    cells = tuple(
        Cell(i, ev, g)
        for i, (ev, part) in enumerate(zip(events, spec.agent_partitions()))
        for g in part
    )
    return MeasureStructure(cells, events, spec.n_agents, n_scenarios)


@dataclass(frozen=True)
class Membership:
    is_member: bool
    group_sums: NDArray[np.float64]
    total: float
    residual: float


def membership(spec: ConstraintSpec, Y: ArrayLike, tol: float = MEMBERSHIP_TOL) -> Membership:
    """Test ``Y`` against the family.

    ``group_sums[k]`` is the deterministic group total on cell ``k`` of
    :func:`measure_structure` (mean over the event when ``Y`` is not a member).
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != spec.n_agents:
        raise DimensionError(f"Y must be {spec.n_agents} x S, got {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise DimensionError("Y must be finite")
    structure = measure_structure(spec, Y.shape[1])
    sums = []
    resid = 0.0
    for cell in structure.cells:
        s = Y[list(cell.group)][:, list(cell.event)].sum(axis=0)
        resid = max(resid, float(s.max() - s.min()))
        sums.append(float(s.mean()))
    totals = Y.sum(axis=0)
    resid = max(resid, float(totals.max() - totals.min()))
    return Membership(resid <= tol, np.array(sums), float(totals.mean()), resid)


def assemble_pricing_vector(
    structure: MeasureStructure,
    cell_densities: Sequence[ArrayLike],
    model: MarketModel,
    tol: float = 1e-10,
) -> PricingVector:
    """Glue per-cell densities into one density per agent."""
    if len(cell_densities) != len(structure.cells):
        raise DimensionError(f"expected {len(structure.cells)} cell densities, got {len(cell_densities)}")
    D = np.full((structure.n_agents, structure.n_scenarios), np.nan)
    for cell, dens in zip(structure.cells, cell_densities):
        d = np.asarray(dens, dtype=float)
        if d.shape != (len(cell.event),):
            raise DimensionError(f"cell density on {len(cell.event)} scenarios has shape {d.shape}")
        if np.any(d < 0.0):
            raise NormalizationError("cell densities must be nonnegative")
        for n in cell.group:
            D[n, list(cell.event)] = d
    masses = D @ model.probs
    bad = np.flatnonzero(np.abs(masses - 1.0) > tol)
    if bad.size:
        raise NormalizationError(
            f"glued densities of agents {bad.tolist()} integrate to {masses[bad].tolist()}"
        )
    return PricingVector(D)


def constraint_matrix(spec: ConstraintSpec, n_scenarios: int, clearing: bool = False) -> NDArray[np.float64]:
    """Rows of linear equalities whose null space is ``B`` (flattened row-major).

    With ``clearing=True`` the rows ``sum_n Y^n(w) = 0`` are appended, giving
    the directions that keep the total at its constant.
    """
    N, S = spec.n_agents, n_scenarios
    rows: list[NDArray[np.float64]] = []

    def add_pair(agents, w1, w2):
        r = np.zeros((N, S))
        r[list(agents), w1] = 1.0
        r[list(agents), w2] = -1.0
        rows.append(r.ravel())

    for cell in measure_structure(spec, S).cells:
        for w1, w2 in zip(cell.event[:-1], cell.event[1:]):
            add_pair(cell.group, w1, w2)
    if not spec.is_cluster:
        for w in range(S - 1):
            add_pair(range(N), w, w + 1)
    if clearing:
        for w in range(S):
            r = np.zeros((N, S))
            r[:, w] = 1.0
            rows.append(r.ravel())
    if not rows:
        return np.zeros((0, N * S))
    return np.vstack(rows)


def allocation_basis(spec: ConstraintSpec, n_scenarios: int, clearing: bool = False) -> NDArray[np.float64]:
    """Orthonormal basis (columns) of ``B`` or of its zero-sum directions."""
    C = constraint_matrix(spec, n_scenarios, clearing)
    if C.shape[0] == 0:
        return np.eye(spec.n_agents * n_scenarios)
    return null_space(C)


def require_cluster(spec: ConstraintSpec) -> None:
    if not spec.is_cluster:
        raise SpecError("scenario-dependent clusterings have no closed form; use the dual solver")
