"""Scenario documents: one JSON object describing a complete problem.

Agent and scenario indices inside the ``constraints`` block are 0-based
positions in the ``agents`` and ``scenarios`` arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .constraints import ConstraintSpec
from .errors import SchemaError, ValidationError
from .market import MarketModel, check_schema, load_market
from .utility import UtilityProfile

_INDEX_SETS = {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["agents", "scenarios", "probs", "endowments", "utility", "constraints"],
    "properties": {
        "utility": {
            "type": "object",
            "required": ["family", "alphas"],
            "properties": {
                "family": {"const": "exponential"},
                "alphas": {"type": "array", "items": {"type": "number"}},
                "gammas": {"type": "array", "items": {"type": "number"}},
            },
        },
        "constraints": {
            "type": "object",
            "required": ["variant"],
            "properties": {
                "variant": {"enum": ["full", "none", "cluster", "scenario_cluster"]},
                "groups": _INDEX_SETS,
                "events": _INDEX_SETS,
                "event_groups": {"type": "array", "items": _INDEX_SETS},
            },
        },
        "budget_A": {"type": "number"},
    },
}


@dataclass(frozen=True)
class Scenario:
    model: MarketModel
    profile: UtilityProfile
    spec: ConstraintSpec
    A: float


def _spec(block: dict, n_agents: int, n_scenarios: int) -> ConstraintSpec:
    variant = block["variant"]
    if variant == "full":
        return ConstraintSpec.full(n_agents)
    if variant == "none":
        return ConstraintSpec.none(n_agents)
    if variant == "cluster":
        if "groups" not in block:
            raise SchemaError("constraints: 'groups' is required for the cluster variant")
        return ConstraintSpec.cluster(block["groups"], n_agents)
    if "events" not in block or "event_groups" not in block:
        raise SchemaError("constraints: 'events' and 'event_groups' are required for scenario_cluster")
    return ConstraintSpec.scenario_cluster(block["events"], block["event_groups"], n_agents, n_scenarios)


def load_scenario(source: dict | str | Path) -> Scenario:
    """Parse a scenario document given as a dict, a JSON string or a file path."""
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = None
    if text is not None:
        try:
            source = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from None
    check_schema(source, SCENARIO_SCHEMA)
    model = load_market(source)
    util = source["utility"]
    if len(util["alphas"]) != model.n_agents:
        raise ValidationError(f"{len(util['alphas'])} risk aversions for {model.n_agents} agents")
    if "gammas" in util and len(util["gammas"]) != model.n_agents:
        raise ValidationError(f"{len(util['gammas'])} weights for {model.n_agents} agents")
    profile = UtilityProfile.exponential(util["alphas"], util.get("gammas"))
    spec = _spec(source["constraints"], model.n_agents, model.n_scenarios)
    return Scenario(model, profile, spec, float(source.get("budget_A", 0.0)))


def scenario_document(model: MarketModel, profile: UtilityProfile, spec: ConstraintSpec, A: float = 0.0) -> dict:
    """Inverse of :func:`load_scenario` for exponential profiles."""
    if not profile.is_exponential:
        raise ValidationError("only exponential profiles can be written to a scenario document")
    doc = {
        "agents": list(model.agent_ids),
        "scenarios": list(model.scenario_ids),
        "probs": model.probs.tolist(),
        "endowments": model.endowments.tolist(),
        "utility": {"family": "exponential", "alphas": profile.alphas.tolist(), "gammas": profile.gammas.tolist()},
        "budget_A": float(A),
    }
    if spec.is_cluster:
        doc["constraints"] = {"variant": spec.label if spec.label in ("full", "none") else "cluster",
                              "groups": [list(g) for g in spec.groups]}
    else:
        doc["constraints"] = {
            "variant": "scenario_cluster",
            "events": [list(e) for e in spec.events],
            "event_groups": [[list(g) for g in part] for part in spec.event_groups],
        }
    return doc
