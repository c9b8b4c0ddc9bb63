import json

import numpy as np
import pytest

from helpers import profile_of, random_instance
from sorte.errors import SchemaError, ValidationError
from sorte.scenario import load_scenario, scenario_document


def test_round_trip_through_json(tmp_path):
    rng = np.random.default_rng(30)
    for kind in ("full", "none", "cluster", "scenario_cluster"):
        model, alphas, spec, A = random_instance(rng, kind=kind)
        gammas = rng.lognormal(size=model.n_agents)
        doc = scenario_document(model, profile_of(alphas, gammas), spec, A)
        path = tmp_path / f"{kind}.json"
        path.write_text(json.dumps(doc))
        for source in (doc, json.dumps(doc), path, str(path)):
            sc = load_scenario(source)
            np.testing.assert_array_equal(sc.model.endowments, model.endowments)
            np.testing.assert_array_equal(sc.profile.alphas, alphas)
            np.testing.assert_array_equal(sc.profile.gammas, gammas)
            assert sc.spec.agent_partitions() == spec.agent_partitions()
            assert sc.A == A


def test_document_errors():
    doc = {
        "agents": ["a", "b"],
        "scenarios": ["s", "t"],
        "probs": [0.5, 0.5],
        "endowments": [[0.0, 1.0], [1.0, 0.0]],
        "utility": {"family": "exponential", "alphas": [1.0, 2.0]},
        "constraints": {"variant": "cluster"},
    }
    with pytest.raises(SchemaError):
        load_scenario(doc)
    with pytest.raises(SchemaError):
        load_scenario(dict(doc, constraints={"variant": "scenario_cluster", "events": [[0], [1]]}))
    with pytest.raises(SchemaError):
        load_scenario(dict(doc, constraints={"variant": "polar"}))
    with pytest.raises(ValidationError):
        load_scenario(dict(doc, constraints={"variant": "full"}, utility={"family": "exponential", "alphas": [1.0]}))
    with pytest.raises(ValidationError):
        load_scenario(dict(doc, constraints={"variant": "cluster", "groups": [[0, 1, 2]]}))
    assert load_scenario(dict(doc, constraints={"variant": "full"})).A == 0.0
