"""Smoke test for the Python bindings.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/cascade-*.whl
then run ``python python/smoke_test.py`` from the repository root.
"""

import json
import math
import pathlib
import sys

import cascade

ROOT = pathlib.Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"


def close(a, b, tol):
    return abs(a - b) <= tol


def check_scenarios():
    flagship = cascade.Scenario.load(str(SCENARIOS / "flagship.json"))
    assert flagship.num_agents == 100 and flagship.rounds == 10, flagship
    again = cascade.Scenario.from_json(flagship.to_json())
    assert again.to_dict() == flagship.to_dict()
    try:
        cascade.Scenario.from_json('{"schema_version": 1}')
    except cascade.CascadeError as e:
        assert "name" in str(e) or "config" in str(e), e
    else:
        raise AssertionError("invalid scenario accepted")
    return flagship


def check_world(flagship):
    world = cascade.World(flagship, seed=7)
    first = world.step()
    assert first["round"] == 1 and world.round == 1
    assert len(first["rng_digest"]) == 64
    rest = world.run()
    assert world.is_finished and len(rest) == flagship.rounds - 1
    points = world.trajectory()
    assert len(points) == flagship.rounds + 1
    assert all(-1.0 <= v <= 1.0 for _, v in points)
    report = world.report()
    assert report["seeds"] == [7]
    states = world.states()
    assert len(states) == 100
    assert all(close(math.hypot(*s["persona"]), 1.0, 1e-9) for s in states)

    replay = cascade.World(flagship, seed=7)
    assert replay.step() == first

    minimal = cascade.Scenario.load(str(SCENARIOS / "minimal.json"))
    world = cascade.World(minimal, seed=1)
    world.inject(
        {
            "round": 1,
            "kind": "strategy",
            "author": "organization",
            "platform": "forum",
            "embedding": [0.0, 1.0, 0.0, 0.0],
            "emotion": [0.0, 0.0],
            "targets": ["a3"],
        },
        "apology",
    )
    trace = world.step()
    assert [i["label"] for i in trace["injected"]][-1] == "apology"


def check_math():
    up = cascade.dual_update(
        [1.0, 0.0], [1.0], [0.0, 1.0], [1.0], {"alpha": 1.0, "gamma": 0.1, "eta": 0.9}
    )
    gate = 1.0 / (1.0 + math.exp(-1.0))
    norm = math.hypot(1.0, 0.1 * gate)
    assert close(up["gate"], gate, 1e-12)
    assert close(up["persona"][0], 1.0 / norm, 1e-6)
    assert close(up["persona"][1], 0.1 * gate / norm, 1e-6)
    assert close(up["affect"][0], 0.9, 1e-12)

    p = cascade.activation_probability(
        [1.0, 0.0], [0.0], [0.0, 0.0], [0.5, math.sqrt(0.75)], [0.0], 0.0, (1.0, 0.0, 0.0, 0.0, 0.0)
    )
    assert close(p, 1.0 / (1.0 + math.exp(-0.5)), 1e-12)

    radius, converged, _ = cascade.spectral_radius([[0, 0.6, 0.6], [0.6, 0, 0.6], [0.6, 0.6, 0]])
    assert converged and close(radius, 1.2, 1e-9)
    radius, _, _ = cascade.spectral_radius([[0, 0.5], [0.5, 0]])
    assert close(radius, 0.5, 1e-9)

    verdict = cascade.strategy_acceptance(1.4, 0.8)
    assert verdict["accepted"] and close(verdict["delta"], -0.6, 1e-12)
    assert not cascade.strategy_acceptance(1.4, 1.1)["accepted"]

    assert close(cascade.pearson([1, 2, 3], [1, 2, 4]), 3 / math.sqrt(2 * 14 / 3), 1e-12)
    try:
        cascade.pearson([1, 1, 1], [1, 2, 3])
    except cascade.UndefinedCorrelation:
        pass
    else:
        raise AssertionError("constant series correlated")
    assert close(cascade.jsd([1, 0], [0, 1]), 1.0, 1e-12)
    assert cascade.jsd([0.2, 0.8], [0.2, 0.8]) == 0.0


def check_batch(flagship):
    a = cascade.run_scenario(flagship, [1, 2, 3])
    b = cascade.run_scenario(flagship, [3, 1, 2])
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert a["seeds"] == [1, 2, 3]


def main():
    flagship = check_scenarios()
    check_world(flagship)
    check_math()
    check_batch(flagship)
    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
