"""Writes the bundled example scenarios.

The flagship scenario is synthetic and illustrative: its ground-truth
series is hand-made, not observed data.
"""

import json
import math
import os

DIM = 16
EMOTIONS = ["anger", "anticipation", "disgust", "fear", "joy", "sadness", "surprise", "trust"]
HERE = os.path.dirname(os.path.abspath(__file__))


def unit(v):
    n = math.sqrt(sum(x * x for x in v))
    return [round(x / n, 6) for x in v]


def axis_mix(weights):
    v = [0.0] * DIM
    for k, w in weights.items():
        v[k] = w
    return unit(v)


def emotion(**scores):
    return [scores.get(e, 0.0) for e in EMOTIONS]


def platform(pid, bias):
    return {"platform_id": pid, "w1": 1.5, "w2": 1.0, "w3": 0.5, "w4": 0.8, "bias": bias}


def flagship():
    topic = axis_mix({0: 1.0})
    against = axis_mix({0: -1.0, 5: 0.3})
    favour = axis_mix({0: 1.0, 6: 0.3})
    ranges = {
        "beta": [1.5, 2.5],
        "delta": [0.7, 0.9],
        "eta": [0.7, 0.9],
        "gamma": [0.15, 0.3],
        "alpha": [0.5, 1.5],
        "theta": [0.0, 0.2],
    }

    def stratum(name, weight, home, mu, prior=None, mixing=0.0, **descriptors):
        s = {
            "name": name,
            "weight": weight,
            "descriptors": descriptors,
            "platform": home,
            "followers": {"mu": mu, "sigma": 1.0},
            "params": ranges,
        }
        if prior is not None:
            s["prior"] = prior
            s["prior_mixing"] = mixing
        return s

    def event(day, kind, text, weights, emo, label):
        return {
            "round": day,
            "kind": kind,
            "platform": "weibo",
            "text": text,
            "embedding": axis_mix(weights),
            "emotion": emotion(**emo),
            "author_influence": 1.0,
            "label": label,
        }

    return {
        "schema_version": 1,
        "name": "synthetic-vaccine-recall",
        "description": "Illustrative synthetic crisis: a contaminated vaccine batch and the "
        "authorities' response. Ground truth is hand-made for demonstration only.",
        "config": {
            "seed": 7,
            "num_agents": 100,
            "rounds": 10,
            "embedding_dim": DIM,
            "emotion_dim": len(EMOTIONS),
            "p_post": 0.4,
            "platforms": [platform("weibo", -2.0), platform("twitter", -2.4)],
        },
        "persona_library": {
            "strata": [
                stratum("parents", 0.35, "weibo", 5.0, against, 0.5, role="parent", region="province"),
                stratum("supporters", 0.2, "twitter", 5.5, favour, 0.5, role="civil servant"),
                stratum("bystanders", 0.3, "weibo", 4.5, role="student"),
                stratum("media", 0.15, "twitter", 8.5, role="journalist"),
            ]
        },
        "networks": [
            {"platform_id": "weibo", "generator": {"kind": "preferential_attachment", "m": 3}},
            {"platform_id": "twitter", "generator": {"kind": "erdos_renyi", "p": 0.04}},
        ],
        "timeline": [
            event(1, "event", "Contaminated vaccine batch reported at a provincial clinic",
                  {0: -1.0, 1: 0.6}, {"anger": 0.8, "fear": 0.7}, "recall-news"),
            event(2, "strategy", "Health authority announces an investigation and halts the batch",
                  {0: 0.6, 2: 0.8}, {"trust": 0.5, "anticipation": 0.4}, "investigation"),
            event(4, "event", "Unverified posts claim children were harmed",
                  {0: -0.8, 3: 0.6}, {"fear": 0.9, "anger": 0.6, "disgust": 0.5}, "rumor"),
            event(6, "strategy", "Officials apologise and publish a compensation plan",
                  {0: 0.8, 4: 0.5}, {"trust": 0.7, "joy": 0.3, "sadness": 0.3}, "apology"),
            event(8, "strategy", "Independent lab results confirm the remaining stock is safe",
                  {0: 0.9, 2: 0.3}, {"trust": 0.8}, "lab-results"),
        ],
        "ground_truth": {
            "trajectory": [
                [0, 0.35], [1, 0.45], [2, 0.42], [3, 0.44], [4, 0.52], [5, 0.5],
                [6, 0.41], [7, 0.38], [8, 0.34], [9, 0.31], [10, 0.3],
            ],
            "series": "negative_share",
            "final_stances": [0.3, 0.35, 0.35],
            "stance_labels": ["oppose", "neutral", "support"],
        },
        "topic": topic,
    }


def minimal():
    d = 4
    personas = []
    for i, z in enumerate([[1, 0, 0, 0], [0, 1, 0, 0], [0.6, 0.8, 0, 0], [0, 0, 1, 0]]):
        personas.append({
            "agent_id": f"a{i}",
            "platform": "forum",
            "followers": 10 * (i + 1),
            "initial_persona": z,
        })
    return {
        "schema_version": 1,
        "name": "minimal",
        "description": "Four agents on a small ring.",
        "config": {
            "num_agents": 4,
            "rounds": 3,
            "embedding_dim": d,
            "emotion_dim": 2,
            "p_post": 1.0,
            "platforms": [{"platform_id": "forum", "w1": 1.0, "w2": 0.5, "w3": 0.5, "w4": 0.5, "bias": 0.0}],
        },
        "personas": personas,
        "networks": [{"platform_id": "forum", "edges": [[1, 0], [2, 1], [3, 2], [0, 3], [2, 0]]}],
        "timeline": [
            {"round": 1, "kind": "event", "author": "a0", "platform": "forum",
             "text": "water supply interrupted downtown", "embedding": [1, 0, 0, 0], "emotion": [0.5, -0.2],
             "targets": ["a1", "a2"]},
        ],
        "topic": [1, 0, 0, 0],
    }


if __name__ == "__main__":
    for name, doc in [("flagship.json", flagship()), ("minimal.json", minimal())]:
        with open(os.path.join(HERE, name), "w") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
