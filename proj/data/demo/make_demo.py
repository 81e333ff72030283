"""Regenerates the offline demo inputs in this directory.

Writes manifest.jsonl (10 images with fact sheets), fixtures.jsonl (scripted
query streams for the three mock generators), captions.jsonl (5 rollout
groups) and config.json. Output is deterministic.
"""

import json
import pathlib
import random

HERE = pathlib.Path(__file__).resolve().parent

OBJECTS = ["apple", "mug", "lamp", "chair", "book", "plant", "clock", "bottle",
           "pillow", "basket", "candle", "vase", "bowl", "laptop", "guitar", "kettle"]
COLORS = ["red", "blue", "green", "yellow", "white", "black", "orange", "purple"]
COUNTS = ["one", "two", "three", "four", "five"]
PLACES = ["left", "right", "center", "corner", "shelf", "floor"]


def image(i, rng):
    objs = rng.sample(OBJECTS, 6)
    attrs = [(o, rng.choice(COLORS), rng.choice(COUNTS), rng.choice(PLACES)) for o in objs]
    facts = []
    for o, c, n, p in attrs:
        facts += [f"{c} {o}", f"{n} {o}", f"{o} {p}"]
    return {"id": f"img-{i:02d}", "facts": facts}, attrs


def streams(img_id, attrs):
    color = [{"question": f"What color is the {o}?", "answer": c} for o, c, _, _ in attrs]
    count = [{"question": f"How many {o} items are visible?", "answer": n} for o, _, n, _ in attrs]
    place = [{"question": f"Where can the {o} be found?", "answer": p} for o, _, _, p in attrs]
    junk = [
        {"question": "Describe the scene", "answer": "a room"},
        {"question": "What brand is the car?", "answer": "toyota"},
        {"question": f"The {attrs[0][0]} is what color?", "answer": attrs[0][1]},
    ]
    return [
        {"image_id": img_id, "generator": "gen-a", "queries": color[:3] + junk[:1] + color[3:]},
        {"image_id": img_id, "generator": "gen-b", "queries": count[:3] + junk[1:2] + count[3:]},
        {"image_id": img_id, "generator": "gen-c", "queries": junk[2:] + place},
    ]


def caption(attrs, rng, k, hallucinate):
    parts = [f"A {c} {o} near the {p}" for o, c, _, p in attrs[:k]]
    if hallucinate:
        parts.append("A purple dragon flies overhead")
    rng.shuffle(parts)
    return ". ".join(parts) + "."


def main():
    rng = random.Random(7)
    manifest, fixtures, groups = [], [], []
    for i in range(10):
        img, attrs = image(i, rng)
        manifest.append(img)
        fixtures += streams(img["id"], attrs)
        if i < 5:
            groups.append({
                "sample_id": img["id"],
                "rollouts": [caption(attrs, rng, k, h) for k, h in
                             [(2, False), (4, False), (6, False), (4, True), (1, True)]],
                "seed": 1000 + i,
            })

    def dump(name, rows):
        with open(HERE / name, "w") as f:
            for r in rows:
                f.write(json.dumps(r) + "\n")

    dump("manifest.jsonl", manifest)
    dump("fixtures.jsonl", fixtures)
    dump("captions.jsonl", groups)

    gen = lambda gid: {"id": gid, "kind": "generator", "transport": "mock",
                       "fixtures": "fixtures.jsonl"}
    config = {
        "listen_addr": "127.0.0.1:8080",
        "dataset_path": "dataset.jsonl",
        "contribution_store_path": "contributions.jsonl",
        "reward": {"alpha": 0.05, "max_sub_queries": 5, "group_size": 5,
                   "advantage_epsilon": 1e-6},
        "sampler": {"k": 5, "floor": 0.05},
        "request_timeout_ms": 60000,
        "max_concurrent_requests": 8,
        "endpoints": [gen("gen-a"), gen("gen-b"), gen("gen-c"),
                      {"id": "judge", "kind": "judge", "transport": "mock"},
                      {"id": "embedder", "kind": "embedder", "transport": "mock"}],
        "curation": {"n_q": 10, "tau": 0.1, "max_attempts": 200, "per_call_count": 15,
                     "dedup_cosine": 0.95, "generator_ids": ["gen-a", "gen-b", "gen-c"],
                     "judge_id": "judge", "embedder_id": "embedder", "rng_seed": 42},
    }
    (HERE / "config.json").write_text(json.dumps(config, indent=2) + "\n")


if __name__ == "__main__":
    main()
