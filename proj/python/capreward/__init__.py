"""Caption reward toolkit bindings."""

import json

from ._core import (
    CaprewardError,
    accuracy_variance,
    commit_epoch,
    cosine_similarity,
    diversity,
    diversity_contributions,
    group_advantages,
    hybrid_reward,
    least_contributing_index,
    mock_embed,
    sample_queries,
)
from . import _core

__all__ = [
    "CaprewardError",
    "RewardService",
    "accuracy_variance",
    "commit_epoch",
    "cosine_similarity",
    "curate",
    "diversity",
    "diversity_contributions",
    "group_advantages",
    "hybrid_reward",
    "least_contributing_index",
    "mock_embed",
    "sample_queries",
]


def curate(config, manifest, out, mock=False, seed=None):
    """Curate a manifest into a JSONL dataset and return the run stats."""
    return json.loads(_core.curate(str(config), str(manifest), str(out), mock, seed))


class RewardService:
    """In-process reward service. Methods return (status, decoded JSON body)."""

    def __init__(self, config, mock=False, dataset=None, store=None):
        self._svc = _core._Service(
            str(config), mock,
            None if dataset is None else str(dataset),
            None if store is None else str(store),
        )

    @property
    def sample_count(self):
        return self._svc.sample_count

    def health(self):
        return _decode(self._svc.health())

    def reward(self, sample_id, rollouts, seed=None, alpha_override=None):
        req = {"sample_id": sample_id, "rollouts": list(rollouts)}
        if seed is not None:
            req["seed"] = seed
        if alpha_override is not None:
            req["alpha_override"] = alpha_override
        return _decode(self._svc.reward(json.dumps(req)))

    def commit(self, sample_ids=None):
        body = "" if sample_ids is None else json.dumps({"sample_ids": list(sample_ids)})
        return _decode(self._svc.commit(body))

    def contributions(self, sample_id):
        return _decode(self._svc.contributions(sample_id))


def _decode(reply):
    status, body = reply
    return status, json.loads(body)
