"""Deployment variants around the core update: K-retrieval with reranking,
dynamic catalogs, and multi-hop rounds.

Rerankers and judges are injectable callables so hosts can wire real models;
the stubs here are controllable simulation analogues.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .catalog import Catalog, ItemId
from .errors import InvalidConfig, KTooLarge
from .learner import (
    Feedback,
    LearningRateSchedule,
    RoundRecord,
    UpdateMode,
    apply_update,
    estimate_gradient_chosen_only,
    estimate_gradient_full,
    step,
)
from .policy import (
    QueryEmbedding,
    RandomSource,
    sample_k_without_replacement,
    sample_one,
    score,
)

Reranker = Callable[[QueryEmbedding, Sequence[ItemId]], ItemId]
Judge = Callable[[QueryEmbedding, ItemId], int]
InitEmbedder = Callable[[ItemId], np.ndarray]


def make_stub_reranker(
    alpha: float,
    truth_for_query: Callable[[str], ItemId],
    rng: RandomSource,
) -> Reranker:
    """Reranker of tunable strength.

    With probability `alpha` it returns the true item when present among the
    candidates; otherwise (and with probability 1 - alpha) a uniform
    candidate.
    """
    if not (0.0 <= alpha <= 1.0):
        raise InvalidConfig("reranker accuracy alpha must lie in [0, 1]")

    def rerank(q: QueryEmbedding, candidates: Sequence[ItemId]) -> ItemId:
        truth = truth_for_query(q.query_id)
        if truth in candidates and rng.uniform() < alpha:
            return truth
        idx = int(rng.uniform() * len(candidates))
        return candidates[min(idx, len(candidates) - 1)]

    return rerank


def step_with_rerank(
    q,
    catalog: Catalog,
    k: int,
    reranker: Reranker,
    rng: RandomSource,
    schedule: LearningRateSchedule,
    t: int,
    feedback_oracle: Callable[[int, ItemId], bool],
    update_mode: UpdateMode = UpdateMode.FULL,
    clip_propensity: float | None = None,
) -> RoundRecord:
    """Sample K candidates without replacement, rerank, update as usual.

    The gradient keeps the single-draw propensity p[i_t] from the full
    softmax, exactly as the K-retrieval procedure prescribes, even though i_t
    emerges from K-sampling plus reranking. A reranked choice can carry an
    arbitrarily small single-draw propensity, so `clip_propensity` is worth
    enabling here to bound the importance weights.
    """
    if k > len(catalog):
        raise KTooLarge(f"K={k} with I={len(catalog)} items")
    p = score(q, catalog)
    candidates = sample_k_without_replacement(p, k, rng)
    chosen = reranker(q if isinstance(q, QueryEmbedding) else QueryEmbedding(q), candidates)
    if chosen not in candidates:
        raise InvalidConfig("reranker returned an item outside the candidate set")
    success = bool(feedback_oracle(t, chosen))
    fb = Feedback(chosen=chosen, success=success, propensity=p[chosen])
    if update_mode is UpdateMode.FULL:
        g = estimate_gradient_full(p, q, fb, t=t, clip_propensity=clip_propensity)
    else:
        g = estimate_gradient_chosen_only(p, q, fb, t=t, clip_propensity=clip_propensity)
    eta = schedule.eta(t)
    apply_update(catalog, g, eta)
    return RoundRecord(
        t=t,
        query_id=getattr(q, "query_id", ""),
        chosen=chosen,
        success=success,
        propensity=fb.propensity,
        eta=eta,
        generation=catalog.generation,
    )


@dataclass
class CatalogDelta:
    """Additions/removals taking effect at the start of one round."""

    added: list[tuple[ItemId, np.ndarray]] = field(default_factory=list)
    removed: list[ItemId] = field(default_factory=list)
    effective_at: int = 1

    def __post_init__(self):
        added_ids = {i for i, _ in self.added}
        if added_ids & set(self.removed):
            raise InvalidConfig("delta adds and removes the same id")


def apply_delta(catalog: Catalog, delta: CatalogDelta, t: int) -> None:
    if delta.effective_at != t:
        raise InvalidConfig(
            f"delta effective_at={delta.effective_at} applied at round {t}"
        )
    for item_id in delta.removed:
        catalog.remove_item(item_id)
    for item_id, init in delta.added:
        catalog.add_item(item_id, init)


def step_dynamic(
    delta: CatalogDelta | None,
    q,
    catalog: Catalog,
    rng: RandomSource,
    schedule: LearningRateSchedule,
    update_mode: UpdateMode,
    t: int,
    feedback_oracle: Callable[[int, ItemId], bool],
) -> RoundRecord:
    """Apply the round's catalog delta, then run the standard step.

    The softmax renormalizes automatically over the surviving items.
    """
    if delta is not None:
        apply_delta(catalog, delta, t)
    return step(q, catalog, rng, schedule, update_mode, t, feedback_oracle)


@dataclass
class MultiHopRound:
    """Ordered sub-queries for one round plus the per-hop judge."""

    subqueries: list[QueryEmbedding]
    judge: Judge

    def __post_init__(self):
        if not self.subqueries:
            raise InvalidConfig("multi-hop round needs at least one sub-query")


def step_multihop(
    round_: MultiHopRound,
    catalog: Catalog,
    rng: RandomSource,
    schedule: LearningRateSchedule,
    t: int,
    update_mode: UpdateMode = UpdateMode.FULL,
    clip_propensity: float | None = None,
) -> list[RoundRecord]:
    """Run one hop per sub-query, updating the catalog within the round.

    Hop h+1 scores against the catalog already updated by hop h; the returned
    records carry one entry per hop in hop order.
    """
    records: list[RoundRecord] = []
    eta = schedule.eta(t)
    for h, q in enumerate(round_.subqueries, start=1):
        p = score(q, catalog)
        chosen = sample_one(p, rng)
        y = int(round_.judge(q, chosen))
        fb = Feedback(chosen=chosen, success=bool(y), propensity=p[chosen])
        if update_mode is UpdateMode.FULL:
            g = estimate_gradient_full(p, q, fb, t=t, clip_propensity=clip_propensity)
        else:
            g = estimate_gradient_chosen_only(p, q, fb, t=t, clip_propensity=clip_propensity)
        apply_update(catalog, g, eta)
        records.append(
            RoundRecord(
                t=t,
                query_id=q.query_id or f"t{t}h{h}",
                chosen=chosen,
                success=bool(y),
                propensity=fb.propensity,
                eta=eta,
                generation=catalog.generation,
            )
        )
    return records
