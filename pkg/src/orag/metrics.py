"""Losses, the hindsight-optimal trainer, regret curves, and IR metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .catalog import Catalog, ItemId
from .errors import (
    EmptyEvents,
    MissingGroundTruth,
    NoRelevantItems,
    UnknownId,
    WindowTooLarge,
)
from .policy import ProbabilityVector, _as_query


def cross_entropy_loss(p: ProbabilityVector, i_star: ItemId) -> float:
    """-ln p[i_star]."""
    try:
        prob = p[i_star]
    except KeyError:
        raise UnknownId(i_star) from None
    return -math.log(prob)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction, for (T, I) logit matrices."""
    z = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=1, keepdims=True)


def _event_arrays(
    events: Sequence[tuple[np.ndarray, ItemId]], catalog: Catalog
) -> tuple[np.ndarray, np.ndarray]:
    queries = np.stack([_as_query(q) for q, _ in events])
    index = {i: k for k, i in enumerate(catalog.ids)}
    try:
        labels = np.array([index[i_star] for _, i_star in events])
    except KeyError as e:
        raise UnknownId(str(e)) from None
    return queries, labels


def total_loss(theta: np.ndarray, queries: np.ndarray, labels: np.ndarray) -> float:
    p = softmax_rows(queries @ theta.T)
    return float(-np.sum(np.log(p[np.arange(len(labels)), labels])))


@dataclass
class OracleFit:
    catalog: Catalog
    loss: float
    passes: int


def train_oracle(
    events: Sequence[tuple[np.ndarray, ItemId]],
    init: Catalog,
    passes: int = 10_000,
    lr: float = 0.05,
    tol: float = 1e-9,
) -> OracleFit:
    """Full-information gradient descent toward the hindsight optimum.

    Deterministic multi-pass descent on the summed cross-entropy with exact
    gradients (p_i - 1{i=i*}) q per event. Backtracks (halves the step) when a
    pass would increase the loss, so the final loss never exceeds the initial
    one; stops once the pass-over-pass improvement drops below `tol` or the
    pass budget is exhausted.
    """
    if len(events) == 0:
        raise EmptyEvents("oracle needs at least one event")
    queries, labels = _event_arrays(events, init)
    theta = init.matrix().astype(np.float64).copy()
    onehot = np.zeros((len(labels), len(init)))
    onehot[np.arange(len(labels)), labels] = 1.0
    loss = total_loss(theta, queries, labels)
    step = lr
    used = 0
    for it in range(passes):
        p = softmax_rows(queries @ theta.T)
        grad = (p - onehot).T @ queries
        while True:
            cand = theta - step * grad
            cand_loss = total_loss(cand, queries, labels)
            if cand_loss <= loss or step < 1e-16:
                break
            step *= 0.5
        used = it + 1
        if cand_loss > loss:
            break
        improved = loss - cand_loss
        theta, loss = cand, cand_loss
        step *= 1.05  # cautious growth; backtracking undoes overshoot
        if improved < tol:
            break
    fitted = Catalog(init.dim, zip(init.ids, theta))
    return OracleFit(catalog=fitted, loss=loss, passes=used)


@dataclass
class RegretLedger:
    online_loss: np.ndarray
    oracle_loss: np.ndarray
    cumulative_regret: np.ndarray

    def __len__(self) -> int:
        return len(self.online_loss)

    @property
    def final_regret(self) -> float:
        return float(self.cumulative_regret[-1])


def regret_curve(episode_log, oracle: Catalog) -> RegretLedger:
    """Per-round online/oracle losses and the running regret sum.

    `episode_log` must expose per-round queries, ground-truth items, and the
    online losses recorded during the run.
    """
    if episode_log.queries is None or episode_log.true_items is None:
        raise MissingGroundTruth("episode log lacks (q_t, i*_t) records")
    online = np.asarray(episode_log.online_losses, dtype=np.float64)
    queries, labels = _event_arrays(
        list(zip(episode_log.queries, episode_log.true_items)), oracle
    )
    p = softmax_rows(queries @ oracle.matrix().astype(np.float64).T)
    oracle_losses = -np.log(p[np.arange(len(labels)), labels])
    return RegretLedger(
        online_loss=online,
        oracle_loss=oracle_losses,
        cumulative_regret=np.cumsum(online - oracle_losses),
    )


@dataclass
class RankedList:
    """ItemIds ordered by descending probability, ties broken by id order."""

    order: tuple[ItemId, ...]
    relevant: frozenset

    @classmethod
    def from_probabilities(cls, p: ProbabilityVector, relevant) -> "RankedList":
        order = sorted(range(len(p.ids)), key=lambda k: (-p.probs[k], p.ids[k]))
        return cls(tuple(p.ids[k] for k in order), frozenset(relevant))


def recall_at_k(ranked: RankedList, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not ranked.relevant:
        raise NoRelevantItems("recall undefined without relevant items")
    top = set(ranked.order[:k])
    return len(top & ranked.relevant) / len(ranked.relevant)


def ndcg_at_k(ranked: RankedList, k: int) -> float:
    """Binary-relevance NDCG with 1/log2(rank + 1) discounts, ranks from 1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not ranked.relevant:
        raise NoRelevantItems("ndcg undefined without relevant items")
    dcg = sum(
        1.0 / math.log2(rank + 1)
        for rank, item in enumerate(ranked.order[:k], start=1)
        if item in ranked.relevant
    )
    ideal_hits = min(k, len(ranked.relevant))
    idcg = sum(1.0 / math.log2(rank + 1) for rank in range(1, ideal_hits + 1))
    return dcg / idcg


def rolling_accuracy(successes: Sequence[bool], window: int) -> np.ndarray:
    """Windowed mean of success bits; output length is len(successes)-window+1."""
    bits = np.asarray(successes, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be >= 1")
    if window > len(bits):
        raise WindowTooLarge(f"window {window} > {len(bits)} rounds")
    csum = np.concatenate([[0.0], np.cumsum(bits)])
    return (csum[window:] - csum[:-window]) / window
