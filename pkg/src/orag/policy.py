"""Softmax retrieval policy: scoring and seeded sampling.

Probabilities follow the softmax of query/row inner products, computed with
max-logit subtraction so large norms cannot overflow. Sampling is inverse-CDF
over the catalog's sorted id order, consuming exactly one uniform draw per
item drawn, so (seed, event log) fully reproduces a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .catalog import Catalog, ItemId
from .errors import DimensionMismatch, EmptyCatalog, KTooLarge, NonFiniteInput


@dataclass
class QueryEmbedding:
    q: np.ndarray
    query_id: str = ""

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64).ravel()


def _as_query(q) -> np.ndarray:
    if isinstance(q, QueryEmbedding):
        return q.q
    return np.asarray(q, dtype=np.float64).ravel()


class RandomSource:
    """Deterministic uniform stream; identical seed => identical draws."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.default_rng(self.seed)

    def uniform(self) -> float:
        return float(self._gen.random())

    def spawn(self, key: int) -> "RandomSource":
        """Independent child stream, deterministic in (seed, key)."""
        return RandomSource(np.random.SeedSequence([self.seed, int(key)]).generate_state(1)[0])


@dataclass
class ProbabilityVector:
    """Softmax probabilities over the catalog's items, in sorted-id order."""

    ids: tuple[ItemId, ...]
    probs: np.ndarray
    generation: int
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._index:
            self._index = {i: k for k, i in enumerate(self.ids)}

    def __getitem__(self, item_id: ItemId) -> float:
        return float(self.probs[self._index[item_id]])

    def index_of(self, item_id: ItemId) -> int:
        return self._index[item_id]

    def __len__(self) -> int:
        return len(self.ids)


def score(q, catalog: Catalog) -> ProbabilityVector:
    """Softmax of inner products between the query and every catalog row."""
    if len(catalog) == 0:
        raise EmptyCatalog("cannot score an empty catalog")
    qv = _as_query(q)
    if qv.shape != (catalog.dim,):
        raise DimensionMismatch(f"query length {qv.shape[0]} != catalog dim {catalog.dim}")
    if not np.all(np.isfinite(qv)):
        raise NonFiniteInput("query contains non-finite entries")
    logits = catalog.matrix().astype(np.float64) @ qv
    logits -= logits.max()
    # exp underflows to exact zero below ~-745; the softmax of finite logits
    # is mathematically positive, so floor the gap to keep every entry > 0.
    np.clip(logits, -700.0, None, out=logits)
    w = np.exp(logits)
    return ProbabilityVector(catalog.ids, w / w.sum(), catalog.generation)


def sample_one(p: ProbabilityVector, rng: RandomSource) -> ItemId:
    """Draw one item by inverse CDF; consumes exactly one uniform."""
    u = rng.uniform()
    cdf = np.cumsum(p.probs)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    idx = min(idx, len(p.ids) - 1)
    return p.ids[idx]


def sample_k_without_replacement(
    p: ProbabilityVector, k: int, rng: RandomSource
) -> list[ItemId]:
    """Sequential renormalized draws; output order equals draw order."""
    if k < 1 or k > len(p.ids):
        raise KTooLarge(f"K={k} with I={len(p.ids)} items")
    probs = p.probs.copy()
    alive = list(range(len(p.ids)))
    out: list[ItemId] = []
    for _ in range(k):
        u = rng.uniform()
        weights = probs[alive]
        cdf = np.cumsum(weights)
        j = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
        j = min(j, len(alive) - 1)
        out.append(p.ids[alive[j]])
        alive.pop(j)
    return out
