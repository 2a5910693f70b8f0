"""Run configuration, JSONL event logs, and embedding-dump ingestion."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .catalog import Catalog, ItemId, ProjectionMode, read_snapshot
from .errors import (
    DimensionMismatch,
    IoError,
    ParseError,
    SchemaError,
    UnknownId,
    ValidationError,
)
from .learner import LearningRateSchedule, RoundRecord, ScheduleKind, UpdateMode
from .simulator import EpisodeConfig, Variant

_KNOWN_KEYS = {
    "T", "I", "d", "K", "variant", "update_mode", "schedule", "c",
    "projection", "repeat_passes", "sigma", "sigma_init", "alpha",
    "shift_round", "shift_fraction", "seed", "out",
    "queries_path", "items_path", "labels_path",
}

_REQUIRED_KEYS = {"T", "I", "d", "seed"}


@dataclass
class RunConfig:
    T: int
    I: int
    d: int
    seed: int
    K: int = 1
    variant: Variant = Variant.PLAIN
    update_mode: UpdateMode = UpdateMode.FULL
    schedule: ScheduleKind = ScheduleKind.INVERSE_SQRT
    c: float = 1e-5
    projection: ProjectionMode = ProjectionMode.NONE
    repeat_passes: int = 1
    sigma: float = 0.3
    sigma_init: float = 0.0
    alpha: float = 1.0
    shift_round: Optional[int] = None
    shift_fraction: float = 0.5
    out: Optional[str] = None
    queries_path: Optional[str] = None
    items_path: Optional[str] = None
    labels_path: Optional[str] = None

    def episode(self) -> EpisodeConfig:
        return EpisodeConfig(
            T=self.T,
            I=self.I,
            d=self.d,
            K=self.K,
            variant=self.variant,
            update_mode=self.update_mode,
            schedule=LearningRateSchedule(self.schedule, self.c),
            projection=self.projection,
            repeat_passes=self.repeat_passes,
        )


def _enum_field(raw, enum_cls, name: str):
    try:
        return enum_cls(raw)
    except ValueError:
        valid = ", ".join(e.value for e in enum_cls)
        raise ValidationError(f"{name}: expected one of {{{valid}}}, got {raw!r}") from None


def load_config(path: str) -> RunConfig:
    """Read, validate, and default-fill a JSON run configuration."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise IoError(str(e)) from None
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from None
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: config must be a single JSON object")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(raw)
    if missing:
        raise ValidationError(f"missing required keys: {sorted(missing)}")

    cfg = dict(raw)
    for key in ("variant",):
        if key in cfg:
            cfg[key] = _enum_field(cfg[key], Variant, key)
    if "update_mode" in cfg:
        cfg["update_mode"] = _enum_field(cfg["update_mode"], UpdateMode, "update_mode")
    if "schedule" in cfg:
        cfg["schedule"] = _enum_field(cfg["schedule"], ScheduleKind, "schedule")
    if "projection" in cfg:
        cfg["projection"] = _enum_field(cfg["projection"], ProjectionMode, "projection")

    for key in ("T", "I", "d", "K", "seed", "repeat_passes"):
        if key in cfg and not isinstance(cfg[key], int):
            raise ValidationError(f"{key}: expected an integer, got {cfg[key]!r}")
    config = RunConfig(**cfg)
    if config.T < 1 or config.I < 1 or config.d < 1:
        raise ValidationError("T, I, d must all be >= 1")
    if not (1 <= config.K <= config.I):
        raise ValidationError(f"K: must lie in [1, I]; got {config.K}")
    if config.c <= 0:
        raise ValidationError("c: schedule constant must be positive")
    if config.sigma < 0 or config.sigma_init < 0:
        raise ValidationError("sigma, sigma_init must be >= 0")
    if not (0.0 <= config.alpha <= 1.0):
        raise ValidationError("alpha: must lie in [0, 1]")
    if config.repeat_passes < 1:
        raise ValidationError("repeat_passes: must be >= 1")
    return config


# -- JSONL event logs -------------------------------------------------------

_EVENT_REQUIRED = {"t", "query_id", "chosen", "success", "propensity", "eta"}
_EVENT_OPTIONAL = {"loss", "generation"}


def write_event_log(records: list[RoundRecord], path: str) -> None:
    """One JSON object per line with a fixed key set; deterministic bytes."""
    try:
        with open(path, "w", encoding="utf-8") as f:
            for r in records:
                row = {
                    "t": r.t,
                    "query_id": r.query_id,
                    "chosen": r.chosen,
                    "success": bool(r.success),
                    "propensity": r.propensity,
                    "eta": r.eta,
                }
                if r.loss is not None:
                    row["loss"] = r.loss
                if r.generation is not None:
                    row["generation"] = r.generation
                f.write(json.dumps(row, sort_keys=True) + "\n")
    except OSError as e:
        raise IoError(str(e)) from None


def read_event_log(path: str) -> list[RoundRecord]:
    records: list[RoundRecord] = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise IoError(str(e)) from None
    last_t = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError:
            raise SchemaError(f"line {lineno}: not valid JSON") from None
        if not isinstance(row, dict):
            raise SchemaError(f"line {lineno}: expected a JSON object")
        keys = set(row)
        if not _EVENT_REQUIRED <= keys or keys - _EVENT_REQUIRED - _EVENT_OPTIONAL:
            raise SchemaError(f"line {lineno}: bad key set {sorted(keys)}")
        if not isinstance(row["t"], int) or row["t"] <= last_t:
            raise SchemaError(f"line {lineno}: t must be a strictly increasing integer")
        if not (0.0 < row["propensity"] <= 1.0):
            raise SchemaError(f"line {lineno}: propensity outside (0, 1]")
        last_t = row["t"]
        records.append(
            RoundRecord(
                t=row["t"],
                query_id=row["query_id"],
                chosen=row["chosen"],
                success=bool(row["success"]),
                propensity=float(row["propensity"]),
                eta=float(row["eta"]),
                loss=row.get("loss"),
                generation=row.get("generation"),
            )
        )
    return records


# -- embedding dump ingestion ----------------------------------------------


@dataclass
class ReplayStream:
    """Offline query stream equivalent to the simulator's interface."""

    query_ids: list[str]
    queries: np.ndarray
    catalog: Catalog
    labels: dict[str, ItemId]

    def __len__(self) -> int:
        return len(self.query_ids)


def ingest_embedding_dump(queries_path: str, items_path: str, labels_path: str) -> ReplayStream:
    """Load query/item vectors (snapshot layout) plus (query_id, item_id) labels."""
    queries_cat = read_snapshot(queries_path)
    catalog = read_snapshot(items_path)
    if queries_cat.dim != catalog.dim:
        raise DimensionMismatch(
            f"query dim {queries_cat.dim} != item dim {catalog.dim}"
        )
    labels: dict[str, ItemId] = {}
    try:
        with open(labels_path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise IoError(str(e)) from None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SchemaError(f"line {lineno}: expected 'query_id item_id'")
        qid, iid = parts
        if qid not in queries_cat:
            raise UnknownId(f"line {lineno}: unknown query id {qid!r}")
        if iid not in catalog:
            raise UnknownId(f"line {lineno}: unknown item id {iid!r}")
        labels[qid] = iid
    query_ids = [q for q in queries_cat.ids if q in labels]
    queries = np.stack([queries_cat.row(q) for q in query_ids]) if query_ids else np.empty((0, catalog.dim))
    return ReplayStream(query_ids=query_ids, queries=queries, catalog=catalog, labels=labels)
