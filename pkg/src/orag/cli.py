"""Command-line front door: simulate, replay, regret, metrics, export."""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .catalog import write_snapshot
from .errors import OragError, ValidationError, InvalidConfig, ParseError
from .io_utils import RunConfig, ingest_embedding_dump, load_config, write_event_log
from .learner import LearningRateSchedule, RoundRecord, UpdateMode, step
from .metrics import (
    RankedList,
    ndcg_at_k,
    recall_at_k,
    regret_curve,
    rolling_accuracy,
    train_oracle,
)
from .policy import QueryEmbedding, RandomSource, score
from .simulator import (
    EpisodeLog,
    Variant,
    half_withheld_scenario,
    initial_catalog,
    make_environment,
    make_multihop_rounds,
    run_episode,
)
from .variants import make_stub_reranker


def run_from_config(cfg: RunConfig) -> tuple[object, EpisodeLog]:
    """Build the configured environment and execute one episode."""
    episode = cfg.episode()
    env = make_environment(
        episode,
        cfg.seed,
        noise_scale=cfg.sigma,
        shift_round=cfg.shift_round,
        shift_fraction=cfg.shift_fraction,
    )
    kwargs = {}
    if cfg.variant is Variant.RERANK:
        rr_rng = RandomSource(np.random.SeedSequence([cfg.seed, 6]).generate_state(1)[0])
        truth = {f"q{t}": env.optimal_item(t) for t in range(1, env.total_rounds + 1)}
        kwargs["reranker"] = make_stub_reranker(cfg.alpha, truth.__getitem__, rr_rng)
    elif cfg.variant is Variant.DYNAMIC:
        initial_ids, deltas = half_withheld_scenario(env)
        kwargs["deltas"] = deltas
        kwargs["catalog"] = initial_catalog(
            env, cfg.sigma_init, projection=cfg.projection, restrict_to=initial_ids
        )
    elif cfg.variant is Variant.MULTIHOP:
        kwargs["multihop_rounds"] = make_multihop_rounds(env)
    log = run_episode(env, episode, init_noise=cfg.sigma_init, **kwargs)
    return env, log


def _replay(cfg: RunConfig) -> EpisodeLog:
    if not (cfg.queries_path and cfg.items_path and cfg.labels_path):
        raise ValidationError(
            "replay needs queries_path, items_path, labels_path in the config"
        )
    stream = ingest_embedding_dump(cfg.queries_path, cfg.items_path, cfg.labels_path)
    catalog = stream.catalog
    catalog.projection = cfg.projection
    schedule = LearningRateSchedule(cfg.schedule, cfg.c)
    rng = RandomSource(cfg.seed)
    records: list[RoundRecord] = []
    for t, qid in enumerate(stream.query_ids, start=1):
        q = QueryEmbedding(stream.queries[t - 1], query_id=qid)
        truth = stream.labels[qid]
        rec = step(
            q, catalog, rng, schedule, cfg.update_mode, t,
            lambda _t, chosen: chosen == truth,
        )
        records.append(rec)
    return EpisodeLog(rounds=records, final_catalog=catalog)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _outdir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def cli_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="orag",
        description="Online-adaptive retrieval embeddings: simulation and analysis harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("simulate", "run one episode and write the event log + final snapshot"),
        ("replay", "run the learner over an ingested embedding dump"),
        ("regret", "train the hindsight oracle and emit the regret curve CSV"),
        ("metrics", "emit per-round recall/ndcg/accuracy CSV"),
        ("export", "run the episode and write the final catalog snapshot"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--k", type=int, default=10, help="cutoff for ranking metrics")
        p.add_argument("--passes", type=int, default=10_000, help="oracle pass budget")

    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out = _outdir(args)

        if args.command == "simulate":
            _, log = run_from_config(cfg)
            write_event_log(log.rounds, os.path.join(out, "events.jsonl"))
            write_snapshot(log.final_catalog, os.path.join(out, "catalog.orag"))
        elif args.command == "replay":
            log = _replay(cfg)
            write_event_log(log.rounds, os.path.join(out, "events.jsonl"))
            write_snapshot(log.final_catalog, os.path.join(out, "catalog.orag"))
        elif args.command == "regret":
            env, log = run_from_config(cfg)
            events = list(zip(log.queries, log.true_items))
            init = initial_catalog(env, cfg.sigma_init, projection=cfg.projection)
            fit = train_oracle(events, init, passes=args.passes)
            ledger = regret_curve(log, fit.catalog)
            _write_csv(
                os.path.join(out, "regret.csv"),
                ["t", "online_loss", "oracle_loss", "cum_regret"],
                (
                    (t + 1, ledger.online_loss[t], ledger.oracle_loss[t], ledger.cumulative_regret[t])
                    for t in range(len(ledger))
                ),
            )
        elif args.command == "metrics":
            env, log = run_from_config(cfg)
            rows = []
            for rec, q, truth in zip(log.rounds, log.queries, log.true_items):
                p = score(q, log.final_catalog) if truth in log.final_catalog else None
                if p is None:
                    continue
                ranked = RankedList.from_probabilities(p, {truth})
                rows.append(
                    (rec.t, recall_at_k(ranked, args.k), ndcg_at_k(ranked, args.k), int(rec.success))
                )
            _write_csv(os.path.join(out, "metrics.csv"), ["t", f"recall_at_{args.k}", f"ndcg_at_{args.k}", "success"], rows)
        elif args.command == "export":
            _, log = run_from_config(cfg)
            write_snapshot(log.final_catalog, os.path.join(out, "catalog.orag"))
    except (ValidationError, InvalidConfig, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OragError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
