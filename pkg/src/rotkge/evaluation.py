"""Filtered link-prediction ranking and aggregate metrics.

Ranking uses the mean-over-ties rule: rank = ceil(1 + #greater + #equal/2)
over the non-filtered candidates, which keeps constant-score models from
scoring Hits@1 = 1.0.  Queries are independent and model access is
read-only, so evaluation can fan out freely.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import torch

QUERY_CHUNK = 16


@dataclass
class RankingReport:
    ranks: list = field(default_factory=list)
    mrr: float = 0.0
    hits: dict = field(default_factory=dict)          # k -> fraction
    per_relation: dict = field(default_factory=dict)  # name -> dict

    def write_tsv(self, path):
        with open(path, "w") as fh:
            fh.write("metric\tvalue\n")
            fh.write(f"mrr\t{self.mrr:.6f}\n")
            for k in sorted(self.hits):
                fh.write(f"hits@{k}\t{self.hits[k]:.6f}\n")

    def write_per_relation_tsv(self, path):
        with open(path, "w") as fh:
            fh.write("relation\tcount\tmrr\thits@10\n")
            for name, row in self.per_relation.items():
                fh.write(f"{name}\t{row['count']}\t{row['mrr']:.6f}"
                         f"\t{row['hits@10']:.6f}\n")


def _rank_from_scores(scores, gold, filtered_out):
    """Tie-aware filtered rank of `gold` within a 1-D score array."""
    gold_score = scores[gold]
    mask = np.ones(len(scores), dtype=bool)
    for e in filtered_out:
        mask[e] = False
    mask[gold] = True
    valid = scores[mask]
    greater = int((valid > gold_score).sum())
    equal = int((valid == gold_score).sum()) - 1  # gold itself excluded
    return int(math.ceil(1 + greater + equal / 2.0))


def rank_query(model, query, gold, filter_index):
    """Rank the gold entity for one query (source, relation, direction).

    direction is "tail" for (h, r, ?) or "head" for (?, r, t); the filter
    set for the query must contain the gold entity.
    """
    source, relation, direction = query
    if direction == "tail":
        fset = filter_index.tails.get((source, relation), set())
        scores = model.score_tails([source], [relation])[0]
    elif direction == "head":
        fset = filter_index.heads.get((source, relation), set())
        scores = model.score_heads([source], [relation])[0]
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if gold not in fset:
        raise RuntimeError("gold entity missing from filter index")
    return _rank_from_scores(scores.detach().numpy(), gold, fset - {gold})


def _ranks_for_queries(model, sources, relations, golds, filter_index, direction):
    ranks = []
    scorer = model.score_tails if direction == "tail" else model.score_heads
    fmap = filter_index.tails if direction == "tail" else filter_index.heads
    with torch.no_grad():
        for start in range(0, len(sources), QUERY_CHUNK):
            s = sources[start:start + QUERY_CHUNK]
            r = relations[start:start + QUERY_CHUNK]
            scores = scorer(s, r).numpy()
            for i in range(len(s)):
                gold = int(golds[start + i])
                fset = fmap.get((int(s[i]), int(r[i])), set())
                if gold not in fset:
                    raise RuntimeError("gold entity missing from filter index")
                ranks.append(_rank_from_scores(scores[i], gold, fset - {gold}))
    return ranks


def evaluate(model, store, filter_index, hits_ks=(1, 3, 10), relation_names=None):
    """Full filtered evaluation over the test split, both query directions.

    Tail queries rank (h, r, ?); head queries go through the reciprocal
    relation when the store was loaded with reciprocal=True, otherwise
    they rank candidate heads directly.  Per-relation statistics use the
    tail direction only.
    """
    test = store.test
    tail_ranks = _ranks_for_queries(
        model, test[:, 0], test[:, 1], test[:, 2], filter_index, "tail")
    if store.reciprocal:
        inv_r = test[:, 1] + store.n_base_relations
        head_ranks = _ranks_for_queries(
            model, test[:, 2], inv_r, test[:, 0], filter_index, "tail")
    else:
        head_ranks = _ranks_for_queries(
            model, test[:, 2], test[:, 1], test[:, 0], filter_index, "head")

    all_ranks = tail_ranks + head_ranks
    report = RankingReport(ranks=all_ranks)
    report.mrr = float(np.mean([1.0 / r for r in all_ranks])) if all_ranks else 0.0
    for k in hits_ks:
        report.hits[k] = (float(np.mean([r <= k for r in all_ranks]))
                          if all_ranks else 0.0)

    by_rel = {}
    for (h, r, t), rank in zip(test, tail_ranks):
        by_rel.setdefault(int(r), []).append(rank)
    for rid, ranks in sorted(by_rel.items()):
        name = relation_names[rid] if relation_names else str(rid)
        report.per_relation[name] = {
            "count": len(ranks),
            "mrr": float(np.mean([1.0 / r for r in ranks])),
            "hits@10": float(np.mean([r <= 10 for r in ranks])),
        }
    return report


def quick_validation(model, store, filter_index, max_queries=None, seed=0):
    """Tail-direction (mrr, hits@10) over the valid split, optionally
    subsampled; used as the training-loop validation hook."""
    valid = store.valid
    if len(valid) == 0:
        return float("nan"), float("nan")
    if max_queries is not None and len(valid) > max_queries:
        rng = np.random.default_rng(seed)
        valid = valid[rng.choice(len(valid), size=max_queries, replace=False)]
    ranks = _ranks_for_queries(
        model, valid[:, 0], valid[:, 1], valid[:, 2], filter_index, "tail")
    mrr = float(np.mean([1.0 / r for r in ranks]))
    hits10 = float(np.mean([r <= 10 for r in ranks]))
    return mrr, hits10


def per_relation_report(model, store, filter_index, relation_names=None):
    """Tail-direction Hits@10 per relation (relations without test
    triples are omitted)."""
    report = evaluate(model, store, filter_index, relation_names=relation_names)
    return report.per_relation


def dimension_sweep(model_factory, dims, store, filter_index, train_fn,
                    kinds=("rote", "roth", "rotl", "rot2l")):
    """Train and evaluate every (kind, dim) pair; returns a list of rows
    {kind, dim, mrr, hits@10} suitable for CSV emission."""
    rows = []
    for kind in kinds:
        for dim in dims:
            model = model_factory(kind, dim)
            model = train_fn(model)
            report = evaluate(model, store, filter_index)
            rows.append({"kind": kind, "dim": dim, "mrr": report.mrr,
                         "hits@10": report.hits[10]})
    return rows


def write_sweep_csv(rows, path):
    with open(path, "w") as fh:
        fh.write("kind,dim,mrr,hits@10\n")
        for row in rows:
            fh.write(f"{row['kind']},{row['dim']},{row['mrr']:.6f},"
                     f"{row['hits@10']:.6f}\n")
