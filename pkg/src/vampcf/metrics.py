"""Ranking metrics and the strong-generalization evaluation loop.

Scores are ranked descending with ties broken by ascending item index;
fold-in items are excluded from the candidate list entirely so they can
never be "retrieved". Users whose heldout set is empty are skipped and
counted, never treated as zeros.
"""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Matrix
from .data import to_dense_batch
from .errors import ConfigError, DataError
from .model import ModelParams, score_items

METRIC_NAMES = ("ndcg", "recall")


def ranked_candidates(scores, mask):
    """All unmasked item indices, best score first, index tie-break."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    mask = np.asarray(sorted(mask), dtype=np.int64)
    if mask.size:
        if mask.min() < 0 or mask.max() >= s.size:
            raise ConfigError("mask index out of range")
        s = s.copy()
        s[mask] = -np.inf
    order = np.lexsort((np.arange(s.size), -s))
    return order[: s.size - mask.size]


def _check_inputs(scores, heldout, mask, k):
    if k < 1:
        raise ConfigError(f"K must be >= 1, got {k}")
    heldout = np.asarray(sorted(heldout), dtype=np.int64)
    mask_set = set(int(i) for i in mask)
    if any(int(i) in mask_set for i in heldout):
        raise DataError("heldout and mask overlap")
    return heldout, mask_set


def _dcg(hits):
    if hits.size == 0:
        return 0.0
    return float(np.sum(hits / np.log2(np.arange(2.0, hits.size + 2.0))))


def ndcg_at_k(scores, heldout, mask, k):
    """Truncated normalized discounted cumulative gain; hits at rank r are
    discounted by 1/log2(r+1). Returns None for an empty heldout set (the
    caller should skip the user)."""
    heldout, _ = _check_inputs(scores, heldout, mask, k)
    if heldout.size == 0:
        return None
    top = ranked_candidates(scores, mask)[:k]
    dcg = _dcg(np.isin(top, heldout).astype(np.float64))
    ideal = _dcg(np.ones(min(k, heldout.size)))
    return dcg / ideal


def recall_at_k(scores, heldout, mask, k):
    """Fraction of heldout items in the top K, normalized by
    min(K, heldout size). Returns None for an empty heldout set."""
    heldout, _ = _check_inputs(scores, heldout, mask, k)
    if heldout.size == 0:
        return None
    top = ranked_candidates(scores, mask)[:k]
    hits = int(np.isin(top, heldout).sum())
    return hits / min(k, heldout.size)


def popularity_baseline(train_users, n_items):
    """Training consumption count per item; the non-personalized bar any
    learned model must clear."""
    if not train_users:
        raise DataError("popularity baseline needs a non-empty training set")
    all_items = np.concatenate([u.item_indices for u in train_users])
    return np.bincount(all_items, minlength=n_items).astype(np.float64)


@dataclass
class MetricRow:
    metric: str
    k: int
    mean: float
    se: float
    n_users: int

    @property
    def label(self):
        return f"{self.metric.upper()}@{self.k}"


@dataclass
class MetricReport:
    rows: list
    n_users: int
    n_skipped: int
    fingerprint: str = ""
    per_user: list = field(default_factory=list)

    def row(self, metric, k):
        for r in self.rows:
            if r.metric == metric and r.k == k:
                return r
        raise KeyError(f"no row for {metric}@{k}")

    def to_dict(self):
        return {
            "fingerprint": self.fingerprint,
            "n_users": self.n_users,
            "n_skipped": self.n_skipped,
            "rows": [{"metric": r.metric, "k": r.k, "mean": r.mean,
                      "se": r.se, "n_users": r.n_users} for r in self.rows],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self):
        lines = [f"{'metric':<12}{'mean':>10}{'se':>10}{'users':>8}"]
        for r in self.rows:
            lines.append(f"{r.label:<12}{r.mean:>10.5f}{r.se:>10.5f}{r.n_users:>8d}")
        lines.append(f"evaluated {self.n_users} users, skipped {self.n_skipped}")
        if self.fingerprint:
            lines.append(f"fingerprint {self.fingerprint}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        """One row per (user, metric, K); requires keep_per_user=True."""
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["user_index", "metric", "k", "value"])
            for user_index, metric, k, value in self.per_user:
                w.writerow([user_index, metric, k, f"{value:.10f}"])


def _make_scorer(scorer, n_items):
    if isinstance(scorer, ModelParams):
        m = scorer.config.n_items
        if n_items is not None and n_items != m:
            raise ConfigError(f"model expects {m} items, split has {n_items}")
        return m, lambda dense: score_items(Matrix(dense), scorer).data
    if isinstance(scorer, np.ndarray):
        vec = np.asarray(scorer, dtype=np.float64).ravel()
        if n_items is not None and n_items != vec.size:
            raise ConfigError(f"score vector has {vec.size} items, split has {n_items}")
        return vec.size, lambda dense: np.broadcast_to(vec, (dense.shape[0], vec.size))
    if callable(scorer):
        if n_items is None:
            raise ConfigError("callable scorer needs explicit n_items")
        return n_items, scorer
    raise ConfigError(f"unsupported scorer type {type(scorer).__name__}")


def evaluate(users, scorer, ks, n_items=None, batch_size=1024,
             fingerprint="", keep_per_user=False):
    """Fold-in evaluation: infer latents from each user's fold-in items,
    score everything, mask the fold-in, and measure how well the heldout
    items rank. ``scorer`` is ModelParams, a static score vector, or a
    callable mapping a dense fold-in batch to a score matrix.
    """
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise ConfigError("Ks must be positive")
    n_items, score_batch = _make_scorer(scorer, n_items)
    max_k = ks[-1]

    kept = [(u, fi, ho) for u, (fi, ho) in enumerate(users)
            if ho.item_indices.size > 0]
    n_skipped = len(users) - len(kept)
    values = {(m, k): [] for m in METRIC_NAMES for k in ks}
    per_user = []

    for start in range(0, len(kept), batch_size):
        chunk = kept[start:start + batch_size]
        dense = to_dense_batch([fi for _, fi, _ in chunk], n_items).data
        scores = np.asarray(score_batch(dense), dtype=np.float64)
        if scores.shape != dense.shape:
            raise ConfigError(f"scorer returned {scores.shape}, expected {dense.shape}")
        for row, (u, fi, ho) in enumerate(chunk):
            mask = fi.item_indices
            if np.intersect1d(mask, ho.item_indices).size:
                raise DataError(f"user {u}: fold-in and heldout overlap")
            order = ranked_candidates(scores[row], mask)[:max_k]
            assert not np.isin(order, mask).any()
            hits = np.isin(order, ho.item_indices).astype(np.float64)
            gains = hits / np.log2(np.arange(2.0, hits.size + 2.0))
            n_h = ho.item_indices.size
            for k in ks:
                ndcg = float(gains[:k].sum()) / _dcg(np.ones(min(k, n_h)))
                recall = float(hits[:k].sum()) / min(k, n_h)
                assert 0.0 <= ndcg <= 1.0 and 0.0 <= recall <= 1.0
                values[("ndcg", k)].append(ndcg)
                values[("recall", k)].append(recall)
                if keep_per_user:
                    per_user.append((u, "ndcg", k, ndcg))
                    per_user.append((u, "recall", k, recall))

    rows = []
    for metric in METRIC_NAMES:
        for k in ks:
            vs = np.asarray(values[(metric, k)])
            if vs.size == 0:
                raise DataError("no evaluable users (all heldout sets empty)")
            se = float(vs.std(ddof=1) / math.sqrt(vs.size)) if vs.size > 1 else 0.0
            rows.append(MetricRow(metric=metric, k=k, mean=float(vs.mean()),
                                  se=se, n_users=int(vs.size)))
    return MetricReport(rows=rows, n_users=len(kept), n_skipped=n_skipped,
                        fingerprint=fingerprint, per_user=per_user)
