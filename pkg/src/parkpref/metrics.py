"""Exact ranking metrics for heavily imbalanced binary tasks, and the
generalizability score (ratio of unseen-layout AUPRC to seen-layout
validation AUPRC).

Both AUCs are computed exactly from sorted scores — no curve sampling,
no interpolation — with ties handled explicitly: tied ROC pairs count
half, and tied AUPRC scores are processed as one block at the block-end
precision. Exactness is what makes brute-force oracle comparison in the
tests meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MetricError


def _validate_scored(scores, labels, need_neg: bool):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if scores.shape != labels.shape:
        raise MetricError(
            f"scores and labels lengths differ: {scores.size} vs {labels.size}"
        )
    if scores.size == 0:
        raise MetricError("empty score set")
    if not np.isfinite(scores).all():
        raise MetricError("scores must be finite")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise MetricError("labels must be binary")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0:
        raise MetricError("metric undefined: no positive labels")
    if need_neg and n_neg == 0:
        raise MetricError("metric undefined: no negative labels")
    return scores, labels, n_pos, n_neg


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, ascending, tied values sharing their average rank."""
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    block_end = np.cumsum(counts)
    avg_rank = block_end - counts + (counts + 1) / 2.0
    return avg_rank[inverse]


def roc_auc(scores: Sequence[float], labels: Sequence[float]) -> float:
    """Area under the ROC curve, Mann-Whitney form.

    Equals (concordant pairs + half the tied pairs) / (n_pos * n_neg)
    over all positive-negative pairs.
    """
    scores, labels, n_pos, n_neg = _validate_scored(scores, labels, need_neg=True)
    ranks = _average_ranks(scores)
    u_pos = ranks[labels == 1.0].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_pos / (n_pos * n_neg))


def auprc(scores: Sequence[float], labels: Sequence[float]) -> float:
    """Area under the precision-recall curve, average-precision form.

    Walking ranks in descending score order, AP sums precision at each
    recall step; a block of tied scores contributes all its positives at
    the precision reached at the block's end. Always in (0, 1] when at
    least one positive is present.
    """
    scores, labels, n_pos, _ = _validate_scored(scores, labels, need_neg=False)
    order = np.argsort(-scores, kind="stable")
    y = labels[order]
    s = scores[order]
    cum_tp = np.cumsum(y)
    # Last index of each tied block in the descending order.
    block_end = np.nonzero(np.append(s[1:] != s[:-1], True))[0]
    tp_at_end = cum_tp[block_end]
    tp_in_block = np.diff(np.concatenate([[0.0], tp_at_end]))
    precision_at_end = tp_at_end / (block_end + 1)
    return float(np.sum(tp_in_block * precision_at_end) / n_pos)


def pooled_auprc(parts: Iterable[tuple[Sequence[float], Sequence[float]]]) -> float:
    """AUPRC of several (scores, labels) pieces pooled into one set."""
    score_list, label_list = [], []
    for scores, labels in parts:
        score_list.append(np.asarray(scores, dtype=np.float64).reshape(-1))
        label_list.append(np.asarray(labels, dtype=np.float64).reshape(-1))
    if not score_list:
        raise MetricError("no score sets to pool")
    return auprc(np.concatenate(score_list), np.concatenate(label_list))


def layout_mean_auprc(
    scored_by_layout: Mapping[int, Sequence[tuple[Sequence[float], Sequence[float]]]],
) -> float:
    """Mean over layouts of each layout's pooled AUPRC.

    This one aggregation is used for both sides of the generalizability
    ratio: the unseen-layout score (a single layout, so the mean is just
    its pooled AUPRC) and the seen-layout validation score (mean over the
    seen layouts). Using the same function on both sides makes the
    test-equals-validation identity hold exactly.
    """
    if not scored_by_layout:
        raise MetricError("no layouts to score")
    values = [pooled_auprc(scored_by_layout[lid]) for lid in sorted(scored_by_layout)]
    return float(np.mean(values))


def gs(test_auprc: float, avg_val_auprc: float) -> float:
    """Generalizability score: unseen-layout AUPRC over seen-layout AUPRC.

    Close to 1 means performance carried over to the unseen layout;
    values above 1 are legitimate (better on unseen than seen).
    """
    if avg_val_auprc == 0.0:
        raise MetricError("generalizability undefined: zero validation AUPRC")
    if avg_val_auprc < 0.0 or test_auprc < 0.0:
        raise MetricError("AUPRC values must be non-negative")
    return float(test_auprc / avg_val_auprc)


@dataclass(frozen=True)
class GsRecord:
    """Generalizability of one training run (model, fold, agent)."""

    model: str
    fold: int
    test_layout: int
    agent: str
    test_auprc: float
    avg_val_auprc: float
    gs: float


@dataclass(frozen=True)
class GsSummary:
    """All runs' generalizability records plus the derived aggregates.

    Aggregation order is agents first, folds second: a fold's score is
    the mean over its agents' ratios, and a model's overall average is
    the mean over its folds' scores. Missing runs (e.g. diverged
    training) simply drop out of the means; `missing` lists them.
    """

    records: tuple[GsRecord, ...]

    def models(self) -> list[str]:
        return sorted({r.model for r in self.records})

    def _fold_records(self, model: str, fold: int) -> list[GsRecord]:
        return [r for r in self.records if r.model == model and r.fold == fold]

    def folds(self, model: str) -> list[int]:
        return sorted({r.fold for r in self.records if r.model == model})

    def test_layout(self, model: str, fold: int) -> int:
        recs = self._fold_records(model, fold)
        if not recs:
            raise MetricError(f"no records for model {model!r} fold {fold}")
        return recs[0].test_layout

    def fold_gs(self, model: str, fold: int) -> float:
        """Mean generalizability over the fold's agents."""
        recs = self._fold_records(model, fold)
        if not recs:
            raise MetricError(f"no records for model {model!r} fold {fold}")
        return float(np.mean([r.gs for r in recs]))

    def overall_avg(self, model: str) -> float:
        """Mean over folds of the per-fold (agent-averaged) scores."""
        folds = self.folds(model)
        if not folds:
            raise MetricError(f"no records for model {model!r}")
        return float(np.mean([self.fold_gs(model, f) for f in folds]))

    def missing(self, models: Sequence[str], folds: Sequence[int],
                agents: Sequence[str]) -> list[tuple[str, int, str]]:
        present = {(r.model, r.fold, r.agent) for r in self.records}
        return [(m, f, a) for m in models for f in folds for a in agents
                if (m, f, a) not in present]
