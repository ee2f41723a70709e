"""Ranking evaluation (ROC, precision-recall, AUC, average precision)
and the card-reissue savings policy simulation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import TransactionRecord, bucketize


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    tp: int
    fp: int
    precision: float
    recall: float
    fpr: float


@dataclass
class RankingScore:
    roc: list[CurvePoint]
    pr: list[CurvePoint]
    auc: float
    average_precision: float


def score_ranking(
    ranking: Sequence[tuple[str, float]],
    positive_keys: set[str],
) -> RankingScore:
    """Threshold sweep over a (key, score) ranking against a positive set.

    Candidates sharing a score enter together (one curve point per
    distinct score).  AUC is the trapezoid rule over the ROC including
    the (0,0) and (1,1) endpoints; average precision is the sum of
    precision-weighted recall increments.  Precision with zero
    predicted positives is defined as 1.0.
    """
    keys = [k for k, _ in ranking]
    scores = np.array([s for _, s in ranking], dtype=np.float64)
    labels = np.array([k in positive_keys for k in keys], dtype=bool)
    total_pos = int(labels.sum())
    total_neg = len(labels) - total_pos
    if total_pos == 0:
        raise EvalError("no positive labels: curves are undefined")

    order = np.argsort(-scores, kind="stable")
    scores = scores[order]
    labels = labels[order]
    tp_cum = np.cumsum(labels)
    fp_cum = np.cumsum(~labels)
    # Last index of each distinct-score group.
    last = np.flatnonzero(np.diff(scores) != 0)
    cut = np.concatenate([last, [len(scores) - 1]])

    points = []
    for k in cut:
        tp, fp = int(tp_cum[k]), int(fp_cum[k])
        points.append(CurvePoint(
            threshold=float(scores[k]),
            tp=tp,
            fp=fp,
            precision=tp / (tp + fp) if tp + fp else 1.0,
            recall=tp / total_pos,
            fpr=fp / total_neg if total_neg else 0.0,
        ))

    fprs = [0.0] + [p.fpr for p in points]
    tprs = [0.0] + [p.recall for p in points]
    if fprs[-1] != 1.0 or tprs[-1] != 1.0:
        fprs.append(1.0)
        tprs.append(1.0)
    auc = float(np.trapezoid(tprs, fprs))

    ap = 0.0
    prev_recall = 0.0
    for p in points:
        ap += p.precision * (p.recall - prev_recall)
        prev_recall = p.recall
    return RankingScore(roc=points, pr=points, auc=auc,
                        average_precision=float(ap))


def average_precision_by_rank(
    ranking: Sequence[tuple[str, float]],
    positive_keys: set[str],
) -> float:
    """Independent AP formula: mean precision@k over positive ranks.

    Equals the sweep-based value when scores are distinct; used as a
    cross-check oracle in tests.
    """
    labels = [k in positive_keys for k, _ in ranking]
    total_pos = sum(labels)
    if total_pos == 0:
        raise EvalError("no positive labels")
    hits = 0
    acc = 0.0
    for rank, is_pos in enumerate(labels, start=1):
        if is_pos:
            hits += 1
            acc += hits / rank
    return acc / total_pos


def attach_keys(ranked: Sequence[tuple[int, float]],
                location_keys: list[str]) -> list[tuple[str, float]]:
    return [(location_keys[j], s) for j, s in ranked]


@dataclass(frozen=True)
class SavingsPolicy:
    theta_threshold: float = 0.1
    reissue_cost: int = 1000  # minor units per card


@dataclass(frozen=True)
class WeekSavings:
    week: int
    cards_reissued: int
    reissue_cost: int
    fraud_prevented: int

    @property
    def net(self) -> int:
        return self.fraud_prevented - self.reissue_cost


@dataclass
class SavingsReport:
    weeks: list[WeekSavings]

    @property
    def total_net(self) -> int:
        return sum(w.net for w in self.weeks)


def savings_simulation(
    theta_by_week: dict[int, dict[str, float]],
    transactions: Sequence[TransactionRecord],
    policy: SavingsPolicy = SavingsPolicy(),
) -> SavingsReport:
    """Replay the weekly reissue policy.

    Each week, every not-yet-reissued card that transacted (up to that
    week) at a bucket whose theta exceeds the threshold is reissued;
    prevented fraud is the sum of that card's fraudulent amounts in
    strictly later weeks.
    """
    txns = [(rec, bucketize(rec)) for rec in transactions]
    reissued: set[str] = set()
    rows = []
    for week in sorted(theta_by_week):
        flagged = {key for key, theta in theta_by_week[week].items()
                   if theta > policy.theta_threshold}
        to_reissue = sorted({
            rec.card_id for rec, bucket in txns
            if bucket.week_index <= week and bucket.key in flagged
            and rec.card_id not in reissued})
        prevented = sum(
            rec.amount for rec, bucket in txns
            if rec.is_fraud and bucket.week_index > week
            and rec.card_id in to_reissue)
        reissued.update(to_reissue)
        rows.append(WeekSavings(
            week=week,
            cards_reissued=len(to_reissue),
            reissue_cost=len(to_reissue) * policy.reissue_cost,
            fraud_prevented=prevented,
        ))
    return SavingsReport(weeks=rows)


def convergence_rows(residuals: Sequence[float]) -> list[tuple[int, float]]:
    """(iteration, l1_residual) pairs for the convergence CSV."""
    return [(i + 1, float(r)) for i, r in enumerate(residuals)]


def log_linear_fit_r2(values: Sequence[float], skip: int = 0) -> float:
    """R^2 of a straight-line fit to log(values) vs index, after ``skip``."""
    y = np.log(np.asarray(values[skip:], dtype=np.float64))
    x = np.arange(len(y), dtype=np.float64)
    if len(y) < 3:
        return 1.0
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
