"""Evaluation metrics for binary scorers: confusion counts, the tie-grouped
ROC step curve, the rank-statistic AUC (half credit for ties), and Hand's
H-measure under a configurable Beta severity distribution."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as beta_dist
from scipy.stats import rankdata


@dataclass
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass
class RocCurve:
    """Step-curve vertices (fpr, tpr), anchored at (0,0) and (1,1), both
    coordinates nondecreasing."""

    points: np.ndarray  # shape (k, 2)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fpr", "tpr"])
            for fpr, tpr in self.points:
                writer.writerow([repr(float(fpr)), repr(float(tpr))])


def _check_scores_labels(scores, labels, need_both_classes: bool):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    if set(np.unique(labels)) - {-1.0, 1.0}:
        raise ValueError("labels must lie in {-1, +1}")
    if need_both_classes and (np.all(labels == 1.0) or np.all(labels == -1.0)):
        raise ValueError("both classes must be present")
    return scores, labels


def confusion(scores, labels, threshold: float) -> ConfusionMatrix:
    """Counts with 'predicted positive iff score >= threshold'."""
    scores, labels = _check_scores_labels(scores, labels, need_both_classes=False)
    pred_pos = scores >= threshold
    actual_pos = labels == 1.0
    return ConfusionMatrix(
        tp=int(np.sum(pred_pos & actual_pos)),
        fp=int(np.sum(pred_pos & ~actual_pos)),
        fn=int(np.sum(~pred_pos & actual_pos)),
        tn=int(np.sum(~pred_pos & ~actual_pos)),
    )


def roc_curve(scores, labels) -> RocCurve:
    """Threshold sweep over the distinct scores, descending; samples with
    equal scores move together, producing one vertex per tie group."""
    scores, labels = _check_scores_labels(scores, labels, need_both_classes=True)
    n_pos = int(np.sum(labels == 1.0))
    n_neg = labels.size - n_pos
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    y_sorted = labels[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < s_sorted.size:
        j = i
        while j < s_sorted.size and s_sorted[j] == s_sorted[i]:
            j += 1
        tp += int(np.sum(y_sorted[i:j] == 1.0))
        fp += int(np.sum(y_sorted[i:j] == -1.0))
        points.append((fp / n_neg, tp / n_pos))
        i = j
    return RocCurve(points=np.array(points))


def auc(scores, labels) -> float:
    """Rank-based AUC: the fraction of (positive, negative) pairs ranked
    correctly, ties counted at half credit.  Equals the trapezoidal area
    under the tie-grouped ROC curve."""
    scores, labels = _check_scores_labels(scores, labels, need_both_classes=True)
    n_pos = int(np.sum(labels == 1.0))
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)
    pos_rank_sum = float(ranks[labels == 1.0].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def trapezoid_auc(curve: RocCurve) -> float:
    pts = curve.points
    return float(np.trapezoid(pts[:, 1], pts[:, 0]))


def _roc_upper_hull(points: np.ndarray) -> np.ndarray:
    """Upper convex hull of the ROC vertices from (0,0) to (1,1)."""
    hull: list[np.ndarray] = []
    for p in points:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b when it lies on or below segment a -> p
            if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return np.array(hull)


def h_measure(scores, labels, severity: tuple[float, float] = (2.0, 2.0)) -> float:
    """Hand's H-measure: one minus the ratio of the expected minimum
    misclassification loss (over the ROC convex hull, cost ratio drawn from a
    Beta severity distribution) to the trivial classifier's expected loss."""
    scores, labels = _check_scores_labels(scores, labels, need_both_classes=True)
    a, b = severity
    pi1 = float(np.mean(labels == 1.0))
    pi0 = 1.0 - pi1
    hull = _roc_upper_hull(roc_curve(scores, labels).points)

    def mass(lo, hi):
        return beta_dist.cdf(hi, a, b) - beta_dist.cdf(lo, a, b)

    def first_moment(lo, hi):
        # integral of c * Beta(c; a, b) over [lo, hi]
        return (a / (a + b)) * (beta_dist.cdf(hi, a + 1, b) - beta_dist.cdf(lo, a + 1, b))

    # Cost breakpoints where the loss-minimizing hull vertex switches; they
    # increase along the hull because the segment slopes decrease.
    cuts = [0.0]
    for k in range(len(hull) - 1):
        d_fpr = hull[k + 1, 0] - hull[k, 0]
        d_tpr = hull[k + 1, 1] - hull[k, 1]
        denom = pi1 * d_tpr + pi0 * d_fpr
        cuts.append(pi0 * d_fpr / denom if denom > 0 else cuts[-1])
    cuts.append(1.0)

    loss = 0.0
    for k, (fpr, tpr) in enumerate(hull):
        lo, hi = cuts[k], cuts[k + 1]
        if hi <= lo:
            continue
        loss += pi1 * (1.0 - tpr) * first_moment(lo, hi)
        loss += pi0 * fpr * (mass(lo, hi) - first_moment(lo, hi))

    # Trivial classifier: assign everything to one class; min(c*pi1, (1-c)*pi0)
    # switches branches at c = pi0.
    loss_max = pi1 * first_moment(0.0, pi0) + pi0 * (
        mass(pi0, 1.0) - first_moment(pi0, 1.0)
    )
    if loss_max <= 0.0:
        return 0.0
    return float(1.0 - loss / loss_max)


def metrics_report(scores, labels, threshold: float = 0.0,
                   severity: tuple[float, float] = (2.0, 2.0)) -> dict:
    """JSON-ready report: auc, h_measure, confusion at the threshold."""
    return {
        "auc": auc(scores, labels),
        "h_measure": h_measure(scores, labels, severity),
        "confusion": confusion(scores, labels, threshold).as_dict(),
        "threshold": threshold,
    }
