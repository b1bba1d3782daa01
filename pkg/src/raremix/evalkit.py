"""Posterior scoring and rare-class detection measures over grouped data.

Scores are posterior probabilities of the rare component. AUC is the
rank-based (Mann-Whitney) statistic with ties counted half; the false-positive
measure counts negatives at or above the largest threshold that still captures
every positive, which is the minimum positive score with an inclusive
boundary. Groups missing a class are skipped and counted, mirroring per-image
aggregation over heterogeneous test sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .core import MixtureParams, posterior
from .exceptions import UndefinedMetricError
from .io_utils import atomic_write_text, format_float


def score_points(params: MixtureParams, x) -> np.ndarray:
    """Posterior probability of the rare component per row of ``x``."""
    return np.atleast_1d(posterior(x, params))


def _split_labels(scores, labels):
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores and labels must be equal-length vectors, got {s.shape} and {y.shape}")
    if y.size and not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")
    return s, y


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied score pairs contribute 1/2.

    Requires both classes present.
    """
    s, y = _split_labels(scores, labels)
    n_pos = int(np.count_nonzero(y == 1.0))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUC undefined: {n_pos} positives, {n_neg} negatives"
        )
    ranks = rankdata(s, method="average")
    pos_rank_sum = float(ranks[y == 1.0].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def fp_at_full_recall(scores, labels) -> int:
    """Negatives at or above the minimum positive score.

    The threshold is inclusive so every positive is captured; recall is
    exactly 1 by construction. Requires at least one positive.
    """
    s, y = _split_labels(scores, labels)
    pos = s[y == 1.0]
    if pos.size == 0:
        raise UndefinedMetricError("full-recall threshold undefined: no positives")
    c = float(pos.min())
    return int(np.count_nonzero((s >= c) & (y == 0.0)))


@dataclass(frozen=True)
class ScoredGroup:
    group_id: str
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s, y = _split_labels(self.scores, self.labels)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y)


@dataclass(frozen=True)
class GroupScore:
    group_id: str
    n_pos: int
    n_neg: int
    auc: float | None
    fp: int | None


@dataclass(frozen=True)
class EvalSummary:
    mean_auc: float
    median_fp: float
    n_groups: int
    n_skipped_auc: int
    n_skipped_fp: int
    per_group: tuple

    def to_dict(self):
        return {
            "mean_auc": self.mean_auc,
            "median_fp": self.median_fp,
            "n_groups": self.n_groups,
            "n_skipped_auc": self.n_skipped_auc,
            "n_skipped_fp": self.n_skipped_fp,
            "per_group": [
                {
                    "group_id": g.group_id,
                    "n_pos": g.n_pos,
                    "n_neg": g.n_neg,
                    "auc": g.auc,
                    "fp": g.fp,
                }
                for g in self.per_group
            ],
        }


def evaluate_groups(groups) -> EvalSummary:
    """Mean AUC over two-class groups and median FP over groups with positives.

    ``groups`` is an iterable of :class:`ScoredGroup`. Raises when every group
    is skipped for both measures.
    """
    per_group = []
    aucs = []
    fps = []
    for g in groups:
        n_pos = int(np.count_nonzero(g.labels == 1.0))
        n_neg = g.labels.size - n_pos
        g_auc = None
        g_fp = None
        if n_pos and n_neg:
            g_auc = auc(g.scores, g.labels)
            aucs.append(g_auc)
        if n_pos:
            g_fp = fp_at_full_recall(g.scores, g.labels)
            fps.append(g_fp)
        per_group.append(
            GroupScore(group_id=g.group_id, n_pos=n_pos, n_neg=n_neg, auc=g_auc, fp=g_fp)
        )
    if not per_group:
        raise UndefinedMetricError("no groups to evaluate")
    if not aucs and not fps:
        raise UndefinedMetricError("every group was single-class; nothing to evaluate")
    return EvalSummary(
        mean_auc=float(np.mean(aucs)) if aucs else float("nan"),
        median_fp=float(np.median(fps)) if fps else float("nan"),
        n_groups=len(per_group),
        n_skipped_auc=len(per_group) - len(aucs),
        n_skipped_fp=len(per_group) - len(fps),
        per_group=tuple(per_group),
    )


def write_scores_csv(path, groups):
    """Scored groups as CSV rows (group_id, score, label)."""
    lines = ["group_id,score,label"]
    for g in groups:
        for s, y in zip(g.scores, g.labels):
            lines.append(f"{g.group_id},{format_float(s)},{int(y)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_scores_csv(path):
    """Inverse of :func:`write_scores_csv`; returns a list of ScoredGroup."""
    import csv

    from .exceptions import CsvFormatError, SchemaError

    with open(path, "r", newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise CsvFormatError(f"{path}: empty file", line=1)
    if rows[0] != ["group_id", "score", "label"]:
        raise SchemaError(f"{path}: expected header group_id,score,label, got {rows[0]}")
    order, grouped = [], {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise CsvFormatError(f"{path}:{lineno}: expected 3 fields", line=lineno)
        gid = row[0]
        try:
            s = float(row[1])
            y = float(row[2])
        except ValueError as exc:
            raise CsvFormatError(f"{path}:{lineno}: {exc}", line=lineno) from exc
        if y not in (0.0, 1.0):
            raise CsvFormatError(f"{path}:{lineno}: label must be 0 or 1", line=lineno)
        if gid not in grouped:
            grouped[gid] = ([], [])
            order.append(gid)
        grouped[gid][0].append(s)
        grouped[gid][1].append(y)
    return [
        ScoredGroup(
            group_id=gid,
            scores=np.asarray(grouped[gid][0]),
            labels=np.asarray(grouped[gid][1]),
        )
        for gid in order
    ]
