"""Clustering evaluation: matched accuracy, NMI, macro-F1, ARI, size splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class LabelAssignment:
    predicted: np.ndarray
    truth: np.ndarray
    mapping: dict  # cluster id -> class id

    @classmethod
    def build(cls, predicted, truth) -> "LabelAssignment":
        predicted = np.asarray(predicted, dtype=int)
        truth = np.asarray(truth, dtype=int)
        if predicted.size != truth.size or predicted.size == 0:
            raise ValueError("predicted and truth must be nonempty and equal length")
        conf = confusion_counts(predicted, truth)
        return cls(predicted, truth, hungarian_match(conf))


def confusion_counts(predicted, truth) -> np.ndarray:
    """Square count matrix conf[cluster, class], zero-padded if needed."""
    predicted = np.asarray(predicted, dtype=int)
    truth = np.asarray(truth, dtype=int)
    k = int(max(predicted.max(), truth.max())) + 1
    conf = np.zeros((k, k), dtype=int)
    np.add.at(conf, (predicted, truth), 1)
    return conf


def hungarian_match(confusion: np.ndarray) -> dict:
    """Count-maximizing bijection cluster -> class on a square count matrix."""
    conf = np.asarray(confusion)
    if conf.shape[0] != conf.shape[1]:
        n = max(conf.shape)
        padded = np.zeros((n, n), dtype=conf.dtype)
        padded[: conf.shape[0], : conf.shape[1]] = conf
        conf = padded
    rows, cols = linear_sum_assignment(conf, maximize=True)
    return {int(r): int(c) for r, c in zip(rows, cols)}


def mapped_predictions(assignment: LabelAssignment) -> np.ndarray:
    return np.asarray([assignment.mapping[int(p)] for p in assignment.predicted], dtype=int)


def class_averaged_acc(assignment: LabelAssignment) -> float:
    """Mean over true classes of within-class accuracy under the matching."""
    mapped = mapped_predictions(assignment)
    accs = []
    for c in np.unique(assignment.truth):
        mask = assignment.truth == c
        accs.append(float(np.mean(mapped[mask] == c)))
    return float(np.mean(accs))


def _entropy(counts: np.ndarray) -> float:
    p = counts / counts.sum()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def nmi(predicted, truth) -> float:
    """2 I(Y;C) / (H(Y) + H(C)), with 0 log 0 := 0."""
    predicted = np.asarray(predicted, dtype=int)
    truth = np.asarray(truth, dtype=int)
    n = predicted.size
    if n == 0:
        raise ValueError("labels must be nonempty")
    _, pi = np.unique(predicted, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    joint = np.zeros((pi.max() + 1, ti.max() + 1))
    np.add.at(joint, (pi, ti), 1.0)
    pj = joint / n
    pp = pj.sum(axis=1)
    pt = pj.sum(axis=0)
    nz = pj > 0
    mi = float(np.sum(pj[nz] * np.log(pj[nz] / np.outer(pp, pt)[nz])))
    hp = _entropy(np.bincount(pi).astype(float))
    ht = _entropy(np.bincount(ti).astype(float))
    if hp + ht == 0:
        return 1.0
    return float(np.clip(2.0 * mi / (hp + ht), 0.0, 1.0))


def macro_f1(assignment: LabelAssignment) -> float:
    """Per-true-class F1 under the matched labels, averaged over classes."""
    mapped = mapped_predictions(assignment)
    scores = []
    for c in np.unique(assignment.truth):
        tp = float(np.sum((mapped == c) & (assignment.truth == c)))
        fp = float(np.sum((mapped == c) & (assignment.truth != c)))
        fn = float(np.sum((mapped != c) & (assignment.truth == c)))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


def ari(predicted, truth) -> float:
    """Adjusted Rand index by pair counting."""
    predicted = np.asarray(predicted, dtype=int)
    truth = np.asarray(truth, dtype=int)
    n = predicted.size
    _, pi = np.unique(predicted, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    joint = np.zeros((pi.max() + 1, ti.max() + 1))
    np.add.at(joint, (pi, ti), 1.0)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = float(np.sum(comb2(joint)))
    sum_i = float(np.sum(comb2(joint.sum(axis=1))))
    sum_j = float(np.sum(comb2(joint.sum(axis=0))))
    total = comb2(n)
    expected = sum_i * sum_j / total if total > 0 else 0.0
    max_index = (sum_i + sum_j) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def hmt_split(class_counts) -> tuple[list[int], list[int], list[int]]:
    """Head/medium/tail class partition by descending size, 3:4:3 by count.

    The first floor(0.3 K) classes are head, the last floor(0.3 K) tail,
    the remainder medium; ties broken by class index.
    """
    counts = np.asarray(class_counts)
    k = counts.size
    order = sorted(range(k), key=lambda i: (-counts[i], i))
    n_edge = int(0.3 * k)
    head = order[:n_edge]
    tail = order[k - n_edge :] if n_edge else []
    medium = order[n_edge : k - n_edge] if n_edge else order
    return list(head), list(medium), list(tail)


def hmt_accuracies(assignment: LabelAssignment) -> dict:
    """Class-averaged accuracy restricted to head/medium/tail classes."""
    counts = np.bincount(assignment.truth)
    classes = np.unique(assignment.truth)
    head, medium, tail = hmt_split(counts[classes])
    mapped = mapped_predictions(assignment)
    out = {}
    for name, idxs in (("head", head), ("medium", medium), ("tail", tail)):
        cls = classes[idxs] if len(idxs) else []
        accs = [float(np.mean(mapped[assignment.truth == c] == c)) for c in cls]
        out[name] = float(np.mean(accs)) if accs else float("nan")
    return out


def evaluate(predicted, truth) -> dict:
    """All clustering metrics in one record."""
    assignment = LabelAssignment.build(predicted, truth)
    out = {
        "acc": class_averaged_acc(assignment),
        "nmi": nmi(predicted, truth),
        "f1": macro_f1(assignment),
        "ari": ari(predicted, truth),
    }
    out.update({f"acc_{k}": v for k, v in hmt_accuracies(assignment).items()})
    return out
