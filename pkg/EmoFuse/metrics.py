"""Confusion matrices, weighted/unweighted accuracy and cross-fold reports."""
import logging

import numpy as np
from sklearn.metrics import confusion_matrix

from .defaults import EMOTIONS, N_EMOTIONS
from .errors import LabelError, MetricsError, ScoreSetError

logger = logging.getLogger(__name__)


class ConfusionMatrix(object):
    """C x C counts, rows are true classes and columns predictions.

    Args:
        counts (array): non-negative integer matrix

    """

    __slots__ = 'counts',

    def __init__(self, counts):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise MetricsError("confusion matrix must be square, got shape {}".format(counts.shape))
        if np.any(counts < 0):
            raise MetricsError("confusion counts must be >= 0")
        self.counts = counts

    @property
    def n_classes(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def support(self):
        """Examples per true class (row sums)"""
        return self.counts.sum(axis=1)

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)

    def to_list(self):
        return self.counts.tolist()

    def __repr__(self):
        return "ConfusionMatrix({}x{}, {} examples)".format(self.n_classes, self.n_classes, self.total)


def confusion(preds, labels, n_classes=N_EMOTIONS):
    """Tally predictions against labels.

    Args:
        preds (dict): segment id -> predicted class
        labels (dict): segment id -> true class

    Returns:
        ConfusionMatrix
    """
    if set(preds) != set(labels):
        diff = sorted(set(preds) ^ set(labels))
        raise ScoreSetError("prediction and label ids differ: {}".format(', '.join(diff[:10])))
    ids = sorted(labels)
    y_true = np.array([labels[i] for i in ids], dtype=np.int64)
    y_pred = np.array([preds[i] for i in ids], dtype=np.int64)
    for name, y in (('label', y_true), ('prediction', y_pred)):
        if y.size and (y.min() < 0 or y.max() >= n_classes):
            raise LabelError("{} outside the {}-class space".format(name, n_classes))
    if not ids:
        return ConfusionMatrix(np.zeros((n_classes, n_classes), dtype=np.int64))
    return ConfusionMatrix(confusion_matrix(y_true, y_pred, labels=np.arange(n_classes)))


def weighted_accuracy(cm):
    """Overall fraction correct: trace / total"""
    if cm.total == 0:
        raise MetricsError("weighted accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def unweighted_accuracy(cm, warnings=None):
    """Mean per-class recall.

    Classes without support are left out of the mean; each omission is
    logged and, when ``warnings`` is a list, appended to it.
    """
    support = cm.support
    present = support > 0
    if not present.any():
        raise MetricsError("unweighted accuracy of an empty confusion matrix")
    for c in np.flatnonzero(~present):
        message = "class {} ({}) has no support and is excluded from UA".format(
            c, EMOTIONS[c] if cm.n_classes == N_EMOTIONS else c)
        logger.warning(message)
        if warnings is not None:
            warnings.append(message)
    recall = np.diag(cm.counts)[present] / support[present]
    return float(recall.mean())


def normalized_confusion(cm):
    """Row-normalized percentages; rows without support stay zero."""
    support = cm.support.astype(np.float64)[:, None]
    with np.errstate(divide='ignore', invalid='ignore'):
        pct = np.where(support > 0, 100.0 * cm.counts / support, 0.0)
    return pct


def render_confusion(cm, labels=EMOTIONS, percent=False):
    """Aligned plain-text table; rows are true classes."""
    values = normalized_confusion(cm) if percent else cm.counts
    fmt = '{:>14.1f}' if percent else '{:>14d}'
    width = max(len(l) for l in labels) + 2
    lines = [' ' * width + ''.join('{:>14}'.format(l) for l in labels)]
    for label, row in zip(labels, values):
        lines.append('{:<{w}}'.format(label, w=width) + ''.join(fmt.format(v) for v in row))
    return '\n'.join(lines) + '\n'


def confusion_csv(cm, labels=EMOTIONS):
    """CSV with a header row of predicted labels and one row per true label"""
    lines = ['true\\pred,' + ','.join(labels)]
    for label, row in zip(labels, cm.counts):
        lines.append(label + ',' + ','.join(str(int(v)) for v in row))
    return '\n'.join(lines) + '\n'


class FoldMetrics(object):
    """WA, UA and confusion counts of one fold and modality."""

    __slots__ = 'fold', 'test_session', 'cm', 'wa', 'ua', 'warnings'

    def __init__(self, fold, test_session, cm):
        self.fold = int(fold)
        self.test_session = int(test_session)
        self.cm = cm
        self.warnings = []
        self.wa = weighted_accuracy(cm)
        self.ua = unweighted_accuracy(cm, self.warnings)

    def to_dict(self):
        return dict(fold=self.fold, test_session=self.test_session, wa=round(self.wa, 6), ua=round(self.ua, 6),
                    confusion=self.cm.to_list(),
                    confusion_percent=[[round(v, 6) for v in row] for row in normalized_confusion(self.cm).tolist()],
                    warnings=list(self.warnings))


class MetricsReport(object):
    """Per-fold metrics, their unweighted means and the summed confusion matrix."""

    __slots__ = 'folds', 'mean_wa', 'mean_ua', 'confusion'

    def __init__(self, folds, mean_wa, mean_ua, confusion):
        self.folds = list(folds)
        self.mean_wa = mean_wa
        self.mean_ua = mean_ua
        self.confusion = confusion

    def to_dict(self):
        return dict(folds=[f.to_dict() for f in self.folds], mean_wa=round(self.mean_wa, 6),
                    mean_ua=round(self.mean_ua, 6), confusion=self.confusion.to_list())


def aggregate(folds):
    """Cross-fold report: arithmetic mean of per-fold WA and UA, plus the fold confusions summed."""
    folds = sorted(folds, key=lambda f: f.fold)
    if not folds:
        raise MetricsError("aggregate needs at least one fold")
    sizes = {f.cm.n_classes for f in folds}
    if len(sizes) > 1:
        raise MetricsError("folds disagree on the number of classes: {}".format(sorted(sizes)))
    total = folds[0].cm
    for f in folds[1:]:
        total = total + f.cm
    return MetricsReport(folds, float(np.mean([f.wa for f in folds])), float(np.mean([f.ua for f in folds])), total)
