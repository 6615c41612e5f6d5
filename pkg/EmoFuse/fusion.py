"""Late fusion of per-segment speech and text log-posteriors.

Fused scores are the weighted average ``w1 * S_speech + (1 - w1) * S_text``,
optionally after z-normalizing each modality with statistics taken from a
hold-out set.
"""
import json
import logging
from collections import OrderedDict

import numpy as np

from .defaults import *
from .errors import ConfigError, ScoreSetError
from .metrics import confusion, unweighted_accuracy

logger = logging.getLogger(__name__)


class ScoreSet(object):
    """Per-segment score vectors of one modality.

    Args:
        modality (str): "speech", "text" or "fused"
        n_classes (int): vector length
        entries (dict): segment id -> score vector, kept in insertion order

    """

    __slots__ = 'modality', 'n_classes', 'entries'

    def __init__(self, modality, n_classes=N_EMOTIONS, entries=None):
        if modality not in MODALITIES:
            raise ScoreSetError("unknown modality {!r}, expected one of {}".format(modality, MODALITIES))
        self.modality = modality
        self.n_classes = int(n_classes)
        self.entries = OrderedDict()
        for segment_id, vector in (entries or {}).items():
            self.add(segment_id, vector)

    def add(self, segment_id, vector):
        vector = np.asarray(vector, dtype=np.float64)
        if segment_id in self.entries:
            raise ScoreSetError("duplicate segment id {!r}".format(segment_id))
        if vector.shape != (self.n_classes,):
            raise ScoreSetError("segment {}: {} scores, expected {}".format(segment_id, vector.size, self.n_classes))
        if not np.all(np.isfinite(vector)):
            raise ScoreSetError("segment {}: non-finite score".format(segment_id))
        self.entries[segment_id] = vector

    @property
    def ids(self):
        return list(self.entries)

    def matrix(self, ids=None):
        """Scores as an (n, C) array in ``ids`` order"""
        ids = self.ids if ids is None else ids
        if not ids:
            return np.zeros((0, self.n_classes))
        return np.stack([self.entries[i] for i in ids])

    @classmethod
    def from_matrix(cls, modality, ids, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(modality, matrix.shape[1], OrderedDict(zip(ids, matrix)))

    def subset(self, ids):
        return ScoreSet(self.modality, self.n_classes, OrderedDict((i, self.entries[i]) for i in ids))

    def __len__(self):
        return len(self.entries)

    def __contains__(self, segment_id):
        return segment_id in self.entries

    def __getitem__(self, segment_id):
        return self.entries[segment_id]

    def __repr__(self):
        return "ScoreSet({}, {} segments)".format(self.modality, len(self))


def write_scores(path, scores):
    """One JSON object per line: {"id", "modality", "log_post"}"""
    with open(path, 'w', encoding='utf-8') as f:
        for segment_id, vector in scores.entries.items():
            f.write(json.dumps({'id': segment_id, 'modality': scores.modality,
                                'log_post': [float(v) for v in vector]}, sort_keys=True))
            f.write('\n')


def read_scores(path, modality=None, n_classes=N_EMOTIONS):
    """Load and validate a ScoreSet JSONL file.

    Args:
        path (str): file to read
        modality (str): required modality, None to take it from the file
        n_classes (int): expected vector length

    Raises:
        ScoreSetError: naming the offending line
    """
    scores = None
    with open(path, encoding='utf-8') as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                segment_id, file_modality, vector = record['id'], record['modality'], record['log_post']
            except (ValueError, KeyError, TypeError) as e:
                raise ScoreSetError("{} line {}: malformed score record ({})".format(path, n, e))
            if modality is not None and file_modality != modality:
                raise ScoreSetError("{} line {}: modality {!r}, expected {!r}".format(path, n, file_modality, modality))
            if scores is None:
                scores = ScoreSet(modality or file_modality, n_classes)
            elif file_modality != scores.modality:
                raise ScoreSetError("{} line {}: mixed modalities".format(path, n))
            if not isinstance(vector, list):
                raise ScoreSetError("{} line {}: log_post must be a list".format(path, n))
            try:
                scores.add(segment_id, vector)
            except (ScoreSetError, ValueError, TypeError) as e:
                raise ScoreSetError("{} line {}: {}".format(path, n, e))
    if scores is None:
        raise ScoreSetError("{}: no score records".format(path))
    return scores


class FusionWeights(object):
    """Convex weights; w1 multiplies the speech scores and w2 = 1 - w1 the text scores."""

    __slots__ = 'w1',

    def __init__(self, w1=FUSION_W1_PAPER):
        if not 0.0 <= w1 <= 1.0:
            raise ConfigError("fusion weight w1 must lie in [0, 1], got {}".format(w1))
        self.w1 = float(w1)

    @property
    def w2(self):
        return 1.0 - self.w1

    def __repr__(self):
        return "FusionWeights(w1={}, w2={})".format(self.w1, self.w2)


class NormStats(object):
    """Hold-out mean and std of one modality's scores, per class or pooled."""

    __slots__ = 'modality', 'mean', 'std', 'mode'

    def __init__(self, modality, mean, std, mode=NORM_PER_CLASS):
        self.modality = modality
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        self.mode = mode

    def to_dict(self):
        return dict(modality=self.modality, mode=self.mode, mean=self.mean.tolist(), std=self.std.tolist())


def _check_compatible(a, b):
    if a.n_classes != b.n_classes:
        raise ScoreSetError("class counts differ: {} has {}, {} has {}".format(
            a.modality, a.n_classes, b.modality, b.n_classes))
    if set(a.entries) != set(b.entries):
        only_a = sorted(set(a.entries) - set(b.entries))
        only_b = sorted(set(b.entries) - set(a.entries))
        raise ScoreSetError("segment ids differ: only in {}: {}; only in {}: {}".format(
            a.modality, only_a[:10], b.modality, only_b[:10]))


def fuse(speech, text, weights):
    """Weighted average of two score sets with identical ids; output in speech order."""
    _check_compatible(speech, text)
    ids = speech.ids
    # endpoints copy the unimodal vectors bit for bit (no -0.0 + 0.0 rounding)
    if weights.w1 == 1.0:
        fused = speech.matrix(ids)
    elif weights.w1 == 0.0:
        fused = text.matrix(ids)
    else:
        fused = weights.w1 * speech.matrix(ids) + weights.w2 * text.matrix(ids)
    return ScoreSet.from_matrix('fused', ids, fused)


def estimate_norm_stats(holdout, mode=NORM_PER_CLASS, eps=SCORE_EPS):
    """Population mean and std of hold-out scores, std floored at ``eps``."""
    if len(holdout) < 2:
        raise ScoreSetError("normalization statistics need at least 2 hold-out segments, got {}".format(len(holdout)))
    m = holdout.matrix()
    if mode == NORM_PER_CLASS:
        mean, std = m.mean(axis=0), m.std(axis=0)
    elif mode == NORM_POOLED:
        mean = np.full(holdout.n_classes, m.mean())
        std = np.full(holdout.n_classes, m.std())
    else:
        raise ConfigError("unknown normalization mode {!r}".format(mode))
    return NormStats(holdout.modality, mean, np.maximum(std, eps), mode)


def znorm(scores, stats):
    """(S - mu) / sigma per class.

    Args:
        scores (ScoreSet): scores to normalize
        stats: NormStats for the modality, or a modality -> NormStats mapping
    """
    if isinstance(stats, dict):
        if scores.modality not in stats:
            raise ScoreSetError("no normalization statistics for modality {!r}".format(scores.modality))
        stats = stats[scores.modality]
    if stats.modality != scores.modality:
        raise ScoreSetError("statistics are for {!r}, scores are {!r}".format(stats.modality, scores.modality))
    if stats.mean.shape != (scores.n_classes,):
        raise ScoreSetError("statistics cover {} classes, scores have {}".format(stats.mean.size, scores.n_classes))
    ids = scores.ids
    return ScoreSet.from_matrix(scores.modality, ids, (scores.matrix(ids) - stats.mean) / stats.std)


def classify(scores):
    """Arg-max class per segment; ties resolve to the lowest class index."""
    if not len(scores):
        raise ScoreSetError("cannot classify an empty score set")
    return OrderedDict((i, int(np.argmax(v))) for i, v in scores.entries.items())


def weight_grid(step=WEIGHT_GRID_STEP):
    n = int(round(1.0 / step))
    return [round(k * step, 10) for k in range(n + 1)]


def search_weight(speech, text, labels, grid=None):
    """Pick w1 maximizing hold-out UA.

    Args:
        speech, text (ScoreSet): hold-out scores
        labels (dict): segment id -> true class for every scored id
        grid (list): candidate w1 values, default 0.00..1.00 step 0.01

    Returns:
        tuple: (best w1, list of UA per grid point); ties go to the smaller w1
    """
    grid = weight_grid() if grid is None else list(grid)
    if not grid:
        raise ConfigError("weight grid is empty")
    _check_compatible(speech, text)
    missing = sorted(set(speech.entries) - set(labels))
    if missing:
        raise ScoreSetError("hold-out labels missing for {}".format(missing[:10]))
    truth = {i: labels[i] for i in speech.ids}
    uas = []
    for w1 in grid:
        fused = fuse(speech, text, FusionWeights(w1))
        uas.append(unweighted_accuracy(confusion(classify(fused), truth, speech.n_classes)))
    best = min(w for w, ua in zip(grid, uas) if ua == max(uas))
    logger.info("Weight search: best w1 %.2f, hold-out UA %.4f", best, max(uas))
    return best, uas


def weight_report(grid, uas, best_w1):
    """JSON-ready weight-search report"""
    return {'grid': [round(w, 6) for w in grid], 'ua': [round(u, 6) for u in uas], 'best_w1': round(best_w1, 6)}


def equal_weight_fusion(speech, text, holdout, mode=NORM_PER_CLASS):
    """Z-normalize both modalities with hold-out statistics, then average with w1 = 0.5.

    Args:
        holdout (tuple): (speech hold-out ScoreSet, text hold-out ScoreSet)
    """
    speech_holdout, text_holdout = holdout
    stats = {'speech': estimate_norm_stats(speech_holdout, mode), 'text': estimate_norm_stats(text_holdout, mode)}
    return fuse(znorm(speech, stats), znorm(text, stats), FusionWeights(0.5))
