"""Dataset manifests, label mapping, leave-one-session-out folds and synthetic corpora."""
import hashlib
import json
import logging
from collections import OrderedDict

import numpy as np

from .defaults import *
from .errors import ConfigError, LabelError, ManifestError
from .segment import WaveSegment

logger = logging.getLogger(__name__)


def map_labels(raw_label):
    """Raw emotion name -> class index; happy and excited share a class."""
    try:
        return RAW_LABEL_MAP[raw_label]
    except KeyError:
        raise LabelError("label {!r} is outside the {}-class protocol".format(raw_label, N_EMOTIONS))


class ManifestEntry(object):
    """One segment of a corpus.

    Args:
        segment_id (str): unique id
        wav (str): audio path, relative to the manifest directory
        transcript (str): orthographic transcript, may be None
        label (str): emotion name
        session (int): recording session, 1-based
        speaker (str): speaker id

    """

    __slots__ = 'segment_id', 'wav', 'transcript', 'label', 'session', 'speaker'

    def __init__(self, segment_id, wav, transcript, label, session, speaker):
        self.segment_id = segment_id
        self.wav = wav
        self.transcript = transcript
        self.label = label
        self.session = int(session)
        self.speaker = speaker

    @property
    def class_index(self):
        return map_labels(self.label)

    def to_dict(self):
        return dict(id=self.segment_id, wav=self.wav, transcript=self.transcript, label=self.label,
                    session=self.session, speaker=self.speaker)

    @classmethod
    def from_dict(cls, record):
        return cls(record['id'], record['wav'], record.get('transcript'), record['label'],
                   record['session'], record['speaker'])

    def __str__(self):
        return json.dumps(self.to_dict(), sort_keys=True)


class DatasetManifest(object):
    """Ordered, validated collection of ManifestEntry objects."""

    def __init__(self, entries):
        self.entries = list(entries)
        self._by_id = OrderedDict()
        speaker_session = {}
        for e in self.entries:
            if e.segment_id in self._by_id:
                raise ManifestError("duplicate segment id {!r}".format(e.segment_id))
            if e.session < 1:
                raise ManifestError("segment {}: session must be >= 1".format(e.segment_id))
            map_labels(e.label)
            if speaker_session.setdefault(e.speaker, e.session) != e.session:
                raise ManifestError("speaker {!r} appears in sessions {} and {}".format(
                    e.speaker, speaker_session[e.speaker], e.session))
            self._by_id[e.segment_id] = e

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, segment_id):
        return self._by_id[segment_id]

    @property
    def ids(self):
        return list(self._by_id)

    @property
    def sessions(self):
        return sorted({e.session for e in self.entries})

    def session_ids(self, session):
        return [e.segment_id for e in self.entries if e.session == session]

    def labels(self, ids=None):
        """segment id -> class index"""
        ids = self.ids if ids is None else ids
        return OrderedDict((i, self._by_id[i].class_index) for i in ids)

    def save(self, path):
        with open(path, 'w', encoding='utf-8') as f:
            for e in self.entries:
                f.write(str(e))
                f.write('\n')

    @classmethod
    def load(cls, path):
        entries = []
        with open(path, encoding='utf-8') as f:
            for n, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    entries.append(ManifestEntry.from_dict(json.loads(line)))
                except (ValueError, KeyError, TypeError) as e:
                    raise ManifestError("{} line {}: malformed manifest record ({})".format(path, n, e))
        return cls(entries)

    def digest(self):
        """SHA-256 over the canonical JSONL form"""
        h = hashlib.sha256()
        for e in self.entries:
            h.update(str(e).encode('utf-8') + b'\n')
        return h.hexdigest()


class FoldPlan(object):
    """Train, hold-out and test ids of one leave-one-session-out fold."""

    __slots__ = 'fold_index', 'train_ids', 'validation_ids', 'test_ids', 'test_session', 'validation_session'

    def __init__(self, fold_index, train_ids, validation_ids, test_ids, test_session, validation_session=None):
        self.fold_index = fold_index
        self.train_ids = list(train_ids)
        self.validation_ids = list(validation_ids)
        self.test_ids = list(test_ids)
        self.test_session = test_session
        self.validation_session = validation_session

    def to_dict(self):
        return dict(fold=self.fold_index, test_session=self.test_session, validation_session=self.validation_session,
                    n_train=len(self.train_ids), n_validation=len(self.validation_ids), n_test=len(self.test_ids))

    def __repr__(self):
        return "FoldPlan({}, test session {})".format(self.fold_index, self.test_session)


def loso_folds(manifest, validation='rotate'):
    """One fold per session; that session is the test set.

    With ``validation="rotate"`` the hold-out set of fold k is every segment
    of the k-th remaining session (cycling), so it shares no speaker with
    the test set. A fold with a single training session gets no hold-out.
    """
    sessions = manifest.sessions
    if len(sessions) < 2:
        raise ManifestError("leave-one-session-out needs at least 2 sessions, got {}".format(len(sessions)))
    if validation not in ('rotate', 'none'):
        raise ConfigError("folds.validation must be 'rotate' or 'none'")
    folds = []
    for k, test_session in enumerate(sessions):
        training = [s for s in sessions if s != test_session]
        held = None
        if validation == 'rotate':
            if len(training) >= 2:
                held = training[k % len(training)]
            else:
                logger.warning("fold %d: only one training session, no hold-out set", k)
        train_ids = [e.segment_id for e in manifest if e.session in training and e.session != held]
        validation_ids = manifest.session_ids(held) if held is not None else []
        folds.append(FoldPlan(k, train_ids, validation_ids, manifest.session_ids(test_session), test_session, held))
    return folds


def class_statistics(manifest):
    """Examples per emotion class (class-index order) and the total"""
    counts = OrderedDict((name, 0) for name in EMOTIONS)
    for e in manifest:
        counts[EMOTIONS[e.class_index]] += 1
    counts['total'] = len(manifest)
    return counts


def render_class_statistics(counts):
    width = max(len(k) for k in counts) + 2
    lines = ['{:<{w}}{:>8}'.format('class', 'count', w=width)]
    lines += ['{:<{w}}{:>8d}'.format(k, v, w=width) for k, v in counts.items()]
    return '\n'.join(lines) + '\n'


#
# Synthetic corpora
#

# carrier band (Hz) and amplitude-modulation rate (Hz) per class, class-index order
CLASS_SIGNATURES = (
    ((2000.0, 3000.0), 8.0),
    ((1200.0, 2000.0), 6.0),
    ((500.0, 900.0), 3.0),
    ((200.0, 400.0), 1.5),
)

KEYWORDS = (
    ('furious', 'hate', 'outraged', 'annoyed', 'yelling', 'unfair', 'ridiculous', 'mad'),
    ('wonderful', 'great', 'love', 'amazing', 'thrilled', 'awesome', 'fantastic', 'glad'),
    ('okay', 'meeting', 'schedule', 'table', 'tuesday', 'report', 'usual', 'fine'),
    ('miss', 'lonely', 'cry', 'lost', 'sorry', 'tired', 'gone', 'hurts'),
)

FILLERS = ('i', 'think', 'that', 'the', 'was', 'it', 'really', 'we', 'today', 'just', 'so', 'and')

N_KEYWORD_SLOTS = 4
N_FILLER_SLOTS = 4


def _signature(rng, n, sample_rate, band, rate, timbre):
    t = np.arange(n) / sample_rate
    freqs = rng.uniform(band[0], band[1], size=3) * timbre
    phases = rng.uniform(0, 2 * np.pi, size=4)
    carrier = sum(np.sin(2 * np.pi * f * t + p) for f, p in zip(freqs, phases[:3]))
    envelope = 0.5 * (1.0 + 0.8 * np.sin(2 * np.pi * rate * t + phases[3]))
    return carrier * envelope


def _finish(signal, rng, snr_db):
    signal = signal / max(np.sqrt(np.mean(signal ** 2)), 1e-12)
    noisy = signal + rng.standard_normal(len(signal)) * 10.0 ** (-snr_db / 20.0)
    return 0.9 * noisy / np.max(np.abs(noisy))


def _audio(rng, label, ambiguous, n, sample_rate, timbre, snr_db):
    classes = range(N_EMOTIONS) if ambiguous else [label]
    signal = sum(_signature(rng, n, sample_rate, *CLASS_SIGNATURES[c], timbre=timbre) for c in classes)
    return _finish(signal, rng, snr_db)


def _transcript(rng, label, ambiguous, text_ambiguity):
    keywords = []
    for slot in range(N_KEYWORD_SLOTS):
        source = label
        if ambiguous:
            source = slot % N_EMOTIONS
        elif rng.random() < text_ambiguity:
            source = int(rng.choice([c for c in range(N_EMOTIONS) if c != label]))
        keywords.append(KEYWORDS[source][rng.integers(len(KEYWORDS[source]))])
    fillers = [FILLERS[i] for i in rng.integers(len(FILLERS), size=N_FILLER_SLOTS)]
    tokens = keywords + fillers
    return ' '.join(tokens[i] for i in rng.permutation(len(tokens)))


def _check_corpus_spec(spec):
    if min(spec['n_sessions'], spec['speakers_per_session'], spec['segments_per_speaker']) < 1:
        raise ConfigError("corpus counts must be >= 1")
    priors = np.asarray(spec['class_priors'], dtype=np.float64)
    if priors.shape != (N_EMOTIONS,) or np.any(priors < 0) or not np.isclose(priors.sum(), 1.0):
        raise ConfigError("corpus.class_priors must be {} non-negative values summing to 1".format(N_EMOTIONS))
    for key in ('text_ambiguity', 'complementarity'):
        if not 0.0 <= spec[key] <= 1.0:
            raise ConfigError("corpus.{} must lie in [0, 1]".format(key))
    if not 0 < spec['min_duration'] <= spec['max_duration']:
        raise ConfigError("corpus durations must satisfy 0 < min_duration <= max_duration")
    return priors


def generate_synthetic_corpus(seed, spec):
    """Generate a labelled two-modality corpus.

    Each class has its own carrier band and modulation rate in the audio and
    its own keyword list in the transcripts. A fraction ``complementarity``
    of the segments is made ambiguous in exactly one, randomly chosen,
    modality: the audio then mixes all class signatures, or the keywords
    come equally from every class.

    Args:
        seed (int): generator seed
        spec (dict): the "corpus" config section

    Returns:
        tuple: (DatasetManifest, OrderedDict segment id -> WaveSegment)
    """
    priors = _check_corpus_spec(spec)
    rng = np.random.default_rng([seed, 100])
    sample_rate = spec['sample_rate']
    entries, waves = [], OrderedDict()
    for session in range(1, spec['n_sessions'] + 1):
        for s in range(spec['speakers_per_session']):
            speaker = 'ses{}_spk{}'.format(session, s)
            timbre = rng.uniform(0.92, 1.08)
            for k in range(spec['segments_per_speaker']):
                segment_id = '{}_{:03d}'.format(speaker, k)
                label = int(rng.choice(N_EMOTIONS, p=priors))
                ambiguous_audio = ambiguous_text = False
                if rng.random() < spec['complementarity']:
                    if rng.random() < 0.5:
                        ambiguous_audio = True
                    else:
                        ambiguous_text = True
                n = int(rng.uniform(spec['min_duration'], spec['max_duration']) * sample_rate)
                samples = _audio(rng, label, ambiguous_audio, n, sample_rate, timbre, spec['audio_snr'])
                transcript = _transcript(rng, label, ambiguous_text, spec['text_ambiguity'])
                entries.append(ManifestEntry(segment_id, 'wav/{}.wav'.format(segment_id), transcript,
                                             EMOTIONS[label], session, speaker))
                waves[segment_id] = WaveSegment(segment_id, samples, sample_rate, session, speaker, label, transcript)
    logger.info("Synthesized %d segments in %d sessions", len(entries), spec['n_sessions'])
    return DatasetManifest(entries), waves


def generate_speaker_corpus(seed, n_speakers=20, segments_per_speaker=30, min_duration=1.5, max_duration=3.0,
                            sample_rate=SAMPLE_RATE):
    """Speaker-labelled audio for pretraining.

    A speaker is a fixed timbre: a fundamental, two formant centres and a
    spectral tilt shaping a harmonic series. Every segment adds a carrier
    in a random class band with a random modulation rate, so only the timbre
    identifies the speaker.

    Returns:
        tuple: (list of WaveSegment, list of speaker index, list of speaker names)
    """
    if n_speakers < 2:
        raise ConfigError("speaker corpus needs at least 2 speakers")
    rng = np.random.default_rng([seed, 200])
    names = ['spk{:02d}'.format(i) for i in range(n_speakers)]
    waves, labels = [], []
    for i, name in enumerate(names):
        f0 = rng.uniform(90.0, 250.0)
        formants = np.sort(rng.uniform(300.0, 3500.0, size=2))
        tilt = rng.uniform(3.0, 12.0)
        harmonics = np.arange(1, int(4000.0 // f0) + 1) * f0
        gains = sum(np.exp(-0.5 * ((harmonics - fc) / 150.0) ** 2) for fc in formants)
        gains = (gains + 0.05) * 10.0 ** (-tilt * np.log2(harmonics / f0) / 20.0)
        for k in range(segments_per_speaker):
            n = int(rng.uniform(min_duration, max_duration) * sample_rate)
            t = np.arange(n) / sample_rate
            jitter = rng.uniform(0.98, 1.02)
            voice = sum(g * np.sin(2 * np.pi * h * jitter * t + rng.uniform(0, 2 * np.pi))
                        for h, g in zip(harmonics, gains))
            band, _ = CLASS_SIGNATURES[rng.integers(N_EMOTIONS)]
            carrier = _signature(rng, n, sample_rate, band, rng.uniform(1.0, 8.0), 1.0)
            voice = voice / max(np.sqrt(np.mean(voice ** 2)), 1e-12)
            carrier = 0.5 * carrier / max(np.sqrt(np.mean(carrier ** 2)), 1e-12)
            samples = _finish(voice + carrier, rng, 20.0)
            waves.append(WaveSegment('{}_{:03d}'.format(name, k), samples, sample_rate, 1, name))
            labels.append(i)
    return waves, labels, names
