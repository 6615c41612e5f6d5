import json

import numpy as np

from .defaults import SAMPLE_RATE
from .errors import SegmentError


class WaveSegment(object):
    """A pre-segmented utterance. Created by the corpus loaders and passed to the front-end.

    Args:
        segment_id (str): Unique segment identifier
        samples (array): Mono amplitudes in [-1, 1]
        sample_rate (int): Sampling rate in Hz
        session (int): Recording session, 1-based
        speaker (str): Speaker identifier
        label (int): Optional emotion class index
        transcript (str): Optional transcript

    """

    # Declare slots to reduce memory
    __slots__ = 'segment_id', 'samples', 'sample_rate', 'session', 'speaker', 'label', 'transcript'

    def __init__(self, segment_id, samples, sample_rate=SAMPLE_RATE, session=1, speaker='',
                 label=None, transcript=None):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise SegmentError("segment {}: samples must be a non-empty mono sequence".format(segment_id))
        if not np.all(np.isfinite(samples)) or np.max(np.abs(samples)) > 1.0:
            raise SegmentError("segment {}: amplitudes must be finite and within [-1, 1]".format(segment_id))
        if sample_rate <= 0:
            raise SegmentError("segment {}: sample rate must be positive".format(segment_id))
        if session < 1:
            raise SegmentError("segment {}: session must be >= 1".format(segment_id))
        self.segment_id = segment_id
        self.samples = samples
        self.sample_rate = int(sample_rate)
        self.session = int(session)
        self.speaker = speaker
        self.label = label
        self.transcript = transcript

    @property
    def duration(self):
        """Length in seconds"""
        return len(self.samples) / self.sample_rate

    def to_dict(self):
        """Returns a dictionary representation of the segment metadata (no samples)"""
        return dict(id=self.segment_id, sample_rate=self.sample_rate, n_samples=len(self.samples),
                    session=self.session, speaker=self.speaker, label=self.label,
                    transcript=self.transcript)

    def __str__(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def __repr__(self):
        return "WaveSegment({}, [{} samples], {})".format(self.segment_id, len(self.samples), self.sample_rate)


class LogMelSpectrogram(object):
    """Frames x mel-bins matrix of log energies for one segment.

    Args:
        segment_id (str): Segment the spectrogram was computed from
        data (array): n_frames x n_mels log energies
        frame_rate (float): Frames per second
        normalized (bool): Whether segment-level mean/variance normalization was applied

    """

    __slots__ = 'segment_id', 'data', 'frame_rate', 'normalized'

    def __init__(self, segment_id, data, frame_rate=100.0, normalized=False):
        data = np.asarray(data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise SegmentError("spectrogram {}: expected a non-empty frames x mels matrix, got shape {}"
                               .format(segment_id, data.shape))
        if not np.all(np.isfinite(data)):
            raise SegmentError("spectrogram {}: non-finite entries".format(segment_id))
        self.segment_id = segment_id
        self.data = data
        self.frame_rate = float(frame_rate)
        self.normalized = bool(normalized)

    @property
    def n_frames(self):
        return self.data.shape[0]

    @property
    def n_mels(self):
        return self.data.shape[1]

    def replace(self, data, normalized=None):
        """Copy with new data, keeping identity and frame rate"""
        return LogMelSpectrogram(self.segment_id, data, self.frame_rate,
                                 self.normalized if normalized is None else normalized)

    def to_dict(self):
        return dict(id=self.segment_id, n_frames=self.n_frames, n_mels=self.n_mels,
                    frame_rate=self.frame_rate, normalized=self.normalized)

    def __str__(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def __repr__(self):
        return "LogMelSpectrogram({}, {}x{})".format(self.segment_id, self.n_frames, self.n_mels)
