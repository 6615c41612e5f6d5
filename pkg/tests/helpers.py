import numpy as np

from EmoFuse import WaveSegment, LogMelSpectrogram
from config import TEST_N_MELS


def noise_wave(rng, seconds=1.0, sample_rate=16000, segment_id='noise'):
    return WaveSegment(segment_id, rng.uniform(-0.5, 0.5, int(seconds * sample_rate)), sample_rate)


def random_spec(rng, n_frames, n_mels=TEST_N_MELS, segment_id='spec', normalized=True):
    return LogMelSpectrogram(segment_id, rng.standard_normal((n_frames, n_mels)), 100.0, normalized)


def tone_wave(freq, seconds=1.0, sample_rate=16000, amplitude=0.5):
    t = np.arange(int(seconds * sample_rate)) / sample_rate
    return WaveSegment('tone', amplitude * np.sin(2 * np.pi * freq * t), sample_rate)
