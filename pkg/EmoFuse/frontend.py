"""Log-mel front-end: framing, mel filterbank, segment normalization and chunking."""
import logging
import struct
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

from .defaults import *
from .errors import ConfigError, SegmentError, ChecksumError
from .segment import WaveSegment, LogMelSpectrogram

logger = logging.getLogger(__name__)


class FrontendConfig(object):
    """Front-end parameters.

    Args:
        sample_rate (int): Expected input rate in Hz. Other rates are rejected, not resampled.
        frame_length_ms (float): Analysis frame length
        hop_ms (float): Frame shift
        n_mels (int): Number of triangular mel filters
        fft_size (int): FFT length in samples, at least one frame
        window (str): Any window name understood by scipy.signal.get_window
        f_min (float): Lowest filter edge in Hz
        f_max (float): Highest filter edge in Hz, None for Nyquist
        log_floor (float): Energies are clamped to this before the log
        norm_eps (float): Floor on the per-bin std during normalization
        pad_mode (str): "repeat" (cyclic) or "zero" padding for short segments
        chunk_set (list): Training chunk lengths in frames

    """

    __slots__ = ('sample_rate', 'frame_length_ms', 'hop_ms', 'n_mels', 'fft_size', 'window',
                 'f_min', 'f_max', 'log_floor', 'norm_eps', 'pad_mode', 'chunk_set')

    def __init__(self, sample_rate=SAMPLE_RATE, frame_length_ms=FRAME_LENGTH_MS, hop_ms=HOP_MS,
                 n_mels=N_MELS, fft_size=FFT_SIZE, window=WINDOW, f_min=F_MIN, f_max=F_MAX,
                 log_floor=LOG_FLOOR, norm_eps=NORM_EPS, pad_mode=PAD_REPEAT, chunk_set=CHUNK_SET):
        self.sample_rate = int(sample_rate)
        self.frame_length_ms = float(frame_length_ms)
        self.hop_ms = float(hop_ms)
        self.n_mels = int(n_mels)
        self.fft_size = int(fft_size)
        self.window = window
        self.f_min = float(f_min)
        self.f_max = float(sample_rate / 2 if f_max is None else f_max)
        self.log_floor = float(log_floor)
        self.norm_eps = float(norm_eps)
        self.pad_mode = pad_mode
        self.chunk_set = tuple(int(t) for t in chunk_set)
        self._validate()

    def _validate(self):
        if self.sample_rate <= 0:
            raise ConfigError("frontend.sample_rate must be positive")
        if self.n_mels < 1:
            raise ConfigError("frontend.n_mels must be >= 1")
        if self.hop_length < 1 or self.frame_length < 1:
            raise ConfigError("frontend frame length and hop must cover at least one sample")
        if self.fft_size < self.frame_length:
            raise ConfigError("frontend.fft_size {} is shorter than a frame ({} samples)"
                              .format(self.fft_size, self.frame_length))
        if not 0 <= self.f_min < self.f_max <= self.sample_rate / 2:
            raise ConfigError("frontend requires 0 <= f_min < f_max <= sample_rate/2")
        if self.log_floor <= 0:
            raise ConfigError("frontend.log_floor must be positive")
        if self.pad_mode not in (PAD_REPEAT, PAD_ZERO):
            raise ConfigError("frontend.pad_mode must be '{}' or '{}'".format(PAD_REPEAT, PAD_ZERO))
        if not self.chunk_set or min(self.chunk_set) < 1:
            raise ConfigError("frontend.chunk_set must be a non-empty list of positive frame counts")

    @classmethod
    def from_dict(cls, section):
        return cls(**section)

    @property
    def frame_length(self):
        """Frame length in samples"""
        return int(round(self.frame_length_ms * self.sample_rate / 1000.0))

    @property
    def hop_length(self):
        """Hop in samples"""
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    @property
    def frame_rate(self):
        return 1000.0 / self.hop_ms


def frame_signal(wave, config):
    """Cut a segment into overlapping windowed frames.

    Args:
        wave (WaveSegment): input segment, at config.sample_rate
        config (FrontendConfig): front-end parameters

    Returns:
        numpy.ndarray: n_frames x frame_length matrix, n_frames = floor((N - L) / H) + 1
    """
    if wave.sample_rate != config.sample_rate:
        raise SegmentError("segment {}: sample rate {} Hz, expected {} Hz (resampling is not supported)"
                           .format(wave.segment_id, wave.sample_rate, config.sample_rate))
    L, H = config.frame_length, config.hop_length
    if len(wave.samples) < L:
        raise SegmentError("segment too short: {} has {} samples, one frame needs {}"
                           .format(wave.segment_id, len(wave.samples), L))
    frames = np.lib.stride_tricks.sliding_window_view(wave.samples, L)[::H]
    return frames * get_window(config.window, L)


def mel_scale(f):
    """HTK mel scale, m = 2595 log10(1 + f/700)."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("negative frequency")
    m = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(m) if m.ndim == 0 else m


def mel_to_hz(m):
    """Inverse of mel_scale"""
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_centers(config):
    """Peak frequency (Hz) of every mel filter"""
    points = np.linspace(mel_scale(config.f_min), mel_scale(config.f_max), config.n_mels + 2)
    return mel_to_hz(points[1:-1])


def mel_filterbank(config):
    """Triangular filters with peaks equally spaced on the mel scale.

    Returns:
        numpy.ndarray: n_mels x (fft_size/2 + 1) non-negative weights
    """
    edges = mel_to_hz(np.linspace(mel_scale(config.f_min), mel_scale(config.f_max), config.n_mels + 2))
    freqs = np.fft.rfftfreq(config.fft_size, d=1.0 / config.sample_rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def log_mel(wave, config, filterbank=None):
    """Compute the n_frames x n_mels log-mel spectrogram of a segment.

    Args:
        wave (WaveSegment): input segment
        config (FrontendConfig): front-end parameters
        filterbank (array): precomputed mel_filterbank(config), optional

    Returns:
        LogMelSpectrogram: un-normalized log energies
    """
    frames = frame_signal(wave, config)
    if filterbank is None:
        filterbank = mel_filterbank(config)
    power = np.abs(np.fft.rfft(frames, n=config.fft_size, axis=1)) ** 2
    energies = power @ filterbank.T
    data = np.log(np.maximum(energies, config.log_floor))
    return LogMelSpectrogram(wave.segment_id, data, config.frame_rate, normalized=False)


def normalize_segment(spec, eps=NORM_EPS):
    """Segment-level mean and variance normalization, per mel bin.

    Uses the population std over the segment's own frames; a constant bin maps
    to all zeros because its std is floored at ``eps``.
    """
    if spec.normalized:
        raise SegmentError("spectrogram {} is already normalized".format(spec.segment_id))
    data = spec.data
    mean = data.mean(axis=0)
    std = np.maximum(data.std(axis=0), eps)
    return spec.replace((data - mean) / std, normalized=True)


def draw_chunk(n_frames, chunk_set, rng, length=None):
    """Pick a chunk length and offset.

    Args:
        n_frames (int): frames available
        chunk_set (list): candidate lengths, one drawn uniformly unless ``length`` is given
        rng (numpy.random.Generator): seeded generator
        length (int): force this chunk length

    Returns:
        tuple: (T, offset); offset is 0 when the segment is shorter than T
    """
    if length is None:
        if not chunk_set:
            raise ValueError("chunk_set must not be empty")
        length = int(chunk_set[rng.integers(len(chunk_set))])
    if n_frames >= length:
        return length, int(rng.integers(0, n_frames - length + 1))
    return length, 0


def random_chunk(spec, chunk_set, rng, length=None, pad_mode=PAD_REPEAT):
    """Cut a random fixed-length training chunk out of a spectrogram.

    Segments shorter than the drawn length are padded, by default by cyclic
    repetition of their own frames so that no silence statistics are injected.
    """
    T, offset = draw_chunk(spec.n_frames, chunk_set, rng, length)
    if spec.n_frames >= T:
        data = spec.data[offset:offset + T]
    elif pad_mode == PAD_REPEAT:
        data = spec.data[np.arange(T) % spec.n_frames]
    else:
        data = np.concatenate([spec.data, np.zeros((T - spec.n_frames, spec.n_mels), dtype=spec.data.dtype)])
    return spec.replace(data)


def extract_features(waves, config, jobs=1, normalize=True):
    """Compute (normalized) log-mel spectrograms for many segments.

    Work is spread over ``jobs`` threads; results come back in input order.
    """
    filterbank = mel_filterbank(config)

    def _one(wave):
        spec = log_mel(wave, config, filterbank)
        return normalize_segment(spec, config.norm_eps) if normalize else spec

    if jobs <= 1:
        return [_one(w) for w in waves]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_one, waves))


#
# File I/O
#

def read_wav(path, segment_id=None, **meta):
    """Read a mono 16-bit PCM or 32-bit float WAV file into a WaveSegment."""
    rate, samples = wavfile.read(path)
    if samples.ndim != 1:
        raise SegmentError("{}: only mono audio is supported".format(path))
    if samples.dtype == np.int16:
        samples = samples.astype(np.float64) / 32768.0
    elif samples.dtype == np.float32:
        samples = samples.astype(np.float64)
    else:
        raise SegmentError("{}: unsupported sample format {}".format(path, samples.dtype))
    return WaveSegment(segment_id or str(path), samples, rate, **meta)


def write_wav(path, wave):
    """Write a WaveSegment as 16-bit PCM."""
    pcm = np.clip(np.round(wave.samples * 32767.0), -32768, 32767).astype('<i2')
    wavfile.write(path, wave.sample_rate, pcm)


_CACHE_HEADER = struct.Struct('<4sH')
_CACHE_SHAPE = struct.Struct('<IIdB')


def write_cache(path, spec):
    """Store a spectrogram as a little-endian binary record.

    Layout: magic, id length, utf-8 id, n_frames, n_mels, frame rate,
    normalized flag, then n_frames*n_mels row-major float32 values.
    """
    sid = spec.segment_id.encode('utf-8')
    with open(path, 'wb') as f:
        f.write(_CACHE_HEADER.pack(CACHE_MAGIC, len(sid)))
        f.write(sid)
        f.write(_CACHE_SHAPE.pack(spec.n_frames, spec.n_mels, spec.frame_rate, int(spec.normalized)))
        f.write(np.ascontiguousarray(spec.data, dtype='<f4').tobytes())


def read_cache(path):
    """Load a spectrogram written by write_cache."""
    with open(path, 'rb') as f:
        blob = f.read()
    if len(blob) < _CACHE_HEADER.size or blob[:4] != CACHE_MAGIC:
        raise ChecksumError("{}: not a spectrogram cache record".format(path))
    _, id_len = _CACHE_HEADER.unpack_from(blob, 0)
    pos = _CACHE_HEADER.size
    sid = blob[pos:pos + id_len].decode('utf-8')
    pos += id_len
    n_frames, n_mels, frame_rate, normalized = _CACHE_SHAPE.unpack_from(blob, pos)
    pos += _CACHE_SHAPE.size
    expected = n_frames * n_mels * 4
    if len(blob) - pos != expected:
        raise ChecksumError("{}: truncated record, expected {} data bytes, found {}"
                            .format(path, expected, len(blob) - pos))
    data = np.frombuffer(blob, dtype='<f4', offset=pos).reshape(n_frames, n_mels).astype(np.float32)
    return LogMelSpectrogram(sid, data, frame_rate, bool(normalized))
