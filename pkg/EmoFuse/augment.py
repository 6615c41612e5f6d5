"""Spectro-temporal masking of spectrograms, applied on the fly during training."""
import numpy as np

from .defaults import AUGMENT_PRESETS, AUGMENT_COPIES, POLICY_NONE
from .errors import ConfigError


class AugmentPolicy(object):
    """Time/frequency masking policy.

    Args:
        name (str): Policy name
        n_freq_masks (int): Frequency stripes per spectrogram
        max_freq_width (int): Widest frequency stripe, in mel bins
        n_time_masks (int): Time stripes per spectrogram
        max_time_frac (float): Widest time stripe as a fraction of the frames
        mask_value (float): Fill value; 0 equals the bin mean after normalization

    """

    __slots__ = 'name', 'n_freq_masks', 'max_freq_width', 'n_time_masks', 'max_time_frac', 'mask_value'

    def __init__(self, name='custom', n_freq_masks=0, max_freq_width=0, n_time_masks=0,
                 max_time_frac=0.0, mask_value=0.0):
        if n_freq_masks < 0 or n_time_masks < 0 or max_freq_width < 0:
            raise ConfigError("augment policy {}: counts and widths must be >= 0".format(name))
        if not 0.0 <= max_time_frac <= 1.0:
            raise ConfigError("augment policy {}: max_time_frac must lie in [0, 1]".format(name))
        self.name = name
        self.n_freq_masks = int(n_freq_masks)
        self.max_freq_width = int(max_freq_width)
        self.n_time_masks = int(n_time_masks)
        self.max_time_frac = float(max_time_frac)
        self.mask_value = float(mask_value)

    @classmethod
    def preset(cls, name):
        """Named policy: "none", "conservative" or "aggressive"."""
        if name not in AUGMENT_PRESETS:
            raise ConfigError("unknown augment policy {!r}, expected one of {}"
                              .format(name, sorted(AUGMENT_PRESETS)))
        return cls(name, **AUGMENT_PRESETS[name])

    @classmethod
    def from_dict(cls, section):
        """Build from the config "augment" section: a named policy plus explicit overrides."""
        name = section.get('policy', POLICY_NONE)
        overrides = section.get('overrides') or {}
        unknown = sorted(set(overrides) - set(cls.__slots__[1:]))
        if unknown:
            raise ConfigError("unknown config key 'augment.overrides.{}'".format(unknown[0]))
        fields = {}
        if name != 'custom':
            fields = cls.preset(name).to_dict()
            del fields['name']
        fields.update(overrides)
        return cls('custom' if overrides else name, **fields)

    @property
    def is_identity(self):
        return ((self.n_freq_masks == 0 or self.max_freq_width == 0) and
                (self.n_time_masks == 0 or self.max_time_frac == 0.0))

    def max_time_width(self, n_frames):
        return int(round(self.max_time_frac * n_frames))

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__slots__}

    def __repr__(self):
        return "AugmentPolicy({})".format(self.name)


def draw_masks(n_frames, n_mels, policy, rng):
    """Draw stripe placements for one spectrogram.

    Returns:
        tuple: (freq_stripes, time_stripes), each a list of (start, width)
    """
    freq, time = [], []
    max_f = min(policy.max_freq_width, n_mels)
    for _ in range(policy.n_freq_masks):
        f = int(rng.integers(0, max_f + 1))
        f0 = int(rng.integers(0, n_mels - f + 1))
        freq.append((f0, f))
    max_t = min(policy.max_time_width(n_frames), n_frames)
    for _ in range(policy.n_time_masks):
        t = int(rng.integers(0, max_t + 1))
        t0 = int(rng.integers(0, n_frames - t + 1))
        time.append((t0, t))
    return freq, time


def apply_masks(spec, policy, rng):
    """Return a masked copy of a spectrogram; unmasked cells are untouched."""
    freq, time = draw_masks(spec.n_frames, spec.n_mels, policy, rng)
    data = spec.data.copy()
    for f0, f in freq:
        data[:, f0:f0 + f] = policy.mask_value
    for t0, t in time:
        data[t0:t0 + t, :] = policy.mask_value
    return spec.replace(data)


def augment_batch(specs, policy, copies=AUGMENT_COPIES, rng=None):
    """Expand a batch with masked variants.

    Each input is followed by ``copies`` masked versions of itself, so the
    output holds len(specs) * (1 + copies) spectrograms, originals first.
    """
    if copies < 0:
        raise ValueError("copies must be >= 0")
    if copies == 0:
        return list(specs)
    if rng is None:
        rng = np.random.default_rng()
    out = []
    for spec in specs:
        out.append(spec)
        out.extend(apply_masks(spec, policy, rng) for _ in range(copies))
    return out
