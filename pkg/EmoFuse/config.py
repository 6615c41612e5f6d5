import copy
import json
import logging

from .defaults import *
from .errors import ConfigError

logger = logging.getLogger(__name__)

PRESETS = ('paper', 'desk')

# free-form mappings, checked field by field
OVERRIDE_FIELDS = {
    'augment.overrides': {'n_freq_masks': int, 'max_freq_width': int, 'n_time_masks': int,
                          'max_time_frac': float, 'mask_value': float},
}

# keys whose preset default is None (derived at build time)
OPTIONAL_NUMBERS = {
    'frontend.f_max': float,
    'speech.embedding_dim': int,
    'text.ffn_dim': int,
}


def get_config(preset='desk'):
    """Return a fresh, fully populated run configuration for a named preset.

    The "paper" preset carries the full-scale hyperparameters; "desk" keeps the
    same pipeline but shrinks models and corpora so everything runs on a CPU.

    Args:
        preset (str): "paper" or "desk"

    Returns:
        dict: nested configuration, one sub-dict per section
    """
    if preset not in PRESETS:
        raise ConfigError("unknown preset {!r}, expected one of {}".format(preset, PRESETS))
    paper = preset == 'paper'
    text_shape = TEXT_FULL if paper else TEXT_DESK
    return {
        'frontend': {
            'sample_rate': SAMPLE_RATE,
            'frame_length_ms': FRAME_LENGTH_MS,
            'hop_ms': HOP_MS,
            'n_mels': N_MELS,
            'fft_size': FFT_SIZE,
            'window': WINDOW,
            'f_min': F_MIN,
            'f_max': F_MAX,
            'log_floor': LOG_FLOOR,
            'norm_eps': NORM_EPS,
            'pad_mode': PAD_REPEAT,
            'chunk_set': list(CHUNK_SET),
        },
        'augment': {
            'policy': POLICY_CONSERVATIVE,
            'copies': AUGMENT_COPIES,
            # explicit fields win over the named policy
            'overrides': {},
        },
        'speech': {
            'preset': PRESET_RESNET34 if paper else PRESET_RESNET_LITE,
            'first_block_channels': FIRST_BLOCK_CHANNELS,
            'embedding_dim': None,
            'pooling': POOL_STATS,
            'n_classes': N_EMOTIONS,
        },
        'transfer': {
            'kind': TRANSFER_LINEAR_PROBE,
            'head_lr': HEAD_LR,
            'backbone_lr': BACKBONE_LR,
        },
        'optim': {
            'batch_size': BATCH_SIZE,
            'epochs': 20 if paper else 12,
            'constant_epochs': CONSTANT_EPOCHS,
            'halving_period': HALVING_PERIOD,
            'schedule_mode': SCHEDULE_EVERY_OTHER,
            'momentum': SGD_MOMENTUM,
            'pretrain_epochs': 20 if paper else 10,
            'pretrain_lr': HEAD_LR,
        },
        'text': {
            'n_layers': text_shape['n_layers'],
            'n_heads': text_shape['n_heads'],
            'hidden_dim': text_shape['hidden_dim'],
            'max_len': text_shape['max_len'],
            'ffn_dim': None,
            'lr': TEXT_LR_PAPER if paper else TEXT_LR_DESK,
            'epochs': 10 if paper else 30,
            'batch_size': BATCH_SIZE,
            'min_freq': 1,
        },
        'fusion': {
            'w1': FUSION_W1_PAPER,
            'norm_mode': NORM_PER_CLASS,
            'grid_step': WEIGHT_GRID_STEP,
        },
        'folds': {
            'validation': 'rotate',
        },
        'corpus': {
            'n_sessions': 5,
            'speakers_per_session': 2,
            'segments_per_speaker': 20,
            'class_priors': [0.2, 0.3, 0.3, 0.2],
            'audio_snr': 10.0,
            'text_ambiguity': 0.1,
            'complementarity': 0.3,
            'min_duration': 1.5,
            'max_duration': 3.0,
            'sample_rate': SAMPLE_RATE,
        },
        'speaker_corpus': {
            'n_speakers': 20,
            'segments_per_speaker': 30,
            'min_duration': 1.5,
            'max_duration': 3.0,
        },
        'run': {
            'seed': 7,
            'jobs': 1,
            'dtype': 'float32',
            'augment_pretrain': True,
        },
    }


def merge_config(base, overrides, _path=''):
    """Deep-merge ``overrides`` into a copy of ``base``.

    Unknown sections or keys and type mismatches raise ConfigError naming the
    dotted key path.
    """
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        dotted = _path + key
        if key not in merged:
            raise ConfigError("unknown config key '{}'".format(dotted))
        current = merged[key]
        if dotted in OVERRIDE_FIELDS:
            merged[key] = _check_overrides(dotted, value)
        elif isinstance(current, dict):
            if not isinstance(value, dict):
                raise ConfigError("config key '{}' must be a mapping".format(dotted))
            merged[key] = merge_config(current, value, dotted + '.')
        else:
            _check_type(dotted, current, value)
            merged[key] = copy.deepcopy(value)
    return merged


def _check_number(dotted, kind, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("config key '{}' expects a number, got {!r}".format(dotted, value))
    if kind is int and not isinstance(value, int):
        raise ConfigError("config key '{}' expects an integer, got {!r}".format(dotted, value))


def _check_overrides(dotted, value):
    if not isinstance(value, dict):
        raise ConfigError("config key '{}' must be a mapping".format(dotted))
    fields = OVERRIDE_FIELDS[dotted]
    for key, item in value.items():
        if key not in fields:
            raise ConfigError("unknown config key '{}.{}'".format(dotted, key))
        _check_number(dotted + '.' + key, fields[key], item)
    return copy.deepcopy(value)


def _check_type(dotted, current, value):
    if value is None:
        return
    if dotted in OPTIONAL_NUMBERS:
        _check_number(dotted, OPTIONAL_NUMBERS[dotted], value)
        return
    if current is None:
        return
    if isinstance(current, bool) != isinstance(value, bool):
        raise ConfigError("config key '{}' expects a boolean".format(dotted))
    if isinstance(current, (int, float)) and not isinstance(current, bool):
        if not isinstance(value, (int, float)):
            raise ConfigError("config key '{}' expects a number, got {!r}".format(dotted, value))
    elif isinstance(current, str) and not isinstance(value, str):
        raise ConfigError("config key '{}' expects a string, got {!r}".format(dotted, value))
    elif isinstance(current, (list, dict)) and not isinstance(value, type(current)):
        raise ConfigError("config key '{}' expects a {}".format(dotted, type(current).__name__))


def load_config(path=None, preset='desk', **overrides):
    """Load a JSON config file on top of a preset.

    Args:
        path (str): JSON file, or None for the bare preset
        preset (str): base preset name

    Keyword Args:
        Any top-level section may be passed as a dict and is merged last.

    Returns:
        dict: the resolved configuration
    """
    config = get_config(preset)
    if path is not None:
        with open(path, encoding='utf-8') as f:
            try:
                user = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError("{}: invalid JSON ({})".format(path, e))
        if not isinstance(user, dict):
            raise ConfigError("{}: top level must be an object".format(path))
        config = merge_config(config, user)
    if overrides:
        config = merge_config(config, overrides)
    logger.debug("Resolved %s config from %s", preset, path or 'preset')
    return config


def dump_config(config, path):
    """Write the resolved config as sorted, indented JSON."""
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(config, f, sort_keys=True, indent=2)
        f.write('\n')
