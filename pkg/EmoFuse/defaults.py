#!/usr/bin/env python

# **********************************************************************************
# Named constants used throughout EmoFuse
# **********************************************************************************
# Values marked "paper" are the full-scale hyperparameters of the speech + text
# emotion recognition system; values marked "desk" are scaled down so that the
# whole pipeline trains on a laptop CPU. Everything here is overridable through
# the run configuration (see config.py).
# **********************************************************************************

# Emotion classes, in class-index order
EMOTIONS = ('angry', 'happy_excited', 'neutral', 'sad')
N_EMOTIONS = 4
RAW_LABEL_MAP = {
    'angry': 0,
    'happy': 1,
    'excited': 1,
    'happy_excited': 1,
    'neutral': 2,
    'sad': 3,
}

#**************************************************
# Front-end
#**************************************************

SAMPLE_RATE = 16000
FRAME_LENGTH_MS = 25.0
HOP_MS = 10.0
N_MELS = 128
FFT_SIZE = 512
WINDOW = 'hamming'
F_MIN = 20.0
F_MAX = None            # None -> Nyquist
LOG_FLOOR = 1e-10
NORM_EPS = 1e-8
PAD_REPEAT = 'repeat'
PAD_ZERO = 'zero'
CHUNK_SET = (150, 200, 250, 300)

# spectrogram cache record
CACHE_MAGIC = b'EMFL'

#**************************************************
# Spectrogram augmentation
#**************************************************

POLICY_NONE = 'none'
POLICY_CONSERVATIVE = 'conservative'
POLICY_AGGRESSIVE = 'aggressive'
AUGMENT_PRESETS = {
    POLICY_NONE: dict(n_freq_masks=0, max_freq_width=0, n_time_masks=0, max_time_frac=0.0),
    POLICY_CONSERVATIVE: dict(n_freq_masks=2, max_freq_width=8, n_time_masks=2, max_time_frac=0.05),
    POLICY_AGGRESSIVE: dict(n_freq_masks=2, max_freq_width=16, n_time_masks=2, max_time_frac=0.10),
}
AUGMENT_COPIES = 2

#**************************************************
# Tensor / optimisation
#**************************************************

SGD_MOMENTUM = 0.9
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
LN_EPS = 1e-5
POOL_EPS = 1e-8
PRELU_INIT = 0.25
CONSTANT_EPOCHS = 8
HALVING_PERIOD = 2
SCHEDULE_EVERY_OTHER = 'every_other'
SCHEDULE_EVERY = 'every'
BATCH_SIZE = 32

# checkpoint record
CKPT_MAGIC = b'EMFCKPT\x00'
CKPT_VERSION = 1

#**************************************************
# Speech model
#**************************************************

PRESET_RESNET34 = 'resnet34_full'
PRESET_RESNET_LITE = 'resnet_lite_desk'
RESNET_PRESETS = {
    # blocks per stage, stem stride (time, freq), stage strides, block type
    PRESET_RESNET34: dict(blocks=(3, 4, 6, 3), stem_stride=1, stage_strides=(1, 2, 2, 2),
                          block='basic', embedding_dim=512),
    PRESET_RESNET_LITE: dict(blocks=(1, 1, 1, 1), stem_stride=1, stage_strides=(2, 2, 2, 2),
                             block='lite', embedding_dim=64),
}
FIRST_BLOCK_CHANNELS = 32
POOL_STATS = 'stats'
POOL_MEAN = 'mean_only'

TRANSFER_SCRATCH = 'scratch'
TRANSFER_LINEAR_PROBE = 'linear_probe'
TRANSFER_FINE_TUNE = 'fine_tune'
HEAD_LR = 1e-1
BACKBONE_LR = 1e-3

#**************************************************
# Text model
#**************************************************

PAD_TOKEN = '[PAD]'
UNK_TOKEN = '[UNK]'
CLS_TOKEN = '[CLS]'
SEP_TOKEN = '[SEP]'
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)
CONTINUATION_PREFIX = '##'

TEXT_DESK = dict(n_layers=2, n_heads=4, hidden_dim=64, max_len=64)
TEXT_FULL = dict(n_layers=12, n_heads=12, hidden_dim=768, max_len=128)
TEXT_LR_DESK = 1e-3
TEXT_LR_PAPER = 2e-5

#**************************************************
# Fusion
#**************************************************

FUSION_W1_PAPER = 0.94
SCORE_EPS = 1e-8
NORM_PER_CLASS = 'per_class'
NORM_POOLED = 'pooled'
MODALITIES = ('speech', 'text', 'fused')
WEIGHT_GRID_STEP = 0.01
