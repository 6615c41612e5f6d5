"""ResNet speech-emotion classifier with speaker-ID pretraining and transfer modes.

The convolutional backbone works on (N, 1, frames, mels) spectrograms. Its
output is flattened to one feature vector per remaining frame, pooled over
frames (mean and std, or mean only) and fed to the fully connected head,
which is the part replaced on a head swap.
"""
import logging

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, optimizer_to_dict
from .defaults import *
from .errors import ConfigError, LabelError, ManifestError, SegmentError
from .frontend import random_chunk
from .augment import augment_batch
from .nn import Module, Sequential, Conv2d, BatchNorm, PReLU, Linear, evaluating
from .optim import Optimizer, LrSchedule, lr_at, SGD_MOMENTUM_KIND
from .tensor import Tensor, get_default_dtype, stats_pool, mean_pool, log_softmax, cross_entropy

logger = logging.getLogger(__name__)

TASK_SPEAKER = 'speaker'
TASK_EMOTION = 'emotion'


class ResNetConfig(object):
    """Speech model shape.

    Args:
        preset (str): "resnet34_full" or "resnet_lite_desk"
        first_block_channels (int): channels of the first stage, doubled per stage
        embedding_dim (int): width of the embedding FC layer, None for the preset's
        pooling (str): "stats" (mean and std) or "mean_only"
        n_classes (int): output classes
        n_mels (int): input mel bins

    """

    __slots__ = 'preset', 'first_block_channels', 'embedding_dim', 'pooling', 'n_classes', 'n_mels'

    def __init__(self, preset=PRESET_RESNET_LITE, first_block_channels=FIRST_BLOCK_CHANNELS,
                 embedding_dim=None, pooling=POOL_STATS, n_classes=N_EMOTIONS, n_mels=N_MELS):
        if preset not in RESNET_PRESETS:
            raise ConfigError("unknown speech preset {!r}, expected one of {}".format(preset, sorted(RESNET_PRESETS)))
        if pooling not in (POOL_STATS, POOL_MEAN):
            raise ConfigError("pooling must be '{}' or '{}'".format(POOL_STATS, POOL_MEAN))
        self.preset = preset
        self.first_block_channels = int(first_block_channels)
        self.embedding_dim = int(embedding_dim or RESNET_PRESETS[preset]['embedding_dim'])
        self.pooling = pooling
        self.n_classes = int(n_classes)
        self.n_mels = int(n_mels)
        if min(self.first_block_channels, self.embedding_dim, self.n_classes, self.n_mels) < 1:
            raise ConfigError("speech model channels, dims and classes must be >= 1")

    @classmethod
    def from_dict(cls, section, n_mels=N_MELS):
        return cls(n_mels=n_mels, **section)

    @property
    def layout(self):
        return RESNET_PRESETS[self.preset]

    def replace(self, **changes):
        fields = self.to_dict()
        fields.update(changes)
        return ResNetConfig(**fields)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__slots__}

    def __repr__(self):
        return "ResNetConfig({}, {} classes)".format(self.preset, self.n_classes)


class TransferMode(object):
    """How a (pretrained) backbone is trained for emotion recognition.

    Args:
        kind (str): "scratch", "linear_probe" or "fine_tune"
        head_lr (float): base learning rate of the FC head
        backbone_lr (float): base learning rate of the conv stack (fine_tune only)

    """

    __slots__ = 'kind', 'head_lr', 'backbone_lr'

    def __init__(self, kind=TRANSFER_LINEAR_PROBE, head_lr=HEAD_LR, backbone_lr=BACKBONE_LR):
        if kind not in (TRANSFER_SCRATCH, TRANSFER_LINEAR_PROBE, TRANSFER_FINE_TUNE):
            raise ConfigError("unknown transfer kind {!r}".format(kind))
        if head_lr <= 0 or backbone_lr < 0:
            raise ConfigError("head_lr must be positive and backbone_lr non-negative")
        self.kind = kind
        self.head_lr = float(head_lr)
        self.backbone_lr = float(backbone_lr)

    @classmethod
    def from_dict(cls, section):
        return cls(**section)

    @property
    def frozen_backbone(self):
        return self.kind == TRANSFER_LINEAR_PROBE or (self.kind == TRANSFER_FINE_TUNE and self.backbone_lr == 0.0)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__slots__}


class TrainSettings(object):
    """Loop settings shared by speaker pretraining and emotion training."""

    __slots__ = ('epochs', 'batch_size', 'constant_epochs', 'halving_period', 'schedule_mode',
                 'momentum', 'chunk_set', 'pad_mode', 'copies')

    def __init__(self, epochs=20, batch_size=BATCH_SIZE, constant_epochs=CONSTANT_EPOCHS,
                 halving_period=HALVING_PERIOD, schedule_mode=SCHEDULE_EVERY_OTHER, momentum=SGD_MOMENTUM,
                 chunk_set=CHUNK_SET, pad_mode=PAD_REPEAT, copies=AUGMENT_COPIES):
        if epochs < 1 or batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        self.epochs = int(epochs)
        self.batch_size = int(batch_size)
        self.constant_epochs = int(constant_epochs)
        self.halving_period = int(halving_period)
        self.schedule_mode = schedule_mode
        self.momentum = float(momentum)
        self.chunk_set = tuple(chunk_set)
        self.pad_mode = pad_mode
        self.copies = int(copies)

    @classmethod
    def from_config(cls, config, pretrain=False):
        optim = config['optim']
        return cls(epochs=optim['pretrain_epochs'] if pretrain else optim['epochs'],
                   batch_size=optim['batch_size'], constant_epochs=optim['constant_epochs'],
                   halving_period=optim['halving_period'], schedule_mode=optim['schedule_mode'],
                   momentum=optim['momentum'], chunk_set=config['frontend']['chunk_set'],
                   pad_mode=config['frontend']['pad_mode'], copies=config['augment']['copies'])


#
# Network
#

class ResidualBlock(Module):
    """Two convolutions with a residual shortcut.

    "basic" blocks use two 3x3 convolutions, "lite" blocks a 3x3 followed by
    a 1x1. A 1x1 projection shortcut is used when stride or width change.
    """

    def __init__(self, n_in, n_out, stride, kind, rng):
        super().__init__()
        self.conv1 = Conv2d(n_in, n_out, 3, rng, stride=stride, padding=1)
        self.bn1 = BatchNorm(n_out)
        self.act1 = PReLU(n_out)
        k2 = 3 if kind == 'basic' else 1
        self.conv2 = Conv2d(n_out, n_out, k2, rng, padding=k2 // 2)
        self.bn2 = BatchNorm(n_out)
        self.shortcut = None
        if stride != 1 or n_in != n_out:
            self.shortcut = Sequential(Conv2d(n_in, n_out, 1, rng, stride=stride), BatchNorm(n_out))
        self.act2 = PReLU(n_out)

    def forward(self, x):
        out = self.bn2(self.conv2(self.act1(self.bn1(self.conv1(x)))))
        skip = x if self.shortcut is None else self.shortcut(x)
        return self.act2(out + skip)


class Backbone(Module):
    """Stem plus four residual stages; frame-level only."""

    def __init__(self, config, rng):
        super().__init__()
        layout = config.layout
        c0 = config.first_block_channels
        self.stem = Sequential(Conv2d(1, c0, 3, rng, stride=layout['stem_stride'], padding=1),
                               BatchNorm(c0), PReLU(c0))
        self.stages = []
        n_in = c0
        for i, (n_blocks, stride) in enumerate(zip(layout['blocks'], layout['stage_strides'])):
            n_out = c0 * 2 ** i
            blocks = [ResidualBlock(n_in if b == 0 else n_out, n_out, stride if b == 0 else 1, layout['block'], rng)
                      for b in range(n_blocks)]
            self.stages.append(Sequential(*blocks))
            n_in = n_out
        self.out_channels = n_in

    def forward(self, x):
        x = self.stem(x)
        for stage in self.stages:
            x = stage(x)
        return x


class Head(Module):
    """Segment-level FC layers: embedding FC, BN, PReLU and the output FC."""

    def __init__(self, n_in, embedding_dim, n_classes, rng):
        super().__init__()
        self.embedding = Linear(n_in, embedding_dim, rng)
        self.bn = BatchNorm(embedding_dim)
        self.act = PReLU(embedding_dim)
        self.output = Linear(embedding_dim, n_classes, rng, gain=1.0)

    def forward(self, pooled):
        return self.output(self.act(self.bn(self.embedding(pooled))))


def _conv_out(n, stride):
    # 3x3 kernel, padding 1
    return (n - 1) // stride + 1


def min_frames(config):
    """Shortest input (frames) the preset accepts: the product of its time strides."""
    layout = config.layout
    return int(layout['stem_stride'] * np.prod(layout['stage_strides']))


def _reduced_mels(config):
    layout = config.layout
    n = _conv_out(config.n_mels, layout['stem_stride'])
    for stride in layout['stage_strides']:
        n = _conv_out(n, stride)
    return n


class SpeechModel(Module):
    """Backbone, pooling over frames and head; forward returns logits."""

    def __init__(self, config, rng):
        super().__init__()
        self.config = config
        self.backbone = Backbone(config, rng)
        self.frame_dim = self.backbone.out_channels * _reduced_mels(config)
        pooled = 2 * self.frame_dim if config.pooling == POOL_STATS else self.frame_dim
        self.head = Head(pooled, config.embedding_dim, config.n_classes, rng)

    def pool(self, x):
        """Conv stack and frame pooling; (N, 1, F, M) -> (N, pooled_dim)"""
        h = self.backbone(x)
        N, C, F, M = h.shape
        frames = h.transpose(0, 2, 1, 3).reshape(N, F, C * M)
        return stats_pool(frames) if self.config.pooling == POOL_STATS else mean_pool(frames)

    def forward(self, x):
        return self.head(self.pool(x))


def build_model(config, rng=None):
    """Build a randomly initialized speech model.

    Args:
        config (ResNetConfig): model shape
        rng (numpy.random.Generator): weight initialization stream

    Returns:
        SpeechModel: in training mode
    """
    if rng is None:
        rng = np.random.default_rng()
    if not isinstance(config, ResNetConfig):
        config = ResNetConfig(**config)
    return SpeechModel(config, rng)


def count_parameters(model, part='all'):
    """Trainable parameter count of the whole model, its backbone or its head"""
    if part == 'all':
        return model.count_parameters()
    if part not in ('backbone', 'head'):
        raise ValueError("part must be 'all', 'backbone' or 'head'")
    return getattr(model, part).count_parameters()


def model_checkpoint(model, task, labels=None, optimizer=None, epoch=0, history=None):
    meta = dict(model=model.config.to_dict(), task=task, labels=list(labels or []), history=history or [])
    return Checkpoint(model.state_dict(), meta, optimizer, epoch)


def load_model(checkpoint):
    """Rebuild a SpeechModel from a checkpoint (path or Checkpoint)"""
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)
    model = build_model(ResNetConfig(**checkpoint.meta['model']), np.random.default_rng(0))
    model.load_state_dict(checkpoint.tensors)
    return model


def swap_head(checkpoint, n_classes=N_EMOTIONS, rng=None, pooling=None):
    """Keep the pretrained backbone, attach freshly initialized FC layers.

    Args:
        checkpoint: path or Checkpoint of a trained speech model
        n_classes (int): outputs of the new head
        rng (numpy.random.Generator): initialization stream for the new head
        pooling (str): frame pooling of the new model, None to keep the stored one

    Returns:
        SpeechModel: backbone tensors copied verbatim
    """
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)
    config = ResNetConfig(**checkpoint.meta['model']).replace(n_classes=n_classes)
    if pooling is not None:
        config = config.replace(pooling=pooling)
    model = build_model(config, rng)
    backbone = {name[len('backbone.'):]: array for name, array in checkpoint.tensors.items()
                if name.startswith('backbone.')}
    model.backbone.load_state_dict(backbone)
    logger.debug("Swapped head: %d backbone tensors kept, new head with %d outputs", len(backbone), n_classes)
    return model


#
# Training
#

def _batches(order, batch_size, copies):
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    # batch norm needs two examples per batch
    if len(batches) > 1 and len(batches[-1]) == 1 and copies == 0:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def _as_input(specs):
    data = np.stack([s.data for s in specs]).astype(get_default_dtype())
    return Tensor(data[:, None, :, :])


def _fit(model, examples, groups, base_lr, settings, policy, rng, tag):
    """Shared mini-batch SGD loop; returns the per-epoch history."""
    specs = [spec for spec, _ in examples]
    labels = np.array([label for _, label in examples], dtype=np.int64)
    if len(specs) < 2 and (policy is None or policy.is_identity or settings.copies == 0):
        raise ManifestError("training needs at least 2 segments")
    augment = policy is not None and not policy.is_identity and settings.copies > 0
    copies = settings.copies if augment else 0
    optimizer = Optimizer(groups, SGD_MOMENTUM_KIND, momentum=settings.momentum)
    schedule = LrSchedule(base_lr, settings.constant_epochs, settings.halving_period, settings.schedule_mode)
    history = []
    for epoch in range(1, settings.epochs + 1):
        lr = lr_at(schedule, epoch)
        total_loss, correct, seen = 0.0, 0, 0
        for batch in _batches(rng.permutation(len(specs)), settings.batch_size, copies):
            length = int(settings.chunk_set[rng.integers(len(settings.chunk_set))])
            chunks = [random_chunk(specs[i], settings.chunk_set, rng, length, settings.pad_mode) for i in batch]
            targets = labels[batch]
            if augment:
                chunks = augment_batch(chunks, policy, copies, rng)
                targets = np.repeat(targets, 1 + copies)
            log_post = log_softmax(model(_as_input(chunks)))
            loss = cross_entropy(log_post, targets)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step(lr)
            total_loss += loss.item() * len(targets)
            correct += int((log_post.data.argmax(axis=1) == targets).sum())
            seen += len(targets)
        record = dict(epoch=epoch, loss=total_loss / seen, accuracy=correct / seen, lr=lr)
        if not np.isfinite(record['loss']):
            raise FloatingPointError("{}: loss diverged at epoch {}".format(tag, epoch))
        logger.info("%s epoch %d: loss %.4f accuracy %.3f lr %.2e", tag, epoch, record['loss'],
                    record['accuracy'], lr)
        history.append(record)
    return history, optimizer


def pretrain_speaker_id(model, examples, settings, lr=HEAD_LR, policy=None, seed=0, speakers=None):
    """Train a speaker classifier whose backbone later transfers to emotion recognition.

    Args:
        model (SpeechModel): fresh model with one output per speaker
        examples (list): (LogMelSpectrogram, speaker index) pairs
        settings (TrainSettings): loop settings
        lr (float): base learning rate
        policy (AugmentPolicy): optional on-the-fly augmentation
        seed (int): batch order, chunking and masking stream
        speakers (list): speaker names in index order, stored with the checkpoint

    Returns:
        tuple: (Checkpoint, history)
    """
    n_speakers = len({label for _, label in examples})
    if n_speakers < 2:
        raise ManifestError("speaker pretraining needs at least 2 speakers, got {}".format(n_speakers))
    if any(not 0 <= label < model.config.n_classes for _, label in examples):
        raise LabelError("speaker index outside the model's {} outputs".format(model.config.n_classes))
    model.train()
    model.freeze(False)
    rng = np.random.default_rng([seed, 0])
    history, optimizer = _fit(model, examples, [(model.parameters(), 1.0)], lr, settings, policy, rng, 'pretrain')
    model.eval()
    checkpoint = model_checkpoint(model, TASK_SPEAKER, speakers, optimizer_to_dict(optimizer),
                                  settings.epochs, history)
    return checkpoint, history


def train_ser(model, examples, mode, settings, policy=None, seed=0, fold=0):
    """Train the emotion classifier under a transfer mode.

    ``linear_probe`` freezes the backbone (parameters and batch-norm
    statistics); ``fine_tune`` updates it at ``backbone_lr`` while the head
    uses ``head_lr``; ``scratch`` trains everything at ``head_lr``.

    Args:
        model (SpeechModel): model with a fresh emotion head
        examples (list): (LogMelSpectrogram, class index) pairs
        mode (TransferMode): transfer settings
        settings (TrainSettings): loop settings
        policy (AugmentPolicy): optional on-the-fly augmentation
        seed (int): run seed
        fold (int): fold index, mixed into the random stream

    Returns:
        tuple: (Checkpoint, history)
    """
    if not examples:
        raise ManifestError("emotion training set is empty")
    bad = sorted({label for _, label in examples if label is None or not 0 <= label < model.config.n_classes},
                 key=str)
    if bad:
        raise LabelError("labels {} outside the {}-class space".format(bad, model.config.n_classes))
    model.train()
    if mode.frozen_backbone:
        model.backbone.freeze()
        model.backbone.eval()
        model.head.freeze(False)
        groups = [(model.head.parameters(), 1.0)]
    else:
        model.freeze(False)
        backbone_scale = 1.0 if mode.kind == TRANSFER_SCRATCH else mode.backbone_lr / mode.head_lr
        groups = [(model.head.parameters(), 1.0), (model.backbone.parameters(), backbone_scale)]
    rng = np.random.default_rng([seed, 1, fold])
    history, optimizer = _fit(model, examples, groups, mode.head_lr, settings, policy, rng,
                              'train-speech/{}'.format(mode.kind))
    model.eval()
    model.freeze(False)
    checkpoint = model_checkpoint(model, TASK_EMOTION, EMOTIONS, optimizer_to_dict(optimizer),
                                  settings.epochs, history)
    checkpoint.meta['transfer'] = mode.to_dict()
    return checkpoint, history


#
# Inference
#

def _check_input(model, spec):
    if not spec.normalized:
        raise SegmentError("spectrogram {} must be normalized before scoring".format(spec.segment_id))
    if spec.n_mels != model.config.n_mels:
        raise SegmentError("spectrogram {} has {} mel bins, model expects {}"
                           .format(spec.segment_id, spec.n_mels, model.config.n_mels))
    need = min_frames(model.config)
    if spec.n_frames < need:
        raise SegmentError("spectrogram {} has {} frames, {} needs at least {}"
                           .format(spec.segment_id, spec.n_frames, model.config.preset, need))


def _evaluate(model, fn):
    with evaluating(model):
        return fn()


def score_segment(model, spec):
    """Per-class log-posteriors of a full-length segment (no chunking, no augmentation)."""
    _check_input(model, spec)
    log_post = _evaluate(model, lambda: log_softmax(model(_as_input([spec]))))
    return log_post.data[0].astype(np.float64)


def extract_embedding(model, spec):
    """Segment embedding: the embedding FC output after frame pooling."""
    _check_input(model, spec)
    emb = _evaluate(model, lambda: model.head.embedding(model.pool(_as_input([spec]))))
    return emb.data[0].astype(np.float64)
