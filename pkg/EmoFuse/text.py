"""Transcript tokenizer and transformer encoder emotion classifier."""
import logging
from collections import Counter, OrderedDict

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, optimizer_to_dict
from .defaults import *
from .errors import ConfigError, LabelError, ManifestError, VocabularyError
from .fusion import read_scores
from .nn import Module, Embedding, LayerNorm, Linear, TransformerBlock, evaluating
from .optim import Optimizer, ADAM_KIND
from .tensor import log_softmax, cross_entropy

logger = logging.getLogger(__name__)

_BASE_CHARS = 'abcdefghijklmnopqrstuvwxyz0123456789'


class Vocabulary(object):
    """Ordered token inventory; a token's id is its position.

    Args:
        tokens (list): all tokens, specials first with [PAD] at id 0

    """

    __slots__ = 'tokens', 'ids'

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise VocabularyError("vocabulary must start with {}".format(', '.join(SPECIAL_TOKENS)))
        self.ids = OrderedDict()
        for i, token in enumerate(tokens):
            if token in self.ids:
                raise VocabularyError("duplicate token {!r} at line {}".format(token, i + 1))
            self.ids[token] = i
        self.tokens = tokens

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.ids

    def id(self, token):
        return self.ids.get(token, self.ids[UNK_TOKEN])

    def token(self, index):
        return self.tokens[index]

    @property
    def pad_id(self):
        return self.ids[PAD_TOKEN]

    def save(self, path):
        """Plain text, one token per line"""
        with open(path, 'w', encoding='utf-8') as f:
            f.write('\n'.join(self.tokens))
            f.write('\n')

    @classmethod
    def load(cls, path):
        with open(path, encoding='utf-8') as f:
            return cls(line.rstrip('\n') for line in f if line.rstrip('\n'))

    def __repr__(self):
        return "Vocabulary({} tokens)".format(len(self))


def words(text):
    """Lowercased whitespace tokens"""
    return (text or '').lower().split()


def build_vocab(transcripts, min_freq=1):
    """Build a vocabulary from training transcripts.

    Words seen at least ``min_freq`` times get their own token, ordered by
    decreasing frequency then alphabetically. Every character of the corpus
    (plus a-z and 0-9) is added both as a word-initial token and as a
    "##"-prefixed continuation, so any word can be spelled out.
    """
    counts = Counter(w for t in transcripts for w in words(t))
    if not counts:
        raise VocabularyError("cannot build a vocabulary from an empty corpus")
    kept = sorted((w for w, n in counts.items() if n >= min_freq), key=lambda w: (-counts[w], w))
    chars = sorted(set(_BASE_CHARS) | {c for w in counts for c in w})
    tokens = list(SPECIAL_TOKENS)
    seen = set(tokens)
    for token in kept + chars + [CONTINUATION_PREFIX + c for c in chars]:
        if token not in seen:
            seen.add(token)
            tokens.append(token)
    logger.debug("Vocabulary: %d words, %d characters", len(kept), len(chars))
    return Vocabulary(tokens)


def word_pieces(word, vocab):
    """Whole-word token if known, otherwise its character tokens"""
    if word in vocab:
        return [word]
    return [word[0]] + [CONTINUATION_PREFIX + c for c in word[1:]]


class TokenSequence(object):
    """Fixed-length id sequence with its attention mask."""

    __slots__ = 'ids', 'attention_mask'

    def __init__(self, ids, attention_mask):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.attention_mask = np.asarray(attention_mask, dtype=np.int64)

    @property
    def n_real(self):
        return int(self.attention_mask.sum())

    def __len__(self):
        return len(self.ids)

    def __repr__(self):
        return "TokenSequence({} real of {})".format(self.n_real, len(self))


def tokenize(text, vocab, max_len):
    """[CLS] + word pieces + [SEP], truncated so [SEP] survives, padded to max_len."""
    if max_len < 2:
        raise ConfigError("max_len must be >= 2")
    pieces = [vocab.id(p) for w in words(text) for p in word_pieces(w, vocab)]
    real = [vocab.id(CLS_TOKEN)] + pieces[:max_len - 2] + [vocab.id(SEP_TOKEN)]
    pad = max_len - len(real)
    return TokenSequence(real + [vocab.pad_id] * pad, [1] * len(real) + [0] * pad)


def decode(tokens, vocab):
    """Real tokens of a sequence as strings"""
    return [vocab.token(i) for i, m in zip(tokens.ids, tokens.attention_mask) if m]


class TransformerConfig(object):
    """Text encoder shape.

    Args:
        n_layers (int): encoder blocks
        n_heads (int): attention heads per block
        hidden_dim (int): model width, divisible by n_heads
        max_len (int): sequence length including [CLS] and [SEP]
        n_classes (int): output classes
        vocab_size (int): embedding rows
        ffn_dim (int): feed-forward width, None for 4 * hidden_dim

    """

    __slots__ = 'n_layers', 'n_heads', 'hidden_dim', 'max_len', 'n_classes', 'vocab_size', 'ffn_dim'

    def __init__(self, n_layers=2, n_heads=4, hidden_dim=64, max_len=64, n_classes=N_EMOTIONS,
                 vocab_size=len(SPECIAL_TOKENS), ffn_dim=None):
        if min(n_layers, n_heads, hidden_dim, n_classes, vocab_size) < 1 or max_len < 2:
            raise ConfigError("text model sizes must be >= 1 and max_len >= 2")
        if hidden_dim % n_heads:
            raise ConfigError("hidden_dim {} is not divisible by n_heads {}".format(hidden_dim, n_heads))
        self.n_layers = int(n_layers)
        self.n_heads = int(n_heads)
        self.hidden_dim = int(hidden_dim)
        self.max_len = int(max_len)
        self.n_classes = int(n_classes)
        self.vocab_size = int(vocab_size)
        self.ffn_dim = int(ffn_dim or 4 * hidden_dim)

    @classmethod
    def from_dict(cls, section, vocab_size):
        keys = ('n_layers', 'n_heads', 'hidden_dim', 'max_len', 'ffn_dim')
        return cls(vocab_size=vocab_size, **{k: section[k] for k in keys if k in section})

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__slots__}


class TextClassifier(Module):
    """Token and learned position embeddings, post-norm encoder blocks, [CLS] head."""

    def __init__(self, config, rng):
        super().__init__()
        self.config = config
        self.token_embedding = Embedding(config.vocab_size, config.hidden_dim, rng)
        self.position_embedding = Embedding(config.max_len, config.hidden_dim, rng)
        self.embedding_norm = LayerNorm(config.hidden_dim)
        self.blocks = [TransformerBlock(config.hidden_dim, config.n_heads, config.ffn_dim, rng)
                       for _ in range(config.n_layers)]
        self.classifier = Linear(config.hidden_dim, config.n_classes, rng, gain=1.0)

    def forward(self, ids, mask):
        """(N, L) ids and boolean mask -> (N, n_classes) logits"""
        ids = np.asarray(ids)
        mask = np.asarray(mask).astype(bool)
        positions = np.broadcast_to(np.arange(ids.shape[1]), ids.shape)
        x = self.embedding_norm(self.token_embedding(ids) + self.position_embedding(positions))
        for block in self.blocks:
            x = block(x, mask)
        return self.classifier(x[:, 0, :])


def build_text_model(config, rng=None):
    return TextClassifier(config, rng if rng is not None else np.random.default_rng())


def _stack(sequences):
    return (np.stack([s.ids for s in sequences]), np.stack([s.attention_mask for s in sequences]))


def encode_classify(model, tokens):
    """Class logits for one TokenSequence (eval mode, no graph)."""
    ids, mask = _stack([tokens])
    with evaluating(model):
        return model(ids, mask).data[0].astype(np.float64)


class TextSettings(object):
    """Fine-tuning loop settings"""

    __slots__ = 'epochs', 'batch_size', 'lr'

    def __init__(self, epochs=30, batch_size=BATCH_SIZE, lr=TEXT_LR_DESK):
        if epochs < 1 or batch_size < 1 or lr <= 0:
            raise ConfigError("text epochs, batch_size and lr must be positive")
        self.epochs = int(epochs)
        self.batch_size = int(batch_size)
        self.lr = float(lr)

    @classmethod
    def from_config(cls, config):
        section = config['text']
        return cls(section['epochs'], section['batch_size'], section['lr'])


def text_checkpoint(model, optimizer=None, epoch=0, history=None):
    meta = dict(model=model.config.to_dict(), task='emotion', labels=list(EMOTIONS), history=history or [])
    return Checkpoint(model.state_dict(), meta, optimizer, epoch)


def load_text_model(checkpoint):
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)
    model = build_text_model(TransformerConfig(**checkpoint.meta['model']), np.random.default_rng(0))
    model.load_state_dict(checkpoint.tensors)
    model.eval()
    return model


def finetune_text(model, transcripts, labels, vocab, settings, seed=0, fold=0):
    """Train the text classifier with Adam and cross-entropy.

    Args:
        model (TextClassifier): model to train in place
        transcripts (list): one transcript per training segment
        labels (list): class indices
        vocab (Vocabulary): tokenizer inventory
        settings (TextSettings): loop settings
        seed (int): run seed

    Returns:
        tuple: (Checkpoint, history)
    """
    if not transcripts:
        raise ManifestError("text training set is empty")
    missing = [i for i, t in enumerate(transcripts) if t is None]
    if missing:
        raise ManifestError("{} training segments have no transcript (first at position {})"
                            .format(len(missing), missing[0]))
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= model.config.n_classes):
        raise LabelError("labels outside the {}-class space".format(model.config.n_classes))
    ids, mask = _stack([tokenize(t, vocab, model.config.max_len) for t in transcripts])
    rng = np.random.default_rng([seed, 2, fold])
    optimizer = Optimizer([(model.parameters(), 1.0)], ADAM_KIND)
    model.train()
    history = []
    for epoch in range(1, settings.epochs + 1):
        total_loss, correct = 0.0, 0
        order = rng.permutation(len(labels))
        for start in range(0, len(order), settings.batch_size):
            batch = order[start:start + settings.batch_size]
            log_post = log_softmax(model(ids[batch], mask[batch]))
            loss = cross_entropy(log_post, labels[batch])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step(settings.lr)
            total_loss += loss.item() * len(batch)
            correct += int((log_post.data.argmax(axis=1) == labels[batch]).sum())
        record = dict(epoch=epoch, loss=total_loss / len(labels), accuracy=correct / len(labels), lr=settings.lr)
        logger.info("train-text epoch %d: loss %.4f accuracy %.3f", epoch, record['loss'], record['accuracy'])
        history.append(record)
    model.eval()
    return text_checkpoint(model, optimizer_to_dict(optimizer), settings.epochs, history), history


def score_text(model, transcript, vocab):
    """Per-class log-posteriors of one transcript"""
    ids, mask = _stack([tokenize(transcript, vocab, model.config.max_len)])
    with evaluating(model):
        return log_softmax(model(ids, mask)).data[0].astype(np.float64)


def import_external_scores(path, n_classes=N_EMOTIONS):
    """Load text-modality scores produced by another system (ScoreSet JSONL)."""
    return read_scores(path, modality='text', n_classes=n_classes)
