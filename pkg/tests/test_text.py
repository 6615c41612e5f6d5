import json

import numpy as np
import pytest

from EmoFuse import (Vocabulary, TransformerConfig, tokenize, build_text_model, score_text, ConfigError,
                     VocabularyError, ScoreSetError, LabelError, ManifestError)
from EmoFuse.dataset import generate_synthetic_corpus
from EmoFuse.defaults import SPECIAL_TOKENS, PAD_TOKEN, CLS_TOKEN, SEP_TOKEN, UNK_TOKEN
from EmoFuse.text import (build_vocab, decode, encode_classify, finetune_text, import_external_scores,
                          load_text_model, TextSettings, TokenSequence)
from config import *


TRANSCRIPTS = ['great great day', 'sad day', 'I hate mondays', 'okay fine']


def _model(vocab, rng, max_len=16):
    config = TransformerConfig(n_layers=1, n_heads=2, hidden_dim=16, max_len=max_len, vocab_size=len(vocab))
    return build_text_model(config, rng)


def test_vocab_enumeration():
    vocab = build_vocab(TRANSCRIPTS)
    assert vocab.tokens[:4] == list(SPECIAL_TOKENS)
    assert vocab.id(PAD_TOKEN) == 0 == vocab.pad_id
    assert len({vocab.id(t) for t in SPECIAL_TOKENS}) == 4
    # frequency first, then alphabetical
    assert vocab.tokens[4:6] == ['day', 'great']
    assert vocab.id('great') < vocab.id('hate') < vocab.id('sad')
    assert 'z' in vocab and '##z' in vocab


def test_vocab_save_load(tmp_path):
    vocab = build_vocab(TRANSCRIPTS)
    path = str(tmp_path / 'vocab.txt')
    vocab.save(path)
    assert Vocabulary.load(path).tokens == vocab.tokens


def test_vocab_rejects_bad_inventories():
    with pytest.raises(VocabularyError):
        Vocabulary(['hello'] + list(SPECIAL_TOKENS))
    with pytest.raises(VocabularyError, match='duplicate'):
        Vocabulary(list(SPECIAL_TOKENS) + ['a', 'a'])
    with pytest.raises(VocabularyError):
        build_vocab(['', '   '])


def test_unseen_word_spelled_out():
    vocab = build_vocab(TRANSCRIPTS)
    tokens = decode(tokenize('joyful', vocab, 16), vocab)
    assert tokens == [CLS_TOKEN, 'j', '##o', '##y', '##f', '##u', '##l', SEP_TOKEN]
    assert UNK_TOKEN not in tokens


def test_empty_transcript_is_cls_sep_then_padding():
    vocab = build_vocab(TRANSCRIPTS)
    tokens = tokenize('', vocab, 6)
    cls, sep, pad = vocab.id(CLS_TOKEN), vocab.id(SEP_TOKEN), vocab.pad_id
    assert tokens.ids.tolist() == [cls, sep, pad, pad, pad, pad]
    assert tokens.attention_mask.tolist() == [1, 1, 0, 0, 0, 0]


def test_truncation_keeps_sep():
    vocab = build_vocab(TRANSCRIPTS)
    tokens = tokenize('great day ' * 20, vocab, 8)
    assert len(tokens) == 8 and tokens.n_real == 8
    assert tokens.ids[0] == vocab.id(CLS_TOKEN)
    assert tokens.ids[-1] == vocab.id(SEP_TOKEN)
    with pytest.raises(ConfigError):
        tokenize('great', vocab, 1)


def test_tokenize_mask_matches_padding():
    vocab = build_vocab(TRANSCRIPTS)
    for text in TRANSCRIPTS:
        tokens = tokenize(text, vocab, 12)
        np.testing.assert_array_equal(tokens.attention_mask == 0, tokens.ids == vocab.pad_id)


def test_config_validation():
    with pytest.raises(ConfigError, match='divisible'):
        TransformerConfig(hidden_dim=10, n_heads=4)
    with pytest.raises(ConfigError):
        TransformerConfig(max_len=1)


def test_logits_shape_and_padding_invariance(rng):
    vocab = build_vocab(TRANSCRIPTS)
    model = _model(vocab, rng)
    tokens = tokenize('great day', vocab, 16)
    logits = encode_classify(model, tokens)
    assert logits.shape == (4,)
    ids = tokens.ids.copy()
    ids[tokens.attention_mask == 0] = rng.integers(len(vocab), size=int((tokens.attention_mask == 0).sum()))
    other = encode_classify(model, TokenSequence(ids, tokens.attention_mask))
    np.testing.assert_allclose(other, logits, atol=1e-6)


def test_padding_length_does_not_matter(rng):
    vocab = build_vocab(TRANSCRIPTS)
    config = TransformerConfig(n_layers=1, n_heads=2, hidden_dim=16, max_len=24, vocab_size=len(vocab))
    model = build_text_model(config, rng)
    short = tokenize('sad day', vocab, 10)
    long_ids = np.concatenate([short.ids, np.zeros(14, dtype=np.int64)])
    long_mask = np.concatenate([short.attention_mask, np.zeros(14, dtype=np.int64)])
    np.testing.assert_allclose(encode_classify(model, short), encode_classify(model, TokenSequence(long_ids, long_mask)),
                               atol=1e-6)


def test_word_order_changes_logits(rng):
    vocab = build_vocab(TRANSCRIPTS)
    model = _model(vocab, rng)
    a = encode_classify(model, tokenize('great sad', vocab, 16))
    b = encode_classify(model, tokenize('sad great', vocab, 16))
    assert not np.allclose(a, b, rtol=0, atol=1e-12)


def test_score_text_is_log_posterior(rng):
    vocab = build_vocab(TRANSCRIPTS)
    model = _model(vocab, rng)
    scores = score_text(model, 'okay fine', vocab)
    assert scores.dtype == np.float64
    assert np.exp(scores).sum() == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_array_equal(scores, score_text(model, 'okay fine', vocab))


def test_finetune_deterministic_and_reloadable(tmp_path):
    vocab = build_vocab(TRANSCRIPTS)
    settings = TextSettings(epochs=3, batch_size=2, lr=1e-2)
    runs = []
    for _ in range(2):
        model = _model(vocab, np.random.default_rng(SEED))
        ckpt, history = finetune_text(model, TRANSCRIPTS, [1, 3, 0, 2], vocab, settings, seed=SEED)
        runs.append([h['loss'] for h in history])
    assert runs[0] == runs[1] and len(runs[0]) == 3
    back = load_text_model(ckpt)
    np.testing.assert_array_equal(score_text(back, 'sad day', vocab), score_text(model, 'sad day', vocab))


def test_finetune_rejects_bad_input(rng):
    vocab = build_vocab(TRANSCRIPTS)
    model = _model(vocab, rng)
    settings = TextSettings(epochs=1)
    with pytest.raises(ManifestError):
        finetune_text(model, [], [], vocab, settings)
    with pytest.raises(ManifestError, match='no transcript'):
        finetune_text(model, ['great', None], [0, 1], vocab, settings)
    with pytest.raises(LabelError):
        finetune_text(model, ['great', 'sad'], [0, 4], vocab, settings)


def _write_lines(path, records):
    with open(path, 'w') as f:
        for record in records:
            f.write(json.dumps(record) + '\n')


def test_import_external_scores(tmp_path):
    path = str(tmp_path / 'text.jsonl')
    _write_lines(path, [{'id': 'a', 'modality': 'text', 'log_post': [-0.1, -2.0, -3.0, -4.0]},
                        {'id': 'b', 'modality': 'text', 'log_post': [-2.0, -0.1, -3.0, -4.0]},
                        {'id': 'c', 'modality': 'text', 'log_post': [-3.0, -2.0, -0.1, -4.0]}])
    scores = import_external_scores(path)
    assert scores.ids == ['a', 'b', 'c'] and scores.modality == 'text'


def test_import_external_scores_rejects_bad_files(tmp_path):
    wide = str(tmp_path / 'wide.jsonl')
    _write_lines(wide, [{'id': 'a', 'modality': 'text', 'log_post': [-1.0] * 5}])
    with pytest.raises(ScoreSetError, match='line 1'):
        import_external_scores(wide)
    dup = str(tmp_path / 'dup.jsonl')
    _write_lines(dup, [{'id': 'a', 'modality': 'text', 'log_post': [-1.0] * 4},
                       {'id': 'a', 'modality': 'text', 'log_post': [-1.0] * 4}])
    with pytest.raises(ScoreSetError, match='line 2.*duplicate'):
        import_external_scores(dup)
    speech = str(tmp_path / 'speech.jsonl')
    _write_lines(speech, [{'id': 'a', 'modality': 'speech', 'log_post': [-1.0] * 4}])
    with pytest.raises(ScoreSetError, match='modality'):
        import_external_scores(speech)


@pytest.mark.slow
@pytest.mark.timeout(900)
def test_text_model_overfits_keywords():
    spec = dict(n_sessions=5, speakers_per_session=2, segments_per_speaker=OVERFIT_SEGMENTS // 10,
                class_priors=[0.25] * 4, audio_snr=20.0, text_ambiguity=0.0, complementarity=0.0,
                min_duration=0.2, max_duration=0.3, sample_rate=16000)
    manifest, _ = generate_synthetic_corpus(SEED, spec)
    entries = list(manifest)
    transcripts = [e.transcript for e in entries]
    labels = [e.class_index for e in entries]
    vocab = build_vocab(transcripts)
    model = _model(vocab, np.random.default_rng(SEED), max_len=16)
    _, history = finetune_text(model, transcripts, labels, vocab, TextSettings(epochs=OVERFIT_EPOCHS, lr=3e-3),
                               seed=SEED)
    assert max(h['accuracy'] for h in history) >= OVERFIT_ACCURACY


def test_scoring_restores_training_mode(rng):
    vocab = build_vocab(TRANSCRIPTS)
    model = _model(vocab, rng)
    model.train()
    score_text(model, 'sad day', vocab)
    encode_classify(model, tokenize('sad day', vocab, 16))
    assert model.training and all(m.training for m in model.modules())
    model.eval()
    score_text(model, 'sad day', vocab)
    assert not model.training


EIGHT_TRANSCRIPTS = ['great great day', 'happy sunny day', 'sad day', 'so sad and tired',
                     'I hate mondays', 'hate this noise', 'okay fine', 'it is fine']


def test_full_batch_loss_never_increases(rng, float64):
    vocab = build_vocab(EIGHT_TRANSCRIPTS)
    model = _model(vocab, rng)
    settings = TextSettings(epochs=12, batch_size=len(EIGHT_TRANSCRIPTS), lr=3e-4)
    _, history = finetune_text(model, EIGHT_TRANSCRIPTS, [1, 1, 3, 3, 0, 0, 2, 2], vocab, settings, seed=SEED)
    losses = [h['loss'] for h in history]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]
