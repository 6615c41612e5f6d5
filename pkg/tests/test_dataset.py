import json

import numpy as np
import pytest

from EmoFuse import DatasetManifest, loso_folds, LabelError, ManifestError, ConfigError
from EmoFuse.dataset import (ManifestEntry, map_labels, class_statistics, render_class_statistics,
                             generate_synthetic_corpus, generate_speaker_corpus, KEYWORDS)
from config import *


def _corpus_spec(**changes):
    spec = dict(n_sessions=5, speakers_per_session=2, segments_per_speaker=4, class_priors=[0.2, 0.3, 0.3, 0.2],
                audio_snr=10.0, text_ambiguity=0.1, complementarity=0.3, min_duration=0.05, max_duration=0.1,
                sample_rate=16000)
    spec.update(changes)
    return spec


def _entries(sessions=3, per_session=4):
    return [ManifestEntry('s{}_{}'.format(s, k), 'wav/s{}_{}.wav'.format(s, k), 'hello', 'neutral', s, 'spk{}'.format(s))
            for s in range(1, sessions + 1) for k in range(per_session)]


def test_map_labels():
    assert map_labels('excited') == 1
    assert map_labels('happy') == 1
    assert map_labels('angry') == 0
    assert [map_labels(l) for l in ('neutral', 'sad')] == [2, 3]
    with pytest.raises(LabelError, match='frustrated'):
        map_labels('frustrated')


def test_five_session_folds():
    manifest, _ = generate_synthetic_corpus(SEED, _corpus_spec())
    folds = loso_folds(manifest)
    assert len(folds) == 5
    assert len({f.test_session for f in folds}) == 5
    for fold in folds:
        train, val, test = set(fold.train_ids), set(fold.validation_ids), set(fold.test_ids)
        assert not (train & val or train & test or val & test)
        assert train | val | test == set(manifest.ids)
        assert test == set(manifest.session_ids(fold.test_session))
        assert val and fold.validation_session != fold.test_session
        test_speakers = {manifest[i].speaker for i in test}
        assert not test_speakers & {manifest[i].speaker for i in train | val}


def test_folds_partition_the_corpus():
    manifest = DatasetManifest(_entries(3))
    folds = loso_folds(manifest)
    assert len(folds) == 3
    tested = [i for f in folds for i in f.test_ids]
    assert sorted(tested) == sorted(manifest.ids)


def test_folds_need_two_sessions():
    with pytest.raises(ManifestError, match='at least 2 sessions'):
        loso_folds(DatasetManifest(_entries(1)))
    with pytest.raises(ConfigError):
        loso_folds(DatasetManifest(_entries(2)), validation='random')


def test_two_sessions_have_no_holdout():
    folds = loso_folds(DatasetManifest(_entries(2)))
    assert all(not f.validation_ids for f in folds)
    assert all(len(f.train_ids) == 4 for f in folds)


def test_manifest_validation():
    entries = _entries(2)
    with pytest.raises(ManifestError, match='duplicate'):
        DatasetManifest(entries + [entries[0]])
    with pytest.raises(ManifestError, match='spk1'):
        DatasetManifest(entries + [ManifestEntry('x', 'wav/x.wav', None, 'sad', 2, 'spk1')])
    with pytest.raises(LabelError):
        DatasetManifest([ManifestEntry('x', 'wav/x.wav', None, 'bored', 1, 'a')])
    with pytest.raises(ManifestError, match='session'):
        DatasetManifest([ManifestEntry('x', 'wav/x.wav', None, 'sad', 0, 'a')])


def test_manifest_save_load(tmp_path):
    manifest = DatasetManifest(_entries(2))
    path = str(tmp_path / 'manifest.jsonl')
    manifest.save(path)
    back = DatasetManifest.load(path)
    assert back.ids == manifest.ids and back.digest() == manifest.digest()
    with open(path, 'a') as f:
        f.write('{"id": "broken"}\n')
    with pytest.raises(ManifestError, match='line 9'):
        DatasetManifest.load(path)


def test_manifest_record_format():
    entry = ManifestEntry('a', 'wav/a.wav', 'hi there', 'happy', 3, 'spk')
    assert json.loads(str(entry)) == {'id': 'a', 'wav': 'wav/a.wav', 'transcript': 'hi there', 'label': 'happy',
                                      'session': 3, 'speaker': 'spk'}
    assert entry.class_index == 1


def test_class_statistics():
    entries = _entries(1, 2) + [ManifestEntry('x', 'wav/x.wav', None, 'excited', 2, 'b'),
                                ManifestEntry('y', 'wav/y.wav', None, 'happy', 2, 'b')]
    counts = class_statistics(DatasetManifest(entries))
    assert list(counts.items()) == [('angry', 0), ('happy_excited', 2), ('neutral', 2), ('sad', 0), ('total', 4)]
    assert render_class_statistics(counts).splitlines()[-1].split() == ['total', '4']


def test_corpus_is_deterministic():
    a, waves_a = generate_synthetic_corpus(SEED, _corpus_spec())
    b, waves_b = generate_synthetic_corpus(SEED, _corpus_spec())
    assert a.digest() == b.digest()
    assert all(waves_a[i].samples.tobytes() == waves_b[i].samples.tobytes() for i in a.ids)
    c, _ = generate_synthetic_corpus(SEED + 1, _corpus_spec())
    assert c.digest() != a.digest()


def test_corpus_layout():
    manifest, waves = generate_synthetic_corpus(SEED, _corpus_spec())
    assert len(manifest) == 5 * 2 * 4 == len(waves)
    assert manifest.sessions == [1, 2, 3, 4, 5]
    for entry in manifest:
        wave = waves[entry.segment_id]
        assert 0.05 * 16000 <= len(wave.samples) <= 0.1 * 16000
        assert np.max(np.abs(wave.samples)) <= 0.9 + 1e-12
        assert entry.transcript


def test_class_priors_respected():
    priors = [0.2, 0.3, 0.3, 0.2]
    manifest, _ = generate_synthetic_corpus(SEED, _corpus_spec(segments_per_speaker=100, min_duration=0.01,
                                                                max_duration=0.02))
    counts = np.bincount([e.class_index for e in manifest], minlength=4)
    assert counts.sum() == 1000
    for count, p in zip(counts, priors):
        assert abs(count - 1000 * p) <= 4 * np.sqrt(1000 * p * (1 - p))


def test_unambiguous_text_is_keyword_separable():
    manifest, _ = generate_synthetic_corpus(SEED, _corpus_spec(segments_per_speaker=20, text_ambiguity=0.0,
                                                                complementarity=0.0))
    correct = 0
    for entry in manifest:
        words = entry.transcript.split()
        votes = [sum(w in KEYWORDS[c] for w in words) for c in range(4)]
        correct += int(np.argmax(votes)) == entry.class_index
    assert correct / len(manifest) >= 0.95


def test_corpus_spec_validation():
    with pytest.raises(ConfigError, match='class_priors'):
        generate_synthetic_corpus(SEED, _corpus_spec(class_priors=[0.5, 0.5, 0.5, 0.5]))
    with pytest.raises(ConfigError, match='complementarity'):
        generate_synthetic_corpus(SEED, _corpus_spec(complementarity=1.5))
    with pytest.raises(ConfigError, match='durations'):
        generate_synthetic_corpus(SEED, _corpus_spec(min_duration=0.2, max_duration=0.1))
    with pytest.raises(ConfigError):
        generate_speaker_corpus(SEED, n_speakers=1)


def test_speaker_corpus():
    waves, labels, names = generate_speaker_corpus(SEED, 3, 2, 0.05, 0.1)
    assert names == ['spk00', 'spk01', 'spk02']
    assert labels == [0, 0, 1, 1, 2, 2]
    assert [w.speaker for w in waves] == ['spk00', 'spk00', 'spk01', 'spk01', 'spk02', 'spk02']
