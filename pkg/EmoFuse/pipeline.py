"""End-to-end experiment driver.

A :class:`Pipeline` owns a resolved configuration and an output directory.
Each ``cmd_*`` method is one stage of the workflow; stages communicate only
through files under the output directory::

    corpus/      manifest.jsonl, wav/
    features/    <segment id>.lms
    models/      speaker.ckpt, fold<k>/speech.ckpt, text.ckpt, vocab.txt
    scores/      fold<k>/{speech,text}_{test,holdout}.jsonl
    fusion/      fold<k>/fused_{search,equal,fixed}.jsonl, weight_search.json
    report/      report.json, class_statistics.txt, confusion tables

Every command also writes ``resolved_config_<command>.json`` and
``inputs_<command>.json`` (paths and SHA-256 digests of everything it read)
into its directory, e.g. ``models/inputs_train-speech.json``.
"""
import contextlib
import json
import logging
import os
from collections import OrderedDict

import numpy as np

from .augment import AugmentPolicy
from .checkpoint import save_checkpoint, load_checkpoint, file_digest
from .config import get_config, dump_config
from .dataset import (DatasetManifest, loso_folds, class_statistics, render_class_statistics,
                      generate_synthetic_corpus, generate_speaker_corpus)
from .defaults import *
from .errors import MissingInputError
from .frontend import FrontendConfig, extract_features, read_wav, write_wav, read_cache, write_cache
from .fusion import (FusionWeights, fuse, classify, search_weight, weight_report, equal_weight_fusion,
                     estimate_norm_stats, write_scores, read_scores, ScoreSet, weight_grid)
from .gradcheck import run_suite, format_table
from .metrics import FoldMetrics, aggregate, render_confusion, confusion_csv, confusion
from .speech import (TASK_SPEAKER, ResNetConfig, TransferMode, TrainSettings, build_model, swap_head, load_model,
                     model_checkpoint, pretrain_speaker_id, train_ser, score_segment)
from .tensor import get_default_dtype, set_default_dtype, default_dtype
from .text import (Vocabulary, TransformerConfig, TextSettings, build_vocab, build_text_model,
                   finetune_text, load_text_model, score_text)

logger = logging.getLogger(__name__)

FUSED_STRATEGIES = ('fused_search', 'fused_equal', 'fused_fixed')
REPORT_MODALITIES = ('speech', 'text') + FUSED_STRATEGIES
ABLATION_TRANSFER = (TRANSFER_SCRATCH, TRANSFER_LINEAR_PROBE, TRANSFER_FINE_TUNE)
ABLATION_AUGMENT = (POLICY_NONE, POLICY_CONSERVATIVE, POLICY_AGGRESSIVE)
ABLATION_POOLING = (POOL_STATS, POOL_MEAN)


def _dump_json(obj, path):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(obj, f, sort_keys=True, indent=2)
        f.write('\n')


def _read_json(path):
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def provenance_name(kind, command):
    """File name of a per-command record, e.g. ``inputs_train-speech.json``"""
    return '{}_{}.json'.format(kind, command)


class Pipeline(object):

    def __init__(self, config=None, out='out', **kwargs):
        """Experiment workspace. Usable as a context manager.

        Args:
            config (dict): resolved configuration, default the "desk" preset
            out (str): output directory

        Keyword Args:
            seed (int): overrides run.seed
            jobs (int): overrides run.jobs, caps feature-extraction threads
            verbose (bool): Verbose mode - Activates logging to console.

        """
        self.logger = None
        if kwargs.get('verbose', False):
            self.logger = self._init_log()

        self.config = get_config('desk') if config is None else config
        if kwargs.get('seed') is not None:
            self.config['run']['seed'] = int(kwargs['seed'])
        if kwargs.get('jobs') is not None:
            self.config['run']['jobs'] = int(kwargs['jobs'])
        self.out = out
        self.seed = self.config['run']['seed']
        self.jobs = max(1, self.config['run']['jobs'])
        self.frontend = FrontendConfig.from_dict(self.config['frontend'])
        self.policy = AugmentPolicy.from_dict(self.config['augment'])
        self.dtype = self.config['run']['dtype']
        self._previous_dtype = None

    def __enter__(self):
        self._previous_dtype = get_default_dtype()
        set_default_dtype(self.dtype)
        return self

    def __exit__(self, *args):
        if self._previous_dtype is not None:
            set_default_dtype(self._previous_dtype)
            self._previous_dtype = None

    #
    # Paths and bookkeeping
    #

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    def _require(self, path, command):
        if not os.path.exists(path):
            raise MissingInputError("missing input {}; run 'emofuse {}' first".format(path, command))
        return path

    @contextlib.contextmanager
    def _command(self, name, command):
        """Create the stage directory, run at the configured dtype, then record
        the config and consumed inputs under the command name.
        """
        directory = self.path(name)
        os.makedirs(directory, exist_ok=True)
        inputs = []
        self._info("%s: start", command)
        with default_dtype(self.dtype):
            yield directory, inputs
        dump_config(self.config, os.path.join(directory, provenance_name('resolved_config', command)))
        records = [{'path': os.path.relpath(p, self.out), 'sha256': file_digest(p)} for p in sorted(set(inputs))]
        _dump_json({'command': command, 'seed': self.seed, 'inputs': records},
                   os.path.join(directory, provenance_name('inputs', command)))
        self._info("%s: done", command)

    def manifest(self, inputs=None):
        path = self._require(self.path('corpus', 'manifest.jsonl'), 'synth')
        if inputs is not None:
            inputs.append(path)
        return DatasetManifest.load(path)

    def folds(self, manifest):
        return loso_folds(manifest, self.config['folds']['validation'])

    def holdout_ids(self, fold):
        """Hold-out ids for fusion; the training ids when the fold has no hold-out session."""
        if fold.validation_ids:
            return fold.validation_ids
        logger.warning("fold %d has no hold-out session; fusion statistics use training scores", fold.fold_index)
        return fold.train_ids

    def features(self, ids, inputs=None):
        specs = OrderedDict()
        for segment_id in ids:
            path = self._require(self.path('features', segment_id + '.lms'), 'features')
            if inputs is not None:
                inputs.append(path)
            specs[segment_id] = read_cache(path)
        return specs

    def speech_config(self, **changes):
        config = ResNetConfig.from_dict(self.config['speech'], n_mels=self.frontend.n_mels)
        return config.replace(**changes) if changes else config

    #
    # Stages
    #

    def cmd_synth(self):
        """Generate the synthetic corpus: manifest plus 16-bit WAV files."""
        with self._command('corpus', 'synth') as (directory, inputs):
            spec = dict(self.config['corpus'])
            manifest, waves = generate_synthetic_corpus(self.seed, spec)
            os.makedirs(os.path.join(directory, 'wav'), exist_ok=True)
            for entry in manifest:
                write_wav(os.path.join(directory, entry.wav), waves[entry.segment_id])
            manifest.save(os.path.join(directory, 'manifest.jsonl'))
        return manifest

    def cmd_features(self):
        """Normalized log-mel spectrograms for every manifest segment."""
        with self._command('features', 'features') as (directory, inputs):
            manifest = self.manifest(inputs)
            waves = []
            for entry in manifest:
                wav_path = self._require(self.path('corpus', entry.wav), 'synth')
                inputs.append(wav_path)
                waves.append(read_wav(wav_path, entry.segment_id, session=entry.session, speaker=entry.speaker))
            specs = extract_features(waves, self.frontend, jobs=self.jobs)
            for spec in specs:
                write_cache(os.path.join(directory, spec.segment_id + '.lms'), spec)
        return len(specs)

    def cmd_pretrain(self, seed=None):
        """Speaker-ID pretraining on a synthetic speaker corpus."""
        seed = self.seed if seed is None else seed
        with self._command('models', 'pretrain') as (directory, inputs):
            checkpoint = self._pretrain(seed)
            save_checkpoint(os.path.join(directory, 'speaker.ckpt'), checkpoint)
        return checkpoint

    def _pretrain(self, seed):
        section = self.config['speaker_corpus']
        waves, labels, names = generate_speaker_corpus(
            seed, section['n_speakers'], section['segments_per_speaker'], section['min_duration'],
            section['max_duration'], self.frontend.sample_rate)
        specs = extract_features(waves, self.frontend, jobs=self.jobs)
        model = build_model(self.speech_config(n_classes=len(names)), np.random.default_rng([seed, 10]))
        policy = self.policy if self.config['run']['augment_pretrain'] else None
        settings = TrainSettings.from_config(self.config, pretrain=True)
        checkpoint, _ = pretrain_speaker_id(model, list(zip(specs, labels)), settings,
                                            self.config['optim']['pretrain_lr'], policy, seed, names)
        return checkpoint

    def train_speech_fold(self, fold, mode=None, policy=None, pooling=None, speaker=None, seed=None, inputs=None):
        """Train the emotion model of one fold.

        Args:
            fold (FoldPlan): split to train on
            mode (TransferMode): default from the config
            policy (AugmentPolicy): default from the config
            pooling (str): override the configured frame pooling
            speaker: pretrained Checkpoint, default models/speaker.ckpt (unused for scratch)

        Returns:
            tuple: (SpeechModel, Checkpoint, history)
        """
        seed = self.seed if seed is None else seed
        mode = TransferMode.from_dict(self.config['transfer']) if mode is None else mode
        policy = self.policy if policy is None else policy
        manifest = self.manifest(inputs)
        labels = manifest.labels(fold.train_ids)
        specs = self.features(fold.train_ids, inputs)
        rng = np.random.default_rng([seed, 3, fold.fold_index])
        if mode.kind == TRANSFER_SCRATCH:
            changes = {'pooling': pooling} if pooling else {}
            model = build_model(self.speech_config(**changes), rng)
        else:
            if speaker is None:
                path = self._require(self.path('models', 'speaker.ckpt'), 'pretrain')
                if inputs is not None:
                    inputs.append(path)
                speaker = load_checkpoint(path)
            model = swap_head(speaker, N_EMOTIONS, rng, pooling)
        settings = TrainSettings.from_config(self.config)
        examples = [(specs[i], labels[i]) for i in fold.train_ids]
        checkpoint, history = train_ser(model, examples, mode, settings, policy, seed, fold.fold_index)
        return model, checkpoint, history

    def cmd_train_speech(self):
        """Emotion training of the speech model, one checkpoint per fold."""
        with self._command('models', 'train-speech') as (directory, inputs):
            manifest = self.manifest(inputs)
            for fold in self.folds(manifest):
                _, checkpoint, history = self.train_speech_fold(fold, inputs=inputs)
                fold_dir = os.path.join(directory, 'fold{}'.format(fold.fold_index))
                os.makedirs(fold_dir, exist_ok=True)
                save_checkpoint(os.path.join(fold_dir, 'speech.ckpt'), checkpoint)
                self._info("fold %d speech: final loss %.4f", fold.fold_index, history[-1]['loss'])

    def cmd_train_text(self):
        """Vocabulary and text classifier per fold."""
        with self._command('models', 'train-text') as (directory, inputs):
            manifest = self.manifest(inputs)
            settings = TextSettings.from_config(self.config)
            for fold in self.folds(manifest):
                transcripts = [manifest[i].transcript for i in fold.train_ids]
                labels = [manifest[i].class_index for i in fold.train_ids]
                vocab = build_vocab([t for t in transcripts if t], self.config['text']['min_freq'])
                config = TransformerConfig.from_dict(self.config['text'], len(vocab))
                model = build_text_model(config, np.random.default_rng([self.seed, 4, fold.fold_index]))
                checkpoint, history = finetune_text(model, transcripts, labels, vocab, settings, self.seed,
                                                    fold.fold_index)
                fold_dir = os.path.join(directory, 'fold{}'.format(fold.fold_index))
                os.makedirs(fold_dir, exist_ok=True)
                vocab.save(os.path.join(fold_dir, 'vocab.txt'))
                save_checkpoint(os.path.join(fold_dir, 'text.ckpt'), checkpoint)
                self._info("fold %d text: final loss %.4f", fold.fold_index, history[-1]['loss'])

    def cmd_score(self):
        """Full-length scoring of test and hold-out segments for both modalities."""
        with self._command('scores', 'score') as (directory, inputs):
            manifest = self.manifest(inputs)
            for fold in self.folds(manifest):
                fold_models = self.path('models', 'fold{}'.format(fold.fold_index))
                speech_path = self._require(os.path.join(fold_models, 'speech.ckpt'), 'train-speech')
                text_path = self._require(os.path.join(fold_models, 'text.ckpt'), 'train-text')
                vocab_path = self._require(os.path.join(fold_models, 'vocab.txt'), 'train-text')
                inputs.extend([speech_path, text_path, vocab_path])
                speech_model = load_model(speech_path)
                text_model = load_text_model(text_path)
                vocab = Vocabulary.load(vocab_path)
                fold_dir = os.path.join(directory, 'fold{}'.format(fold.fold_index))
                os.makedirs(fold_dir, exist_ok=True)
                for split, ids in (('test', fold.test_ids), ('holdout', self.holdout_ids(fold))):
                    specs = self.features(ids, inputs)
                    speech = ScoreSet('speech', N_EMOTIONS)
                    text = ScoreSet('text', N_EMOTIONS)
                    for i in ids:
                        speech.add(i, score_segment(speech_model, specs[i]))
                        text.add(i, score_text(text_model, manifest[i].transcript, vocab))
                    write_scores(os.path.join(fold_dir, 'speech_{}.jsonl'.format(split)), speech)
                    write_scores(os.path.join(fold_dir, 'text_{}.jsonl'.format(split)), text)

    def _load_scores(self, fold_index, modality, split, inputs, override=None):
        if override is not None:
            path = override
        else:
            path = self._require(self.path('scores', 'fold{}'.format(fold_index),
                                           '{}_{}.jsonl'.format(modality, split)), 'score')
        inputs.append(path)
        return read_scores(path, modality, N_EMOTIONS)

    def cmd_fuse(self, text_scores=None):
        """Weight search, equal-weight z-norm fusion and fixed-weight fusion per fold.

        Args:
            text_scores (str): optional external text ScoreSet covering the test
                segments of every fold, replacing the internal text scores there
        """
        section = self.config['fusion']
        with self._command('fusion', 'fuse') as (directory, inputs):
            manifest = self.manifest(inputs)
            for fold in self.folds(manifest):
                k = fold.fold_index
                speech_test = self._load_scores(k, 'speech', 'test', inputs)
                speech_hold = self._load_scores(k, 'speech', 'holdout', inputs)
                text_hold = self._load_scores(k, 'text', 'holdout', inputs)
                if text_scores is not None:
                    external = self._load_scores(k, 'text', 'test', inputs, override=text_scores)
                    text_test = external.subset([i for i in fold.test_ids if i in external])
                else:
                    text_test = self._load_scores(k, 'text', 'test', inputs)
                grid = weight_grid(section['grid_step'])
                best, uas = search_weight(speech_hold, text_hold, manifest.labels(speech_hold.ids), grid)
                fused = OrderedDict([
                    ('fused_search', fuse(speech_test, text_test, FusionWeights(best))),
                    ('fused_equal', equal_weight_fusion(speech_test, text_test, (speech_hold, text_hold),
                                                        section['norm_mode'])),
                    ('fused_fixed', fuse(speech_test, text_test, FusionWeights(section['w1']))),
                ])
                fold_dir = os.path.join(directory, 'fold{}'.format(k))
                os.makedirs(fold_dir, exist_ok=True)
                for name, scores in fused.items():
                    write_scores(os.path.join(fold_dir, name + '.jsonl'), scores)
                _dump_json(weight_report(grid, uas, best), os.path.join(fold_dir, 'weight_search.json'))
                stats = [estimate_norm_stats(s, section['norm_mode']).to_dict() for s in (speech_hold, text_hold)]
                _dump_json(stats, os.path.join(fold_dir, 'norm_stats.json'))

    def cmd_eval(self):
        """WA, UA and confusion matrices per fold and modality, plus fold means."""
        with self._command('report', 'eval') as (directory, inputs):
            manifest = self.manifest(inputs)
            per_modality = OrderedDict((m, []) for m in REPORT_MODALITIES)
            weights = OrderedDict()
            for fold in self.folds(manifest):
                k = fold.fold_index
                labels = manifest.labels(fold.test_ids)
                for modality in REPORT_MODALITIES:
                    if modality in FUSED_STRATEGIES:
                        path = self._require(self.path('fusion', 'fold{}'.format(k), modality + '.jsonl'), 'fuse')
                        inputs.append(path)
                        scores = read_scores(path, 'fused', N_EMOTIONS)
                    else:
                        scores = self._load_scores(k, modality, 'test', inputs)
                    preds = classify(scores)
                    cm = confusion(preds, labels)
                    per_modality[modality].append(FoldMetrics(k, fold.test_session, cm))
                    stem = os.path.join(directory, 'confusion_fold{}_{}'.format(k, modality))
                    with open(stem + '.txt', 'w', encoding='utf-8') as f:
                        f.write(render_confusion(cm))
                        f.write('\n')
                        f.write(render_confusion(cm, percent=True))
                    with open(stem + '.csv', 'w', encoding='utf-8') as f:
                        f.write(confusion_csv(cm))
                search_path = self._require(self.path('fusion', 'fold{}'.format(k), 'weight_search.json'), 'fuse')
                inputs.append(search_path)
                weights['fold{}'.format(k)] = _read_json(search_path)['best_w1']
            report = OrderedDict()
            report['class_statistics'] = class_statistics(manifest)
            report['best_w1'] = weights
            report['modalities'] = OrderedDict((m, aggregate(f).to_dict()) for m, f in per_modality.items())
            _dump_json(report, os.path.join(directory, 'report.json'))
        return report

    def cmd_stats(self):
        """Class statistics table of the corpus."""
        with self._command('report', 'stats') as (directory, inputs):
            counts = class_statistics(self.manifest(inputs))
            with open(os.path.join(directory, 'class_statistics.txt'), 'w', encoding='utf-8') as f:
                f.write(render_class_statistics(counts))
        return counts

    def cmd_gradcheck(self, seeds=10):
        """Finite-difference suite; returns the result rows and writes the table."""
        with self._command('gradcheck', 'gradcheck') as (directory, inputs):
            rows = run_suite(seeds)
            with open(os.path.join(directory, 'gradcheck.txt'), 'w', encoding='utf-8') as f:
                f.write(format_table(rows) + '\n')
        return rows

    def cmd_run(self):
        """All stages in order: synth, features, pretrain, train x2, score, fuse, eval."""
        self.cmd_synth()
        self.cmd_features()
        if TransferMode.from_dict(self.config['transfer']).kind != TRANSFER_SCRATCH:
            self.cmd_pretrain()
        self.cmd_train_speech()
        self.cmd_train_text()
        self.cmd_score()
        self.cmd_fuse()
        return self.cmd_eval()

    #
    # Experiments
    #

    def _speech_ua(self, manifest, folds, **train_args):
        results = []
        for fold in folds:
            model, _, _ = self.train_speech_fold(fold, **train_args)
            specs = self.features(fold.test_ids)
            preds = OrderedDict((i, int(np.argmax(score_segment(model, specs[i])))) for i in fold.test_ids)
            cm = confusion(preds, manifest.labels(fold.test_ids))
            results.append(FoldMetrics(fold.fold_index, fold.test_session, cm))
        return aggregate(results)

    def run_ablation(self, transfer=ABLATION_TRANSFER, augment=ABLATION_AUGMENT, pooling=ABLATION_POOLING):
        """Speech-model LOSO results over a grid of transfer, augmentation and pooling settings.

        Returns:
            list: one dict per condition with mean WA and UA
        """
        with self._command('ablation', 'ablate') as (directory, inputs):
            manifest = self.manifest(inputs)
            folds = self.folds(manifest)
            base = self.config['transfer']
            rows = []
            for kind in transfer:
                mode = TransferMode(kind, base['head_lr'], base['backbone_lr'])
                for policy_name in augment:
                    policy = AugmentPolicy.preset(policy_name)
                    for pool in pooling:
                        report = self._speech_ua(manifest, folds, mode=mode, policy=policy, pooling=pool,
                                                 inputs=inputs)
                        rows.append(OrderedDict([('transfer', kind), ('augment', policy_name), ('pooling', pool),
                                                 ('mean_wa', round(report.mean_wa, 6)),
                                                 ('mean_ua', round(report.mean_ua, 6))]))
                        self._info("ablation %s/%s/%s: UA %.4f", kind, policy_name, pool, report.mean_ua)
            _dump_json(rows, os.path.join(directory, 'ablation.json'))
            with open(os.path.join(directory, 'ablation.txt'), 'w', encoding='utf-8') as f:
                f.write(format_ablation(rows))
        return rows

    def cmd_ablate(self, transfer=ABLATION_TRANSFER, augment=ABLATION_AUGMENT, pooling=ABLATION_POOLING):
        """Run the ablation grid and return its text table."""
        return format_ablation(self.run_ablation(transfer, augment, pooling))

    def run_transfer_mirror(self, seeds=(1, 2, 3)):
        """Linear-probe UA on a speaker-pretrained backbone versus a random one.

        Returns:
            dict: per-seed UAs, their means, the margin and whether it is positive
        """
        with self._command('transfer', 'transfer') as (directory, inputs):
            manifest = self.manifest(inputs)
            folds = self.folds(manifest)
            mode = TransferMode(TRANSFER_LINEAR_PROBE, self.config['transfer']['head_lr'], 0.0)
            pretrained, random = [], []
            for seed in seeds:
                speaker = self._pretrain(seed)
                random_init = build_model(self.speech_config(), np.random.default_rng([seed, 11]))
                random_ckpt = model_checkpoint(random_init, TASK_SPEAKER)
                pretrained.append(self._speech_ua(manifest, folds, mode=mode, speaker=speaker, seed=seed,
                                                  inputs=inputs).mean_ua)
                random.append(self._speech_ua(manifest, folds, mode=mode, speaker=random_ckpt, seed=seed,
                                              inputs=inputs).mean_ua)
            margin = float(np.mean(pretrained) - np.mean(random))
            report = OrderedDict([
                ('seeds', list(seeds)),
                ('pretrained_ua', [round(u, 6) for u in pretrained]),
                ('random_ua', [round(u, 6) for u in random]),
                ('mean_pretrained_ua', round(float(np.mean(pretrained)), 6)),
                ('mean_random_ua', round(float(np.mean(random)), 6)),
                ('margin', round(margin, 6)),
                ('pretrained_better', margin > 0),
            ])
            _dump_json(report, os.path.join(directory, 'transfer.json'))
            self._info("transfer mirror: margin %.4f", margin)
        return report

    #
    # Logging
    #

    def _init_log(self):
        logger = logging.getLogger('EmoFuse')
        handler = logging.StreamHandler()
        handler.setLevel(logging.DEBUG)
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        handler.setFormatter(formatter)
        logger.addHandler(handler)
        logger.setLevel(logging.DEBUG)
        logger.propagate = False
        return logger

    def _debug(self, *args):
        if self.logger is not None:
            self.logger.debug(*args)

    def _info(self, *args):
        if self.logger is not None:
            self.logger.info(*args)

    def _error(self, *args):
        if self.logger is not None:
            self.logger.error(*args)


def format_ablation(rows):
    """Aligned text table of ablation rows"""
    lines = ['{:<14}{:<14}{:<11}{:>9}{:>9}'.format('transfer', 'augment', 'pooling', 'WA', 'UA')]
    for r in rows:
        lines.append('{:<14}{:<14}{:<11}{:>9.4f}{:>9.4f}'.format(
            r['transfer'], r['augment'], r['pooling'], r['mean_wa'], r['mean_ua']))
    return '\n'.join(lines) + '\n'
