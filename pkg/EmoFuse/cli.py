"""``emofuse`` command-line entry point.

Usage::

    emofuse [--config PATH] [--preset {paper,desk}] [--seed N] [--jobs N] [--out DIR] COMMAND

Set ``EMOFUSE_LOG`` to DEBUG, INFO, WARNING or ERROR for log output on stderr.
"""
import argparse
import logging
import os
import sys

from .config import PRESETS, load_config
from .errors import EmoFuseError
from .pipeline import Pipeline, ABLATION_TRANSFER, ABLATION_AUGMENT, ABLATION_POOLING
from .gradcheck import format_table
from .dataset import render_class_statistics

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')

COMMANDS = ('synth', 'features', 'pretrain', 'train-speech', 'train-text', 'score', 'fuse', 'eval',
            'gradcheck', 'stats', 'ablate', 'transfer', 'run')


def build_parser():
    parser = argparse.ArgumentParser(prog='emofuse', description='Multimodal speech and text emotion recognition')
    parser.add_argument('--config', metavar='PATH', help='JSON config merged over the preset')
    parser.add_argument('--preset', choices=PRESETS, default='desk', help='base hyperparameter preset')
    parser.add_argument('--seed', type=int, help='run seed, overrides run.seed')
    parser.add_argument('--jobs', type=int, help='worker threads for feature extraction')
    parser.add_argument('--out', metavar='DIR', default='out', help='output directory (default: out)')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    sub.add_parser('synth', help='generate the synthetic corpus')
    sub.add_parser('features', help='compute normalized log-mel spectrograms')
    sub.add_parser('pretrain', help='speaker-identification pretraining')
    sub.add_parser('train-speech', help='emotion training of the speech model per fold')
    sub.add_parser('train-text', help='text classifier fine-tuning per fold')
    sub.add_parser('score', help='score test and hold-out segments')
    fuse = sub.add_parser('fuse', help='late fusion of speech and text scores')
    fuse.add_argument('--text-scores', metavar='PATH', help='external text ScoreSet (JSONL) for the test segments')
    sub.add_parser('eval', help='WA, UA and confusion matrices')
    gradcheck = sub.add_parser('gradcheck', help='finite-difference gradient suite')
    gradcheck.add_argument('--seeds', type=int, default=10)
    sub.add_parser('stats', help='class statistics of the corpus')
    ablate = sub.add_parser('ablate', help='transfer x augmentation x pooling grid')
    ablate.add_argument('--transfer', nargs='+', choices=ABLATION_TRANSFER, default=list(ABLATION_TRANSFER))
    ablate.add_argument('--augment', nargs='+', choices=ABLATION_AUGMENT, default=list(ABLATION_AUGMENT))
    ablate.add_argument('--pooling', nargs='+', choices=ABLATION_POOLING, default=list(ABLATION_POOLING))
    transfer = sub.add_parser('transfer', help='pretrained versus random backbone under a linear probe')
    transfer.add_argument('--seeds', type=int, nargs='+', default=[1, 2, 3])
    sub.add_parser('run', help='all stages from synth to eval')
    return parser


def _log_level():
    name = os.environ.get('EMOFUSE_LOG', 'WARNING').upper()
    return getattr(logging, name) if name in LOG_LEVELS else logging.WARNING


def dispatch(pipeline, args):
    """Run one command; returns printable text or None."""
    command = args.command
    if command == 'synth':
        manifest = pipeline.cmd_synth()
        return "{} segments written to {}".format(len(manifest), pipeline.path('corpus'))
    if command == 'features':
        return "{} spectrograms written to {}".format(pipeline.cmd_features(), pipeline.path('features'))
    if command == 'pretrain':
        pipeline.cmd_pretrain()
    elif command == 'train-speech':
        pipeline.cmd_train_speech()
    elif command == 'train-text':
        pipeline.cmd_train_text()
    elif command == 'score':
        pipeline.cmd_score()
    elif command == 'fuse':
        pipeline.cmd_fuse(args.text_scores)
    elif command in ('eval', 'run'):
        report = pipeline.cmd_eval() if command == 'eval' else pipeline.cmd_run()
        lines = ['{:<14}{:>9}{:>9}'.format('modality', 'WA', 'UA')]
        for modality, result in report['modalities'].items():
            lines.append('{:<14}{:>9.4f}{:>9.4f}'.format(modality, result['mean_wa'], result['mean_ua']))
        return '\n'.join(lines)
    elif command == 'gradcheck':
        rows = pipeline.cmd_gradcheck(args.seeds)
        if not all(r['passed'] for r in rows):
            raise GradientCheckFailed(format_table(rows))
        return format_table(rows)
    elif command == 'stats':
        return render_class_statistics(pipeline.cmd_stats()).rstrip()
    elif command == 'ablate':
        return pipeline.cmd_ablate(args.transfer, args.augment, args.pooling).rstrip()
    elif command == 'transfer':
        report = pipeline.run_transfer_mirror(args.seeds)
        return "pretrained UA {:.4f}, random UA {:.4f}, margin {:+.4f}".format(
            report['mean_pretrained_ua'], report['mean_random_ua'], report['margin'])
    return None


class GradientCheckFailed(EmoFuseError):
    pass


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=_log_level(), format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    try:
        config = load_config(args.config, args.preset)
        with Pipeline(config, args.out, seed=args.seed, jobs=args.jobs) as pipeline:
            text = dispatch(pipeline, args)
    except GradientCheckFailed as e:
        print(str(e), file=sys.stdout)
        print("emofuse: gradient check failed", file=sys.stderr)
        return 1
    except (EmoFuseError, OSError) as e:
        print("emofuse: error: {}".format(e), file=sys.stderr)
        return 1
    if text:
        print(text)
    return 0


if __name__ == '__main__':
    sys.exit(main())
