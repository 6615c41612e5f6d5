import json
import os

import pytest

from EmoFuse.cli import build_parser, main
from EmoFuse.fusion import read_scores, write_scores, ScoreSet
from config import *


@pytest.fixture
def config_file(tmp_path):
    path = str(tmp_path / 'small.json')
    with open(path, 'w') as f:
        json.dump(TEST_OVERRIDES, f)
    return path


def test_parser_defaults():
    args = build_parser().parse_args(['run'])
    assert args.preset == 'desk' and args.out == 'out' and args.config is None
    args = build_parser().parse_args(['--seed', '3', 'ablate', '--transfer', 'scratch'])
    assert args.seed == 3 and args.transfer == ['scratch']
    assert build_parser().parse_args(['transfer']).seeds == [1, 2, 3]


def test_bad_arguments_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(['--preset', 'huge', 'run'])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main([])


def test_synth_then_stats(tmp_path, config_file, capsys):
    out = str(tmp_path / 'out')
    assert main(['--config', config_file, '--out', out, 'synth']) == 0
    assert '36 segments' in capsys.readouterr().out
    assert main(['--config', config_file, '--out', out, 'stats']) == 0
    assert capsys.readouterr().out.splitlines()[-1].split() == ['total', '36']


def test_missing_input_exits_1(tmp_path, config_file, capsys):
    assert main(['--config', config_file, '--out', str(tmp_path), 'eval']) == 1
    err = capsys.readouterr().err
    assert err.startswith('emofuse: error:') and "run 'emofuse synth' first" in err


def test_invalid_config_exits_1(tmp_path, capsys):
    path = str(tmp_path / 'bad.json')
    with open(path, 'w') as f:
        json.dump({'speech': {'depth': 3}}, f)
    assert main(['--config', path, '--out', str(tmp_path), 'synth']) == 1
    assert "'speech.depth'" in capsys.readouterr().err


def test_augment_override_typo_exits_1(tmp_path, capsys):
    path = str(tmp_path / 'typo.json')
    with open(path, 'w') as f:
        json.dump({'augment': {'overrides': {'n_freq_mask': 3}}}, f)
    assert main(['--config', path, '--out', str(tmp_path), 'synth']) == 1
    assert "'augment.overrides.n_freq_mask'" in capsys.readouterr().err


def test_fuse_mismatch_exits_1_naming_ids(run_copy, config_file, capsys):
    internal = read_scores(os.path.join(run_copy, 'scores', 'fold0', 'text_test.jsonl'))
    kept = internal.ids[1:]
    path = os.path.join(run_copy, 'partial.jsonl')
    write_scores(path, internal.subset(kept))
    assert main(['--config', config_file, '--out', run_copy, 'fuse', '--text-scores', path]) == 1
    assert internal.ids[0] in capsys.readouterr().err


def test_eval_prints_table(run_copy, config_file, capsys):
    assert main(['--config', config_file, '--out', run_copy, 'eval']) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ['modality', 'WA', 'UA']
    assert [l.split()[0] for l in lines[1:]] == ['speech', 'text', 'fused_search', 'fused_equal', 'fused_fixed']
