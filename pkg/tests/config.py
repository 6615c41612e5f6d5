# Shared small-scale settings for the test suite

SEED = 7

# Front-end sized so a one-second segment has 98 frames of 24 mel bins
TEST_N_MELS = 24
TEST_CHUNK_SET = [32, 48]

TEST_OVERRIDES = {
    'frontend': {'n_mels': TEST_N_MELS, 'chunk_set': TEST_CHUNK_SET},
    'augment': {'policy': 'conservative', 'copies': 1},
    'speech': {'first_block_channels': 4, 'embedding_dim': 16},
    'transfer': {'kind': 'linear_probe', 'head_lr': 0.05},
    'optim': {'batch_size': 16, 'epochs': 3, 'pretrain_epochs': 3, 'pretrain_lr': 0.05},
    'text': {'n_layers': 1, 'n_heads': 2, 'hidden_dim': 16, 'max_len': 16, 'epochs': 4, 'batch_size': 16,
             'lr': 0.005},
    'corpus': {'n_sessions': 3, 'speakers_per_session': 2, 'segments_per_speaker': 6,
               'min_duration': 0.6, 'max_duration': 0.9},
    'speaker_corpus': {'n_speakers': 3, 'segments_per_speaker': 6, 'min_duration': 0.6, 'max_duration': 0.9},
    'run': {'seed': SEED, 'dtype': 'float64'},
}

# Acceptance-scale settings, used by tests marked slow
OVERFIT_SEGMENTS = 200
OVERFIT_EPOCHS = 50
OVERFIT_ACCURACY = 0.95
PRETRAIN_ACCURACY = 0.90
TRANSFER_SEEDS = (1, 2, 3)
