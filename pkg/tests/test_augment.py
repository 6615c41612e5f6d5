import numpy as np
import pytest

from EmoFuse import AugmentPolicy, ConfigError, augment_batch
from EmoFuse.augment import apply_masks, draw_masks
from config import *
from helpers import random_spec


def test_identity_policy_leaves_input(rng):
    spec = random_spec(rng, 120)
    policy = AugmentPolicy.preset('none')
    assert policy.is_identity
    np.testing.assert_array_equal(apply_masks(spec, policy, rng).data, spec.data)


def test_conservative_masked_cell_bound():
    policy = AugmentPolicy.preset('conservative')
    bound = 2 * 8 * 300 + 2 * 15 * 128
    for seed in range(50):
        spec = random_spec(np.random.default_rng(seed), 300, n_mels=128)
        out = apply_masks(spec, policy, np.random.default_rng([seed, 1]))
        assert int((out.data != spec.data).sum()) <= bound


@pytest.mark.parametrize('name', ['conservative', 'aggressive'])
def test_stripe_counts_and_extents_over_many_seeds(name):
    policy = AugmentPolicy.preset(name)
    n_frames, n_mels = 300, 128
    max_t = policy.max_time_width(n_frames)
    for seed in range(1000):
        freq, time = draw_masks(n_frames, n_mels, policy, np.random.default_rng(seed))
        assert len(freq) == policy.n_freq_masks
        assert len(time) == policy.n_time_masks
        for f0, f in freq:
            assert 0 <= f <= policy.max_freq_width
            assert 0 <= f0 and f0 + f <= n_mels
        for t0, t in time:
            assert 0 <= t <= max_t
            assert 0 <= t0 and t0 + t <= n_frames


def test_masks_are_exact_and_complement_untouched(rng):
    policy = AugmentPolicy('custom', 2, 5, 2, 0.1, mask_value=-7.5)
    spec = random_spec(rng, 200)
    freq, time = draw_masks(200, TEST_N_MELS, policy, np.random.default_rng(11))
    out = apply_masks(spec, policy, np.random.default_rng(11))
    masked = np.zeros(spec.data.shape, dtype=bool)
    for f0, f in freq:
        assert f <= 5
        masked[:, f0:f0 + f] = True
    for t0, t in time:
        assert t <= 20
        masked[t0:t0 + t, :] = True
    assert np.all(out.data[masked] == -7.5)
    np.testing.assert_array_equal(out.data[~masked], spec.data[~masked])


def test_mask_placement_deterministic():
    policy = AugmentPolicy.preset('aggressive')
    a = draw_masks(300, 128, policy, np.random.default_rng(SEED))
    b = draw_masks(300, 128, policy, np.random.default_rng(SEED))
    assert a == b


def test_augment_batch_counts(rng):
    specs = [random_spec(rng, 50 + i, segment_id=str(i)) for i in range(10)]
    out = augment_batch(specs, AugmentPolicy.preset('conservative'), copies=2, rng=rng)
    assert len(out) == 30
    for i, spec in enumerate(specs):
        assert out[3 * i] is spec
        assert all(o.data.shape == spec.data.shape for o in out[3 * i:3 * i + 3])


def test_augment_batch_no_copies(rng):
    specs = [random_spec(rng, 40)]
    assert augment_batch(specs, AugmentPolicy.preset('aggressive'), copies=0) == specs
    with pytest.raises(ValueError):
        augment_batch(specs, AugmentPolicy.preset('aggressive'), copies=-1)


def test_policy_from_config_section():
    policy = AugmentPolicy.from_dict({'policy': 'conservative', 'copies': 2, 'overrides': {'max_freq_width': 4}})
    assert policy.name == 'custom'
    assert (policy.n_freq_masks, policy.max_freq_width) == (2, 4)
    with pytest.raises(ConfigError):
        AugmentPolicy.preset('wild')
    with pytest.raises(ConfigError):
        AugmentPolicy(max_time_frac=1.5)


def test_from_dict_rejects_unknown_override_fields():
    with pytest.raises(ConfigError, match="'augment.overrides.n_freq_mask'"):
        AugmentPolicy.from_dict({'policy': 'conservative', 'overrides': {'n_freq_mask': 3}})
