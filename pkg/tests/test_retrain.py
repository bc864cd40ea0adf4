"""
BGN vs BGN* 再訓練比較
"""

import pytest

from backend.genmod.retrain import RETRAIN_MODES, retrain_with_generated


@pytest.fixture
def quick_config(tiny_config):
    return tiny_config.evolve(max_epochs=1, latent_dim=4, gen_epochs=1, n_generated=6)


def test_augment_adds_generated_samples(synth_frame, quick_config):
    table = retrain_with_generated(quick_config, synth_frame, mode='augment', seeds=[0])
    assert list(table['model']) == ['BGN', 'BGN*']
    baseline, star = table['n_train']
    assert star == baseline + quick_config.n_generated
    assert (table['n_seeds'] == 1).all()
    assert table['rmse'].str.contains('±').all()


def test_impute_compares_against_mean_filling(synth_frame, quick_config):
    table = retrain_with_generated(quick_config, synth_frame, mode='impute', seeds=[0])
    assert list(table['model']) == ['BGN', 'BGN*']
    # 兩列用同一份遮蔽後的訓練電池
    assert table['n_train'].iloc[0] == table['n_train'].iloc[1]
    assert (table['rmse_mean'] >= 0).all()


def test_augment_with_external_csv(synth_frame, quick_config):
    extra = synth_frame[synth_frame['battery_id'] == 'B000'].assign(battery_id='synthetic-0000')
    table = retrain_with_generated(quick_config, synth_frame, mode='augment', extra=extra, seeds=[0])
    baseline, star = table['n_train']
    assert star == baseline + 47


def test_unknown_mode():
    assert RETRAIN_MODES == ('augment', 'impute')
    with pytest.raises(ValueError):
        retrain_with_generated(None, None, mode='distill')
