"""
VAE 合成資料的測試
"""

import math

import numpy as np
import pytest

from backend.autodiff.gradcheck import grad_check
from backend.autodiff.rng import RngStreams
from backend.autodiff.tensor import Tensor
from backend.data_sources.battery_csv import load_csv, write_csv
from backend.etl.windowing import SampleSet, fit_normalization, make_windows, stack_samples
from backend.genmod.vae import (
    BatteryVae,
    adjacency_bce,
    generated_frame,
    kl_divergence,
    train_vae,
    vae_elbo,
    vae_generate,
)


@pytest.fixture
def vae_config(tiny_config):
    return tiny_config.evolve(latent_dim=4, gen_epochs=1)


@pytest.fixture
def samples(vae_config):
    rng = np.random.default_rng(3)
    n = 10
    return SampleSet(
        features=rng.uniform(0.1, 0.9, size=(n, vae_config.seq_len, 6, vae_config.window)),
        targets=rng.uniform(0.0, 1.0, size=n),
        battery_ids=np.asarray(['B1'] * n, dtype=object),
        end_indices=np.arange(n, dtype=np.int64),
    )


# ========== 損失項 ==========

def test_kl_is_zero_at_standard_normal():
    assert kl_divergence(Tensor(np.zeros((3, 4))), Tensor(np.ones((3, 4)))).item() == pytest.approx(0.0, abs=1e-12)


def test_kl_of_unit_shift():
    assert kl_divergence(Tensor([[1.0]]), Tensor([[1.0]])).item() == pytest.approx(0.5)


def test_kl_is_nonnegative(rng):
    mu = Tensor(rng.normal(size=(5, 3)))
    sigma = Tensor(rng.uniform(0.1, 3.0, size=(5, 3)))
    assert kl_divergence(mu, sigma).item() >= 0


def test_kl_rejects_nonpositive_sigma():
    with pytest.raises(ValueError):
        kl_divergence(Tensor([[0.0]]), Tensor([[0.0]]))


def test_adjacency_bce_at_half():
    A = np.full((2, 3, 4, 4), 0.5)
    assert adjacency_bce(A, Tensor(A)).item() == pytest.approx(math.log(2.0))


def test_elbo_with_perfect_reconstruction():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(2, 3, 6, 8))
    A = np.full((2, 3, 6, 6), 0.5)
    loss = vae_elbo(x, Tensor(x), Tensor(np.zeros((2, 4))), Tensor(np.ones((2, 4))), A, Tensor(A))
    assert loss.reconstruction == pytest.approx(0.0, abs=1e-12)
    assert loss.kl == pytest.approx(0.0, abs=1e-12)
    assert loss.item() == pytest.approx(math.log(2.0))
    assert loss.label == 0.0


# ========== 編碼 / 解碼 ==========

def test_eval_encoding_uses_the_mean(vae_config, samples):
    vae = BatteryVae.create(vae_config, seed=0)
    latent, adjacency = vae.encode(samples.features[:3])
    np.testing.assert_array_equal(latent.z.data, latent.mu.data)
    assert adjacency.shape == (3, vae_config.seq_len, 6, 6)


def test_reparameterization_with_given_noise(vae_config, samples):
    vae = BatteryVae.create(vae_config, seed=0)
    eps = np.random.default_rng(1).standard_normal((3, 4))
    latent, _ = vae.encode(samples.features[:3], epsilon=eps)
    np.testing.assert_allclose(latent.z.data, latent.mu.data + latent.sigma.data * eps)
    assert (latent.sigma.data > 0).all()


def test_decode_shapes_and_range(vae_config):
    vae = BatteryVae.create(vae_config, seed=0)
    recon = vae.decode(np.random.default_rng(2).standard_normal((5, 4)))
    assert recon.features.shape == (5, vae_config.seq_len, 6, vae_config.window)
    assert recon.targets.shape == (5,)
    assert ((recon.features.data > 0) & (recon.features.data < 1)).all()
    with pytest.raises(ValueError):
        vae.decode(np.zeros((5, 4)), training=True)


def test_gradient_reaches_encoder(vae_config, samples):
    vae = BatteryVae.create(vae_config, seed=0)
    x = samples.features[:4]
    latent, adjacency, recon = vae.forward(x, training=True, rng=RngStreams(0, 'test'))
    loss = vae_elbo(x, recon.features, latent.mu, latent.sigma, adjacency, recon.adjacency,
                    samples.targets[:4], recon.targets)
    loss.value.backward()
    for name in ('enc.node_emb', 'enc.latent.weight', 'dec.state.weight', 'dec.label.weight'):
        assert np.abs(vae.params[name].grad).sum() > 0, name


def test_elbo_gradcheck_through_encoder(vae_config, samples):
    vae = BatteryVae.create(vae_config, seed=0)
    eps = np.random.default_rng(4).standard_normal((1, 4))
    A = np.full((1, vae_config.seq_len, 6, 6), 0.5)

    def f(x):
        latent, _ = vae.encode(x, epsilon=eps)
        recon = vae.decode(latent.z)
        return vae_elbo(x, recon.features, latent.mu, latent.sigma, A, recon.adjacency).value

    assert grad_check(f, samples.features[:1]) < 1e-3


# ========== 訓練與生成 ==========

def test_train_vae_history(vae_config, samples):
    _, history = train_vae(samples, vae_config, seed=0)
    assert len(history) == 1
    assert {'loss', 'reconstruction', 'kl', 'adjacency', 'label'} <= set(history[0])
    assert np.isfinite(history[0]['loss'])


def test_generation_is_deterministic(vae_config):
    vae = BatteryVae.create(vae_config, seed=0)
    a = vae_generate(vae, 6, seed=9)
    b = vae_generate(vae, 6, seed=9)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.targets, b.targets)
    with pytest.raises(ValueError):
        vae_generate(vae, 0, seed=9)


def test_generated_frame_is_valid_csv(tmp_path, vae_config, synth_frame):
    vae = BatteryVae.create(vae_config, seed=0)
    batch = vae_generate(vae, 3, seed=1)
    frame = generated_frame(batch, fit_normalization(synth_frame))
    assert len(frame) == 3 * vae_config.seq_len * vae_config.window

    loaded = load_csv(write_csv(frame, tmp_path / 'gen.csv'))
    assert sorted(loaded['battery_id'].unique()) == ['synthetic-0000', 'synthetic-0001', 'synthetic-0002']
    assert (loaded['rul'] >= 0).all()

    samples = batch.to_sample_set(vae_config.window, vae_config.stride)
    assert len(samples) == 3
    assert samples.features.shape == batch.features.shape


@pytest.mark.slow
def test_generated_feature_means_track_training_data(synth_frame, tiny_config):
    config = tiny_config.evolve(latent_dim=8, gen_epochs=40, batch_size=32)
    stats = fit_normalization(synth_frame)
    samples = stack_samples(make_windows(synth_frame, config.window, config.stride, config.seq_len, stats))
    vae, _ = train_vae(samples, config, seed=0)
    generated = vae_generate(vae, 200, seed=1)

    train_means = samples.features.mean(axis=(0, 1, 3))
    gen_means = generated.features.mean(axis=(0, 1, 3))
    np.testing.assert_allclose(gen_means, train_means, atol=0.2)
