"""
測試共用設定
Shared Test Fixtures

小規模的合成電池資料與訓練設定，讓整個測試集在桌機上幾分鐘內跑完。
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# 讓 backend / config / frontend 可以直接 import
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from backend.autodiff.functional import BatchNormState  # noqa: E402
from backend.autodiff.tensor import Tensor  # noqa: E402
from backend.data_sources.synthetic import synth_degradation  # noqa: E402
from backend.graph.dgi import EdgeMlp  # noqa: E402
from backend.training.config import TrainConfig  # noqa: E402


@pytest.fixture(scope='session')
def synth_frame():
    """4 顆電池 × 400 步"""
    return synth_degradation(n_batteries=4, steps=400, noise=0.01, seed=0)


@pytest.fixture
def tiny_config():
    return TrainConfig(
        embedding_dim=8,
        hidden_dim=8,
        window=16,
        stride=8,
        seq_len=3,
        batch_size=16,
        max_epochs=2,
        scheduler_patience=1,
        early_stop_patience=5,
        val_fraction=0.25,
        test_fraction=0.25,
        k_folds=2,
        n_runs=2,
        gen_epochs=1,
        n_generated=4,
        seed=0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_tensor(rng, *shape, scale=1.0, requires_grad=True):
    return Tensor(rng.normal(scale=scale, size=shape), requires_grad=requires_grad)


def make_edge_mlp(rng, d, hidden=8):
    return EdgeMlp(
        random_tensor(rng, hidden, 2 * d, scale=0.5),
        random_tensor(rng, hidden, scale=0.1),
        random_tensor(rng, 2, hidden, scale=0.5),
        random_tensor(rng, 2, scale=0.1),
    )


def make_bn(d):
    return Tensor(np.ones(d), requires_grad=True), Tensor(np.zeros(d), requires_grad=True), BatchNormState.create(d)
