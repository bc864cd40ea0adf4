"""
BGN / BGN-UE 模型組裝
"""

import numpy as np
import pytest

from backend.autodiff.gradcheck import grad_check
from backend.autodiff.rng import RngStreams
from backend.errors import ConfigError, ShapeError
from backend.models.bgn import BgnModel, ModelSpec, build_parameters
from backend.models.grapher import ABLATIONS

S, N, W = 3, 6, 8


def _spec(**changes):
    base = dict(n_nodes=N, window=W, embedding_dim=4, hidden_dim=5)
    base.update(changes)
    return ModelSpec(**base)


def _features(seed=0, batch=4):
    return np.random.default_rng(seed).uniform(size=(batch, S, N, W))


# ========== 參數 ==========

def test_same_seed_gives_identical_parameters():
    a = build_parameters(_spec(), seed=5).state_arrays()
    b = build_parameters(_spec(), seed=5).state_arrays()
    c = build_parameters(_spec(), seed=6).state_arrays()
    assert list(a) == list(b)
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])
    assert not np.array_equal(a['node_emb'], c['node_emb'])


def test_parameter_shapes():
    params = build_parameters(_spec(), seed=0)
    assert params['node_emb'].shape == (N, 4)
    assert params['W_s'].shape == (4, W)
    assert params['dgi.fc1.weight'].shape == (5, 8)
    assert params['dgi.fc2.weight'].shape == (2, 5)
    assert params['grapher.gnn1.W_g'].shape == (4, 4)
    assert params['grapher.gru1.W_z'].shape == (5, 8)
    assert params['grapher.gru2.U_h'].shape == (4, 4)
    assert params['head.weight'].shape == (1, 4)


def test_ablations_change_parameter_set():
    assert 'dgi.fc1.weight' not in build_parameters(_spec(ablation='fcg'), 0)
    assert 'grapher.gnn1.W_g' not in build_parameters(_spec(ablation='no_gnn'), 0)
    no_rnn = build_parameters(_spec(ablation='no_rnn'), 0)
    assert 'grapher.no_rnn.weight' in no_rnn
    assert 'grapher.gru1.W_z' not in no_rnn
    ue = build_parameters(_spec(variant='bgn_ue'), 0)
    assert 'head.fc2.weight' in ue and 'head.weight' not in ue


def test_invalid_spec():
    with pytest.raises(ConfigError):
        _spec(variant='gnn')
    with pytest.raises(ConfigError):
        _spec(ablation='no_head')
    with pytest.raises(ConfigError):
        _spec(gamma=0.0)
    with pytest.raises(ConfigError):
        _spec(n_nodes=1)


# ========== 前向 ==========

@pytest.mark.parametrize('ablation', ABLATIONS)
@pytest.mark.parametrize('variant', ['bgn', 'bgn_ue'])
def test_forward_for_every_variant(variant, ablation):
    spec = _spec(variant=variant, ablation=ablation)
    model = BgnModel(build_parameters(spec, 0), spec)
    x = _features()

    train_out = model.forward(x, training=True, rng=RngStreams(0, 'fwd'))
    eval_out = model.forward(x, training=False)

    for out in (train_out, eval_out):
        assert out.pred.shape == (4,)
        assert np.all((out.pred.data > 0) & (out.pred.data < 1))
        if variant == 'bgn_ue':
            assert out.var.shape == (4,) and np.all(out.var.data > 0)
        else:
            assert out.var is None
    if ablation == 'no_gnn':
        assert eval_out.adjacency is None


def test_eval_is_deterministic_and_batch_independent():
    spec = _spec()
    model = BgnModel(build_parameters(spec, 0), spec)
    x = _features(batch=10)
    pred, var = model.predict(x)
    again, _ = model.predict(x, batch_size=3)
    np.testing.assert_allclose(pred, again, atol=1e-12)
    assert var is None


def test_single_step_mode_uses_last_window():
    spec = _spec(temporal_mode='single_step')
    model = BgnModel(build_parameters(spec, 0), spec)
    x = _features()
    changed = x.copy()
    changed[:, 0] = 0.0
    np.testing.assert_array_equal(model.predict(x)[0], model.predict(changed)[0])


def test_forward_rejects_bad_shapes():
    spec = _spec()
    model = BgnModel(build_parameters(spec, 0), spec)
    with pytest.raises(ShapeError):
        model.forward(np.zeros((2, S, N, W + 1)))
    with pytest.raises(ValueError):
        model.forward(_features(), training=True, rng=None)


# ========== 梯度 ==========

def test_end_to_end_gradient_in_eval_mode():
    spec = _spec()
    model = BgnModel(build_parameters(spec, 0), spec)
    assert grad_check(lambda x: model.forward(x, training=False).pred.sum(), _features(batch=2)) < 1e-3


def test_end_to_end_gradient_with_fixed_noise():
    spec = _spec(variant='bgn_ue', dropout=0.0)
    model = BgnModel(build_parameters(spec, 1), spec)

    def f(x):
        out = model.forward(x, training=True, rng=RngStreams(3, 'gradcheck'))
        return out.pred.sum() + out.var.sum()

    assert grad_check(f, _features(batch=2)) < 1e-3


def test_every_parameter_group_receives_gradient():
    spec = _spec()
    params = build_parameters(spec, 0)
    out = BgnModel(params, spec).forward(_features(), training=True, rng=RngStreams(0))
    ((out.pred - 0.5) ** 2).sum().backward()
    for name, tensor in params.items():
        assert tensor.grad is not None, name
        assert np.linalg.norm(tensor.grad) > 0, name
