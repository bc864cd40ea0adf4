"""
實驗協定：k 折、多種子、消融、網格
"""

import pytest

from backend.data_sources.synthetic import synth_degradation
from backend.training.config import TrainConfig
from backend.training.experiments import (
    ABLATION_ROWS,
    ensemble_seeds,
    grid_points,
    render_table,
    run_ablation_suite,
    run_ensemble,
    run_grid,
    run_kfold,
    run_tasks,
)


def _square(x):
    return x * x


def test_run_tasks_keeps_task_order():
    assert list(run_tasks(_square, {'b': (3,), 'a': (2,)}, jobs=1).items()) == [('b', 9), ('a', 4)]


def test_grid_points_cross_product_is_sorted():
    points = grid_points({'lr': [0.01, 0.001], 'embedding_dim': [32, 16]})
    assert points == [
        {'embedding_dim': 16, 'lr': 0.001},
        {'embedding_dim': 16, 'lr': 0.01},
        {'embedding_dim': 32, 'lr': 0.001},
        {'embedding_dim': 32, 'lr': 0.01},
    ]
    with pytest.raises(ValueError):
        grid_points({'lr': []})


def test_ensemble_seeds(tiny_config):
    assert ensemble_seeds(tiny_config.evolve(seed=10), 3) == [10, 11, 12]
    with pytest.raises(ValueError):
        ensemble_seeds(tiny_config, 0)


def test_kfold_holds_out_every_battery_once(synth_frame, tiny_config):
    result = run_kfold(tiny_config.evolve(max_epochs=1), synth_frame, k=2)
    assert len(result.folds) == 2
    held_out = [set(fold.predictions['battery_id']) for fold in result.folds]
    assert held_out[0].isdisjoint(held_out[1])
    assert held_out[0] | held_out[1] == set(synth_frame['battery_id'])
    assert list(result.table()['fold']) == [0, 1]
    assert result.val_rmse_std >= 0


def test_same_seed_ensemble_has_zero_std(synth_frame, tiny_config):
    config = tiny_config.evolve(max_epochs=1)
    result = run_ensemble(config, synth_frame, seeds=[0, 0])
    assert result.headline().std['rmse'] == pytest.approx(0.0, abs=1e-12)
    assert [r.seed for r in result.runs] == [0, 0]


def test_ensemble_with_distinct_seeds(synth_frame, tiny_config):
    result = run_ensemble(tiny_config.evolve(max_epochs=1), synth_frame, n_runs=2)
    assert [r.seed for r in result.runs] == [0, 1]
    assert result.test is not None
    assert '±' in result.headline().cell('rmse')


def test_ablation_suite_rows(synth_frame, tiny_config):
    table = run_ablation_suite(tiny_config.evolve(max_epochs=1), synth_frame)
    assert list(table['variant']) == [label for _, label in ABLATION_ROWS]
    assert (table['n_seeds'] == 1).all()
    assert (table['rmse_std'] == 0).all()
    assert 'w/o GNN' in render_table(table, ['variant', 'rmse'])


def test_grid_rows_sorted_by_axes(synth_frame, tiny_config):
    table = run_grid(tiny_config.evolve(max_epochs=1), synth_frame, grid={'hidden_dim': [8, 4]})
    assert list(table['hidden_dim']) == [4, 8]
    assert list(table.columns) == ['hidden_dim', 'mae', 'rmse', 'approx_1', 'approx_2', 'approx_3',
                                   'approx_10', 'approx_20', 'approx_40']


def test_grid_rejects_unknown_keys(synth_frame, tiny_config):
    with pytest.raises(ValueError):
        run_grid(tiny_config, synth_frame, grid={'depth': [1, 2]})


@pytest.mark.slow
def test_learned_graph_beats_fixed_graph_and_featureless_edges():
    frame = synth_degradation(n_batteries=4, steps=2000, noise=0.01, seed=0)
    config = TrainConfig(max_epochs=30, val_fraction=0.25, test_fraction=0.25)
    seeds = [0, 1, 2, 3, 4]

    test_rmse = {}
    for ablation in ('none', 'fcg', 'no_features'):
        result = run_ensemble(config.evolve(ablation=ablation), frame, seeds=seeds)
        test_rmse[ablation] = [r.test_report.rmse for r in result.runs]

    for ablation in ('fcg', 'no_features'):
        wins = sum(full < other for full, other in zip(test_rmse['none'], test_rmse[ablation]))
        assert wins >= 4, (ablation, test_rmse)
