"""
Pruebas del bucle de entrenamiento, la evaluación, la latencia y la comparación pareada
"""
import json
import os
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from channel import ChannelPair, ComplexMatrix, Scenario, UncertaintyModel
from config_validator import experiment_from_document, load_document, load_experiment
from diffusion import DiffusionSchedule
from errors import ConfigError, NumericalAbort
from nets import init_parameters, load_parameters
from secrecy import Paradigm
from trainer import (STREAM_ACTOR_INIT, STREAM_CRITIC_INIT, Adam, LatencyReport, MetricsLog, ReplayBuffer,
                     Trainer, TrainingConfig, Transition, build_manifest, canonical_hash, compare, draw_episode,
                     evaluate, latency_table, make_state, measure_latency, soft_update, state_dim, train,
                     uncertainty_sweep, write_run, zero_policy)
from utils.seeding import derive_seed

EXPECTED_FILES = ('metrics.csv', 'timing.csv', 'summary.json', 'actor.bin', 'critic.bin')


class TestTrainingConfig:

    @pytest.mark.parametrize('kwargs,field', [
        ({'epochs': 0}, 'training.epochs'),
        ({'batch_size': 32, 'replay_capacity': 16}, 'training.batch_size'),
        ({'soft_update_tau': 0.0}, 'training.soft_update_tau'),
        ({'actor_variant': 'lstm'}, 'training.actor_variant'),
        ({'uncertainty_levels': ()}, 'training.uncertainty_levels'),
        ({'grad_clip_norm': -1.0}, 'training.grad_clip_norm'),
    ])
    def test_invalid(self, kwargs, field):
        with pytest.raises(ConfigError) as exc:
            TrainingConfig(**kwargs)
        assert exc.value.field == field

    def test_network_dims_follow_geometry(self, small_scenario):
        assert TrainingConfig().network.state_dim == 387
        assert TrainingConfig().network.action_dim == 64
        cfg = TrainingConfig(scenario=small_scenario)
        assert (cfg.network.state_dim, cfg.network.action_dim) == (35, 16)

    def test_steps_must_match(self):
        with pytest.raises(ConfigError) as exc:
            TrainingConfig(diffusion=DiffusionSchedule(steps=4))
        assert exc.value.field == 'network.n_steps'


class TestState:

    def test_zero_channels_zero_state(self):
        scenario = Scenario()
        zeros = ComplexMatrix.from_complex(np.zeros((6, 16)))
        state = make_state(ChannelPair(zeros, zeros.copy()), UncertaintyModel(0.0, 0.0, 0.0))
        assert state.shape == (387,)
        assert not state.any()
        assert state_dim(scenario) == 387

    def test_deterministic(self, nominal, uncertainty):
        assert np.array_equal(make_state(nominal, uncertainty), make_state(nominal, uncertainty))

    def test_sigmas_standardized(self, nominal):
        state = make_state(nominal, UncertaintyModel(2.0, 0.05, 0.02))
        assert np.allclose(state[-3:], [1.0, 1.0, 1.0])

    def test_episode_inside_box(self, tiny_training):
        cfg = tiny_training()
        base = cfg.scenario
        for seed in range(20):
            episode = draw_episode(cfg, seed)
            for new, old in ((episode.scenario.uav_position, base.uav_position),
                             (episode.scenario.eve_position, base.eve_position)):
                assert abs(new[0] - old[0]) <= 20.0 and abs(new[1] - old[1]) <= 20.0
                assert abs(new[2] - old[2]) <= 30.0 and 1.0 <= new[2] <= 1000.0
            assert episode.state.shape == (35,)

    def test_episode_reproducible(self, tiny_training):
        cfg = tiny_training()
        first, second = draw_episode(cfg, 5), draw_episode(cfg, 5)
        assert np.array_equal(first.state, second.state)
        assert first.nominal.equals(second.nominal)


class TestReplayBuffer:

    def _transition(self, reward):
        return Transition(np.zeros(3), np.zeros(2), reward)

    def test_fifo_eviction(self):
        buffer = ReplayBuffer(3)
        for i in range(5):
            buffer.add(self._transition(i))
        assert len(buffer) == 3
        assert [t.reward for t in buffer.transitions()] == [2.0, 3.0, 4.0]

    def test_sample_without_replacement(self):
        buffer = ReplayBuffer(10)
        for i in range(4):
            buffer.add(self._transition(i))
        batch = buffer.sample(8, np.random.default_rng(0))
        assert sorted(batch.rewards.tolist()) == [0.0, 1.0, 2.0, 3.0]
        assert batch.states.shape == (4, 3)

    def test_empty_sample(self):
        with pytest.raises(ValueError):
            ReplayBuffer(2).sample(1, np.random.default_rng(0))

    @pytest.mark.parametrize('state, action, reward, name', [
        (np.zeros(3), np.array([np.nan, 0.0]), 1.0, 'transición.action'),
        (np.array([0.0, np.inf, 0.0]), np.zeros(2), 1.0, 'transición.state'),
        (np.zeros(3), np.zeros(2), np.nan, 'transición.reward'),
    ])
    def test_rejects_non_finite(self, state, action, reward, name):
        with pytest.raises(NumericalAbort) as exc:
            Transition(state, action, reward)
        assert exc.value.loss_name == name
        assert exc.value.epoch is None


class TestOptimizer:

    def test_first_step_is_signed_lr(self):
        tensors = {'x': np.array([1.0, -2.0])}
        Adam(0.01).step(tensors, {'x': np.array([0.5, -0.1])})
        assert np.allclose(tensors['x'], [0.99, -1.99], atol=1e-6)

    def test_zero_learning_rate(self):
        tensors = {'x': np.array([1.0, -2.0])}
        Adam(0.0).step(tensors, {'x': np.array([3.0, 4.0])})
        assert np.array_equal(tensors['x'], [1.0, -2.0])

    def test_clip_reports_raw_norm(self):
        tensors = {'x': np.zeros(2)}
        assert Adam(0.1, clip_norm=1.0).step(tensors, {'x': np.array([3.0, 4.0])}) == pytest.approx(5.0)

    def test_soft_update(self, tiny_network):
        target = init_parameters('critic', 0, tiny_network)
        source = init_parameters('critic', 1, tiny_network)
        expected = 0.5 * (target.tensors['q1.l0.weight'] + source.tensors['q1.l0.weight'])
        soft_update(target, source, 0.5)
        assert np.allclose(target.tensors['q1.l0.weight'], expected)
        assert soft_update(target, source, 1.0).equals(source)


class TestMetricsLog:

    def test_timing_kept_out_of_metrics(self):
        log = MetricsLog()
        log.append(0, 1.0, 0.5, -0.2, 0.03, 0.03)
        frame = log.to_frame()
        assert np.isnan(frame.loc[0, 'iter_seconds'])
        assert log.timing_frame().loc[0, 'iter_seconds'] == 0.03
        assert [c for c in frame.columns if c.startswith('expert_frac_')] == [f'expert_frac_{i}' for i in range(4)]

    def test_log_timing_flag(self):
        log = MetricsLog(log_timing=True)
        log.append(0, 1.0, 0.5, -0.2, 0.03, 0.03)
        assert log.to_frame().loc[0, 'iter_seconds'] == 0.03

    def test_elapsed_monotone(self):
        log = MetricsLog()
        log.append(0, 1.0, 0.5, -0.2, 0.03, 0.03)
        with pytest.raises(ValueError):
            log.append(1, 1.0, 0.5, -0.2, 0.03, 0.01)

    def test_summary_windows(self):
        log = MetricsLog()
        for epoch in range(100):
            log.append(epoch, float(epoch), 0.0, 0.0, 0.01, 0.01 * (epoch + 1),
                       eval_reward=float(epoch) if epoch % 20 == 19 else None)
        summary = log.summary()
        assert summary['first_window_reward'] == pytest.approx(24.5)
        assert summary['last_window_reward'] == pytest.approx(74.5)
        assert summary['final_eval_reward'] == 99.0
        assert 'mean_expert_fractions' not in summary


class TestTraining:

    def test_non_finite_reward_aborts(self, tiny_training, monkeypatch):
        monkeypatch.setattr('trainer.paradigm_reward', lambda *args, **kwargs: SimpleNamespace(reward=float('nan')))
        with pytest.raises(NumericalAbort) as exc:
            train(tiny_training())
        assert (exc.value.epoch, exc.value.loss_name) == (0, 'reward')

    def test_single_epoch(self, tiny_training):
        result = train(tiny_training(epochs=1))
        assert len(result.metrics) == 1
        assert result.replay_size == 1
        assert not np.isnan(result.metrics.to_frame().loc[0, 'eval_reward'])

    @pytest.mark.parametrize('variant', ('mlp_diffusion', 'moe_transformer_diffusion', 'gaussian'))
    def test_zero_learning_rate_keeps_parameters(self, tiny_training, variant):
        cfg = tiny_training(learning_rate=0.0, actor_variant=variant, epochs=2)
        result = train(cfg)
        actor = init_parameters(variant, derive_seed(cfg.master_seed, STREAM_ACTOR_INIT), cfg.network)
        critic = init_parameters('critic', derive_seed(cfg.master_seed, STREAM_CRITIC_INIT), cfg.network)
        assert result.actor.equals(actor)
        assert result.critic.equals(critic)

    def test_bit_reproducible_metrics(self, tiny_training, tmp_path):
        cfg = tiny_training(epochs=4)
        train(cfg).metrics.write_csv(tmp_path / 'a.csv')
        train(cfg).metrics.write_csv(tmp_path / 'b.csv')
        assert (tmp_path / 'a.csv').read_bytes() == (tmp_path / 'b.csv').read_bytes()

    def test_seed_changes_run(self, tiny_training):
        first = train(tiny_training(epochs=2)).metrics.to_frame()['reward']
        second = train(tiny_training(epochs=2, master_seed=8)).metrics.to_frame()['reward']
        assert not first.equals(second)

    def test_eval_cadence(self, tiny_training):
        frame = train(tiny_training(epochs=5, eval_every=2)).metrics.to_frame()
        assert frame['eval_reward'].notna().tolist() == [False, True, False, True, True]
        assert frame['epoch'].tolist() == list(range(5))

    def test_expert_fractions_logged(self, tiny_training):
        frame = train(tiny_training(epochs=2, actor_variant='moe_transformer_diffusion')).metrics.to_frame()
        fractions = frame[[f'expert_frac_{i}' for i in range(4)]]
        assert np.allclose(fractions.sum(axis=1), 1.0)

    def test_critic_regression_decreases(self, tiny_training):
        decreased = 0
        for seed in range(10):
            trainer = Trainer(tiny_training(learning_rate=1e-2, master_seed=seed))
            rng = np.random.default_rng(seed)
            for _ in range(16):
                trainer.replay.add(Transition(rng.standard_normal(35), rng.uniform(-0.2, 0.2, 16),
                                              rng.standard_normal()))
            batch = trainer.replay.sample(16, rng)
            losses = [trainer.update_critic(batch) for _ in range(100)]
            decreased += losses[-1] < losses[0]
        assert decreased >= 9

    def test_write_run(self, tiny_training, tmp_path):
        result = train(tiny_training(epochs=2))
        paths = write_run(result, tmp_path / 'run')
        for name in EXPECTED_FILES:
            assert os.path.exists(tmp_path / 'run' / name)
        assert load_parameters(paths['actor']).equals(result.actor)
        with open(paths['summary'], encoding='utf-8') as f:
            summary = json.load(f)
        assert summary['epochs'] == 2
        assert summary['variant'] == 'mlp_diffusion'
        assert len(pd.read_csv(paths['metrics'])) == 2


class TestEvaluate:

    @pytest.fixture
    def actor(self, tiny_training):
        cfg = tiny_training()
        return init_parameters(cfg.actor_variant, 3, cfg.network)

    def test_single_episode_variance(self, tiny_training, actor):
        report = evaluate(actor, 1, tiny_training(), 0)
        assert report.variance == 0.0
        assert report.summary['count'] == 1

    def test_zero_policy_scores_zero(self, tiny_training):
        cfg = tiny_training()
        for paradigm in Paradigm:
            pcfg = replace(cfg.paradigm, paradigm=paradigm)
            report = evaluate(zero_policy(cfg), 4, cfg, 1, paradigm=pcfg)
            assert np.allclose(report.rewards, 0.0, atol=1e-12)

    def test_same_seed_same_report(self, tiny_training, actor):
        cfg = tiny_training()
        assert np.array_equal(evaluate(actor, 3, cfg, 2).rewards, evaluate(actor, 3, cfg, 2).rewards)

    def test_robust_below_stochastic(self, tiny_training, actor):
        cfg = tiny_training()
        robust = evaluate(actor, 4, cfg, 3, paradigm=replace(cfg.paradigm, paradigm=Paradigm.ROBUST))
        stochastic = evaluate(actor, 4, cfg, 3, paradigm=replace(cfg.paradigm, paradigm=Paradigm.STOCHASTIC))
        assert np.all(robust.rewards <= stochastic.rewards + 1e-12)

    def test_summary_ordering(self, tiny_training, actor):
        s = evaluate(actor, 5, tiny_training(), 4).summary
        assert s['min'] <= s['q1'] <= s['median'] <= s['q3'] <= s['max']
        assert s['variance'] >= 0

    def test_report_frame(self, tiny_training, actor):
        frame = evaluate(actor, 2, tiny_training(), 5).to_frame()
        assert frame['episode'].tolist() == [0, 1]
        assert {'reward', 'mean_asr', 'level'} <= set(frame.columns)

    def test_uncertainty_sweep(self, tiny_training, actor):
        table = uncertainty_sweep(actor, tiny_training(), levels=(0.0, 2.0), n_episodes=2)
        assert table['level'].tolist() == [0.0, 2.0]
        assert {'mean', 'variance', 'median'} <= set(table.columns)

    def test_invalid_episodes(self, tiny_training, actor):
        with pytest.raises(ValueError):
            evaluate(actor, 0, tiny_training(), 0)


class TestLatency:

    def test_positive_mean(self, tiny_training):
        report = measure_latency(tiny_training(), 10, warmup=1)
        assert report.mean_seconds > 0
        assert len(report.samples) == 10

    def test_every_timed_iteration_uses_full_batch(self, tiny_training):
        cfg = tiny_training(batch_size=12, replay_capacity=32)
        report = measure_latency(cfg, 10, warmup=1)
        assert report.batch_sizes == [12] * 10
        assert latency_table([report]).loc[0, 'batch_size'] == 12

    def test_prefill_leaves_training_stream_untouched(self, tiny_training):
        cfg = tiny_training()
        plain, filled = Trainer(cfg), Trainer(cfg)
        assert filled.prefill(5) == 5
        first, second = plain.step(), filled.step()
        assert first.reward == second.reward
        assert (first.batch_size, second.batch_size) == (1, 4)

    def test_minimum_iterations(self, tiny_training):
        with pytest.raises(ValueError):
            measure_latency(tiny_training(), 9)

    def test_overhead_table(self):
        table = latency_table([LatencyReport('mlp_diffusion', 0.010, 0.001),
                               LatencyReport('moe_transformer_diffusion', 0.012, 0.001)])
        assert table['overhead_pct'].tolist() == pytest.approx([0.0, 20.0])
        missing = latency_table([LatencyReport('gaussian', 0.01, 0.0)])
        assert np.isnan(missing.loc[0, 'overhead_pct'])
        assert np.isnan(missing.loc[0, 'batch_size'])


class TestCompare:

    @pytest.fixture
    def quick(self, tiny_training):
        return tiny_training(epochs=2, eval_episodes=1)

    def test_row_counts(self, quick):
        result = compare([quick, quick.with_variant('gaussian')], seeds=[1, 2, 3])
        table = result.table
        assert (table['row_type'] == 'run').sum() == 6
        assert (table['row_type'] == 'aggregate').sum() == 2
        assert set(result.curves) == {'mlp_diffusion', 'gaussian'}
        assert all(len(frames) == 3 for frames in result.curves.values())

    def test_self_comparison(self, quick):
        table = compare([quick, quick], seeds=[1, 2]).table
        aggregate = table[table['row_type'] == 'aggregate']
        assert aggregate['label'].tolist() == ['mlp_diffusion', 'mlp_diffusion#2']
        assert aggregate['relative_improvement'].tolist() == [0.0, 0.0]
        assert aggregate['wins'].tolist() == [0, 0] and aggregate['losses'].tolist() == [0, 0]

    def test_mismatched_paradigms(self, quick):
        other = replace(quick, paradigm=replace(quick.paradigm, paradigm=Paradigm.ROBUST))
        with pytest.raises(ValueError):
            compare([quick, other], seeds=[1])

    def test_needs_two_configs_and_distinct_seeds(self, quick):
        with pytest.raises(ValueError):
            compare([quick], seeds=[1])
        with pytest.raises(ValueError):
            compare([quick, quick], seeds=[1, 1])


class TestManifest:

    def test_canonical_hash_ignores_key_order(self):
        assert canonical_hash({'a': 1, 'b': [1, 2]}) == canonical_hash({'b': [1, 2], 'a': 1})
        assert canonical_hash({'a': 1}) != canonical_hash({'a': 2})

    def test_manifest_fields(self, tmp_path):
        config_path = tmp_path / 'exp.json'
        config_path.write_text('{"name": "x", "seeds": [1]}', encoding='utf-8')
        manifest = build_manifest(config_path, {'name': 'x', 'seeds': [1]}, [1], ['mlp_diffusion'],
                                  ['b.csv', 'a.csv'])
        assert len(manifest['config_sha256']) == 64
        assert manifest['outputs'] == ['a.csv', 'b.csv']
        assert manifest['seeds'] == [1]


CONFIGS_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'configs'))
SMALL_NETWORK = {'model_dim': 32, 'n_heads': 4, 'expert_hidden': 64, 'mlp_hidden': 64, 'critic_hidden': 64}


@pytest.mark.slow
def test_learning_signal_over_three_seeds():
    """MLP difusión, paradigma estocástico, 500 épocas: al menos 2 de 3 semillas mejoran"""
    spec = load_experiment(os.path.join(CONFIGS_DIR, 'smoke.json'))
    improved = []
    for seed in (1, 2, 3):
        cfg = replace(spec.training_for('mlp_diffusion', 'stochastic', seed), epochs=500)
        summary = train(cfg).metrics.summary()
        improved.append(summary['last_window_reward'] > summary['first_window_reward'])
    assert sum(improved) >= 2, improved


@pytest.mark.slow
def test_robust_benchmark_direction():
    """
    Paradigma robusto, 2000 épocas, 3 semillas pareadas: la mediana final del MoE-transformer
    no queda bajo la del MLP y su varianza de inferencia no supera a la del actor gaussiano.
    """
    document = load_document(os.path.join(CONFIGS_DIR, 'robust_benchmark.json'))
    document['variants'] = ['moe_transformer_diffusion', 'mlp_diffusion', 'gaussian']
    document['network'] = dict(SMALL_NETWORK)
    spec = experiment_from_document(document, CONFIGS_DIR)
    configs = [spec.training_for(variant, 'robust', spec.seeds[0]) for variant in spec.variants]
    result = compare(configs, spec.seeds, workers=os.cpu_count() or 1)
    table = result.table[result.table['row_type'] == 'aggregate'].set_index('label')
    print(table[['final_eval_reward', 'eval_variance', 'wins', 'losses', 'relative_improvement']])
    moe, mlp, gaussian = (table.loc[v] for v in spec.variants)
    assert moe['final_eval_reward'] >= mlp['final_eval_reward']
    assert moe['eval_variance'] <= gaussian['eval_variance']
