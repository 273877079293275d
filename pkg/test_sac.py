#!/usr/bin/env python3
"""
Тесты SAC: цели критиков, сглаживание целевых сетей, снимки политики,
развертывание эпизодов и буфер воспроизведения.
"""

import sys
import os

import numpy as np
import pytest

# Добавляем src в путь Python
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.envs.registry import make_env
from src.envs.scripted import ConstantPolicy, scripted_env_spec
from src.models.config import SacConfig
from src.models.environment import load_env_spec
from src.models.errors import DimensionMismatchError, EnvContractError, NonFiniteLossError
from src.models.fault import JointWorkingState, make_q
from src.models.training import Transition, TransitionBatch
from src.services.replay_buffer import ReplayBuffer
from src.services.sac_service import SacLearner, rollout

OBS_DIM = 5
ACTION_DIM = 2


def make_learner(seed=0, **overrides):
    config = SacConfig(hidden_sizes=(16, 16), batch_size=8, **overrides)
    return SacLearner(OBS_DIM, -np.ones(ACTION_DIM), np.ones(ACTION_DIM), config,
                      np.random.default_rng(seed), env_id="synthetic")


def make_batch(rng, size=8, reward=None):
    rewards = rng.normal(size=size) if reward is None else np.full(size, float(reward))
    return TransitionBatch(
        observations=rng.normal(size=(size, OBS_DIM)),
        actions=rng.uniform(-0.9, 0.9, size=(size, ACTION_DIM)),
        rewards=rewards,
        next_observations=rng.normal(size=(size, OBS_DIM)),
        terminals=np.zeros(size),
    )


class TestSacLearner:
    """Тесты шага обновления SAC"""

    def test_gamma_zero_targets_equal_rewards(self):
        """Тест: при gamma = 0 цель критика равна награде"""
        learner = make_learner(gamma=0.0)
        batch = make_batch(np.random.default_rng(1))
        targets = learner.critic_targets(batch, np.random.default_rng(2))
        assert np.array_equal(targets, batch.rewards)

    def test_terminal_cuts_bootstrap(self):
        learner = make_learner(gamma=0.99)
        batch = make_batch(np.random.default_rng(1))
        terminal_batch = TransitionBatch(batch.observations, batch.actions, batch.rewards,
                                         batch.next_observations, np.ones(len(batch)))
        targets = learner.critic_targets(terminal_batch, np.random.default_rng(2))
        assert np.allclose(targets, batch.rewards)

    def test_polyak_smoothing(self):
        """Тест: target' = (1 - tau) * target + tau * online поэлементно"""
        learner = make_learner(tau=0.05)
        old_targets = [t.values.copy() for t in learner.target_critics]
        learner.update(make_batch(np.random.default_rng(3)), np.random.default_rng(4))
        for old, target, online in zip(old_targets, learner.target_critics, learner.critics):
            assert np.allclose(target.values, 0.95 * old + 0.05 * online.values, rtol=0.0, atol=1e-15)
        assert learner.update_count == 1

    def test_update_changes_parameters_and_temperature(self):
        learner = make_learner()
        actor_before = learner.actor.values.copy()
        alpha_before = learner.log_alpha
        losses = learner.update(make_batch(np.random.default_rng(5)), np.random.default_rng(6))
        assert set(losses) == {'critic_loss', 'actor_loss', 'alpha_loss', 'temperature'}
        assert not np.array_equal(learner.actor.values, actor_before)
        assert learner.log_alpha != alpha_before

    def test_fixed_temperature(self):
        learner = make_learner(learn_temperature=False, initial_temperature=0.2)
        learner.update(make_batch(np.random.default_rng(5)), np.random.default_rng(6))
        assert learner.temperature == pytest.approx(0.2)

    def test_critic_regression_converges(self):
        """Тест: при gamma = 0 критики сходятся к постоянной награде"""
        learner = make_learner(gamma=0.0, critic_lr=1e-2, actor_lr=1e-3)
        rng = np.random.default_rng(7)
        first = learner.update(make_batch(rng, reward=1.0), rng)['critic_loss']
        for _ in range(300):
            last = learner.update(make_batch(rng, reward=1.0), rng)['critic_loss']
        assert last < 0.1 * first

    def test_update_deterministic(self):
        """Тест: одинаковые зерна дают побитово одинаковые параметры"""
        results = []
        for _ in range(2):
            learner = make_learner(seed=11)
            rng = np.random.default_rng(12)
            for _ in range(3):
                learner.update(make_batch(rng), rng)
            results.append(learner.snapshot().fingerprint())
        assert results[0] == results[1]

    def test_non_finite_loss(self):
        """Тест: переполнение функции потерь останавливает обучение со статистикой батча"""
        learner = make_learner()
        batch = make_batch(np.random.default_rng(1), reward=1e200)
        with pytest.raises(NonFiniteLossError, match="critic_1") as info:
            learner.update(batch, np.random.default_rng(2))
        assert info.value.batch_stats['reward_max'] == 1e200

    def test_snapshot_is_immutable(self):
        """Тест: снимок не меняется при дальнейшем обучении"""
        learner = make_learner()
        snapshot = learner.snapshot()
        fingerprint = snapshot.fingerprint()
        learner.update(make_batch(np.random.default_rng(1)), np.random.default_rng(2))
        assert snapshot.fingerprint() == fingerprint
        assert learner.snapshot().fingerprint() != fingerprint

    def test_load_snapshot_and_state(self):
        a = make_learner(seed=1)
        rng = np.random.default_rng(0)
        a.update(make_batch(rng), rng)
        b = make_learner(seed=2)
        b.load_snapshot(a.snapshot())
        b.load_state_dict(a.state_dict())
        batch = make_batch(np.random.default_rng(9))
        a.update(batch, np.random.default_rng(10))
        b.update(batch, np.random.default_rng(10))
        assert a.snapshot().fingerprint() == b.snapshot().fingerprint()

    def test_policy_actions_within_bounds(self):
        snapshot = make_learner().snapshot()
        rng = np.random.default_rng(0)
        for _ in range(20):
            obs = rng.normal(size=OBS_DIM)
            assert np.all(np.abs(snapshot.act(obs, deterministic=True)) < 1.0)
            assert np.all(np.abs(snapshot.act(obs, deterministic=False, rng=rng)) < 1.0)
        with pytest.raises(ValueError, match="random stream"):
            snapshot.act(np.zeros(OBS_DIM), deterministic=False)
        with pytest.raises(DimensionMismatchError):
            snapshot.act(np.zeros(OBS_DIM + 1))


class TestRollout:
    """Тесты развертывания эпизода"""

    def test_rollout_deterministic(self):
        """Тест: одинаковые (политика, q, seed) дают одинаковую траекторию"""
        spec = load_env_spec('claw_valve')
        learner = SacLearner(spec.obs_dim, spec.action_low_array, spec.action_high_array,
                             SacConfig(hidden_sizes=(16,)), np.random.default_rng(0), env_id='claw_valve')
        snapshot = learner.snapshot()
        q = make_q([2], [0.3], spec)
        runs = [rollout(snapshot, make_env('claw_valve', spec), q, stochastic=True, seed=4) for _ in range(2)]
        assert runs[0].rewards == runs[1].rewards
        assert runs[0].task_trace == runs[1].task_trace
        assert len(runs[0]) == spec.episode_horizon
        assert runs[0].damage_label == "2"

    def test_transitions_carry_q(self):
        spec = load_env_spec('claw_valve')
        q = make_q([4], [0.1], spec)
        trajectory = rollout(ConstantPolicy(np.zeros(9)), make_env('claw_valve', spec), q,
                             stochastic=False, seed=0)
        flags = trajectory.transitions[0].observation[spec.q_slice]
        assert list(flags) == [0, 0, 0, 0, 1, 0, 0, 0, 0]
        assert trajectory.transitions[-1].terminal

    def test_discounted_return_closed_form(self):
        """Тест: постоянная награда r дает r * (1 - gamma^H) / (1 - gamma)"""
        spec = scripted_env_spec(n_joints=3, horizon=10, base_reward=2.0)
        env = make_env('scripted', spec)
        trajectory = rollout(ConstantPolicy(np.zeros(3)), env, JointWorkingState.undamaged(3),
                             stochastic=False, seed=0)
        assert trajectory.episode_return == pytest.approx(20.0)
        assert trajectory.discounted_return(0.9) == pytest.approx(2.0 * (1 - 0.9 ** 10) / (1 - 0.9))


class TestReplayBuffer:
    """Тесты кольцевого буфера"""

    def make_transition(self, value, flags=(0.0, 0.0)):
        obs = np.array([value, value, value, *flags])
        return Transition(observation=obs, action=np.array([value, -value]), reward=value,
                          next_observation=obs + np.array([1.0, 1.0, 1.0, 0.0, 0.0]), terminal=False)

    def test_ring_overwrite(self):
        buffer = ReplayBuffer(3, OBS_DIM, ACTION_DIM)
        for value in range(5):
            buffer.add(self.make_transition(float(value)))
        assert len(buffer) == 3
        assert sorted(buffer.rewards.tolist()) == [2.0, 3.0, 4.0]

    def test_sample_uniform_with_replacement(self):
        buffer = ReplayBuffer(10, OBS_DIM, ACTION_DIM)
        for value in range(4):
            buffer.add(self.make_transition(float(value)))
        batch = buffer.sample(16, np.random.default_rng(0))
        assert len(batch) == 16
        assert set(batch.rewards.tolist()) <= {0.0, 1.0, 2.0, 3.0}
        with pytest.raises(ValueError, match="exceeds buffer occupancy"):
            buffer.sample(5, np.random.default_rng(0))

    def test_q_flags_must_match(self):
        """Тест: флаги q одинаковы в s и s' одного перехода"""
        buffer = ReplayBuffer(4, OBS_DIM, ACTION_DIM, q_slice=slice(3, 5))
        transition = self.make_transition(1.0, flags=(1.0, 0.0))
        bad = Transition(transition.observation, transition.action, transition.reward,
                         transition.observation * np.array([1, 1, 1, 0, 1]), False)
        buffer.add(transition)
        with pytest.raises(EnvContractError, match="q flags differ"):
            buffer.add(bad)

    def test_state_roundtrip(self):
        buffer = ReplayBuffer(4, OBS_DIM, ACTION_DIM)
        for value in range(6):
            buffer.add(self.make_transition(float(value)))
        restored = ReplayBuffer(4, OBS_DIM, ACTION_DIM)
        restored.load_state_dict(buffer.state_dict())
        assert restored.cursor == buffer.cursor and len(restored) == 4
        assert np.array_equal(restored.observations, buffer.observations)
        batch_a = buffer.sample(8, np.random.default_rng(1))
        batch_b = restored.sample(8, np.random.default_rng(1))
        assert np.array_equal(batch_a.rewards, batch_b.rewards)

    def test_clear_and_errors(self):
        buffer = ReplayBuffer(4, OBS_DIM, ACTION_DIM)
        buffer.add(self.make_transition(1.0))
        buffer.clear()
        assert len(buffer) == 0
        with pytest.raises(DimensionMismatchError):
            buffer.add(Transition(np.zeros(3), np.zeros(2), 0.0, np.zeros(3), False))
        with pytest.raises(ValueError, match="capacity"):
            ReplayBuffer(0, OBS_DIM, ACTION_DIM)
        with pytest.raises(EnvContractError):
            Transition(np.zeros(5), np.zeros(2), float('nan'), np.zeros(5), False)


@pytest.mark.slow
@pytest.mark.skipif(os.environ.get("RSAC_RUN_SLOW") != "1", reason="долгий эксперимент, RSAC_RUN_SLOW=1")
class TestBandit:
    """Одношаговая задача с наградой -a^2"""

    def test_mean_action_converges_to_zero(self):
        config = SacConfig(hidden_sizes=(32, 32), batch_size=64, gamma=0.0, actor_lr=3e-3, critic_lr=3e-3,
                           temperature_lr=3e-3)
        learner = SacLearner(1, -np.ones(1), np.ones(1), config, np.random.default_rng(0), env_id="bandit")
        buffer = ReplayBuffer(10_000, 1, 1)
        rng = np.random.default_rng(1)
        observation = np.zeros(1)
        for step in range(4000):
            action = learner.snapshot().act(observation, deterministic=False, rng=rng)
            buffer.add(Transition(observation, action, -float(action[0] ** 2), observation, True))
            if len(buffer) >= config.batch_size:
                learner.update(buffer.sample(config.batch_size, rng), rng)
        assert abs(learner.snapshot().act(observation, deterministic=True)[0]) < 0.05


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
