"""
Soft Actor-Critic с условием на рабочие состояния суставов q.

q поступает в политику только через наблюдение. Обучение изменяет
состояние SacLearner монопольно; развертывания работают с неизменяемым
снимком PolicySnapshot и могут идти параллельно друг с другом.
"""

from __future__ import annotations
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from ..envs.base import FaultAwareEnv
from ..models.config import SacConfig
from ..models.errors import DimensionMismatchError, NonFiniteLossError
from ..models.fault import JointWorkingState
from ..models.policy import ObservationLike, Policy, PolicySnapshot
from ..models.training import Trajectory, Transition, TransitionBatch
from ..nn.autodiff import MlpHead, MlpSpec, ParamVector, forward, forward_backward
from ..nn.distributions import sample_squashed_gaussian, squashed_gaussian_backward
from ..nn.optim import AdamOptimizer
from ..utils.debug_logger import get_logger

logger = get_logger(__name__)

ActionNoise = Callable[[np.ndarray], np.ndarray]


def act(params: PolicySnapshot, observation: ObservationLike, deterministic: bool,
        rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Действие политики для наблюдения (детерминированное или стохастическое)"""
    return params.act(observation, deterministic, rng)


def rollout(policy: Policy,
            env: FaultAwareEnv,
            q: JointWorkingState,
            stochastic: bool,
            seed: int,
            rng: Optional[np.random.Generator] = None,
            action_noise: Optional[ActionNoise] = None,
            keep_transitions: bool = True) -> Trajectory:
    """
    Один полный эпизод политики в среде

    Args:
        policy: Политика (снимок параметров или скриптовая)
        env: Среда с размерностью q
        q: Рабочие состояния суставов на эпизод
        stochastic: Стохастические действия (обучение) или детерминированные (оценка)
        seed: Зерно сброса среды
        rng: Поток случайных чисел политики; по умолчанию создается из seed
        action_noise: Возмущение команды до обрезки и маскирования
        keep_transitions: Сохранять переходы (не нужно при оценке)
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    episode = policy.begin_episode()
    observation = env.reset(q, seed).as_vector()

    transitions: List[Transition] = []
    rewards: List[float] = []
    trace: List[float] = []
    result = None
    while not env.terminal:
        action = np.asarray(episode.act(observation, not stochastic, rng), dtype=np.float64)
        command = action_noise(action) if action_noise is not None else action
        result = env.step(command)
        next_observation = result.observation.as_vector()
        if keep_transitions:
            transitions.append(Transition(observation=observation, action=action, reward=result.reward,
                                          next_observation=next_observation, terminal=result.terminal))
        rewards.append(result.reward)
        trace.append(env.task_scalar())
        observation = next_observation

    return Trajectory(
        transitions=tuple(transitions),
        rewards=tuple(rewards),
        episode_return=float(sum(rewards)),
        success=bool(result.success) if result is not None else False,
        task_trace=tuple(trace),
        damage_label=q.label,
    )


class SacLearner:
    """
    Состояние обучения SAC: актор, двойные критики, целевые критики, температура

    Шаг обновления: критики -> актор -> температура -> сглаживание целевых сетей.
    """

    def __init__(self,
                 obs_dim: int,
                 action_low: np.ndarray,
                 action_high: np.ndarray,
                 config: SacConfig,
                 rng: np.random.Generator,
                 env_id: str = "",
                 policy_id: str = "rsac"):
        self.config = config
        self.obs_dim = int(obs_dim)
        self.action_low = np.asarray(action_low, dtype=np.float64)
        self.action_high = np.asarray(action_high, dtype=np.float64)
        self.action_dim = self.action_low.size
        self.env_id = env_id
        self.policy_id = policy_id
        self.target_entropy = config.resolved_target_entropy(self.action_dim)
        self.log_std_bounds = (config.log_std_min, config.log_std_max)

        activation = config.activation.value
        self.actor_spec = MlpSpec(self.obs_dim, config.hidden_sizes, 2 * self.action_dim, activation,
                                  MlpHead.SQUASHED_GAUSSIAN)
        self.critic_spec = MlpSpec(self.obs_dim + self.action_dim, config.hidden_sizes, 1, activation,
                                   MlpHead.LINEAR)

        self.actor = ParamVector.initialize(self.actor_spec, rng)
        self.critics = [ParamVector.initialize(self.critic_spec, rng) for _ in range(2)]
        self.target_critics = [critic.with_values(critic.values.copy()) for critic in self.critics]
        initial = config.initial_temperature
        self.log_alpha = float(np.log(initial)) if initial > 0 else float('-inf')

        self.actor_optimizer = AdamOptimizer(self.actor.values.size, lr=config.actor_lr)
        self.critic_optimizers = [AdamOptimizer(c.values.size, lr=config.critic_lr) for c in self.critics]
        self.alpha_optimizer = AdamOptimizer(1, lr=config.temperature_lr)
        self.update_count = 0

    @property
    def temperature(self) -> float:
        return float(np.exp(self.log_alpha))

    def snapshot(self, metadata: Optional[Dict[str, Any]] = None,
                 rng_state: Optional[Dict[str, Any]] = None) -> PolicySnapshot:
        """Неизменяемый снимок текущих параметров вместе с гиперпараметрами"""
        return PolicySnapshot(
            env_id=self.env_id,
            obs_dim=self.obs_dim,
            action_low=tuple(self.action_low.tolist()),
            action_high=tuple(self.action_high.tolist()),
            actor_spec=self.actor_spec,
            actor=self.actor,
            critic_spec=self.critic_spec,
            critics=(self.critics[0], self.critics[1]),
            target_critics=(self.target_critics[0], self.target_critics[1]),
            log_alpha=self.log_alpha,
            log_std_bounds=self.log_std_bounds,
            policy_id=self.policy_id,
            metadata=dict(metadata or {}),
            sac_config=self.config,
            rng_state=rng_state,
        )

    def load_snapshot(self, snapshot: PolicySnapshot) -> None:
        if snapshot.actor_spec != self.actor_spec or snapshot.critic_spec != self.critic_spec:
            raise DimensionMismatchError("network architecture", self.actor_spec.num_params(),
                                         snapshot.actor_spec.num_params())
        self.actor = snapshot.actor
        self.critics = list(snapshot.critics)
        self.target_critics = list(snapshot.target_critics)
        self.log_alpha = snapshot.log_alpha

    def _critic_values(self, params: ParamVector, observations: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return forward(self.critic_spec, params, np.concatenate([observations, actions], axis=1))[:, 0]

    def critic_targets(self, batch: TransitionBatch, rng: np.random.Generator) -> np.ndarray:
        """y = r + gamma * (1 - done) * (min Q_target(s', a') - alpha * log pi(a'|s'))"""
        gamma = self.config.gamma
        head = forward(self.actor_spec, self.actor, batch.next_observations)
        noise = rng.standard_normal((len(batch), self.action_dim))
        sample = sample_squashed_gaussian(head, noise, self.action_low, self.action_high, self.log_std_bounds)
        q1 = self._critic_values(self.target_critics[0], batch.next_observations, sample.action)
        q2 = self._critic_values(self.target_critics[1], batch.next_observations, sample.action)
        soft_value = np.minimum(q1, q2)
        if self.temperature > 0.0:
            soft_value = soft_value - self.temperature * sample.log_prob
        if gamma == 0.0:
            return batch.rewards.copy()
        return batch.rewards + gamma * (1.0 - batch.terminals) * soft_value

    def update(self, batch: TransitionBatch, rng: np.random.Generator) -> Dict[str, float]:
        """Один шаг обновления SAC по батчу; возвращает значения функций потерь"""
        size = len(batch)
        alpha = self.temperature

        # критики
        targets = self.critic_targets(batch, rng)
        critic_inputs = np.concatenate([batch.observations, batch.actions], axis=1)
        critic_losses = []
        new_critics = []
        for index, (critic, optimizer) in enumerate(zip(self.critics, self.critic_optimizers)):
            values, pullback = forward_backward(self.critic_spec, critic, critic_inputs)
            residual = values[:, 0] - targets
            loss = float(np.mean(residual * residual))
            if not np.isfinite(loss):
                raise NonFiniteLossError(f"critic_{index + 1}", batch.stats())
            param_grad, _ = pullback((2.0 / size) * residual[:, None])
            new_critics.append(critic.with_values(optimizer.step(critic.values, param_grad)))
            critic_losses.append(loss)
        self.critics = new_critics

        # актор
        head, actor_pullback = forward_backward(self.actor_spec, self.actor, batch.observations)
        noise = rng.standard_normal((size, self.action_dim))
        sample = sample_squashed_gaussian(head, noise, self.action_low, self.action_high, self.log_std_bounds)
        inputs = np.concatenate([batch.observations, sample.action], axis=1)
        q_values = []
        action_grads = []
        for critic in self.critics:
            values, pullback = forward_backward(self.critic_spec, critic, inputs)
            _, input_grad = pullback(np.ones((size, 1)))
            q_values.append(values[:, 0])
            action_grads.append(input_grad[:, self.obs_dim:])
        first_is_min = q_values[0] <= q_values[1]
        min_q = np.where(first_is_min, q_values[0], q_values[1])
        actor_loss = float(np.mean(alpha * sample.log_prob - min_q))
        if not np.isfinite(actor_loss):
            raise NonFiniteLossError("actor", batch.stats())
        action_grad = -np.where(first_is_min[:, None], action_grads[0], action_grads[1]) / size
        log_prob_grad = np.full(size, alpha / size)
        head_grad = squashed_gaussian_backward(sample, action_grad, log_prob_grad)
        actor_grad, _ = actor_pullback(head_grad)
        self.actor = self.actor.with_values(self.actor_optimizer.step(self.actor.values, actor_grad))

        # температура
        alpha_loss = 0.0
        if self.config.learn_temperature:
            entropy_gap = sample.log_prob + self.target_entropy
            alpha_loss = float(-np.mean(self.log_alpha * entropy_gap))
            if not np.isfinite(alpha_loss):
                raise NonFiniteLossError("temperature", batch.stats())
            grad = np.array([-np.mean(entropy_gap)])
            self.log_alpha = float(self.alpha_optimizer.step(np.array([self.log_alpha]), grad)[0])

        # сглаживание целевых сетей
        tau = self.config.tau
        self.target_critics = [
            target.with_values((1.0 - tau) * target.values + tau * online.values)
            for target, online in zip(self.target_critics, self.critics)
        ]
        self.update_count += 1
        return {
            'critic_loss': critic_losses[0] + critic_losses[1],
            'actor_loss': actor_loss,
            'alpha_loss': alpha_loss,
            'temperature': self.temperature,
        }

    def state_dict(self) -> Dict[str, Any]:
        """Оптимизаторы и счетчик обновлений (параметры сохраняются через снимок)"""
        return {
            'update_count': self.update_count,
            'actor_optimizer': self.actor_optimizer.state_dict(),
            'critic_optimizers': [optimizer.state_dict() for optimizer in self.critic_optimizers],
            'alpha_optimizer': self.alpha_optimizer.state_dict(),
        }

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        self.update_count = int(state['update_count'])
        self.actor_optimizer = AdamOptimizer.from_state_dict(state['actor_optimizer'])
        self.critic_optimizers = [AdamOptimizer.from_state_dict(s) for s in state['critic_optimizers']]
        self.alpha_optimizer = AdamOptimizer.from_state_dict(state['alpha_optimizer'])
