"""
Кольцевой буфер воспроизведения опыта.

Буфер создается один раз перед внешним циклом и сохраняется между
итерациями состязательного обучения; q хранится внутри наблюдений, поэтому
повторное использование переходов из других сценариев повреждений корректно.
"""

from __future__ import annotations
from typing import Any, Dict, Optional

import numpy as np

from ..models.errors import DimensionMismatchError, EnvContractError
from ..models.training import Transition, TransitionBatch
from ..utils.debug_logger import get_logger

logger = get_logger(__name__)


class ReplayBuffer:
    """Кольцевой буфер фиксированной емкости с равномерной выборкой"""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int, q_slice: Optional[slice] = None):
        if capacity < 1:
            raise ValueError(f"buffer capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.action_dim = int(action_dim)
        self.q_slice = q_slice

        self.observations = np.zeros((self.capacity, self.obs_dim))
        self.actions = np.zeros((self.capacity, self.action_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_observations = np.zeros((self.capacity, self.obs_dim))
        self.terminals = np.zeros(self.capacity)

        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, transition: Transition) -> None:
        observation = np.asarray(transition.observation, dtype=np.float64)
        next_observation = np.asarray(transition.next_observation, dtype=np.float64)
        action = np.asarray(transition.action, dtype=np.float64)
        if observation.shape != (self.obs_dim,):
            raise DimensionMismatchError("observation", self.obs_dim, observation.size)
        if next_observation.shape != (self.obs_dim,):
            raise DimensionMismatchError("next observation", self.obs_dim, next_observation.size)
        if action.shape != (self.action_dim,):
            raise DimensionMismatchError("action", self.action_dim, action.size)
        if self.q_slice is not None and not np.array_equal(observation[self.q_slice], next_observation[self.q_slice]):
            raise EnvContractError("q flags differ between observation and next observation of one transition")

        index = self.cursor
        self.observations[index] = observation
        self.actions[index] = action
        self.rewards[index] = transition.reward
        self.next_observations[index] = next_observation
        self.terminals[index] = float(transition.terminal)

        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        """Равномерная выборка с возвращением по текущему содержимому"""
        if batch_size > self.size:
            raise ValueError(f"batch size {batch_size} exceeds buffer occupancy {self.size}")
        indices = rng.integers(0, self.size, size=batch_size)
        return TransitionBatch(
            observations=self.observations[indices],
            actions=self.actions[indices],
            rewards=self.rewards[indices],
            next_observations=self.next_observations[indices],
            terminals=self.terminals[indices],
        )

    def clear(self) -> None:
        self.cursor = 0
        self.size = 0
        logger.info("Replay buffer cleared")

    def state_dict(self) -> Dict[str, Any]:
        """Содержимое буфера для контрольной точки продолжения"""
        n = self.size
        return {
            'capacity': np.int64(self.capacity),
            'cursor': np.int64(self.cursor),
            'size': np.int64(n),
            'observations': self.observations[:n].copy(),
            'actions': self.actions[:n].copy(),
            'rewards': self.rewards[:n].copy(),
            'next_observations': self.next_observations[:n].copy(),
            'terminals': self.terminals[:n].copy(),
        }

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        if int(state['capacity']) != self.capacity:
            raise ValueError(f"buffer capacity {int(state['capacity'])} does not match {self.capacity}")
        n = int(state['size'])
        self.observations[:n] = state['observations']
        self.actions[:n] = state['actions']
        self.rewards[:n] = state['rewards']
        self.next_observations[:n] = state['next_observations']
        self.terminals[:n] = state['terminals']
        self.size = n
        self.cursor = int(state['cursor'])
