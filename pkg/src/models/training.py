"""
Записи процесса обучения: переходы, эпизоды, отчеты оценки и журнал запуска.
"""

from __future__ import annotations
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import EnvContractError
from .fault import format_damage_label


@dataclass(frozen=True, eq=False)
class Transition:
    """Один шаг (s, a, r, s', done); q входит в наблюдения"""
    observation: np.ndarray
    action: np.ndarray
    reward: float
    next_observation: np.ndarray
    terminal: bool

    def __post_init__(self) -> None:
        if not np.isfinite(self.reward):
            raise EnvContractError(f"transition reward must be finite, got {self.reward}")


@dataclass(frozen=True, eq=False)
class TransitionBatch:
    """Батч переходов в виде массивов"""
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_observations: np.ndarray
    terminals: np.ndarray

    def __len__(self) -> int:
        return self.rewards.shape[0]

    @classmethod
    def from_transitions(cls, transitions: List[Transition]) -> TransitionBatch:
        return cls(
            observations=np.stack([t.observation for t in transitions]),
            actions=np.stack([t.action for t in transitions]),
            rewards=np.array([t.reward for t in transitions], dtype=np.float64),
            next_observations=np.stack([t.next_observation for t in transitions]),
            terminals=np.array([t.terminal for t in transitions], dtype=np.float64),
        )

    def stats(self) -> Dict[str, float]:
        """Статистика батча для диагностики нечисловых потерь"""
        return {
            'size': float(len(self)),
            'reward_min': float(np.min(self.rewards)),
            'reward_mean': float(np.mean(self.rewards)),
            'reward_max': float(np.max(self.rewards)),
            'obs_abs_max': float(np.max(np.abs(self.observations))),
            'action_abs_max': float(np.max(np.abs(self.actions))),
        }


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Результат одного эпизода"""
    transitions: Tuple[Transition, ...]
    rewards: Tuple[float, ...]
    episode_return: float
    success: bool
    task_trace: Tuple[float, ...]
    damage_label: str = ""

    def __len__(self) -> int:
        return len(self.rewards)

    def discounted_return(self, gamma: float) -> float:
        total = 0.0
        for reward in reversed(self.rewards):
            total = reward + gamma * total
        return total


@dataclass(frozen=True)
class EvaluationReport:
    """Оценка политики на множестве поврежденных суставов по E эпизодам"""
    damaged_set: Tuple[int, ...]
    mean_return: float
    success_rate: float
    episodes: int
    returns: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.episodes < 1:
            raise ValueError("evaluation needs at least one episode")
        if not 0.0 <= self.success_rate <= 1.0:
            raise ValueError(f"success_rate must lie in [0, 1], got {self.success_rate}")

    @property
    def label(self) -> str:
        return format_damage_label(self.damaged_set)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'damaged_set': list(self.damaged_set),
            'label': self.label,
            'mean_return': self.mean_return,
            'success_rate': self.success_rate,
            'episodes': self.episodes,
        }


@dataclass(frozen=True)
class IterationRecord:
    """Запись одной внешней итерации состязательного цикла"""
    iteration: int
    damage_label: str
    training_returns: Tuple[float, ...]
    training_success_rate: float
    buffer_size: int
    updates: int
    env_steps: int
    policy_fingerprint: str
    next_damage_label: Optional[str]
    search_trace: Optional[str]
    checkpoint: Optional[str]

    @property
    def mean_training_return(self) -> float:
        return float(np.mean(self.training_returns)) if self.training_returns else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'iteration': self.iteration,
            'q': self.damage_label,
            'training_returns': [float(r) for r in self.training_returns],
            'mean_training_return': self.mean_training_return,
            'training_success_rate': self.training_success_rate,
            'buffer_size': self.buffer_size,
            'updates': self.updates,
            'env_steps': self.env_steps,
            'policy_fingerprint': self.policy_fingerprint,
            'next_q': self.next_damage_label,
            'search_trace': self.search_trace,
            'checkpoint': self.checkpoint,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> IterationRecord:
        return cls(
            iteration=int(data['iteration']),
            damage_label=data['q'],
            training_returns=tuple(data['training_returns']),
            training_success_rate=float(data['training_success_rate']),
            buffer_size=int(data['buffer_size']),
            updates=int(data['updates']),
            env_steps=int(data['env_steps']),
            policy_fingerprint=data['policy_fingerprint'],
            next_damage_label=data.get('next_q'),
            search_trace=data.get('search_trace'),
            checkpoint=data.get('checkpoint'),
        )


@dataclass
class RunLedger:
    """Журнал запуска: только добавление, одна запись на внешнюю итерацию"""
    records: List[IterationRecord] = field(default_factory=list)

    def append(self, record: IterationRecord) -> None:
        expected = len(self.records)
        if record.iteration != expected:
            raise ValueError(f"ledger expects iteration {expected}, got {record.iteration}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def damage_labels(self) -> List[str]:
        return [record.damage_label for record in self.records]
