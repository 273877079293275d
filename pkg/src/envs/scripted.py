"""
Скриптовые политики и среды-фикстуры.

ScriptedClawGait - походка трех пальцев, решающая ClawValve без повреждений;
используется как эталонная политика вместо обученной контрольной точки.
ScriptedRewardEnv - среда с наградой в замкнутой форме от множества
поврежденных суставов, для проверки оценщиков.
"""

from __future__ import annotations
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from ..models.environment import EnvObservation, EnvSpec, SuccessPredicate
from ..models.policy import ObservationLike, observation_vector
from .base import FaultAwareEnv
from .claw_valve import N_FINGERS


class GaitPhase(Enum):
    PUSH = 0      # кончики в кольце, основания поворачиваются и толкают вентиль
    EXIT = 1      # сгибание пальцев, кончики выходят из кольца
    RETURN = 2    # возврат оснований без контакта
    ENTER = 3     # разгибание, кончики снова в кольце


class ScriptedClawGait:
    """Циклическая походка для ClawValve (реализует протокол Policy)"""

    def __init__(self, spec: EnvSpec, sweep: float = 0.45, lift: float = -1.2,
                 tolerance: float = 0.02, hold_fraction: float = 0.95, policy_id: str = "scripted_gait"):
        if spec.n_joints != 3 * N_FINGERS:
            raise ValueError(f"claw gait needs {3 * N_FINGERS} joints, got {spec.n_joints}")
        self.spec = spec
        self.sweep = sweep
        self.lift = lift
        self.tolerance = tolerance
        self.hold_angle = hold_fraction * np.pi
        self.policy_id = policy_id

    def phase_targets(self, phase: GaitPhase) -> np.ndarray:
        base = -self.sweep if phase in (GaitPhase.PUSH, GaitPhase.EXIT) else self.sweep
        bend = self.lift if phase in (GaitPhase.EXIT, GaitPhase.RETURN) else 0.0
        return np.tile([base, bend, bend], N_FINGERS)

    def begin_episode(self) -> _GaitEpisode:
        return _GaitEpisode(self)


class _GaitEpisode:
    def __init__(self, gait: ScriptedClawGait):
        self.gait = gait
        self.phase = GaitPhase.PUSH

    def act(self, observation: ObservationLike, deterministic: bool = True,
            rng: Optional[np.random.Generator] = None) -> np.ndarray:
        gait = self.gait
        spec = gait.spec
        obs = EnvObservation.from_vector(spec, observation_vector(observation))
        valve_angle = np.pi - np.pi * obs.task_features[3]
        if valve_angle > gait.hold_angle:
            return np.zeros(spec.action_dim)

        healthy = obs.q_flags < 0.5
        for _ in range(len(GaitPhase)):
            error = gait.phase_targets(self.phase) - obs.joint_sensors
            if np.any(np.abs(error[healthy]) > gait.tolerance):
                break
            self.phase = GaitPhase((self.phase.value + 1) % len(GaitPhase))
        action = np.clip(error, spec.action_low_array, spec.action_high_array)
        action[~healthy] = 0.0
        return action


@dataclass
class ConstantPolicy:
    """Политика с постоянным действием"""
    action: np.ndarray
    policy_id: str = "constant"

    def begin_episode(self) -> ConstantPolicy:
        return self

    def act(self, observation: ObservationLike, deterministic: bool = True,
            rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return np.asarray(self.action, dtype=np.float64).copy()


def scripted_env_spec(n_joints: int = 9, horizon: int = 10, base_reward: float = 1.0,
                      weights: Optional[Sequence[float]] = None, max_damaged: int = 2) -> EnvSpec:
    """Спецификация среды ScriptedRewardEnv"""
    weights = [0.0] * n_joints if weights is None else [float(w) for w in weights]
    dynamics = {'base_reward': float(base_reward)}
    dynamics.update({f'weight_{i}': w for i, w in enumerate(weights)})
    bound = abs(base_reward) + sum(abs(w) for w in weights) + 1.0
    return EnvSpec.from_dict({
        'env_id': 'scripted',
        'n_joints': n_joints,
        'joint_limits': [[-1.0, 1.0]] * n_joints,
        'action_limit': 0.15,
        'task_feature_dim': 1,
        'episode_horizon': horizon,
        'dt': 0.05,
        'success_predicate': SuccessPredicate.VALVE_ANGLE.value,
        'feasible_fraction': 0.6,
        'max_damaged': max_damaged,
        'max_joint_speed': 2.0,
        'reward_bounds': [-bound, bound],
        'dynamics': dynamics,
    })


class ScriptedRewardEnv(FaultAwareEnv):
    """
    Награда за шаг постоянна: base_reward - сумма весов поврежденных суставов

    Успех - неотрицательная награда. Доходность эпизода известна в замкнутой
    форме, что позволяет проверять оценщики без обучения.
    """

    def _reset_task(self) -> None:
        pass

    def _advance_task(self, old_angles: np.ndarray, new_angles: np.ndarray) -> None:
        pass

    def _task_features(self) -> np.ndarray:
        return np.array([float(self._t)])

    def step_reward(self) -> float:
        reward = self.spec.dynamics['base_reward']
        for i in self._q.damaged_indices:
            reward -= self.spec.dynamics[f'weight_{i}']
        return reward

    def _success_now(self) -> bool:
        return self.step_reward() >= 0.0

    def _reward(self) -> float:
        return self.step_reward()

    def task_scalar(self) -> float:
        return float(self._t)
