"""
Базовая среда с внедрением повреждений суставов.

Порядок обработки шага общий для всех задач:
проверка действия -> обрезка по границам -> маскирование по q ->
ограничение скорости суставов -> фиксация заклиненных суставов ->
динамика задачи -> награда и признак успеха -> маскирование наблюдения.
"""

from __future__ import annotations
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, Optional

import numpy as np

from ..models.environment import EnvObservation, EnvSpec, StepResult
from ..models.errors import DimensionMismatchError, EnvContractError
from ..models.fault import DamageMode, JointWorkingState, mask_action, mask_observation
from ..utils.debug_logger import get_logger

logger = get_logger(__name__)

TrajectorySink = Callable[[Dict[str, Any]], None]


def advance_joints(joint_angles: np.ndarray,
                   masked_action: np.ndarray,
                   spec: EnvSpec,
                   q: Optional[JointWorkingState] = None) -> np.ndarray:
    """
    Движение суставов к целевым углам с ограничением скорости

    Цель = текущий угол + приращение, обрезанная по механическим пределам;
    за шаг сустав проходит не больше max_joint_speed * dt. Суставы,
    заклиненные в режиме FROZEN, устанавливаются точно в угол заклинивания.
    """
    limits = np.asarray(spec.joint_limits, dtype=np.float64)
    target = np.clip(joint_angles + masked_action, limits[:, 0], limits[:, 1])
    max_step = spec.max_joint_speed * spec.dt
    new_angles = joint_angles + np.clip(target - joint_angles, -max_step, max_step)
    if q is not None and q.mode is DamageMode.FROZEN and any(q.damaged):
        mask = q.damaged_mask()
        new_angles[mask] = np.asarray(q.frozen_angle, dtype=np.float64)[mask]
    return new_angles


class FaultAwareEnv(ABC):
    """
    Среда с рабочими состояниями суставов q

    Экземпляр однопоточный; разные экземпляры не разделяют изменяемого
    состояния и могут работать параллельно.
    """

    def __init__(self,
                 spec: EnvSpec,
                 hide_q_flags: bool = False,
                 damage_wrapper: bool = True,
                 trajectory_sink: Optional[TrajectorySink] = None):
        self.spec = spec
        self.hide_q_flags = hide_q_flags
        self.damage_wrapper = damage_wrapper
        self.trajectory_sink = trajectory_sink

        self._q: Optional[JointWorkingState] = None
        self._rng: Optional[np.random.Generator] = None
        self._joint_angles = np.zeros(spec.n_joints)
        self._t = 0
        self._terminal = True
        self._success = False
        self._episode_counter = -1
        self._episode_seed: Optional[int] = None

    # ---- задача ----

    @abstractmethod
    def _reset_task(self) -> None:
        """Сброс состояния задачи (суставы уже установлены)"""

    @abstractmethod
    def _advance_task(self, old_angles: np.ndarray, new_angles: np.ndarray) -> None:
        """Продвижение динамики задачи на один шаг"""

    @abstractmethod
    def _task_features(self) -> np.ndarray:
        pass

    @abstractmethod
    def _success_now(self) -> bool:
        pass

    @abstractmethod
    def _reward(self) -> float:
        pass

    def _failed(self) -> bool:
        return False

    def _success_terminates(self) -> bool:
        return False

    @abstractmethod
    def task_scalar(self) -> float:
        """Скалярная величина прогресса задачи для трасс (угол вентиля или расстояние до цели)"""

    # ---- контракт среды ----

    @property
    def q(self) -> Optional[JointWorkingState]:
        return self._q

    @property
    def joint_angles(self) -> np.ndarray:
        """Истинные (немаскированные) углы суставов"""
        return self._joint_angles.copy()

    @property
    def t(self) -> int:
        return self._t

    @property
    def success(self) -> bool:
        return self._success

    @property
    def terminal(self) -> bool:
        return self._terminal

    def reset(self, q: JointWorkingState, seed: int) -> EnvObservation:
        """Начало эпизода: детерминированная инициализация из seed и повреждение по q"""
        if q.n_joints != self.spec.n_joints:
            raise DimensionMismatchError("joint working state", self.spec.n_joints, q.n_joints)
        for i in q.damaged_indices:
            low, high = self.spec.joint_limits[i]
            if not low <= q.frozen_angle[i] <= high:
                raise EnvContractError(f"frozen angle of joint {i} lies outside its mechanical limits")

        self._q = q
        self._rng = np.random.default_rng(seed)
        self._episode_seed = int(seed)
        self._episode_counter += 1
        self._t = 0
        self._terminal = False
        self._success = False

        angles = np.asarray(self.spec.home_pose, dtype=np.float64).copy()
        if self.damage_wrapper and q.mode is DamageMode.FROZEN and any(q.damaged):
            mask = q.damaged_mask()
            angles[mask] = np.asarray(q.frozen_angle, dtype=np.float64)[mask]
        self._joint_angles = angles
        self._reset_task()
        return self._observe()

    def step(self, action: np.ndarray) -> StepResult:
        if self._q is None:
            raise EnvContractError("step() called before reset()")
        if self._terminal:
            raise EnvContractError("step() called after the episode terminated")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.spec.action_dim,):
            raise DimensionMismatchError("action", self.spec.action_dim, action.size)
        if not np.all(np.isfinite(action)):
            raise EnvContractError(f"action contains non-finite entries: {action.tolist()}")

        clipped = np.clip(action, self.spec.action_low_array, self.spec.action_high_array)
        if self.damage_wrapper:
            applied = mask_action(self._q, clipped, self.spec.action_low_array,
                                  self.spec.action_high_array, self._rng)
            q = self._q
        else:
            applied, q = clipped, None

        old_angles = self._joint_angles
        new_angles = advance_joints(old_angles, applied, self.spec, q)
        self._joint_angles = new_angles
        self._advance_task(old_angles, new_angles)
        self._t += 1

        if not self._success and self._success_now():
            self._success = True
        failed = self._failed()
        reward = float(self._reward())
        low, high = self.spec.reward_bounds
        if not (np.isfinite(reward) and low <= reward <= high):
            raise EnvContractError(f"reward {reward} outside declared bounds [{low}, {high}]")

        self._terminal = (self._t >= self.spec.episode_horizon or failed
                          or (self._success and self._success_terminates()))
        observation = self._observe()

        if self.trajectory_sink is not None:
            self.trajectory_sink({
                'episode': self._episode_counter,
                'seed': self._episode_seed,
                't': self._t,
                'q': self._q.label,
                'action': applied.tolist(),
                'reward': reward,
                'success': self._success,
            })
        return StepResult(observation=observation, reward=reward, terminal=self._terminal,
                          success=self._success, info={'failed': failed, 't': self._t})

    def _observe(self) -> EnvObservation:
        sensors = self._joint_angles.copy()
        flags = np.zeros(self.spec.n_joints)
        if self.damage_wrapper:
            sensors = mask_observation(self._q, sensors)
            if not self.hide_q_flags:
                flags = self._q.flags()
        return EnvObservation(
            task_features=np.asarray(self._task_features(), dtype=np.float64),
            joint_sensors=sensors,
            q_flags=flags,
        )
