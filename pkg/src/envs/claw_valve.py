"""
ClawValve: три пальца по три сустава поворачивают вентиль от 0 до pi.

Плоская кинематика: пальцы закреплены на окружности радиуса base_radius
под углами 0, 120 и 240 градусов и направлены к центру вентиля. Кончик
пальца внутри кольца захвата передает вентилю касательную составляющую
своей скорости; вентиль интегрируется с вязким демпфированием.
"""

from __future__ import annotations
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..models.environment import EnvSpec
from ..models.fault import JointWorkingState
from .base import FaultAwareEnv, advance_joints

N_FINGERS = 3
TARGET_ANGLE = np.pi
SUCCESS_ANGLE = 17.0 * np.pi / 18.0
SUCCESS_BONUS = 5.0


@dataclass(frozen=True, eq=False)
class ClawValveState:
    """Состояние задачи вентиля"""
    joint_angles: np.ndarray
    valve_angle: float = 0.0
    valve_velocity: float = 0.0
    target_angle: float = TARGET_ANGLE


def finger_bases(spec: EnvSpec) -> np.ndarray:
    radius = spec.dynamics['base_radius']
    phis = 2.0 * np.pi * np.arange(N_FINGERS) / N_FINGERS
    return np.stack([radius * np.cos(phis), radius * np.sin(phis)], axis=1)


def fingertip_positions(joint_angles: np.ndarray, spec: EnvSpec) -> np.ndarray:
    """Прямая кинематика: координаты кончиков пальцев [3, 2]"""
    links = (spec.dynamics['link_1'], spec.dynamics['link_2'], spec.dynamics['link_3'])
    bases = finger_bases(spec)
    tips = np.empty((N_FINGERS, 2))
    for finger in range(N_FINGERS):
        heading = 2.0 * np.pi * finger / N_FINGERS + np.pi
        point = bases[finger].copy()
        for link, angle in zip(links, joint_angles[3 * finger:3 * finger + 3]):
            heading += angle
            point += link * np.array([np.cos(heading), np.sin(heading)])
        tips[finger] = point
    return tips


def in_grip_annulus(tips: np.ndarray, spec: EnvSpec) -> np.ndarray:
    radii = np.linalg.norm(tips, axis=1)
    return (radii >= spec.dynamics['grip_inner_radius']) & (radii <= spec.dynamics['grip_outer_radius'])


def tangential_speeds(old_tips: np.ndarray, new_tips: np.ndarray, dt: float) -> np.ndarray:
    """Касательная (против часовой стрелки) составляющая скорости кончиков относительно оси вентиля"""
    velocity = (new_tips - old_tips) / dt
    radii = np.linalg.norm(new_tips, axis=1)
    safe = np.where(radii > 0.0, radii, 1.0)
    tangent = np.stack([-new_tips[:, 1], new_tips[:, 0]], axis=1) / safe[:, None]
    return np.where(radii > 0.0, np.sum(velocity * tangent, axis=1), 0.0)


def valve_update(valve_angle: float, valve_velocity: float, drive: float, spec: EnvSpec):
    """
    Шаг вентиля: w' = w + dt * (coupling * drive - damping * w), angle' = angle + dt * w'

    drive - сумма касательных скоростей кончиков в кольце захвата.
    На упорах угол ограничивается, скорость обнуляется.
    """
    dt = spec.dt
    velocity = valve_velocity + dt * (spec.dynamics['coupling'] * drive - spec.dynamics['damping'] * valve_velocity)
    angle = valve_angle + dt * velocity
    low, high = spec.dynamics['valve_min_angle'], spec.dynamics['valve_max_angle']
    if angle < low or angle > high:
        angle = min(max(angle, low), high)
        velocity = 0.0
    return float(angle), float(velocity)


def claw_dynamics(state: ClawValveState,
                  masked_action: np.ndarray,
                  spec: EnvSpec,
                  q: Optional[JointWorkingState] = None) -> ClawValveState:
    """Один шаг динамики вентиля для уже маскированного действия"""
    old_angles = np.asarray(state.joint_angles, dtype=np.float64)
    new_angles = advance_joints(old_angles, np.asarray(masked_action, dtype=np.float64), spec, q)
    return _advance_valve(state, old_angles, new_angles, spec)


def _advance_valve(state: ClawValveState, old_angles: np.ndarray, new_angles: np.ndarray,
                   spec: EnvSpec) -> ClawValveState:
    old_tips = fingertip_positions(old_angles, spec)
    new_tips = fingertip_positions(new_angles, spec)
    speeds = tangential_speeds(old_tips, new_tips, spec.dt)
    drive = float(np.sum(speeds[in_grip_annulus(new_tips, spec)]))
    angle, velocity = valve_update(state.valve_angle, state.valve_velocity, drive, spec)
    return replace(state, joint_angles=new_angles, valve_angle=angle, valve_velocity=velocity)


def claw_success(state: ClawValveState) -> bool:
    """Вентиль повернут строго больше чем на 170 градусов"""
    return bool(state.valve_angle > SUCCESS_ANGLE)


def claw_reward(state: ClawValveState, success: bool) -> float:
    return -abs(state.valve_angle - state.target_angle) / np.pi + SUCCESS_BONUS * float(success)


class ClawValveEnv(FaultAwareEnv):
    """Манипуляционная задача: 9 суставов, успех фиксируется и не завершает эпизод"""

    def __init__(self, spec: EnvSpec, **kwargs):
        super().__init__(spec, **kwargs)
        self.state = ClawValveState(joint_angles=self._joint_angles.copy())

    def _reset_task(self) -> None:
        self.state = ClawValveState(joint_angles=self._joint_angles.copy())

    def _advance_task(self, old_angles: np.ndarray, new_angles: np.ndarray) -> None:
        self.state = _advance_valve(self.state, old_angles, new_angles, self.spec)

    def _task_features(self) -> np.ndarray:
        angle = self.state.valve_angle
        return np.array([
            np.cos(angle),
            np.sin(angle),
            self.state.valve_velocity,
            (self.state.target_angle - angle) / np.pi,
        ])

    def _success_now(self) -> bool:
        return claw_success(self.state)

    def _reward(self) -> float:
        return claw_reward(self.state, self._success)

    def task_scalar(self) -> float:
        return self.state.valve_angle
