"""
KittyWalk: четвероногий робот (4 ноги x 3 сустава) идет к цели на плоскости.

Нога: отведение (вокруг продольной оси), бедро и колено (сагиттальная
плоскость). Стопа в опоре, если ее высота ниже contact_height. Корпус
смещается на среднее перемещение опорных стоп с обратным знаком; падение
фиксируется, когда проекция центра выходит за опорный многоугольник больше
чем на fall_margin.
"""

from __future__ import annotations
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from ..models.environment import EnvSpec
from ..models.fault import JointWorkingState
from .base import FaultAwareEnv, advance_joints

N_LEGS = 4
# FL, FR, RL, RR
HIP_SIGNS = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
SUCCESS_RADIUS = 0.5
SUCCESS_BONUS = 5.0
FALL_PENALTY = 10.0


@dataclass(frozen=True, eq=False)
class KittyWalkState:
    """Состояние задачи ходьбы"""
    joint_angles: np.ndarray
    base_xy: Tuple[float, float] = (0.0, 0.0)
    heading: float = 0.0
    goal: Tuple[float, float] = (2.0, 0.0)
    fallen: bool = False

    @property
    def goal_distance(self) -> float:
        return float(np.hypot(self.goal[0] - self.base_xy[0], self.goal[1] - self.base_xy[1]))


def foot_positions(joint_angles: np.ndarray, spec: EnvSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Положения стоп в системе корпуса

    Returns:
        (xy [4, 2], высота над опорой [4])
    """
    l1, l2 = spec.dynamics['thigh_length'], spec.dynamics['shin_length']
    hips = HIP_SIGNS * np.array([spec.dynamics['hip_x'], spec.dynamics['hip_y']])
    base_height = l1 + l2
    angles = np.asarray(joint_angles, dtype=np.float64).reshape(N_LEGS, 3)
    abduction, pitch, knee = angles[:, 0], angles[:, 1], angles[:, 2]

    x = l1 * np.sin(pitch) + l2 * np.sin(pitch + knee)
    z_sagittal = -(l1 * np.cos(pitch) + l2 * np.cos(pitch + knee))
    side = HIP_SIGNS[:, 1]
    y = side * (-z_sagittal) * np.sin(abduction)
    height = base_height + z_sagittal * np.cos(abduction)

    xy = hips + np.stack([x, y], axis=1)
    return xy, height


def stance_mask(heights: np.ndarray, spec: EnvSpec) -> np.ndarray:
    return heights < spec.dynamics['contact_height']


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Выпуклая оболочка монотонной цепью (для нескольких точек)"""
    pts = sorted(map(tuple, points))
    if len(pts) <= 2:
        return np.array(pts)
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(np.array(lower[-2]), np.array(lower[-1]), np.array(p)) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(np.array(upper[-2]), np.array(upper[-1]), np.array(p)) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    s = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + s * ab)))


def support_distance(point: np.ndarray, stance_xy: np.ndarray) -> float:
    """Расстояние от точки до опорного многоугольника (0 внутри); без опоры - бесконечность"""
    if len(stance_xy) == 0:
        return float('inf')
    hull = _convex_hull(stance_xy)
    if len(hull) == 1:
        return float(np.linalg.norm(point - hull[0]))
    edges = [(hull[i], hull[(i + 1) % len(hull)]) for i in range(len(hull))]
    if len(hull) >= 3 and all(_cross(a, b, point) >= 0.0 for a, b in edges):
        return 0.0
    return min(_segment_distance(point, a, b) for a, b in edges)


def _rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def kitty_dynamics(state: KittyWalkState,
                   masked_action: np.ndarray,
                   spec: EnvSpec,
                   q: Optional[JointWorkingState] = None) -> KittyWalkState:
    """Один шаг ходьбы для уже маскированного действия"""
    old_angles = np.asarray(state.joint_angles, dtype=np.float64)
    new_angles = advance_joints(old_angles, np.asarray(masked_action, dtype=np.float64), spec, q)
    return _advance_base(state, old_angles, new_angles, spec)


def _advance_base(state: KittyWalkState, old_angles: np.ndarray, new_angles: np.ndarray,
                  spec: EnvSpec) -> KittyWalkState:
    if state.fallen:
        return replace(state, joint_angles=new_angles)

    old_xy, old_height = foot_positions(old_angles, spec)
    new_xy, new_height = foot_positions(new_angles, spec)
    new_stance = stance_mask(new_height, spec)
    planted = stance_mask(old_height, spec) & new_stance

    base_xy = np.asarray(state.base_xy, dtype=np.float64)
    heading = state.heading
    if planted.any():
        motion = new_xy[planted] - old_xy[planted]
        displacement = -motion.mean(axis=0)
        anchors = old_xy[planted]
        radii_sq = np.maximum(np.sum(anchors * anchors, axis=1), 1e-12)
        yaw = -float(np.mean((anchors[:, 0] * motion[:, 1] - anchors[:, 1] * motion[:, 0]) / radii_sq))
        base_xy = base_xy + _rotation(heading) @ displacement
        heading = heading + yaw

    fallen = support_distance(np.zeros(2), new_xy[new_stance]) > spec.dynamics['fall_margin']
    return replace(state, joint_angles=new_angles, base_xy=(float(base_xy[0]), float(base_xy[1])),
                   heading=float(heading), fallen=bool(fallen))


def kitty_success(state: KittyWalkState) -> bool:
    """Корпус строго ближе 0.5 м к цели"""
    return state.goal_distance < SUCCESS_RADIUS


def kitty_reward(state: KittyWalkState, success: bool, initial_distance: float) -> float:
    return (-state.goal_distance / initial_distance + SUCCESS_BONUS * float(success)
            - FALL_PENALTY * float(state.fallen))


class KittyWalkEnv(FaultAwareEnv):
    """Локомоционная задача: 12 суставов, успех и падение завершают эпизод"""

    def __init__(self, spec: EnvSpec, **kwargs):
        super().__init__(spec, **kwargs)
        self.state = self._initial_state()
        self._initial_distance = self.state.goal_distance

    def _initial_state(self) -> KittyWalkState:
        goal = (self.spec.dynamics['goal_x'], self.spec.dynamics['goal_y'])
        return KittyWalkState(joint_angles=self._joint_angles.copy(), goal=goal)

    def _reset_task(self) -> None:
        self.state = self._initial_state()
        self._initial_distance = self.state.goal_distance

    def _advance_task(self, old_angles: np.ndarray, new_angles: np.ndarray) -> None:
        self.state = _advance_base(self.state, old_angles, new_angles, self.spec)

    def _task_features(self) -> np.ndarray:
        state = self.state
        offset = np.array(state.goal) - np.array(state.base_xy)
        local = _rotation(-state.heading) @ offset
        _, heights = foot_positions(state.joint_angles, self.spec)
        contacts = stance_mask(heights, self.spec).astype(np.float64)
        return np.concatenate([
            local,
            [np.cos(state.heading), np.sin(state.heading), state.goal_distance],
            contacts,
        ])

    def _success_now(self) -> bool:
        return kitty_success(self.state)

    def _failed(self) -> bool:
        return self.state.fallen

    def _success_terminates(self) -> bool:
        return True

    def _reward(self) -> float:
        return kitty_reward(self.state, self._success, self._initial_distance)

    def task_scalar(self) -> float:
        return self.state.goal_distance
