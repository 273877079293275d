"""
Модели описания сред: спецификация среды, наблюдение и результат шага.

Спецификации сред хранятся в JSON-файлах configs/envs/*.json и являются
эталонными значениями констант для всех тестов динамики.
"""

from __future__ import annotations
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple
import json

import numpy as np

from ..utils.debug_logger import get_logger
from .errors import ConfigError, DimensionMismatchError

logger = get_logger(__name__)

# Каталог со спецификациями сред по умолчанию
DEFAULT_ENV_SPEC_DIR = Path(__file__).resolve().parents[2] / "configs" / "envs"


class SuccessPredicate(Enum):
    """Предикат успеха эпизода"""
    VALVE_ANGLE = "valve_angle"
    GOAL_DISTANCE = "goal_distance"


@dataclass(frozen=True)
class EnvSpec:
    """
    Спецификация среды

    Содержит число суставов, границы действий, горизонт эпизода, допустимые
    диапазоны заклинивания суставов и константы динамики конкретной задачи.
    """
    env_id: str
    n_joints: int
    joint_limits: Tuple[Tuple[float, float], ...]
    home_pose: Tuple[float, ...]
    action_low: Tuple[float, ...]
    action_high: Tuple[float, ...]
    task_feature_dim: int
    episode_horizon: int
    dt: float
    success_predicate: SuccessPredicate
    feasible_frozen_ranges: Tuple[Tuple[float, float], ...]
    max_damaged: int
    max_joint_speed: float
    reward_bounds: Tuple[float, float]
    dynamics: Mapping[str, float] = field(default_factory=dict)
    forbidden_sets: Tuple[FrozenSet[int], ...] = ()
    joint_names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        errors = self.get_validation_errors()
        if errors:
            raise ConfigError("; ".join(errors), field_path=f"env_spec[{self.env_id}]")

    def get_validation_errors(self) -> List[str]:
        """Получение списка ошибок валидации"""
        errors = []
        n = self.n_joints
        if n < 1:
            errors.append("n_joints must be >= 1")
        for name in ("joint_limits", "home_pose", "action_low", "action_high", "feasible_frozen_ranges"):
            if len(getattr(self, name)) != n:
                errors.append(f"{name} must have {n} entries")
        if errors:
            return errors

        for i, (low, high) in enumerate(zip(self.action_low, self.action_high)):
            if not (np.isfinite(low) and np.isfinite(high)) or low >= high:
                errors.append(f"action bounds of joint {i} must be finite with low < high")
        for i, ((jlo, jhi), (flo, fhi)) in enumerate(zip(self.joint_limits, self.feasible_frozen_ranges)):
            if jlo >= jhi:
                errors.append(f"joint_limits of joint {i} must satisfy low < high")
            if not (jlo <= flo <= fhi <= jhi):
                errors.append(f"feasible_frozen_ranges of joint {i} must lie inside joint limits")
        for i, angle in enumerate(self.home_pose):
            jlo, jhi = self.joint_limits[i]
            if not jlo <= angle <= jhi:
                errors.append(f"home_pose of joint {i} is outside joint limits")
        if self.episode_horizon < 1:
            errors.append("episode_horizon must be >= 1")
        if self.dt <= 0:
            errors.append("dt must be > 0")
        if not 0 <= self.max_damaged <= n:
            errors.append(f"max_damaged must lie in [0, {n}]")
        if self.reward_bounds[0] >= self.reward_bounds[1]:
            errors.append("reward_bounds must satisfy low < high")
        if self.joint_names and len(self.joint_names) != n:
            errors.append(f"joint_names must have {n} entries")
        if self.success_predicate is SuccessPredicate.GOAL_DISTANCE and 'goal_x' in self.dynamics:
            if np.hypot(self.dynamics['goal_x'], self.dynamics.get('goal_y', 0.0)) <= 0.0:
                errors.append("goal must not coincide with the start position (0, 0)")
        return errors

    @property
    def action_dim(self) -> int:
        return self.n_joints

    @property
    def obs_dim(self) -> int:
        """task features + N сенсоров + N флагов q"""
        return self.task_feature_dim + 2 * self.n_joints

    @property
    def sensor_slice(self) -> slice:
        return slice(self.task_feature_dim, self.task_feature_dim + self.n_joints)

    @property
    def q_slice(self) -> slice:
        return slice(self.task_feature_dim + self.n_joints, self.obs_dim)

    @property
    def action_low_array(self) -> np.ndarray:
        return np.asarray(self.action_low, dtype=np.float64)

    @property
    def action_high_array(self) -> np.ndarray:
        return np.asarray(self.action_high, dtype=np.float64)

    def is_feasible_set(self, damaged_set: Iterable[int]) -> bool:
        """Допустим ли набор поврежденных суставов для этой среды"""
        joints = frozenset(damaged_set)
        if len(joints) > self.max_damaged:
            return False
        if any(not 0 <= j < self.n_joints for j in joints):
            return False
        return not any(forbidden <= joints for forbidden in self.forbidden_sets)

    def with_dynamics(self, **overrides: float) -> EnvSpec:
        """Копия спецификации с переопределенными константами динамики"""
        unknown = set(overrides) - set(self.dynamics)
        if unknown:
            raise ConfigError(f"unknown dynamics constants: {sorted(unknown)}", field_path=self.env_id)
        merged = dict(self.dynamics)
        merged.update({key: float(value) for key, value in overrides.items()})
        return replace(self, dynamics=merged)

    def to_dict(self) -> Dict[str, Any]:
        """Преобразование в словарь для сохранения в манифесте"""
        return {
            'env_id': self.env_id,
            'n_joints': self.n_joints,
            'joint_names': list(self.joint_names),
            'joint_limits': [list(pair) for pair in self.joint_limits],
            'home_pose': list(self.home_pose),
            'action_low': list(self.action_low),
            'action_high': list(self.action_high),
            'task_feature_dim': self.task_feature_dim,
            'episode_horizon': self.episode_horizon,
            'dt': self.dt,
            'success_predicate': self.success_predicate.value,
            'feasible_frozen_ranges': [list(pair) for pair in self.feasible_frozen_ranges],
            'max_damaged': self.max_damaged,
            'max_joint_speed': self.max_joint_speed,
            'reward_bounds': list(self.reward_bounds),
            'dynamics': dict(self.dynamics),
            'forbidden_sets': [sorted(s) for s in self.forbidden_sets],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> EnvSpec:
        """
        Создание спецификации из словаря

        Если feasible_frozen_ranges не заданы явно, они вычисляются как
        центральная доля feasible_fraction диапазона каждого сустава.
        """
        known = {
            'env_id', 'n_joints', 'joint_names', 'joint_limits', 'home_pose', 'action_low',
            'action_high', 'action_limit', 'task_feature_dim', 'episode_horizon', 'dt',
            'success_predicate', 'feasible_frozen_ranges', 'feasible_fraction', 'max_damaged',
            'max_joint_speed', 'reward_bounds', 'dynamics', 'forbidden_sets', 'description',
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", field_path="env_spec")

        n = int(data['n_joints'])
        limits = tuple((float(lo), float(hi)) for lo, hi in data['joint_limits'])

        if 'action_limit' in data:
            bound = float(data['action_limit'])
            action_low = (-bound,) * n
            action_high = (bound,) * n
        else:
            action_low = tuple(float(v) for v in data['action_low'])
            action_high = tuple(float(v) for v in data['action_high'])

        if data.get('feasible_frozen_ranges') is not None:
            feasible = tuple((float(lo), float(hi)) for lo, hi in data['feasible_frozen_ranges'])
        else:
            fraction = float(data.get('feasible_fraction', 1.0))
            feasible = central_ranges(limits, fraction)

        try:
            predicate = SuccessPredicate(data['success_predicate'])
        except ValueError:
            raise ConfigError(f"unknown success predicate {data['success_predicate']!r}",
                              field_path="env_spec.success_predicate")

        return cls(
            env_id=str(data['env_id']),
            n_joints=n,
            joint_limits=limits,
            home_pose=tuple(float(v) for v in data.get('home_pose', [0.0] * n)),
            action_low=action_low,
            action_high=action_high,
            task_feature_dim=int(data['task_feature_dim']),
            episode_horizon=int(data['episode_horizon']),
            dt=float(data['dt']),
            success_predicate=predicate,
            feasible_frozen_ranges=feasible,
            max_damaged=int(data.get('max_damaged', n)),
            max_joint_speed=float(data['max_joint_speed']),
            reward_bounds=(float(data['reward_bounds'][0]), float(data['reward_bounds'][1])),
            dynamics={key: float(value) for key, value in data.get('dynamics', {}).items()},
            forbidden_sets=tuple(frozenset(int(j) for j in s) for s in data.get('forbidden_sets', [])),
            joint_names=tuple(data.get('joint_names', [])),
        )


def central_ranges(limits: Tuple[Tuple[float, float], ...], fraction: float) -> Tuple[Tuple[float, float], ...]:
    """Центральная доля fraction каждого интервала"""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"feasible_fraction must lie in (0, 1], got {fraction}", field_path="env_spec")
    ranges = []
    for low, high in limits:
        center = 0.5 * (low + high)
        half = 0.5 * fraction * (high - low)
        ranges.append((center - half, center + half))
    return tuple(ranges)


def load_env_spec(env_id: str, spec_path: Optional[str] = None) -> EnvSpec:
    """Загрузка спецификации среды из JSON-файла"""
    path = Path(spec_path) if spec_path else DEFAULT_ENV_SPEC_DIR / f"{env_id}.json"
    if not path.exists():
        raise ConfigError(f"environment spec file not found: {path}", field_path="env.spec_path")
    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    spec = EnvSpec.from_dict(data)
    if spec.env_id != env_id:
        raise ConfigError(f"spec file {path} describes {spec.env_id!r}, expected {env_id!r}",
                          field_path="env.id")
    logger.debug(f"Loaded environment spec {env_id} from {path}")
    return spec


@dataclass(frozen=True, eq=False)
class EnvObservation:
    """Наблюдение агента: признаки задачи, маскированные сенсоры суставов и флаги q"""
    task_features: np.ndarray
    joint_sensors: np.ndarray
    q_flags: np.ndarray

    def as_vector(self) -> np.ndarray:
        """Плоский вектор входа политики"""
        return np.concatenate([self.task_features, self.joint_sensors, self.q_flags])

    @classmethod
    def from_vector(cls, spec: EnvSpec, vector: np.ndarray) -> EnvObservation:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (spec.obs_dim,):
            raise DimensionMismatchError("observation", spec.obs_dim, vector.size)
        return cls(
            task_features=vector[:spec.task_feature_dim].copy(),
            joint_sensors=vector[spec.sensor_slice].copy(),
            q_flags=vector[spec.q_slice].copy(),
        )


@dataclass(frozen=True, eq=False)
class StepResult:
    """Результат одного шага среды"""
    observation: EnvObservation
    reward: float
    terminal: bool
    success: bool
    info: Dict[str, Any] = field(default_factory=dict)
