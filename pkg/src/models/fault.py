"""
Модель повреждений суставов.

Вектор рабочих состояний суставов q задает, какие суставы повреждены и под
каким углом они заклинены. q неизменяем в течение эпизода и не зависит от
действий агента. Здесь же определены правила маскирования действий и
показаний сенсоров, общие для всех сред.
"""

from __future__ import annotations
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union
import hashlib

import numpy as np

from .environment import EnvSpec
from .errors import DimensionMismatchError, FaultModelError


class DamageMode(Enum):
    """Режим неисправности сустава"""
    FROZEN = "frozen"                # сустав заклинен под фиксированным углом
    RANDOM_ACTION = "random_action"  # сустав исполняет случайные команды

    @classmethod
    def from_string(cls, value: str) -> DamageMode:
        """Безопасное преобразование строки в режим"""
        normalized = (value or "").lower().strip().replace("-", "_")
        mapping = {
            'frozen': cls.FROZEN,
            'random_action': cls.RANDOM_ACTION,
            'random': cls.RANDOM_ACTION,
        }
        if normalized not in mapping:
            raise FaultModelError(f"unknown damage mode {value!r}")
        return mapping[normalized]


@dataclass(frozen=True, slots=True)
class DamageCase:
    """
    Случай повреждения: множество индексов поврежденных суставов

    Текстовая форма - индексы через запятую ("2,7"), пустая строка - без повреждений.
    """
    damaged_set: FrozenSet[int]
    label: str

    @classmethod
    def of(cls, joints: Iterable[int]) -> DamageCase:
        damaged = frozenset(int(j) for j in joints)
        return cls(damaged_set=damaged, label=format_damage_label(damaged))

    @classmethod
    def parse(cls, text: str, n_joints: Optional[int] = None, max_damaged: Optional[int] = None) -> DamageCase:
        """Разбор текстовой формы случая повреждения"""
        text = (text or "").strip()
        joints: List[int] = []
        if text:
            for part in text.split(","):
                part = part.strip()
                try:
                    joints.append(int(part))
                except ValueError:
                    raise FaultModelError(f"invalid joint index {part!r} in damage case {text!r}")
        case = cls.of(joints)
        case.validate(n_joints, max_damaged)
        return case

    def validate(self, n_joints: Optional[int] = None, max_damaged: Optional[int] = None) -> None:
        if n_joints is not None:
            for j in self.damaged_set:
                if not 0 <= j < n_joints:
                    raise FaultModelError(f"joint index {j} out of range [0, {n_joints})")
        if max_damaged is not None and len(self.damaged_set) > max_damaged:
            raise FaultModelError(
                f"damage case {{{self.label}}} has {len(self.damaged_set)} joints, maximum is {max_damaged}"
            )

    def __len__(self) -> int:
        return len(self.damaged_set)

    def sorted_joints(self) -> Tuple[int, ...]:
        return tuple(sorted(self.damaged_set))


def format_damage_label(joints: Iterable[int]) -> str:
    return ",".join(str(j) for j in sorted(set(joints)))


@dataclass(frozen=True, slots=True)
class JointWorkingState:
    """
    Рабочие состояния суставов q

    damaged[i] - признак повреждения сустава i, frozen_angle[i] - угол
    заклинивания (для неповрежденных суставов по соглашению 0).
    """
    damaged: Tuple[bool, ...]
    frozen_angle: Tuple[float, ...]
    mode: DamageMode = DamageMode.FROZEN

    def __post_init__(self) -> None:
        if len(self.damaged) != len(self.frozen_angle):
            raise FaultModelError(
                f"damaged has {len(self.damaged)} entries but frozen_angle has {len(self.frozen_angle)}"
            )
        object.__setattr__(self, 'damaged', tuple(bool(d) for d in self.damaged))
        object.__setattr__(self, 'frozen_angle', tuple(float(a) for a in self.frozen_angle))

    @classmethod
    def undamaged(cls, n_joints: int, mode: DamageMode = DamageMode.FROZEN) -> JointWorkingState:
        return cls(damaged=(False,) * n_joints, frozen_angle=(0.0,) * n_joints, mode=mode)

    @property
    def n_joints(self) -> int:
        return len(self.damaged)

    @property
    def damaged_indices(self) -> Tuple[int, ...]:
        return tuple(i for i, d in enumerate(self.damaged) if d)

    @property
    def label(self) -> str:
        return format_damage_label(self.damaged_indices)

    def damage_case(self) -> DamageCase:
        return DamageCase.of(self.damaged_indices)

    def flags(self) -> np.ndarray:
        """Флаги повреждений 0/1 для входа политики (углы заклинивания политике не передаются)"""
        return np.asarray(self.damaged, dtype=np.float64)

    def damaged_mask(self) -> np.ndarray:
        return np.asarray(self.damaged, dtype=bool)

    def content_hash(self) -> str:
        """Хеш содержимого для проверки неизменности q в течение эпизода"""
        content = f"{self.mode.value}|{self.damaged}|{[a.hex() for a in self.frozen_angle]}"
        return hashlib.sha256(content.encode('utf-8')).hexdigest()

    def to_dict(self) -> Dict[str, Any]:
        return {
            'damaged': list(self.damaged),
            'frozen_angle': list(self.frozen_angle),
            'mode': self.mode.value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> JointWorkingState:
        return cls(
            damaged=tuple(data['damaged']),
            frozen_angle=tuple(data['frozen_angle']),
            mode=DamageMode.from_string(data.get('mode', 'frozen')),
        )


AngleSource = Union[np.random.Generator, Mapping[int, float], Sequence[float]]


def make_q(damaged_set: Iterable[int],
           angle_source: AngleSource,
           env_spec: EnvSpec,
           mode: DamageMode = DamageMode.FROZEN,
           enforce_bound: bool = True) -> JointWorkingState:
    """
    Построение q для заданного множества поврежденных суставов

    Args:
        damaged_set: Индексы поврежденных суставов
        angle_source: Генератор случайных чисел (углы равномерно из допустимого
            диапазона, по возрастанию индекса), словарь {сустав: угол} или
            последовательность углов по возрастанию индекса
        env_spec: Спецификация среды
        mode: Режим неисправности
        enforce_bound: Проверять предел разрешимости задачи (max_damaged)

    Returns:
        JointWorkingState с ровно указанными поврежденными суставами
    """
    n = env_spec.n_joints
    joints = sorted(set(int(j) for j in damaged_set))
    for j in joints:
        if not 0 <= j < n:
            raise FaultModelError(f"joint index {j} out of range [0, {n})")
    if enforce_bound and not env_spec.is_feasible_set(joints):
        raise FaultModelError(
            f"damage set {{{format_damage_label(joints)}}} exceeds the solvability bound of "
            f"{env_spec.env_id} (max {env_spec.max_damaged} damaged joints)"
        )

    angles = [0.0] * n
    if isinstance(angle_source, np.random.Generator):
        for j in joints:
            low, high = env_spec.feasible_frozen_ranges[j]
            angles[j] = float(angle_source.uniform(low, high))
    else:
        if isinstance(angle_source, Mapping):
            explicit = {int(k): float(v) for k, v in angle_source.items()}
            missing = [j for j in joints if j not in explicit]
            if missing:
                raise FaultModelError(f"no frozen angle given for joints {missing}")
        else:
            values = [float(v) for v in angle_source]
            if len(values) != len(joints):
                raise DimensionMismatchError("frozen angles", len(joints), len(values))
            explicit = dict(zip(joints, values))
        for j in joints:
            low, high = env_spec.feasible_frozen_ranges[j]
            angle = explicit[j]
            if not low <= angle <= high:
                raise FaultModelError(
                    f"frozen angle {angle:.4f} of joint {j} outside feasible range [{low:.4f}, {high:.4f}]"
                )
            angles[j] = angle

    damaged = tuple(i in joints for i in range(n))
    return JointWorkingState(damaged=damaged, frozen_angle=tuple(angles), mode=mode)


def mask_action(q: JointWorkingState,
                action: np.ndarray,
                action_low: Optional[np.ndarray] = None,
                action_high: Optional[np.ndarray] = None,
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Маскирование действия согласно q

    Действие - приращение целевого угла сустава. В режиме FROZEN приращение
    поврежденного сустава обнуляется: цель совпадает с углом заклинивания,
    команда игнорируется. В режиме RANDOM_ACTION значение заменяется свежей
    равномерной выборкой из диапазона действий сустава.
    """
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (q.n_joints,):
        raise DimensionMismatchError("action", q.n_joints, action.size)
    masked = action.copy()
    if not any(q.damaged):
        return masked

    mask = q.damaged_mask()
    if q.mode is DamageMode.FROZEN:
        masked[mask] = 0.0
    else:
        if rng is None or action_low is None or action_high is None:
            raise FaultModelError("random-action damage mode needs action bounds and a random stream")
        low = np.asarray(action_low, dtype=np.float64)[mask]
        high = np.asarray(action_high, dtype=np.float64)[mask]
        masked[mask] = rng.uniform(low, high)
    return masked


def mask_observation(q: JointWorkingState, joint_sensors: np.ndarray) -> np.ndarray:
    """Показания сенсоров поврежденных суставов всегда равны 0"""
    joint_sensors = np.asarray(joint_sensors, dtype=np.float64)
    if joint_sensors.shape != (q.n_joints,):
        raise DimensionMismatchError("joint sensors", q.n_joints, joint_sensors.size)
    masked = joint_sensors.copy()
    masked[q.damaged_mask()] = 0.0
    return masked
