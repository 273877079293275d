"""
Результаты оценочных экспериментов: матрица успехов, траектории угла, шум действий.
"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Tuple

import numpy as np

from .fault import format_damage_label


@dataclass(frozen=True, eq=False)
class SuccessMatrix:
    """
    Матрица успехов n x n: клетка (i, j), i != j - повреждены оба сустава,
    диагональ (i, i) - поврежден только сустав i. Клетки (i, j) и (j, i)
    вычисляются по одному сценарию, поэтому матрица симметрична.
    """
    env_id: str
    policy_id: str
    trials_per_cell: int
    successes: np.ndarray

    def __post_init__(self) -> None:
        successes = np.asarray(self.successes)
        if successes.ndim != 2 or successes.shape[0] != successes.shape[1]:
            raise ValueError(f"success counts must form a square matrix, got shape {successes.shape}")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be >= 1")
        if np.any(successes < 0) or np.any(successes > self.trials_per_cell):
            raise ValueError("success counts must lie in [0, trials_per_cell]")

    @property
    def n(self) -> int:
        return int(self.successes.shape[0])

    @property
    def rates(self) -> np.ndarray:
        return self.successes / float(self.trials_per_cell)

    @property
    def mean_rate(self) -> float:
        return float(np.mean(self.rates))

    @property
    def min_diagonal_rate(self) -> float:
        return float(np.min(np.diag(self.rates)))

    def cells(self) -> Iterator[Tuple[int, int, int]]:
        """(i, j, успехи) построчно"""
        for i in range(self.n):
            for j in range(self.n):
                yield i, j, int(self.successes[i, j])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'env_id': self.env_id,
            'policy_id': self.policy_id,
            'trials_per_cell': self.trials_per_cell,
            'successes': self.successes.astype(int).tolist(),
            'mean_rate': self.mean_rate,
        }


@dataclass(frozen=True)
class AngleTrace:
    """Покадровое значение целевой величины задачи (угол вентиля или расстояние до цели) за один эпизод"""
    damaged_set: Tuple[int, ...]
    values: Tuple[float, ...]
    success: bool
    reference: bool = False

    @property
    def label(self) -> str:
        return "undamaged" if self.reference else format_damage_label(self.damaged_set)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class NoiseResult:
    """Доля успехов при гауссовском шуме на командах"""
    env_id: str
    policy_id: str
    sigma: float
    episodes: int
    successes: int
    damaged_set: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.episodes < 1:
            raise ValueError("noise experiment needs at least one episode")

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes

    def to_dict(self) -> Dict[str, Any]:
        return {
            'env_id': self.env_id,
            'policy_id': self.policy_id,
            'sigma': self.sigma,
            'episodes': self.episodes,
            'successes': self.successes,
            'success_rate': self.success_rate,
            'damaged_set': format_damage_label(self.damaged_set),
        }


def traces_to_rows(traces: List[AngleTrace]) -> List[Dict[str, Any]]:
    """Длинный формат: одна строка на шаг каждой траектории"""
    rows = []
    for trace in traces:
        for step, value in enumerate(trace.values):
            rows.append({'case': trace.label, 'step': step, 'value': value})
    return rows
