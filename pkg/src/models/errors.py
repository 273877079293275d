"""
Иерархия исключений системы обучения с учетом повреждений суставов.

Ошибки контракта (неверные входные данные) наследуются от ValueError,
аварийные остановки во время выполнения - от RuntimeError.
CLI отображает первые на код выхода 2, вторые на код 3.
"""

from __future__ import annotations
from typing import Any, Dict, Optional


class FaultModelError(ValueError):
    """Некорректная конфигурация повреждений (индекс, углы, предел числа суставов)"""


class DimensionMismatchError(ValueError):
    """Несовпадение размерностей векторов"""

    def __init__(self, what: str, expected: int, got: int):
        super().__init__(f"{what}: expected length {expected}, got {got}")
        self.what = what
        self.expected = expected
        self.got = got


class EnvContractError(ValueError):
    """Нарушение контракта среды (шаг после завершения, нечисловое действие и т.д.)"""


class ConfigError(ValueError):
    """Ошибка конфигурации с указанием пути к полю"""

    def __init__(self, message: str, field_path: Optional[str] = None):
        prefix = f"{field_path}: " if field_path else ""
        super().__init__(f"{prefix}{message}")
        self.field_path = field_path


class CheckpointVersionError(ValueError):
    """Версия формата контрольной точки не поддерживается"""

    def __init__(self, found: str, supported: str):
        super().__init__(
            f"checkpoint format version {found} is incompatible with supported version {supported}"
        )
        self.found = found
        self.supported = supported


class NonFiniteLossError(RuntimeError):
    """Нечисловое значение функции потерь; сообщение содержит статистику батча"""

    def __init__(self, loss_name: str, batch_stats: Dict[str, Any]):
        details = ", ".join(f"{key}={value:.6g}" for key, value in batch_stats.items())
        super().__init__(f"non-finite {loss_name} loss ({details})")
        self.loss_name = loss_name
        self.batch_stats = batch_stats


class SearchBlockedError(RuntimeError):
    """На этапе жадного поиска не осталось допустимых кандидатов"""

    def __init__(self, stage: int, damaged_so_far: str):
        super().__init__(
            f"greedy search blocked at stage {stage}: no feasible joint can extend {{{damaged_so_far}}}"
        )
        self.stage = stage


class CombinatorialBudgetError(RuntimeError):
    """Полный перебор превышает допустимое число оценок"""

    def __init__(self, required: int, cap: int):
        super().__init__(f"exhaustive search needs {required} evaluations, cap is {cap}")
        self.required = required
        self.cap = cap
