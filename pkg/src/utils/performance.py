"""
Замер времени этапов обучения, поиска и оценки.
"""

from __future__ import annotations
from typing import Optional
import time

from .debug_logger import get_logger

logger = get_logger(__name__)


class performance_timer:
    """Context manager для измерения времени этапа; итог пишется в DEBUG"""

    def __init__(self, operation_name: str):
        self.operation_name = operation_name
        self.start_time: Optional[float] = None
        self.elapsed_ms: float = 0.0
        self.failed = False

    def __enter__(self) -> performance_timer:
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        if self.start_time is None:
            return
        self.elapsed_ms = (time.perf_counter() - self.start_time) * 1000
        self.failed = exc_type is not None
        if self.failed:
            logger.debug(f"Stage '{self.operation_name}' aborted by {exc_type.__name__} after {self.elapsed_seconds:.3f}s")
        else:
            logger.debug(f"Stage '{self.operation_name}' finished in {self.elapsed_seconds:.3f}s")

    @property
    def elapsed_seconds(self) -> float:
        return self.elapsed_ms / 1000.0
