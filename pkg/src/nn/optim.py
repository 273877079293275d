"""
Оптимизатор Adam над плоскими векторами параметров.
"""

from __future__ import annotations
from typing import Any, Dict

import numpy as np

from ..models.errors import DimensionMismatchError


class AdamOptimizer:
    """
    Adam с моментами первого и второго порядка и коррекцией смещения

    Состояние (моменты и счетчик шагов) сериализуется через state_dict(),
    чтобы продолженный запуск обновлялся побитово так же, как непрерывный.
    """

    def __init__(self, size: int, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be > 0, got {lr}")
        self.size = int(size)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.first_moment = np.zeros(self.size)
        self.second_moment = np.zeros(self.size)

    def step(self, values: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Один шаг спуска; возвращает новый массив параметров"""
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != (self.size,):
            raise DimensionMismatchError("gradient", self.size, grad.size)
        self.step_count += 1
        self.first_moment = self.beta1 * self.first_moment + (1.0 - self.beta1) * grad
        self.second_moment = self.beta2 * self.second_moment + (1.0 - self.beta2) * grad * grad
        m_hat = self.first_moment / (1.0 - self.beta1 ** self.step_count)
        v_hat = self.second_moment / (1.0 - self.beta2 ** self.step_count)
        return np.asarray(values, dtype=np.float64) - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> Dict[str, Any]:
        return {
            'lr': self.lr,
            'beta1': self.beta1,
            'beta2': self.beta2,
            'eps': self.eps,
            'step_count': self.step_count,
            'first_moment': self.first_moment.copy(),
            'second_moment': self.second_moment.copy(),
        }

    @classmethod
    def from_state_dict(cls, state: Dict[str, Any]) -> AdamOptimizer:
        first = np.asarray(state['first_moment'], dtype=np.float64)
        optimizer = cls(first.size, lr=state['lr'], beta1=state['beta1'], beta2=state['beta2'], eps=state['eps'])
        optimizer.step_count = int(state['step_count'])
        optimizer.first_moment = first.copy()
        optimizer.second_moment = np.asarray(state['second_moment'], dtype=np.float64).copy()
        return optimizer
