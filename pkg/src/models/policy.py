"""
Политики: протокол политики и снимок параметров обучаемого агента SAC.
"""

from __future__ import annotations
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Protocol, Tuple, Union, runtime_checkable
import hashlib

import numpy as np

from ..nn.autodiff import MlpSpec, ParamVector, forward
from ..nn.distributions import LOG_STD_BOUNDS, deterministic_action, sample_squashed_gaussian
from .config import SacConfig
from .environment import EnvObservation
from .errors import DimensionMismatchError

ObservationLike = Union[EnvObservation, np.ndarray]


def observation_vector(observation: ObservationLike) -> np.ndarray:
    if isinstance(observation, EnvObservation):
        return observation.as_vector()
    return np.asarray(observation, dtype=np.float64)


@runtime_checkable
class EpisodePolicy(Protocol):
    """Политика в пределах одного эпизода (может хранить внутреннее состояние)"""

    def act(self, observation: ObservationLike, deterministic: bool,
            rng: Optional[np.random.Generator]) -> np.ndarray:
        ...


@runtime_checkable
class Policy(Protocol):
    """Политика, пригодная для развертывания в среде"""
    policy_id: str

    def begin_episode(self) -> EpisodePolicy:
        ...


@dataclass(frozen=True, eq=False)
class PolicySnapshot:
    """
    Неизменяемый снимок всех параметров агента

    Актор, два критика, целевые критики и температура энтропии. Снимок
    безопасно разделять между параллельными оценками.
    """
    env_id: str
    obs_dim: int
    action_low: Tuple[float, ...]
    action_high: Tuple[float, ...]
    actor_spec: MlpSpec
    actor: ParamVector
    critic_spec: MlpSpec
    critics: Tuple[ParamVector, ParamVector]
    target_critics: Tuple[ParamVector, ParamVector]
    log_alpha: float
    log_std_bounds: Tuple[float, float] = LOG_STD_BOUNDS
    policy_id: str = "policy"
    metadata: Dict[str, Any] = field(default_factory=dict)
    sac_config: Optional[SacConfig] = None
    rng_state: Optional[Dict[str, Any]] = None   # состояния потоков случайных чисел на момент снимка

    def __post_init__(self) -> None:
        if self.actor_spec.input_dim != self.obs_dim:
            raise DimensionMismatchError("actor input", self.obs_dim, self.actor_spec.input_dim)
        if self.actor_spec.output_dim != 2 * len(self.action_low):
            raise DimensionMismatchError("actor output", 2 * len(self.action_low), self.actor_spec.output_dim)
        if self.critic_spec.input_dim != self.obs_dim + len(self.action_low):
            raise DimensionMismatchError("critic input", self.obs_dim + len(self.action_low),
                                         self.critic_spec.input_dim)

    @property
    def action_dim(self) -> int:
        return len(self.action_low)

    @property
    def temperature(self) -> float:
        return float(np.exp(self.log_alpha))

    def begin_episode(self) -> PolicySnapshot:
        return self

    def act(self, observation: ObservationLike, deterministic: bool = True,
            rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Действие политики: tanh(mean) или выборка из сжатого гауссиана"""
        obs = observation_vector(observation)
        if obs.shape != (self.obs_dim,):
            raise DimensionMismatchError("observation", self.obs_dim, obs.size)
        head = forward(self.actor_spec, self.actor, obs)
        low = np.asarray(self.action_low)
        high = np.asarray(self.action_high)
        if deterministic:
            return deterministic_action(head, low, high)
        if rng is None:
            raise ValueError("stochastic action needs a random stream")
        noise = rng.standard_normal(self.action_dim)
        return sample_squashed_gaussian(head, noise, low, high, self.log_std_bounds).action

    def fingerprint(self) -> str:
        """Хеш всех параметров (для воспроизводимости результатов поиска)"""
        digest = hashlib.sha256()
        for params in (self.actor, *self.critics, *self.target_critics):
            digest.update(params.values.astype('<f8').tobytes())
        digest.update(np.float64(self.log_alpha).astype('<f8').tobytes())
        return digest.hexdigest()[:16]
