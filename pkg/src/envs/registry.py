"""
Реестр сред: создание экземпляра по идентификатору.
"""

from __future__ import annotations
from typing import Dict, Optional, Type

from ..models.environment import EnvSpec, load_env_spec
from ..models.errors import ConfigError
from .base import FaultAwareEnv
from .claw_valve import ClawValveEnv
from .kitty_walk import KittyWalkEnv
from .scripted import ScriptedRewardEnv

ENV_CLASSES: Dict[str, Type[FaultAwareEnv]] = {
    'claw_valve': ClawValveEnv,
    'kitty_walk': KittyWalkEnv,
    'scripted': ScriptedRewardEnv,
}


def make_env(env_id: str, spec: Optional[EnvSpec] = None, **kwargs) -> FaultAwareEnv:
    """
    Создание среды

    Args:
        env_id: Идентификатор среды
        spec: Готовая спецификация; по умолчанию загружается configs/envs/<env_id>.json
        **kwargs: hide_q_flags, damage_wrapper, trajectory_sink
    """
    if env_id not in ENV_CLASSES:
        raise ConfigError(f"unknown environment {env_id!r}, expected one of {sorted(ENV_CLASSES)}",
                          field_path="env.id")
    if spec is None:
        spec = load_env_spec(env_id)
    elif spec.env_id != env_id:
        raise ConfigError(f"spec describes {spec.env_id!r}, expected {env_id!r}", field_path="env.id")
    return ENV_CLASSES[env_id](spec, **kwargs)
