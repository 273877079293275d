"""
Сохранение и загрузка контрольных точек политики и состояния продолжения.

Контрольная точка - каталог с manifest.json (версия формата, размерности,
раскладки сетей, температура, гиперпараметры SAC, состояния потоков
случайных чисел) и params.npz (плоские массивы параметров, little-endian
float64). Состояние продолжения дополнительно содержит моменты
оптимизаторов и буфер воспроизведения.
"""

from __future__ import annotations
from pathlib import Path
from typing import Any, Dict, Optional
import json

import numpy as np
from packaging.version import InvalidVersion, Version
from pydantic import TypeAdapter, ValidationError

from ..models.config import SacConfig
from ..models.errors import CheckpointVersionError, ConfigError
from ..models.policy import PolicySnapshot
from ..nn.autodiff import MlpSpec, ParamVector, param_layout
from .debug_logger import get_logger

logger = get_logger(__name__)

FORMAT_VERSION = "1.0"
MANIFEST_FILE = "manifest.json"
PARAMS_FILE = "params.npz"
RESUME_MANIFEST_FILE = "resume.json"
RESUME_ARRAYS_FILE = "resume_arrays.npz"

_NETWORKS = ('actor', 'critic_1', 'critic_2', 'target_critic_1', 'target_critic_2')
_SAC_CONFIG_ADAPTER = TypeAdapter(SacConfig)


def dump_sac_config(config: Optional[SacConfig]) -> Optional[Dict[str, Any]]:
    return None if config is None else _SAC_CONFIG_ADAPTER.dump_python(config, mode='json')


def parse_sac_config(data: Optional[Dict[str, Any]], directory: Path) -> Optional[SacConfig]:
    """Гиперпараметры из manifest.json; некорректная запись - ConfigError"""
    if data is None:
        return None
    try:
        return _SAC_CONFIG_ADAPTER.validate_python(data)
    except (ValidationError, ValueError) as e:
        raise ConfigError(f"checkpoint {directory} has an invalid SAC config: {e}", field_path="config")


def restore_generator(state: Dict[str, Any]) -> np.random.Generator:
    """Генератор, продолжающий поток из сохраненного состояния bit_generator"""
    name = state.get('bit_generator') if isinstance(state, dict) else None
    bit_generator_cls = getattr(np.random, str(name), None)
    if not (isinstance(bit_generator_cls, type) and issubclass(bit_generator_cls, np.random.BitGenerator)):
        raise ConfigError(f"unknown bit generator {name!r} in checkpoint", field_path="rng_state")
    bit_generator = bit_generator_cls()
    try:
        bit_generator.state = state
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigError(f"malformed random state: {e}", field_path="rng_state")
    return np.random.Generator(bit_generator)


def parse_rng_state(data: Optional[Dict[str, Any]]) -> Optional[Dict[str, Any]]:
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError("random state must map stream names to generator states", field_path="rng_state")
    for state in data.values():
        restore_generator(state)
    return data


def check_format_version(found: str, supported: str = FORMAT_VERSION) -> None:
    """Совместимы версии с одинаковой старшей частью"""
    try:
        found_version = Version(str(found))
    except InvalidVersion:
        raise CheckpointVersionError(str(found), supported)
    if found_version.major != Version(supported).major:
        raise CheckpointVersionError(str(found), supported)


def _write_json(path: Path, data: Dict[str, Any]) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def _read_json(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise ConfigError(f"checkpoint file not found: {path}", field_path="--checkpoint")
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def save_checkpoint(snapshot: PolicySnapshot, directory: Path) -> Path:
    """Сохранение снимка политики в каталог"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = {
        'actor': snapshot.actor.values,
        'critic_1': snapshot.critics[0].values,
        'critic_2': snapshot.critics[1].values,
        'target_critic_1': snapshot.target_critics[0].values,
        'target_critic_2': snapshot.target_critics[1].values,
    }
    np.savez(directory / PARAMS_FILE, **{name: values.astype('<f8') for name, values in arrays.items()})

    manifest = {
        'format_version': FORMAT_VERSION,
        'env_id': snapshot.env_id,
        'policy_id': snapshot.policy_id,
        'obs_dim': snapshot.obs_dim,
        'action_low': list(snapshot.action_low),
        'action_high': list(snapshot.action_high),
        'actor_spec': snapshot.actor_spec.to_dict(),
        'critic_spec': snapshot.critic_spec.to_dict(),
        'actor_layout': [layer.to_dict() for layer in snapshot.actor.layout],
        'critic_layout': [layer.to_dict() for layer in snapshot.critics[0].layout],
        'log_alpha': snapshot.log_alpha,
        'log_std_bounds': list(snapshot.log_std_bounds),
        'fingerprint': snapshot.fingerprint(),
        'metadata': snapshot.metadata,
        'config': dump_sac_config(snapshot.sac_config),
        'rng_state': snapshot.rng_state,
    }
    _write_json(directory / MANIFEST_FILE, manifest)
    logger.info(f"Checkpoint saved to {directory}")
    return directory


def load_checkpoint(directory: Path, expected_env_id: Optional[str] = None) -> PolicySnapshot:
    """Загрузка снимка политики с проверкой версии формата и окружения"""
    directory = Path(directory)
    manifest = _read_json(directory / MANIFEST_FILE)
    check_format_version(manifest.get('format_version', '0'))
    if expected_env_id is not None and manifest['env_id'] != expected_env_id:
        raise ConfigError(f"checkpoint was trained on {manifest['env_id']!r}, not {expected_env_id!r}",
                          field_path="--env")

    actor_spec = MlpSpec.from_dict(manifest['actor_spec'])
    critic_spec = MlpSpec.from_dict(manifest['critic_spec'])
    with np.load(directory / PARAMS_FILE, allow_pickle=False) as data:
        arrays = {name: np.asarray(data[name], dtype=np.float64) for name in _NETWORKS}

    actor_layout = param_layout(actor_spec)
    critic_layout = param_layout(critic_spec)
    snapshot = PolicySnapshot(
        env_id=manifest['env_id'],
        obs_dim=int(manifest['obs_dim']),
        action_low=tuple(manifest['action_low']),
        action_high=tuple(manifest['action_high']),
        actor_spec=actor_spec,
        actor=ParamVector(arrays['actor'], actor_layout),
        critic_spec=critic_spec,
        critics=(ParamVector(arrays['critic_1'], critic_layout), ParamVector(arrays['critic_2'], critic_layout)),
        target_critics=(ParamVector(arrays['target_critic_1'], critic_layout),
                        ParamVector(arrays['target_critic_2'], critic_layout)),
        log_alpha=float(manifest['log_alpha']),
        log_std_bounds=tuple(manifest['log_std_bounds']),
        policy_id=manifest.get('policy_id', directory.name),
        metadata=manifest.get('metadata', {}),
        sac_config=parse_sac_config(manifest.get('config'), directory),
        rng_state=parse_rng_state(manifest.get('rng_state')),
    )
    if snapshot.sac_config is not None and tuple(snapshot.sac_config.hidden_sizes) != tuple(actor_spec.hidden_sizes):
        raise ConfigError(f"checkpoint {directory}: SAC config hidden sizes {list(snapshot.sac_config.hidden_sizes)} "
                          f"do not match the stored networks {list(actor_spec.hidden_sizes)}", field_path="config")
    if manifest.get('fingerprint') and snapshot.fingerprint() != manifest['fingerprint']:
        raise ConfigError(f"checkpoint {directory} is corrupted (parameter fingerprint mismatch)",
                          field_path="--checkpoint")
    logger.info(f"Checkpoint loaded from {directory} (policy {snapshot.policy_id})")
    return snapshot


def _flatten_optimizer(prefix: str, state: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> Dict[str, Any]:
    arrays[f"{prefix}.first_moment"] = state['first_moment']
    arrays[f"{prefix}.second_moment"] = state['second_moment']
    return {key: value for key, value in state.items() if key not in ('first_moment', 'second_moment')}


def _restore_optimizer(prefix: str, scalars: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> Dict[str, Any]:
    state = dict(scalars)
    state['first_moment'] = arrays[f"{prefix}.first_moment"]
    state['second_moment'] = arrays[f"{prefix}.second_moment"]
    return state


def save_resume_state(directory: Path,
                      snapshot: PolicySnapshot,
                      learner_state: Dict[str, Any],
                      buffer_state: Dict[str, Any],
                      rng_states: Dict[str, Any],
                      trainer_state: Dict[str, Any]) -> Path:
    """Полное состояние для побитово точного продолжения обучения"""
    directory = Path(directory)
    save_checkpoint(snapshot, directory / "policy")

    arrays: Dict[str, np.ndarray] = {}
    optimizers = {
        'actor': _flatten_optimizer('actor', learner_state['actor_optimizer'], arrays),
        'critic_1': _flatten_optimizer('critic_1', learner_state['critic_optimizers'][0], arrays),
        'critic_2': _flatten_optimizer('critic_2', learner_state['critic_optimizers'][1], arrays),
        'alpha': _flatten_optimizer('alpha', learner_state['alpha_optimizer'], arrays),
    }
    for key, value in buffer_state.items():
        arrays[f"buffer.{key}"] = np.asarray(value)
    np.savez(directory / RESUME_ARRAYS_FILE, **arrays)

    _write_json(directory / RESUME_MANIFEST_FILE, {
        'format_version': FORMAT_VERSION,
        'update_count': learner_state['update_count'],
        'optimizers': optimizers,
        'rng_states': rng_states,
        'trainer': trainer_state,
    })
    return directory


def load_resume_state(directory: Path) -> Dict[str, Any]:
    """Загрузка состояния продолжения; возвращает словарь с разделами snapshot/learner/buffer/rng/trainer"""
    directory = Path(directory)
    manifest = _read_json(directory / RESUME_MANIFEST_FILE)
    check_format_version(manifest.get('format_version', '0'))
    snapshot = load_checkpoint(directory / "policy")
    with np.load(directory / RESUME_ARRAYS_FILE, allow_pickle=False) as data:
        arrays = {name: np.array(data[name]) for name in data.files}

    optimizers = manifest['optimizers']
    learner_state = {
        'update_count': manifest['update_count'],
        'actor_optimizer': _restore_optimizer('actor', optimizers['actor'], arrays),
        'critic_optimizers': [_restore_optimizer('critic_1', optimizers['critic_1'], arrays),
                              _restore_optimizer('critic_2', optimizers['critic_2'], arrays)],
        'alpha_optimizer': _restore_optimizer('alpha', optimizers['alpha'], arrays),
    }
    buffer_state = {key[len("buffer."):]: value for key, value in arrays.items() if key.startswith("buffer.")}
    return {
        'snapshot': snapshot,
        'learner': learner_state,
        'buffer': buffer_state,
        'rng_states': manifest['rng_states'],
        'trainer': manifest['trainer'],
    }
