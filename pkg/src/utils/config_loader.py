"""
Загрузка конфигурации запуска: JSON-файл, переопределения и переменные окружения.

Порядок приоритета (от слабого к сильному): значения по умолчанию ->
файл -> --set section.key=value -> RSAC_OUTPUT_ROOT -> отдельные флаги CLI.
"""

from __future__ import annotations
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional
import copy
import json
import os

from pydantic import TypeAdapter, ValidationError

from ..models.config import RunConfig
from ..models.errors import ConfigError
from .debug_logger import get_logger

logger = get_logger(__name__)

OUTPUT_ROOT_ENV = "RSAC_OUTPUT_ROOT"
_RUN_CONFIG_ADAPTER = TypeAdapter(RunConfig)


def read_config_file(config_path: str) -> Dict[str, Any]:
    """Чтение JSON-файла конфигурации"""
    path = Path(config_path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}", field_path="--config")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}", field_path="--config")
    if not isinstance(data, dict):
        raise ConfigError(f"config root in {path} must be an object", field_path="--config")
    return data


def set_by_path(data: Dict[str, Any], dotted_key: str, value: Any) -> None:
    """Установка значения по пути вида trainer.sac.gamma"""
    parts = dotted_key.split('.')
    node = data
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError("cannot descend into non-object value", field_path=dotted_key)
        node = child
    node[parts[-1]] = value


def parse_override(text: str) -> tuple:
    """Разбор 'key=value'; значение интерпретируется как JSON, иначе как строка"""
    if '=' not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value", field_path="--set")
    key, raw = text.split('=', 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key", field_path="--set")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _format_validation_error(error: ValidationError) -> ConfigError:
    first = error.errors()[0]
    path = ".".join(str(part) for part in first.get('loc', ()))
    return ConfigError(first.get('msg', str(error)), field_path=path or None)


def validate_run_config(data: Mapping[str, Any]) -> RunConfig:
    """Проверка словаря конфигурации; неизвестные ключи отклоняются"""
    try:
        return _RUN_CONFIG_ADAPTER.validate_python(dict(data))
    except ValidationError as e:
        raise _format_validation_error(e)
    except ValueError as e:
        raise ConfigError(str(e))


def load_run_config(config_path: Optional[str] = None,
                    overrides: Iterable[str] = (),
                    flag_overrides: Optional[Mapping[str, Any]] = None,
                    environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Загрузка и проверка конфигурации запуска

    Args:
        config_path: Путь к JSON-файлу (None - только значения по умолчанию)
        overrides: Строки 'section.key=value'
        flag_overrides: {'section.key': value} от отдельных флагов CLI (None пропускаются)
        environ: Переменные окружения (по умолчанию os.environ)
    """
    data = read_config_file(config_path) if config_path else {}
    data = copy.deepcopy(data)
    for text in overrides:
        key, value = parse_override(text)
        set_by_path(data, key, value)

    environ = os.environ if environ is None else environ
    if environ.get(OUTPUT_ROOT_ENV):
        set_by_path(data, 'output.root', environ[OUTPUT_ROOT_ENV])

    for key, value in (flag_overrides or {}).items():
        if value is not None:
            set_by_path(data, key, value)

    config = validate_run_config(data)
    logger.debug(f"Run config loaded from {config_path or 'defaults'}")
    return config


def config_to_dict(config: RunConfig) -> Dict[str, Any]:
    return _RUN_CONFIG_ADAPTER.dump_python(config, mode='json')


def canonical_json(config: RunConfig) -> str:
    """Каноническая форма: отсортированные ключи, отступ 2, LF"""
    return json.dumps(config_to_dict(config), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def save_run_config(config: RunConfig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(canonical_json(config))
